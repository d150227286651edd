//! Small dense linear algebra for per-arm ridge regression.
//!
//! Matrices are row-major `Vec<f64>` of length `d * d`. Dimensions here stay
//! tiny (a handful up to ~60), so clarity and testability beat throughput.

/// Dot product of two equal-length vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `A x` for a row-major `d x d` matrix.
pub fn mat_vec(a: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), d * d);
    debug_assert_eq!(x.len(), d);
    (0..d).map(|i| dot(&a[i * d..(i + 1) * d], x)).collect()
}

/// `A += x xᵀ` in place.
pub fn add_outer(a: &mut [f64], d: usize, x: &[f64]) {
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] += x[i] * x[j];
        }
    }
}

/// `scale * I` as a row-major matrix.
pub fn scaled_identity(d: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = scale;
    }
    m
}

/// Sherman–Morrison rank-one update of an inverse.
///
/// Given `a_inv = A⁻¹`, rewrites it to `(A + x xᵀ)⁻¹` via
/// `A⁻¹ - (A⁻¹x)(A⁻¹x)ᵀ / (1 + xᵀA⁻¹x)`. Returns false (leaving `a_inv`
/// untouched) if the denominator is not usable, which cannot happen while
/// `A` stays positive definite.
pub fn sherman_morrison_update(a_inv: &mut [f64], d: usize, x: &[f64]) -> bool {
    let ax = mat_vec(a_inv, d, x);
    let denom = 1.0 + dot(x, &ax);
    if !denom.is_finite() || denom <= 0.0 {
        return false;
    }
    for i in 0..d {
        for j in 0..d {
            a_inv[i * d + j] -= ax[i] * ax[j] / denom;
        }
    }
    true
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite matrix.
///
/// Returns the lower-triangular factor, or `None` if a pivot is not strictly
/// positive (the matrix is not SPD to working precision).
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + j] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    // Forward: L y = b.
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    // Back: Lᵀ x = y.
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    x
}

/// Full inverse of an SPD matrix via its Cholesky factor.
pub fn spd_invert(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, d)?;
    let mut inv = vec![0.0; d * d];
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = cholesky_solve(&l, d, &e);
        e[j] = 0.0;
        for i in 0..d {
            inv[i * d + j] = col[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn cholesky_of_identity() {
        let a = scaled_identity(3, 4.0);
        let l = cholesky(&a, 3).unwrap();
        assert_eq!(l[0], 2.0);
        assert_eq!(l[4], 2.0);
        assert_eq!(l[8], 2.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(cholesky(&a, 2).is_none());
    }

    #[test]
    fn solve_known_system() {
        // A = [[4,2],[2,3]], b = [10, 9] -> x = [1.5, 2.0]
        let a = vec![4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let x = cholesky_solve(&l, 2, &[10.0, 9.0]);
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sherman_morrison_matches_fresh_inverse() {
        let d = 4;
        let mut a = scaled_identity(d, 2.0);
        let mut a_inv = scaled_identity(d, 0.5);
        let updates = [
            vec![1.0, 0.5, -0.25, 2.0],
            vec![0.0, 1.0, 1.0, -1.0],
            vec![3.0, 0.0, 0.5, 0.5],
        ];
        for x in &updates {
            add_outer(&mut a, d, x);
            assert!(sherman_morrison_update(&mut a_inv, d, x));
            let fresh = spd_invert(&a, d).unwrap();
            assert!(max_abs_diff(&a_inv, &fresh) < 1e-10);
        }
    }

    proptest! {
        // Random SPD matrices: A = lambda*I + sum of outer products.
        #[test]
        fn inverse_roundtrip_on_random_spd(
            d in 1usize..7,
            seed_rows in proptest::collection::vec(
                proptest::collection::vec(-2.0f64..2.0, 1..7), 1..10),
        ) {
            let mut a = scaled_identity(d, 1.0);
            for row in &seed_rows {
                let x: Vec<f64> = (0..d).map(|i| row.get(i).copied().unwrap_or(0.3)).collect();
                add_outer(&mut a, d, &x);
            }
            let inv = spd_invert(&a, d).unwrap();
            // A * A^{-1} ~ I, column by column.
            for j in 0..d {
                let col: Vec<f64> = (0..d).map(|i| inv[i * d + j]).collect();
                let prod = mat_vec(&a, d, &col);
                for (i, v) in prod.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v - expect).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn sherman_morrison_agrees_with_direct_inverse(
            d in 1usize..6,
            xs in proptest::collection::vec(
                proptest::collection::vec(-1.5f64..1.5, 1..6), 1..20),
        ) {
            let mut a = scaled_identity(d, 1.0);
            let mut a_inv = scaled_identity(d, 1.0);
            for row in &xs {
                let x: Vec<f64> = (0..d).map(|i| row.get(i).copied().unwrap_or(-0.7)).collect();
                add_outer(&mut a, d, &x);
                prop_assert!(sherman_morrison_update(&mut a_inv, d, &x));
            }
            let fresh = spd_invert(&a, d).unwrap();
            prop_assert!(max_abs_diff(&a_inv, &fresh) < 1e-7);
        }
    }
}
