//! Shared fixtures for the pipeline benchmarks.

use std::collections::BTreeMap;

use mtselect_core::{generate, Dataset, SynthSpec};

/// A three-domain, eight-arm dataset sized for steady-state measurements.
pub fn bench_dataset(records_per_domain: usize) -> Dataset {
    let arms: Vec<String> = (0..8).map(|k| format!("sys-{k}")).collect();
    let domains = ["news", "talks", "patents"];
    let means: BTreeMap<String, Vec<f64>> = domains
        .iter()
        .enumerate()
        .map(|(d, name)| {
            let row = (0..8)
                .map(|k| 20.0 + 5.0 * ((k + 3 * d) % 8) as f64)
                .collect();
            (name.to_string(), row)
        })
        .collect();
    generate(&SynthSpec {
        arms,
        domains: domains.iter().map(|s| s.to_string()).collect(),
        means,
        noise_sigma: 5.0,
        records_per_domain,
        seed: 99,
        len_range: (4, 24),
        domain_one_hot_emb: true,
    })
    .expect("benchmark dataset is valid")
}
