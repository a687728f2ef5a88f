//! Shared fixtures for the criterion benchmarks.

use adaspline_core::{rng, Design};

/// Equispaced design `t_i = i/n` with a smooth signal plus seeded noise.
pub fn benchmark_design(n: usize, seed: u64) -> Design {
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let y: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(i, &ti)| {
            (2.0 * std::f64::consts::PI * ti).sin() + 0.2 * rng::standard_normal(seed, 0, i as u64)
        })
        .collect();
    Design::new(t, y, None).expect("valid benchmark design")
}
