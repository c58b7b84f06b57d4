//! Iteration timings across thread counts and factor widths.
//!
//! `cargo run --release --example parallel_scaling -- 1,2,4`

use multicf::bench::{bench, BenchData};
use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::{HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let threads: Vec<usize> = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "1,2".into())
        .split(',')
        .map(|s| s.parse().expect("thread count"))
        .collect();
    let data = generate_synthetic(&SynthConfig { users: 2500, seed: 11, ..SynthConfig::default() })?;
    let bd = BenchData {
        train: &data.train,
        validation: Some(&data.validation),
        taxonomy: None,
    };
    let algos = [
        (ModelKind::Als, HyperParams { dim: 20, lambda: 5.0, ..HyperParams::defaults(ModelKind::Als) }),
        (ModelKind::Sgd, HyperParams { dim: 20, gamma: 3e-3, lambda: 1.5, ..HyperParams::defaults(ModelKind::Sgd) }),
    ];
    let report = bench(&algos, &threads, &[10, 40], &bd)?;
    print!("{}", report.to_tsv());
    Ok(())
}
