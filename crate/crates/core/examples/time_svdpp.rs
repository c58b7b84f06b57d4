//! Time-aware SVD++ with binned item biases and a time factor block.

use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::train::{train, TrainInput};
use multicf::{Engine, HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 2000, seed: 7, ..SynthConfig::default() })?;
    let engine = Engine::sequential();
    let input = TrainInput::new(&data.train).with_validation(&data.validation);
    for kind in [ModelKind::Svdpp, ModelKind::TimeSvd, ModelKind::TimeSvdpp] {
        let h = HyperParams {
            iters: 20,
            dim: 10,
            time_dim: 4,
            bins: 30,
            gamma: 3e-3,
            lambda: 1.5,
            lambda1: 1.5,
            lambda2: 1.5,
            lambda3: 1.0,
            ..HyperParams::defaults(kind)
        };
        let (_, report) = train(kind, &input, &h, &engine)?;
        println!("{kind}: validation rmse {:.3}", report.last_valid_rmse().unwrap());
    }
    Ok(())
}
