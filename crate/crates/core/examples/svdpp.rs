//! SVD++: user factors augmented by the implicit set of rated items.

use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::train::{train, TrainInput};
use multicf::{Engine, HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 2000, seed: 6, ..SynthConfig::default() })?;
    let engine = Engine::sequential();
    let input = TrainInput::new(&data.train).with_validation(&data.validation);
    for kind in [ModelKind::Sgd, ModelKind::Svdpp] {
        let h = HyperParams {
            iters: 20,
            dim: 10,
            gamma: 3e-3,
            lambda: 1.5,
            ..HyperParams::defaults(kind)
        };
        let (_, report) = train(kind, &input, &h, &engine)?;
        println!("{kind}: validation rmse {:.3}", report.last_valid_rmse().unwrap());
    }
    Ok(())
}
