//! Biased matrix factorization trained with parallel SGD.

use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::train::{train, TrainInput};
use multicf::{Engine, HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 2000, seed: 5, ..SynthConfig::default() })?;
    let h = HyperParams {
        iters: 20,
        dim: 10,
        gamma: 3e-3,
        lambda: 1.5,
        ..HyperParams::defaults(ModelKind::Sgd)
    };
    let input = TrainInput::new(&data.train).with_validation(&data.validation);
    let (model, report) = train(ModelKind::Sgd, &input, &h, &Engine::new(2)?)?;
    print!("{}", report.to_tsv());
    let rmse = model.rmse_on(&data.test, &Engine::sequential()).unwrap();
    println!("test rmse {rmse:.3}");
    Ok(())
}
