//! Save a trained model as text and load it back.

use multicf::persist::{load_model, save_model};
use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::train::{train, TrainInput};
use multicf::{Engine, HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 500, seed: 12, ..SynthConfig::default() })?;
    let h = HyperParams {
        iters: 5,
        dim: 6,
        gamma: 3e-3,
        ..HyperParams::defaults(ModelKind::TimeSvdpp)
    };
    let engine = Engine::sequential();
    let (model, _) = train(ModelKind::TimeSvdpp, &TrainInput::new(&data.train), &h, &engine)?;
    let path = std::env::temp_dir().join("multicf-example-model.txt");
    save_model(&path, &model)?;
    let back = load_model(&path, None)?;
    let r = &data.test.records()[0];
    println!("{} -> {}", model.predict(r.user, r.item, r.time), back.predict(r.user, r.item, r.time));
    Ok(())
}
