//! Taxonomy-regularized factorization: tracks pulled towards albums and
//! artists, with an extra artist bias and factor for every item.

use multicf::mfitr::edge_weights;
use multicf::neighborhood::user_means;
use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::train::{train, TrainInput};
use multicf::{Engine, HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 2000, seed: 9, ..SynthConfig::default() })?;
    let ew = edge_weights(&data.taxonomy, &data.train, &user_means(&data.train));
    println!("{} taxonomy edges with similarity weights", ew.len());

    let engine = Engine::sequential();
    let input = TrainInput::new(&data.train)
        .with_validation(&data.validation)
        .with_taxonomy(&data.taxonomy);
    let base = HyperParams {
        iters: 20,
        dim: 10,
        gamma: 3e-3,
        lambda: 1.5,
        lambda1: 1.5,
        lambda2: 1.5,
        ..HyperParams::defaults(ModelKind::Sgd)
    };
    let (_, plain) = train(ModelKind::Sgd, &input, &base, &engine)?;
    let h = HyperParams {
        lambda3: 5.0,
        lambda4: 5.0,
        ..base
    };
    let (_, tax) = train(ModelKind::Mfitr, &input, &h, &engine)?;
    println!("sgd   validation rmse {:.3}", plain.last_valid_rmse().unwrap());
    println!("mfitr validation rmse {:.3}", tax.last_valid_rmse().unwrap());
    Ok(())
}
