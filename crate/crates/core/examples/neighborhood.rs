//! Item-based kNN with adjusted-cosine similarities, plain and time-decayed.

use multicf::neighborhood::{adjusted_cosine, build_neighbors, user_means, NeighborhoodPredictor};
use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::Engine;

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 1500, seed: 3, ..SynthConfig::default() })?;
    let engine = Engine::new(2)?;

    let means = user_means(&data.train);
    println!("sim(0, 1) = {:.4}", adjusted_cosine(0, 1, &data.train, &means));

    // The item range is split into 8 blocks so partial sums stay small.
    let table = build_neighbors(&data.train, 30, 8, &engine)?;
    println!("item 10 neighbours: {:?}", &table.neighbors(10)[..5.min(table.neighbors(10).len())]);

    let predictor = NeighborhoodPredictor::new(table, &data.train);
    let truth: Vec<f64> = data.validation.records().iter().map(|r| r.score).collect();
    for beta in [None, Some(0.01), Some(0.08)] {
        let pred: Vec<f64> = data
            .validation
            .records()
            .iter()
            .map(|r| match beta {
                None => predictor.predict_knn(r.user, r.item),
                Some(b) => predictor.predict_knn_time(r.user, r.item, r.time, b),
            })
            .collect();
        println!("beta {beta:?}: rmse {:.3}", multicf::eval::rmse(&pred, &truth)?);
    }
    Ok(())
}
