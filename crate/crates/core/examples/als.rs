//! Alternating least squares, one half-step at a time.

use multicf::factor::{AlsProblem, FactorModel, Side};
use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::{Engine, HyperParams, ModelKind};

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 1500, seed: 8, ..SynthConfig::default() })?;
    let h = HyperParams {
        dim: 8,
        lambda: 40.0,
        ..HyperParams::defaults(ModelKind::Als)
    };
    let nu = data.train.num_users().max(data.validation.num_users());
    let ni = data.train.num_items().max(data.validation.num_items());
    let mut model = FactorModel::init(ModelKind::Als, nu, ni, data.train.mean_score().unwrap(), &h, None)?;
    let problem = AlsProblem::new(&data.train, None)?;
    let engine = Engine::new(2)?;
    let truth: Vec<f64> = data.validation.records().iter().map(|r| r.score).collect();
    for it in 1..=8 {
        problem.half_step(&mut model, Side::Items, h.lambda, &engine)?;
        problem.half_step(&mut model, Side::Users, h.lambda, &engine)?;
        let pred: Vec<f64> = data.validation.records().iter().map(|r| model.predict(r.user, r.item, r.time)).collect();
        println!(
            "iter {it}: objective {:.1}, validation rmse {:.3}",
            problem.objective(&model, h.lambda),
            multicf::eval::rmse(&pred, &truth)?
        );
    }
    Ok(())
}
