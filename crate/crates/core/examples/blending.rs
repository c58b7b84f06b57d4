//! Train several models, fit ridge weights on validation predictions, and
//! score the blended test predictions.

use multicf::blend::{two_phase_pipeline, BlendOptions, ModelSpec, PipelineData};
use multicf::synth::{generate_synthetic, SynthConfig};
use multicf::{Engine, HyperParams, ModelKind};

fn hyper(kind: ModelKind) -> HyperParams {
    HyperParams {
        iters: 20,
        dim: 10,
        gamma: 3e-3,
        lambda: 1.5,
        lambda1: 1.5,
        lambda2: 1.5,
        lambda3: if kind == ModelKind::Mfitr { 5.0 } else { 1.0 },
        lambda4: 5.0,
        ..HyperParams::defaults(kind)
    }
}

fn main() -> multicf::Result<()> {
    let data = generate_synthetic(&SynthConfig { users: 2000, seed: 10, ..SynthConfig::default() })?;
    let specs: Vec<ModelSpec> = [ModelKind::Svdpp, ModelKind::TimeSvdpp, ModelKind::Mfitr, ModelKind::Knn]
        .into_iter()
        .map(|k| ModelSpec::new(k, hyper(k)))
        .collect();
    let pd = PipelineData {
        train: &data.train,
        validation: &data.validation,
        test: &data.test,
        taxonomy: Some(&data.taxonomy),
    };
    let out = two_phase_pipeline(&specs, &pd, &BlendOptions::default(), &Engine::new(2)?)?;
    print!("{}", out.report.to_text());
    let truth: Vec<f64> = data.test.records().iter().map(|r| r.score).collect();
    println!("test rmse of blend {:.3}", multicf::eval::rmse(&out.test_predictions, &truth)?);
    Ok(())
}
