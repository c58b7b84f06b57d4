//! `multicf` command line.
//!
//! Hyperparameters resolve in this order, later winning: per-kind defaults,
//! plain keys of `--config`, `<kind>.<key>` keys of `--config`, the global
//! `--seed`, explicit flags. `train` and `blend` echo the resolved values to
//! `config.txt` in the output directory; feeding that file back through
//! `--config` reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{bench, BenchData};
use crate::blend::{
    blend_predict, fit_blend, two_phase_pipeline, BlendOptions, ModelSpec, PipelineData, PredictionMatrix,
};
use crate::config::KeyValues;
use crate::data::{load_ratings, Dataset, ScoreScale, Split};
use crate::error::{Error, Result};
use crate::eval::{compare, dataset_keys, PredictionFile};
use crate::hyper::{HyperParams, ModelKind};
use crate::parallel::Engine;
use crate::persist::{load_model, save_model};
use crate::synth::{generate_synthetic, SynthConfig};
use crate::taxonomy::{load_taxonomy, LinkPolicy, TaxonomyGraph};
use crate::train::{train, TrainInput};

#[derive(Debug, Parser)]
#[command(name = "multicf", version, about = "Collaborative filtering models, blending and benchmarks")]
pub struct Cli {
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Seed for generation, initialization and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// key=value file (plain hyperparameter keys, `<kind>.<key>`, `synth.<key>`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    pub outdir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a planted model and taxonomy.
    Gen(GenArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Predict scores for a rating file with a saved model.
    Predict(PredictArgs),
    /// RMSE of prediction files against a rating file.
    Eval(EvalArgs),
    /// Ridge blend of several models.
    Blend(BlendArgs),
    /// Time training iterations across threads and widths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub artists: Option<usize>,
    #[arg(long)]
    pub albums_per_artist: Option<usize>,
    #[arg(long)]
    pub tracks_per_album: Option<usize>,
    #[arg(long)]
    pub ratings_per_user: Option<usize>,
    /// Planted factor dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub days: Option<i64>,
    /// Train/validation/test fractions, e.g. `0.8,0.1,0.1`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    pub no_drift: bool,
    /// Taxonomy unrelated to the planted factors.
    #[arg(long)]
    pub incoherent_taxonomy: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperFlags {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub lambda4: Option<f64>,
    #[arg(long)]
    pub lambda5: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub time_dim: Option<usize>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long)]
    pub knn_parts: Option<usize>,
    #[arg(long)]
    pub knn_beta: Option<f64>,
}

impl HyperFlags {
    fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        macro_rules! put {
            ($($f:ident),*) => {
                $(if let Some(v) = self.$f {
                    kv.set(stringify!($f), v);
                })*
            };
        }
        put!(gamma, decay, lambda, lambda1, lambda2, lambda3, lambda4, lambda5, iters, dim, time_dim, bins);
        put!(init_scale, knn_k, knn_parts, knn_beta);
        kv
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model kind (knn, time-knn, als, wals, sgd, svdpp, time-svd, time-svdpp, mfitr, time-mfitr).
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Required by mfitr and time-mfitr.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// wALS rating weights, one per training line.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Defaults to `<outdir>/model.txt`.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Ratings to score (the score column is ignored).
    #[arg(long)]
    pub data: PathBuf,
    /// Training ratings; needed for neighbourhood models.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Defaults to `<outdir>/predictions.tsv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Prediction files as `name=path` or `path`.
    #[arg(required = true)]
    pub predictions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    /// Models to train and blend, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub validation: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Precomputed validation predictions (`name=path`) instead of training.
    #[arg(long = "valid-pred")]
    pub valid_pred: Vec<String>,
    /// Precomputed test predictions (`name=path`), same names as `--valid-pred`.
    #[arg(long = "test-pred")]
    pub test_pred: Vec<String>,
    /// Ridge λ; chosen by 5-fold cross-validation when absent.
    #[arg(long = "blend-lambda")]
    pub blend_lambda: Option<f64>,
    /// Add a constant column.
    #[arg(long)]
    pub intercept: bool,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "als,sgd")]
    pub algos: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub bench_threads: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub bench_dims: Vec<usize>,
    #[command(flatten)]
    pub hyper: HyperFlags,
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    check_config_keys(&config)?;
    let engine = Engine::new(cli.threads)?;
    fs::create_dir_all(&cli.outdir).map_err(|e| Error::Io {
        path: cli.outdir.clone(),
        source: e,
    })?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, &config, a),
        Command::Train(a) => cmd_train(cli, &config, a, &engine),
        Command::Predict(a) => cmd_predict(cli, a, &engine),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Blend(a) => cmd_blend(cli, &config, a, &engine),
        Command::Bench(a) => cmd_bench(cli, &config, a),
    }
}

fn check_config_keys(kv: &KeyValues) -> Result<()> {
    for key in kv.keys() {
        let ok = match key.split_once('.') {
            None => HyperParams::is_key(key) || key == "kind" || key == "models",
            Some(("synth", _)) => true,
            Some((kind, k)) => kind.parse::<ModelKind>().is_ok() && HyperParams::is_key(k),
        };
        if !ok {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
    }
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Hyperparameters for `kind` after all overrides.
pub fn resolve_hyper(kind: ModelKind, config: &KeyValues, seed: Option<u64>, flags: &HyperFlags) -> Result<HyperParams> {
    let mut h = HyperParams::defaults(kind);
    let mut plain = KeyValues::new();
    let mut scoped = KeyValues::new();
    let prefix = format!("{}.", kind.name());
    for (k, v) in config.iter() {
        if HyperParams::is_key(k) {
            plain.set(k, v);
        } else if let Some(rest) = k.strip_prefix(&prefix) {
            scoped.set(rest, v);
        }
    }
    h.apply(&plain)?;
    h.apply(&scoped)?;
    if let Some(s) = seed {
        h.seed = s;
    }
    h.apply(&flags.to_key_values())?;
    h.validate()?;
    Ok(h)
}

fn load(path: &Path, split: Split) -> Result<Dataset> {
    load_ratings(path, split, ScoreScale::default())
}

fn load_tax(path: Option<&PathBuf>) -> Result<Option<TaxonomyGraph>> {
    path.map(|p| load_taxonomy(p, LinkPolicy::Strict)).transpose()
}

fn cmd_gen(cli: &Cli, config: &KeyValues, a: &GenArgs) -> Result<()> {
    let mut kv = KeyValues::new();
    for (k, v) in config.iter() {
        if let Some(rest) = k.strip_prefix("synth.") {
            kv.set(rest, v);
        }
    }
    let mut c = SynthConfig::from_key_values(&kv)?;
    macro_rules! take {
        ($($f:ident),*) => {
            $(if let Some(v) = a.$f {
                c.$f = v;
            })*
        };
    }
    take!(users, artists, albums_per_artist, tracks_per_album, ratings_per_user, dim, noise, days);
    if let Some(s) = &a.split {
        (c.split_train, c.split_valid, c.split_test) = (s[0], s[1], s[2]);
    }
    if a.no_drift {
        c.drift = false;
    }
    if a.incoherent_taxonomy {
        c.coherent_taxonomy = false;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    let data = generate_synthetic(&c)?;
    data.write_to(&cli.outdir, &c)?;
    println!(
        "wrote {} train, {} validation, {} test ratings and {} taxonomy nodes to {}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        data.taxonomy.num_nodes(),
        cli.outdir.display()
    );
    Ok(())
}

fn load_weights(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("bad weight `{l}`"),
                })
        })
        .collect()
}

fn cmd_train(cli: &Cli, config: &KeyValues, a: &TrainArgs, engine: &Engine) -> Result<()> {
    let kind: ModelKind = match (&a.kind, config.get("kind")) {
        (Some(k), _) => k.parse()?,
        (None, Some(k)) => k.parse()?,
        (None, None) => return Err(Error::Usage("`--kind` is required".into())),
    };
    let hyper = resolve_hyper(kind, config, cli.seed, &a.hyper)?;
    if kind.uses_taxonomy() && a.taxonomy.is_none() {
        return Err(Error::Usage(format!("`{kind}` requires a taxonomy (--taxonomy)")));
    }
    let train_set = load(&a.train, Split::Train)?;
    let validation = a.validation.as_deref().map(|p| load(p, Split::Validation)).transpose()?;
    let taxonomy = load_tax(a.taxonomy.as_ref())?;
    let weights = a.weights.as_deref().map(load_weights).transpose()?;

    let mut input = TrainInput::new(&train_set);
    input.validation = validation.as_ref();
    input.taxonomy = taxonomy.as_ref();
    input.weights = weights.as_deref();

    let mut echo = hyper.to_key_values();
    echo.set("kind", kind.name());
    write_file(&cli.outdir.join("config.txt"), &echo.to_text())?;

    let (model, report) = train(kind, &input, &hyper, engine)?;
    let model_path = a.model_out.clone().unwrap_or_else(|| cli.outdir.join("model.txt"));
    save_model(&model_path, &model)?;
    write_file(&cli.outdir.join("epochs.tsv"), &report.to_tsv())?;
    match report.last_valid_rmse().or_else(|| validation.as_ref().and_then(|v| model.rmse_on(v, engine))) {
        Some(r) => println!("{kind}: validation rmse {r:.6}; model written to {}", model_path.display()),
        None => println!("{kind}: model written to {}", model_path.display()),
    }
    Ok(())
}

fn cmd_predict(cli: &Cli, a: &PredictArgs, engine: &Engine) -> Result<()> {
    let train_set = a.train.as_deref().map(|p| load(p, Split::Train)).transpose()?;
    let model = load_model(&a.model, train_set.as_ref())?;
    let data = load(&a.data, Split::Test)?;
    let scores = model.predict_dataset(&data, engine);
    let out = a.out.clone().unwrap_or_else(|| cli.outdir.join("predictions.tsv"));
    PredictionFile::new(dataset_keys(&data), scores)?.save(&out, Some(data.scale()))?;
    println!("wrote {} predictions to {}", data.len(), out.display());
    Ok(())
}

fn named_path(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((n, p)) => (n.to_string(), PathBuf::from(p)),
        None => {
            let p = PathBuf::from(spec);
            let name = p.file_stem().map_or(spec.to_string(), |s| s.to_string_lossy().into_owned());
            (name, p)
        }
    }
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let truth = load(&a.truth, Split::Test)?;
    let mut models = Vec::with_capacity(a.predictions.len());
    for spec in &a.predictions {
        let (name, path) = named_path(spec);
        models.push((name, PredictionFile::load(&path)?));
    }
    let report = compare(&models, &truth)?;
    let tsv = report.to_tsv();
    write_file(&cli.outdir.join("eval.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

fn cmd_blend(cli: &Cli, config: &KeyValues, a: &BlendArgs, engine: &Engine) -> Result<()> {
    let validation = load(&a.validation, Split::Validation)?;
    let opts = BlendOptions {
        lambda: a.blend_lambda,
        intercept: a.intercept,
        folds: 5,
    };
    if !a.valid_pred.is_empty() {
        return blend_precomputed(cli, a, &validation, &opts);
    }
    let names: Vec<String> = if a.models.is_empty() {
        config
            .get("models")
            .map(|m| m.split(',').map(|s| s.trim().to_string()).collect())
            .unwrap_or_default()
    } else {
        a.models.clone()
    };
    if names.is_empty() {
        return Err(Error::Usage("`--models` or `--valid-pred` is required".into()));
    }
    let (Some(train_path), Some(test_path)) = (&a.train, &a.test) else {
        return Err(Error::Usage("`--train` and `--test` are required when training models".into()));
    };
    let mut specs = Vec::with_capacity(names.len());
    let mut echo = KeyValues::new();
    echo.set("models", names.join(","));
    for n in &names {
        let kind: ModelKind = n.parse()?;
        let hyper = resolve_hyper(kind, config, cli.seed, &a.hyper)?;
        for (k, v) in hyper.to_key_values().iter() {
            echo.set(format!("{}.{k}", kind.name()), v);
        }
        specs.push(ModelSpec::new(kind, hyper));
    }
    write_file(&cli.outdir.join("config.txt"), &echo.to_text())?;
    let train_set = load(train_path, Split::Train)?;
    let test = load(test_path, Split::Test)?;
    let taxonomy = load_tax(a.taxonomy.as_ref())?;
    let data = PipelineData {
        train: &train_set,
        validation: &validation,
        test: &test,
        taxonomy: taxonomy.as_ref(),
    };
    let out = two_phase_pipeline(&specs, &data, &opts, engine)?;
    write_file(&cli.outdir.join("weights.txt"), &out.weights.to_text())?;
    write_file(&cli.outdir.join("blend_report.tsv"), &out.report.to_text())?;
    PredictionFile::new(dataset_keys(&test), out.test_predictions)?
        .save(cli.outdir.join("blend_test.tsv"), Some(test.scale()))?;
    print!("{}", out.report.to_text());
    Ok(())
}

fn blend_precomputed(cli: &Cli, a: &BlendArgs, validation: &Dataset, opts: &BlendOptions) -> Result<()> {
    let keys = dataset_keys(validation);
    let mut x = PredictionMatrix::new(keys)?;
    for spec in &a.valid_pred {
        let (name, path) = named_path(spec);
        let file = PredictionFile::load(&path)?;
        x.push(name, file.aligned_to(x.keys())?)?;
    }
    let truth: Vec<f64> = validation.records().iter().map(|r| r.score).collect();
    let (weights, report) = fit_blend(&x, &truth, opts)?;
    write_file(&cli.outdir.join("weights.txt"), &weights.to_text())?;
    write_file(&cli.outdir.join("blend_report.tsv"), &report.to_text())?;

    if !a.test_pred.is_empty() {
        let files: Vec<(String, PredictionFile)> = a
            .test_pred
            .iter()
            .map(|s| {
                let (n, p) = named_path(s);
                PredictionFile::load(&p).map(|f| (n, f))
            })
            .collect::<Result<_>>()?;
        let keys = files[0].1.keys.clone();
        let mut xt = PredictionMatrix::new(keys.clone())?;
        for name in x.names().iter().take(x.cols()) {
            let (_, f) = files
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Alignment(format!("no test predictions for model `{name}`")))?;
            xt.push(name.clone(), f.aligned_to(&keys)?)?;
        }
        if opts.intercept {
            xt = xt.with_intercept();
        }
        let blended = blend_predict(&xt, &weights)?;
        PredictionFile::new(keys, blended)?.save(cli.outdir.join("blend_test.tsv"), Some(validation.scale()))?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_bench(cli: &Cli, config: &KeyValues, a: &BenchArgs) -> Result<()> {
    let train_set = load(&a.train, Split::Train)?;
    let validation = a.validation.as_deref().map(|p| load(p, Split::Validation)).transpose()?;
    let taxonomy = load_tax(a.taxonomy.as_ref())?;
    let mut algos = Vec::with_capacity(a.algos.len());
    for name in &a.algos {
        let kind: ModelKind = name.parse()?;
        algos.push((kind, resolve_hyper(kind, config, cli.seed, &a.hyper)?));
    }
    let data = BenchData {
        train: &train_set,
        validation: validation.as_ref(),
        taxonomy: taxonomy.as_ref(),
    };
    let report = bench(&algos, &a.bench_threads, &a.bench_dims, &data)?;
    let tsv = report.to_tsv();
    write_file(&cli.outdir.join("bench.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_override_defaults() {
        let config = KeyValues::parse("gamma=0.5\nsgd.gamma=0.25\nsvdpp.gamma=9\ndim=7").unwrap();
        let flags = HyperFlags {
            dim: Some(3),
            ..HyperFlags::default()
        };
        let h = resolve_hyper(ModelKind::Sgd, &config, Some(11), &flags).unwrap();
        assert_eq!(h.gamma, 0.25);
        assert_eq!(h.dim, 3);
        assert_eq!(h.seed, 11);
        let d = resolve_hyper(ModelKind::Als, &KeyValues::new(), None, &HyperFlags::default()).unwrap();
        assert_eq!(d, HyperParams::defaults(ModelKind::Als));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(check_config_keys(&KeyValues::parse("gama=1").unwrap()).is_err());
        assert!(check_config_keys(&KeyValues::parse("nope.gamma=1").unwrap()).is_err());
        assert!(check_config_keys(&KeyValues::parse("mfitr.lambda3=1\nsynth.users=5").unwrap()).is_ok());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["multicf", "train"]), 1);
        assert_eq!(run(["multicf", "frobnicate"]), 1);
    }
}
