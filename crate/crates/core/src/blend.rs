//! Ridge-regression blending of model predictions.
//!
//! Weights solve `(XᵀX + λI) w = Xᵀy` on validation predictions. The
//! two-phase pipeline fits weights with models trained on the training split,
//! then retrains every model with the same seeds on train ∪ validation and
//! combines their test predictions with those weights.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{dataset_keys, rmse, Key};
use crate::hyper::{HyperParams, ModelKind};
use crate::parallel::Engine;
use crate::taxonomy::TaxonomyGraph;
use crate::train::{train, TrainInput};

pub const INTERCEPT: &str = "intercept";

/// Prediction columns over a shared key list.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    keys: Vec<Key>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl PredictionMatrix {
    pub fn new(keys: Vec<Key>) -> Result<Self> {
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Alignment(format!("duplicate key {:?}", w[0])));
        }
        Ok(PredictionMatrix {
            keys,
            names: Vec::new(),
            columns: Vec::new(),
        })
    }

    /// Rows without keys (for already aligned data).
    pub fn unkeyed(rows: usize) -> Self {
        PredictionMatrix {
            keys: (0..rows as u32).map(|r| (r, 0, 0)).collect(),
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) -> Result<()> {
        if column.len() != self.keys.len() {
            return Err(Error::Shape(format!(
                "column of {} values for {} rows",
                column.len(),
                self.keys.len()
            )));
        }
        self.names.push(name.into());
        self.columns.push(column);
        Ok(())
    }

    /// Appends a constant column of ones.
    pub fn with_intercept(mut self) -> Self {
        let n = self.keys.len();
        self.names.push(INTERCEPT.to_string());
        self.columns.push(vec![1.0; n]);
        self
    }

    pub fn rows(&self) -> usize {
        self.keys.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    fn row_subset(&self, rows: &[usize]) -> PredictionMatrix {
        PredictionMatrix {
            keys: rows.iter().map(|&r| self.keys[r]).collect(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    pub names: Vec<String>,
    pub w: Vec<f64>,
    pub lambda: f64,
}

impl BlendWeights {
    pub fn to_text(&self) -> String {
        let mut s = format!("# lambda={}\n", self.lambda);
        for (n, w) in self.names.iter().zip(&self.w) {
            let _ = writeln!(s, "{n}\t{w}");
        }
        s
    }
}

/// Solves `(XᵀX + λI) w = Xᵀy`.
pub fn ridge_weights(x: &PredictionMatrix, y: &[f64], lambda: f64) -> Result<BlendWeights> {
    if !(lambda >= 0.0) {
        return Err(Error::Config("ridge lambda must be non-negative".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::Shape(format!("{} targets for {} rows", y.len(), x.rows())));
    }
    let m = x.cols();
    if m == 0 {
        return Err(Error::Shape("no prediction columns".into()));
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for j in 0..m {
        let cj = x.column(j);
        b[j] = cj.iter().zip(y).map(|(p, t)| p * t).sum();
        for k in 0..=j {
            let v: f64 = cj.iter().zip(x.column(k)).map(|(p, q)| p * q).sum();
            a[(j, k)] = v;
            a[(k, j)] = v;
        }
        a[(j, j)] += lambda;
    }
    // LU with partial pivoting: exact on diagonal systems, unlike Cholesky.
    let w = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular(format!("normal matrix of {m} prediction columns")))?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("normal matrix of {m} prediction columns")));
    }
    Ok(BlendWeights {
        names: x.names().to_vec(),
        w: w.iter().copied().collect(),
        lambda,
    })
}

/// Per-row weighted sum of the columns (unclipped).
pub fn blend_predict(x: &PredictionMatrix, w: &BlendWeights) -> Result<Vec<f64>> {
    if w.w.len() != x.cols() {
        return Err(Error::Shape(format!("{} weights for {} columns", w.w.len(), x.cols())));
    }
    let mut out = vec![0.0; x.rows()];
    for (k, &wk) in w.w.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(x.column(k)) {
            *o += wk * v;
        }
    }
    Ok(out)
}

/// Nine log-spaced values from 1e-6 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=2).map(|e| 10f64.powi(e)).collect()
}

fn fold_rows(n: usize, folds: usize, f: usize) -> (Vec<usize>, Vec<usize>) {
    let lo = f * n / folds;
    let hi = (f + 1) * n / folds;
    let held: Vec<usize> = (lo..hi).collect();
    let kept: Vec<usize> = (0..lo).chain(hi..n).collect();
    (kept, held)
}

/// Out-of-fold RMSE of ridge blending over `folds` contiguous folds.
pub fn cv_rmse(x: &PredictionMatrix, y: &[f64], lambda: f64, folds: usize) -> Result<f64> {
    let n = x.rows();
    if folds < 2 || n < folds {
        return Err(Error::Config(format!("cannot split {n} rows into {folds} folds")));
    }
    let mut pred = vec![0.0; n];
    for f in 0..folds {
        let (kept, held) = fold_rows(n, folds, f);
        let yk: Vec<f64> = kept.iter().map(|&r| y[r]).collect();
        let w = ridge_weights(&x.row_subset(&kept), &yk, lambda)?;
        let p = blend_predict(&x.row_subset(&held), &w)?;
        for (&r, v) in held.iter().zip(p) {
            pred[r] = v;
        }
    }
    rmse(&pred, y)
}

/// λ from `grid` with the lowest cross-validated RMSE (first on ties).
pub fn select_lambda(x: &PredictionMatrix, y: &[f64], grid: &[f64], folds: usize) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let score = cv_rmse(x, y, lambda, folds)?;
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, lambda));
        }
    }
    best.map(|(_, l)| l).ok_or_else(|| Error::Config("empty lambda grid".into()))
}

/// One model of a blend.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub hyper: HyperParams,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, hyper: HyperParams) -> Self {
        ModelSpec {
            name: kind.name().to_string(),
            kind,
            hyper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendOptions {
    /// Fixed ridge λ; chosen by cross-validation when absent.
    pub lambda: Option<f64>,
    pub intercept: bool,
    pub folds: usize,
}

impl Default for BlendOptions {
    fn default() -> Self {
        BlendOptions {
            lambda: None,
            intercept: false,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineData<'a> {
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
    pub test: &'a Dataset,
    pub taxonomy: Option<&'a TaxonomyGraph>,
}

impl<'a> PipelineData<'a> {
    fn input(&self, train: &'a Dataset) -> TrainInput<'a> {
        let all = [self.train, self.validation, self.test];
        let nonempty = all.iter().filter(|d| !d.is_empty());
        let lo = nonempty.clone().map(|d| d.t_min()).min().unwrap_or(0);
        let hi = nonempty.map(|d| d.t_max()).max().unwrap_or(0);
        TrainInput {
            train,
            validation: None,
            taxonomy: self.taxonomy,
            weights: None,
            time_range: Some((lo, hi)),
            min_dims: (
                all.iter().map(|d| d.num_users()).max().unwrap_or(0),
                all.iter().map(|d| d.num_items()).max().unwrap_or(0),
            ),
        }
    }
}

/// Trains every spec on `data.train` and collects validation predictions.
pub fn phase_one(specs: &[ModelSpec], data: &PipelineData<'_>, engine: &Engine) -> Result<PredictionMatrix> {
    let mut x = PredictionMatrix::new(dataset_keys(data.validation))?;
    let input = data.input(data.train);
    for spec in specs {
        let (model, _) = train(spec.kind, &input, &spec.hyper, engine)?;
        x.push(spec.name.clone(), model.predict_dataset(data.validation, engine))?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// `(name, validation RMSE, weight)` per model.
    pub models: Vec<(String, f64, f64)>,
    pub intercept: Option<f64>,
    pub lambda: f64,
    /// In-sample RMSE of the blend on validation.
    pub blend_rmse: f64,
    /// Out-of-fold RMSE of the blend on validation.
    pub blend_cv_rmse: f64,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("model\tweight\tvalid_rmse\n");
        for (name, r, w) in &self.models {
            let _ = writeln!(s, "{name}\t{w}\t{r:.6}");
        }
        if let Some(c) = self.intercept {
            let _ = writeln!(s, "{INTERCEPT}\t{c}\tNA");
        }
        let _ = writeln!(s, "blend\tNA\t{:.6}", self.blend_rmse);
        let _ = writeln!(s, "blend-cv\tNA\t{:.6}", self.blend_cv_rmse);
        let _ = writeln!(s, "# lambda={}", self.lambda);
        s
    }

    pub fn best_single(&self) -> f64 {
        self.models.iter().map(|m| m.1).fold(f64::INFINITY, f64::min)
    }
}

/// Fits blend weights on validation predictions and reports validation RMSEs.
pub fn fit_blend(x: &PredictionMatrix, truth: &[f64], opts: &BlendOptions) -> Result<(BlendWeights, PipelineReport)> {
    if x.rows() == 0 {
        return Err(Error::Config("empty validation set: blend weights cannot be fitted".into()));
    }
    let x = if opts.intercept { x.clone().with_intercept() } else { x.clone() };
    let folds = opts.folds.min(x.rows());
    let lambda = match opts.lambda {
        Some(l) => l,
        None => select_lambda(&x, truth, &default_lambda_grid(), folds)?,
    };
    let weights = ridge_weights(&x, truth, lambda)?;
    let blended = blend_predict(&x, &weights)?;
    let n_models = x.cols() - usize::from(opts.intercept);
    let mut models = Vec::with_capacity(n_models);
    for k in 0..n_models {
        models.push((x.names()[k].clone(), rmse(x.column(k), truth)?, weights.w[k]));
    }
    let report = PipelineReport {
        models,
        intercept: opts.intercept.then(|| weights.w[n_models]),
        lambda,
        blend_rmse: rmse(&blended, truth)?,
        blend_cv_rmse: if folds >= 2 { cv_rmse(&x, truth, lambda, folds)? } else { f64::NAN },
    };
    Ok((weights, report))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub test_predictions: Vec<f64>,
    pub weights: BlendWeights,
    pub report: PipelineReport,
}

/// Phase 1 on train, weights from validation, phase 2 on train ∪ validation.
pub fn two_phase_pipeline(
    specs: &[ModelSpec],
    data: &PipelineData<'_>,
    opts: &BlendOptions,
    engine: &Engine,
) -> Result<PipelineOutput> {
    if data.validation.is_empty() {
        return Err(Error::Config("empty validation set: blend weights cannot be fitted".into()));
    }
    let x_valid = phase_one(specs, data, engine)?;
    let truth: Vec<f64> = data.validation.records().iter().map(|r| r.score).collect();
    let (weights, report) = fit_blend(&x_valid, &truth, opts)?;

    let combined = data.train.concat(data.validation, Split::Train)?;
    let input = data.input(&combined);
    let mut x_test = PredictionMatrix::new(dataset_keys(data.test))?;
    for spec in specs {
        let (model, _) = train(spec.kind, &input, &spec.hyper, engine)?;
        x_test.push(spec.name.clone(), model.predict_dataset(data.test, engine))?;
    }
    if opts.intercept {
        x_test = x_test.with_intercept();
    }
    let test_predictions = blend_predict(&x_test, &weights)?;
    Ok(PipelineOutput {
        test_predictions,
        weights,
        report,
    })
}
