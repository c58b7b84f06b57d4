//! Training driver for every model kind.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{Dataset, ItemId, Timestamp, TimeBinner, UserId};
use crate::error::{Error, Result};
use crate::factor::{rating_objective, sgd_epoch, AlsProblem, EpochPlan, FactorModel, Side, UserItems};
use crate::hyper::{HyperParams, ModelKind};
use crate::mfitr::{edge_weights, graph_penalty, sgd_epoch_mfitr, MfitrModel, TaxonomyEdgeWeights};
use crate::neighborhood::{build_neighbors, user_means, NeighborhoodPredictor};
use crate::parallel::Engine;
use crate::taxonomy::TaxonomyGraph;

/// Data handed to [`train`].
#[derive(Debug, Clone, Copy)]
pub struct TrainInput<'a> {
    pub train: &'a Dataset,
    /// Scored after every epoch when present.
    pub validation: Option<&'a Dataset>,
    /// Required by the taxonomy models.
    pub taxonomy: Option<&'a TaxonomyGraph>,
    /// Per-rating weights for wALS (one per training record).
    pub weights: Option<&'a [f64]>,
    /// Time range for time-aware models; defaults to the range of train and
    /// validation.
    pub time_range: Option<(Timestamp, Timestamp)>,
    /// Minimum id-space sizes of the model (users, items).
    pub min_dims: (usize, usize),
}

impl<'a> TrainInput<'a> {
    pub fn new(train: &'a Dataset) -> Self {
        TrainInput {
            train,
            validation: None,
            taxonomy: None,
            weights: None,
            time_range: None,
            min_dims: (0, 0),
        }
    }

    pub fn with_validation(mut self, validation: &'a Dataset) -> Self {
        self.validation = Some(validation);
        self
    }

    pub fn with_taxonomy(mut self, taxonomy: &'a TaxonomyGraph) -> Self {
        self.taxonomy = Some(taxonomy);
        self
    }

    pub fn binner(&self, bins: usize) -> Result<TimeBinner> {
        match self.time_range {
            Some((lo, hi)) => TimeBinner::new(lo, hi, bins),
            None => TimeBinner::covering(std::iter::once(self.train).chain(self.validation), bins),
        }
    }

    fn dims(&self) -> (usize, usize) {
        let mut nu = self.train.num_users().max(self.min_dims.0);
        let mut ni = self.train.num_items().max(self.min_dims.1);
        if let Some(v) = self.validation {
            nu = nu.max(v.num_users());
            ni = ni.max(v.num_items());
        }
        if let Some(g) = self.taxonomy {
            ni = ni.max(g.num_nodes());
        }
        (nu, ni)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub gamma: f64,
    pub objective: f64,
    pub valid_rmse: Option<f64>,
    pub seconds: f64,
}

/// One row per epoch (ALS: per full iteration).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochReport {
    pub rows: Vec<EpochRow>,
}

impl EpochReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\tgamma\tobjective\tvalid_rmse\tseconds\n");
        for r in &self.rows {
            let rmse = r.valid_rmse.map_or("NA".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "{}\t{:e}\t{:.6e}\t{}\t{:.4}", r.epoch, r.gamma, r.objective, rmse, r.seconds);
        }
        s
    }

    pub fn last_valid_rmse(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.valid_rmse)
    }
}

/// Neighbour table plus prediction settings.
#[derive(Debug, Clone)]
pub struct NeighborhoodModel {
    pub predictor: NeighborhoodPredictor,
    /// Decay rate for the time-aware variant.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Neighborhood(NeighborhoodModel),
    Factor(FactorModel),
    Mfitr(MfitrModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Neighborhood(m) => {
                if m.beta.is_some() {
                    ModelKind::TimeKnn
                } else {
                    ModelKind::Knn
                }
            }
            TrainedModel::Factor(m) => m.kind,
            TrainedModel::Mfitr(m) => m.base.kind,
        }
    }

    /// Never fails: unknown users, items and times fall back to known terms.
    pub fn predict(&self, u: UserId, i: ItemId, t: Timestamp) -> f64 {
        match self {
            TrainedModel::Neighborhood(m) => match m.beta {
                Some(beta) => m.predictor.predict_knn_time(u, i, t, beta),
                None => m.predictor.predict_knn(u, i),
            },
            TrainedModel::Factor(m) => m.predict(u, i, t),
            TrainedModel::Mfitr(m) => m.predict(u, i, t),
        }
    }

    /// Predictions for every record of `data`, in record order.
    pub fn predict_dataset(&self, data: &Dataset, engine: &Engine) -> Vec<f64> {
        let records = data.records();
        engine.map_indices(records.len(), |k| {
            let r = &records[k];
            self.predict(r.user, r.item, r.time)
        })
    }

    pub fn rmse_on(&self, data: &Dataset, engine: &Engine) -> Option<f64> {
        if data.is_empty() {
            return None;
        }
        let pred = self.predict_dataset(data, engine);
        let se: f64 = pred.iter().zip(data.records()).map(|(p, r)| (p - r.score).powi(2)).sum();
        Some((se / data.len() as f64).sqrt())
    }
}

fn rmse_with(data: &Dataset, predict: impl Fn(UserId, ItemId, Timestamp) -> f64) -> Option<f64> {
    if data.is_empty() {
        return None;
    }
    let se: f64 = data
        .records()
        .iter()
        .map(|r| (r.score - predict(r.user, r.item, r.time)).powi(2))
        .sum();
    Some((se / data.len() as f64).sqrt())
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

enum State<'a> {
    Als { problem: AlsProblem<'a>, model: FactorModel },
    Mfitr { model: MfitrModel, ew: TaxonomyEdgeWeights, user_items: UserItems },
    Sgd { model: FactorModel, user_items: UserItems },
}

/// Epoch-by-epoch driver for the factor models.
pub struct Trainer<'a> {
    kind: ModelKind,
    hyper: HyperParams,
    train: &'a Dataset,
    epoch: usize,
    state: State<'a>,
}

impl<'a> Trainer<'a> {
    /// Seeded initial model; neighbourhood kinds are rejected.
    pub fn new(kind: ModelKind, input: &TrainInput<'a>, hyper: &HyperParams) -> Result<Self> {
        hyper.validate()?;
        if kind.is_neighborhood() {
            return Err(Error::Usage(format!("`{kind}` has no training epochs")));
        }
        let train = input.train;
        let (nu, ni) = input.dims();
        let mu = train.mean_score().unwrap_or(0.0);
        let binner = if kind.uses_time() { Some(input.binner(hyper.bins)?) } else { None };
        let state = if kind.is_als() {
            let weights = if kind == ModelKind::Wals { input.weights } else { None };
            let problem = AlsProblem::new(train, weights)?;
            let mut model = FactorModel::init(kind, nu, ni, mu, hyper, None)?;
            model.mu = mu;
            State::Als { problem, model }
        } else if kind.uses_taxonomy() {
            let g = input
                .taxonomy
                .ok_or_else(|| Error::Usage(format!("`{kind}` requires a taxonomy")))?;
            State::Mfitr {
                ew: edge_weights(g, train, &user_means(train)),
                model: MfitrModel::init(kind, nu, ni, mu, hyper, binner, g)?,
                user_items: UserItems::build(train),
            }
        } else {
            let user_items = UserItems::build(train);
            let mut model = FactorModel::init(kind, nu, ni, mu, hyper, binner)?;
            model.refresh_implicit(&user_items);
            State::Sgd { model, user_items }
        };
        Ok(Trainer {
            kind,
            hyper: hyper.clone(),
            train,
            epoch: 0,
            state,
        })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Runs one epoch (ALS: item half-step then user half-step) and returns
    /// the learning rate used (0 for ALS).
    pub fn step(&mut self, engine: &Engine) -> Result<f64> {
        let (kind, train, epoch) = (self.kind, self.train, self.epoch);
        let gamma = match &mut self.state {
            State::Als { problem, model } => {
                problem.half_step(model, Side::Items, self.hyper.lambda, engine)?;
                problem.half_step(model, Side::Users, self.hyper.lambda, engine)?;
                0.0
            }
            State::Mfitr { model, ew, user_items } => {
                let plan = EpochPlan::new(kind, train, user_items, &self.hyper, epoch);
                sgd_epoch_mfitr(model, train, ew, &plan, engine)?;
                plan.gamma
            }
            State::Sgd { model, user_items } => {
                let plan = EpochPlan::new(kind, train, user_items, &self.hyper, epoch);
                sgd_epoch(model, train, &plan, engine)?;
                model.refresh_implicit(user_items);
                plan.gamma
            }
        };
        self.epoch += 1;
        Ok(gamma)
    }

    /// Training objective of the current parameters.
    pub fn objective(&self) -> f64 {
        let reg = self.hyper.regularization(self.kind);
        match &self.state {
            State::Als { problem, model } => problem.objective(model, self.hyper.lambda),
            State::Mfitr { model, ew, user_items } => {
                rating_objective(&model.base, Some(model.view()), self.train, user_items, reg)
                    + graph_penalty(model, ew, reg)
            }
            State::Sgd { model, user_items } => rating_objective(model, None, self.train, user_items, reg),
        }
    }

    pub fn predict(&self, u: UserId, i: ItemId, t: Timestamp) -> f64 {
        match &self.state {
            State::Als { model, .. } | State::Sgd { model, .. } => model.predict(u, i, t),
            State::Mfitr { model, .. } => model.predict(u, i, t),
        }
    }

    pub fn rmse_on(&self, data: &Dataset) -> Option<f64> {
        rmse_with(data, |u, i, t| self.predict(u, i, t))
    }

    pub fn into_model(self) -> TrainedModel {
        match self.state {
            State::Als { model, .. } | State::Sgd { model, .. } => TrainedModel::Factor(model),
            State::Mfitr { model, .. } => TrainedModel::Mfitr(model),
        }
    }
}

/// Trains a model of `kind` for `hyper.iters` epochs (no early stopping).
pub fn train(
    kind: ModelKind,
    input: &TrainInput<'_>,
    hyper: &HyperParams,
    engine: &Engine,
) -> Result<(TrainedModel, EpochReport)> {
    hyper.validate()?;
    let mut report = EpochReport::default();
    if kind.is_neighborhood() {
        let table = build_neighbors(input.train, hyper.knn_k, hyper.knn_parts, engine)?;
        let model = TrainedModel::Neighborhood(NeighborhoodModel {
            predictor: NeighborhoodPredictor::new(table, input.train),
            beta: (kind == ModelKind::TimeKnn).then_some(hyper.knn_beta),
        });
        return Ok((model, report));
    }
    let mut trainer = Trainer::new(kind, input, hyper)?;
    for _ in 0..hyper.iters {
        let start = Instant::now();
        let gamma = trainer.step(engine)?;
        let seconds = elapsed(start);
        report.rows.push(EpochRow {
            epoch: trainer.epoch(),
            gamma,
            objective: trainer.objective(),
            valid_rmse: input.validation.and_then(|v| trainer.rmse_on(v)),
            seconds,
        });
    }
    Ok((trainer.into_model(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};

    fn small() -> crate::synth::SyntheticData {
        generate_synthetic(&SynthConfig {
            users: 60,
            artists: 4,
            ratings_per_user: 12,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn quick(kind: ModelKind) -> HyperParams {
        HyperParams {
            dim: 3,
            iters: 4,
            gamma: 2e-3,
            lambda: 0.02,
            lambda1: 0.02,
            lambda2: 0.02,
            lambda3: 0.02,
            lambda4: 0.02,
            lambda5: 0.02,
            knn_k: 10,
            knn_parts: 3,
            ..HyperParams::defaults(kind)
        }
    }

    #[test]
    fn every_kind_trains_and_reports() {
        let data = small();
        let engine = Engine::sequential();
        for kind in ModelKind::ALL {
            let mut h = quick(kind);
            if kind.is_als() {
                h.lambda = 1.0;
            }
            let input = TrainInput::new(&data.train)
                .with_validation(&data.validation)
                .with_taxonomy(&data.taxonomy);
            let (model, report) = train(kind, &input, &h, &engine).unwrap();
            assert_eq!(model.kind(), kind);
            if !kind.is_neighborhood() {
                assert_eq!(report.rows.len(), 4, "{kind}");
                assert!(report.rows.iter().all(|r| r.valid_rmse.unwrap().is_finite()));
            }
            let rmse = model.rmse_on(&data.test, &engine).unwrap();
            // kNN outputs are averages of in-range ratings, so only the scale bounds them here.
            let bound = if kind.is_neighborhood() { 100.0 } else { 60.0 };
            assert!(rmse.is_finite() && rmse < bound, "{kind}: {rmse}");
        }
    }

    #[test]
    fn zero_iterations_return_the_initial_model() {
        let data = small();
        let h = HyperParams {
            iters: 0,
            ..quick(ModelKind::Sgd)
        };
        let (model, report) = train(ModelKind::Sgd, &TrainInput::new(&data.train), &h, &Engine::sequential()).unwrap();
        assert!(report.rows.is_empty());
        let init = FactorModel::init(
            ModelKind::Sgd,
            data.train.num_users(),
            data.train.num_items(),
            data.train.mean_score().unwrap(),
            &h,
            None,
        )
        .unwrap();
        match model {
            TrainedModel::Factor(m) => assert_eq!(m, init),
            _ => panic!("wrong model type"),
        }
    }

    #[test]
    fn taxonomy_is_required() {
        let data = small();
        let err = train(
            ModelKind::Mfitr,
            &TrainInput::new(&data.train),
            &quick(ModelKind::Mfitr),
            &Engine::sequential(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
