//! Model kinds and their hyperparameters.

use std::fmt;
use std::str::FromStr;

use crate::config::KeyValues;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Knn,
    TimeKnn,
    Als,
    Wals,
    Sgd,
    Svdpp,
    TimeSvd,
    TimeSvdpp,
    Mfitr,
    TimeMfitr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Knn,
        ModelKind::TimeKnn,
        ModelKind::Als,
        ModelKind::Wals,
        ModelKind::Sgd,
        ModelKind::Svdpp,
        ModelKind::TimeSvd,
        ModelKind::TimeSvdpp,
        ModelKind::Mfitr,
        ModelKind::TimeMfitr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::TimeKnn => "time-knn",
            ModelKind::Als => "als",
            ModelKind::Wals => "wals",
            ModelKind::Sgd => "sgd",
            ModelKind::Svdpp => "svdpp",
            ModelKind::TimeSvd => "time-svd",
            ModelKind::TimeSvdpp => "time-svdpp",
            ModelKind::Mfitr => "mfitr",
            ModelKind::TimeMfitr => "time-mfitr",
        }
    }

    pub fn is_neighborhood(self) -> bool {
        matches!(self, ModelKind::Knn | ModelKind::TimeKnn)
    }

    pub fn is_als(self) -> bool {
        matches!(self, ModelKind::Als | ModelKind::Wals)
    }

    /// Trained by stochastic gradient descent.
    pub fn is_sgd(self) -> bool {
        !self.is_neighborhood() && !self.is_als()
    }

    pub fn uses_implicit(self) -> bool {
        matches!(self, ModelKind::Svdpp | ModelKind::TimeSvdpp)
    }

    pub fn uses_time(self) -> bool {
        matches!(self, ModelKind::TimeSvd | ModelKind::TimeSvdpp | ModelKind::TimeMfitr)
    }

    pub fn uses_taxonomy(self) -> bool {
        matches!(self, ModelKind::Mfitr | ModelKind::TimeMfitr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mf-sgd" {
            return Ok(ModelKind::Sgd);
        }
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown model kind `{s}`")))
    }
}

/// Regularization weights as seen by the update rules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Regularization {
    /// b_u, b_i, b_a and b_{i,bin}.
    pub bias: f64,
    /// p_u, q_i, q_a and y_j.
    pub factor: f64,
    /// x_u and z_bin.
    pub time: f64,
    /// Child-to-parent smoothness.
    pub parent: f64,
    /// Parent-to-child smoothness.
    pub child: f64,
}

impl Regularization {
    pub fn uniform(lambda: f64) -> Self {
        Regularization {
            bias: lambda,
            factor: lambda,
            ..Default::default()
        }
    }
}

/// Flat hyperparameter set shared by every model kind.
///
/// Which fields matter depends on the kind; see [`HyperParams::regularization`].
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub gamma: f64,
    pub decay: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub iters: usize,
    pub dim: usize,
    pub time_dim: usize,
    pub bins: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub knn_k: usize,
    pub knn_parts: usize,
    pub knn_beta: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::defaults(ModelKind::Sgd)
    }
}

const KEYS: [&str; 17] = [
    "gamma",
    "decay",
    "lambda",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "lambda5",
    "iters",
    "dim",
    "time_dim",
    "bins",
    "init_scale",
    "seed",
    "knn_k",
    "knn_parts",
    "knn_beta",
];

impl HyperParams {
    /// Tuned defaults for `kind`.
    pub fn defaults(kind: ModelKind) -> Self {
        let base = HyperParams {
            gamma: 5e-4,
            decay: 0.95,
            lambda: 1e-4,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
            iters: 50,
            dim: 100,
            time_dim: 4,
            bins: 30,
            init_scale: 0.005,
            seed: 1,
            knn_k: crate::neighborhood::DEFAULT_K,
            knn_parts: crate::neighborhood::DEFAULT_PARTS,
            knn_beta: crate::neighborhood::DEFAULT_BETA,
        };
        match kind {
            ModelKind::Knn | ModelKind::TimeKnn => base,
            ModelKind::Sgd => HyperParams {
                iters: 100,
                dim: 50,
                ..base
            },
            ModelKind::Svdpp => base,
            ModelKind::TimeSvd => HyperParams {
                gamma: 1e-4,
                lambda1: 1e-4,
                lambda2: 5e-4,
                lambda3: 5e-4,
                ..base
            },
            ModelKind::TimeSvdpp => HyperParams {
                gamma: 5e-5,
                lambda1: 1e-5,
                lambda2: 1e-4,
                lambda3: 3e-4,
                ..base
            },
            ModelKind::Als | ModelKind::Wals => HyperParams {
                lambda: 1.0,
                dim: 120,
                iters: 50,
                ..base
            },
            ModelKind::Mfitr => HyperParams {
                gamma: 8e-5,
                lambda1: 1e-5,
                lambda2: 1e-4,
                lambda3: 1e-3,
                lambda4: 1e-3,
                ..base
            },
            ModelKind::TimeMfitr => HyperParams {
                gamma: 8e-5,
                lambda1: 1e-5,
                lambda2: 1e-4,
                lambda3: 1e-3,
                lambda4: 1e-3,
                lambda5: 1e-3,
                dim: 50,
                ..base
            },
        }
    }

    pub fn regularization(&self, kind: ModelKind) -> Regularization {
        match kind {
            ModelKind::Sgd | ModelKind::Svdpp | ModelKind::Als | ModelKind::Wals => Regularization::uniform(self.lambda),
            ModelKind::TimeSvd | ModelKind::TimeSvdpp => Regularization {
                bias: self.lambda1,
                factor: self.lambda2,
                time: self.lambda3,
                ..Default::default()
            },
            ModelKind::Mfitr | ModelKind::TimeMfitr => Regularization {
                bias: self.lambda1,
                factor: self.lambda2,
                parent: self.lambda3,
                child: self.lambda4,
                time: if kind == ModelKind::TimeMfitr { self.lambda5 } else { 0.0 },
            },
            ModelKind::Knn | ModelKind::TimeKnn => Regularization::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad("gamma must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        let lambdas = [
            self.lambda,
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
        ];
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("regularization weights must be finite and non-negative");
        }
        if self.bins == 0 {
            return bad("bins must be at least 1");
        }
        if !(self.init_scale >= 0.0) {
            return bad("init_scale must be non-negative");
        }
        if self.knn_k == 0 || self.knn_parts == 0 {
            return bad("knn_k and knn_parts must be at least 1");
        }
        if !(self.knn_beta >= 0.0) {
            return bad("knn_beta must be non-negative");
        }
        Ok(())
    }

    /// Overrides fields present in `kv`; unknown keys are ignored.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = kv.parsed(stringify!($field))? {
                    self.$field = v;
                }
            };
        }
        take!(gamma);
        take!(decay);
        take!(lambda);
        take!(lambda1);
        take!(lambda2);
        take!(lambda3);
        take!(lambda4);
        take!(lambda5);
        take!(iters);
        take!(dim);
        take!(time_dim);
        take!(bins);
        take!(init_scale);
        take!(seed);
        take!(knn_k);
        take!(knn_parts);
        take!(knn_beta);
        Ok(())
    }

    pub fn is_key(key: &str) -> bool {
        KEYS.contains(&key)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("gamma", self.gamma);
        kv.set("decay", self.decay);
        kv.set("lambda", self.lambda);
        kv.set("lambda1", self.lambda1);
        kv.set("lambda2", self.lambda2);
        kv.set("lambda3", self.lambda3);
        kv.set("lambda4", self.lambda4);
        kv.set("lambda5", self.lambda5);
        kv.set("iters", self.iters);
        kv.set("dim", self.dim);
        kv.set("time_dim", self.time_dim);
        kv.set("bins", self.bins);
        kv.set("init_scale", self.init_scale);
        kv.set("seed", self.seed);
        kv.set("knn_k", self.knn_k);
        kv.set("knn_parts", self.knn_parts);
        kv.set("knn_beta", self.knn_beta);
        kv
    }
}
