//! Matrix factorization with item-taxonomy regularization.
//!
//! Predictions add an artist bias and artist factor to the base model:
//! `μ + b_i + b_u + b_a + (q_i + q_a)·p_u`, optionally with the time terms.
//! Training alternates a rating pass (shared with the other SGD models) and a
//! pass over taxonomy edges that pulls each child's factor towards its
//! parents with strength `(λ3 + λ4)·w`, where `w` is the clamped
//! adjusted-cosine similarity of the pair.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{Dataset, ItemId, RatingRecord, Timestamp, TimeBinner, UserId};
use crate::error::{Error, Result};
use crate::factor::sgd::{check_finite, run_rating_pass, ArtistTablesMut, EpochPlan, Kernel};
use crate::factor::{rating_objective, ArtistView, FactorModel, UserItems, NO_ARTIST};
use crate::hyper::{HyperParams, ModelKind, Regularization};
use crate::neighborhood::{pair_similarities, UserMeanTable};
use crate::parallel::{Engine, LockTable, SharedSlice};
use crate::taxonomy::TaxonomyGraph;

/// Weights of the taxonomy edges as `(child, parent, w)`, sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaxonomyEdgeWeights {
    edges: Vec<(ItemId, ItemId, f64)>,
}

impl TaxonomyEdgeWeights {
    pub fn from_edges(mut edges: Vec<(ItemId, ItemId, f64)>) -> Self {
        edges.sort_by_key(|e| (e.0, e.1));
        edges.dedup_by_key(|e| (e.0, e.1));
        TaxonomyEdgeWeights { edges }
    }

    pub fn edges(&self) -> &[(ItemId, ItemId, f64)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, child: ItemId, parent: ItemId) -> Option<f64> {
        self.edges
            .binary_search_by_key(&(child, parent), |e| (e.0, e.1))
            .ok()
            .map(|k| self.edges[k].2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for &(c, p, w) in &self.edges {
            writeln!(out, "{c}\t{p}\t{w}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = (f.len() == 3)
                .then(|| Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?)))
                .flatten();
            edges.push(parsed.ok_or_else(|| Error::parse(n + 1, "expected child<TAB>parent<TAB>weight"))?);
        }
        Ok(TaxonomyEdgeWeights::from_edges(edges))
    }
}

/// `max(0, AC(child, parent))` for every taxonomy edge.
pub fn edge_weights(g: &TaxonomyGraph, train: &Dataset, means: &UserMeanTable) -> TaxonomyEdgeWeights {
    let pairs: Vec<(ItemId, ItemId)> = g.edges().collect();
    let sims = pair_similarities(train, means, &pairs);
    TaxonomyEdgeWeights::from_edges(
        pairs
            .into_iter()
            .zip(sims)
            .map(|((c, p), w)| (c, p, w.max(0.0)))
            .collect(),
    )
}

/// Base factor model plus per-artist bias and factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MfitrModel {
    pub base: FactorModel,
    /// Artist item ids, one per slot, ascending.
    pub artists: Vec<ItemId>,
    /// Item id → artist slot, or [`NO_ARTIST`].
    pub slot_of: Vec<u32>,
    pub ba: Vec<f64>,
    pub qa: Vec<f64>,
}

impl MfitrModel {
    /// Wraps `base` with zero artist parameters for the artists of `g`.
    pub fn new(base: FactorModel, g: &TaxonomyGraph) -> Self {
        let artists = g.artists();
        let mut slot_of = vec![NO_ARTIST; base.num_items];
        for (i, slot) in slot_of.iter_mut().enumerate() {
            if let Some(a) = g.artist_of_opt(i as ItemId) {
                if let Ok(k) = artists.binary_search(&a) {
                    *slot = k as u32;
                }
            }
        }
        Self::from_parts(base, artists, slot_of)
    }

    pub fn from_parts(base: FactorModel, artists: Vec<ItemId>, slot_of: Vec<u32>) -> Self {
        let d = base.dim;
        MfitrModel {
            ba: vec![0.0; artists.len()],
            qa: vec![0.0; artists.len() * d],
            base,
            artists,
            slot_of,
        }
    }

    /// Seeded base initialization (as for the other factor models) with
    /// artist parameters starting at zero.
    pub fn init(
        kind: ModelKind,
        num_users: usize,
        num_items: usize,
        mu: f64,
        hyper: &HyperParams,
        binner: Option<TimeBinner>,
        g: &TaxonomyGraph,
    ) -> Result<Self> {
        if !kind.uses_taxonomy() {
            return Err(Error::Usage(format!("`{kind}` is not a taxonomy model")));
        }
        let num_items = num_items.max(g.num_nodes());
        let base = FactorModel::init(kind, num_users, num_items, mu, hyper, binner)?;
        Ok(MfitrModel::new(base, g))
    }

    pub fn num_artists(&self) -> usize {
        self.artists.len()
    }

    pub fn view(&self) -> ArtistView<'_> {
        ArtistView {
            slot_of: &self.slot_of,
            ba: &self.ba,
            qa: &self.qa,
        }
    }

    fn tables_mut(&mut self) -> (&mut FactorModel, ArtistTablesMut<'_>) {
        (
            &mut self.base,
            ArtistTablesMut {
                slot_of: &self.slot_of,
                lock_of: &self.artists,
                ba: &mut self.ba,
                qa: &mut self.qa,
            },
        )
    }

    /// Cold-start tolerant prediction (nearest bin for out-of-range times).
    pub fn predict(&self, u: UserId, i: ItemId, t: Timestamp) -> f64 {
        self.base.predict_with(u, i, t, Some(self.view()))
    }

    /// Single-rating update; with `gamma = 1` the change is minus one half of
    /// the gradient of that rating's objective term.
    pub fn apply_step(&mut self, rec: &RatingRecord, gamma: f64, reg: Regularization) {
        let (base, tables) = self.tables_mut();
        let kernel = Kernel::new(base, Some(tables), reg);
        let locks = LockTable::new(kernel.lock_slots());
        // SAFETY: single-threaded.
        unsafe { kernel.run_user(rec.user, std::iter::once(rec), &[], gamma, &locks) }
    }

    /// Gradient step on one edge's smoothness term:
    /// `δ = 2γ(λ3 + λ4)·w·(q_c − q_p)`, `q_c −= δ`, `q_p += δ`.
    pub fn edge_step(&mut self, child: ItemId, parent: ItemId, w: f64, gamma: f64, reg: Regularization) {
        let d = self.base.dim;
        let q = SharedSlice::new(&mut self.base.q);
        // SAFETY: single-threaded; child and parent rows are distinct.
        unsafe { edge_update(q, d, child as usize, parent as usize, 2.0 * gamma * (reg.parent + reg.child) * w) }
    }

    pub fn is_finite(&self) -> bool {
        self.base.is_finite() && self.ba.iter().chain(&self.qa).all(|v| v.is_finite())
    }
}

unsafe fn edge_update(q: SharedSlice<'_>, d: usize, c: usize, p: usize, scale: f64) {
    if c == p || scale == 0.0 {
        return;
    }
    let qc = q.slice(c * d, d);
    let qp = q.slice(p * d, d);
    for k in 0..d {
        let delta = scale * (qc[k] - qp[k]);
        qc[k] -= delta;
        qp[k] += delta;
    }
}

/// `μ + b_i + b_u + b_a + (q_i + q_a)·p_u`; unknown ids drop their terms.
pub fn predict_mfitr(model: &MfitrModel, u: UserId, i: ItemId) -> f64 {
    let t = model.base.binner.map_or(0, |b| b.t_min());
    model.predict(u, i, t)
}

/// Time-aware MFITR prediction; `t` must lie within the binner's range.
pub fn predict_time_mfitr(model: &MfitrModel, u: UserId, i: ItemId, t: Timestamp) -> Result<f64> {
    let binner = model
        .base
        .binner
        .ok_or_else(|| Error::Config("model has no time terms".into()))?;
    binner.bin_of(t)?;
    Ok(model.predict(u, i, t))
}

/// (λ3 + λ4) Σ_edges w ‖q_c − q_p‖².
pub fn graph_penalty(model: &MfitrModel, ew: &TaxonomyEdgeWeights, reg: Regularization) -> f64 {
    let strength = reg.parent + reg.child;
    if strength == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for &(c, p, w) in ew.edges() {
        let qc = model.base.q_row(c);
        let qp = model.base.q_row(p);
        let dist: f64 = qc.iter().zip(qp).map(|(a, b)| (a - b) * (a - b)).sum();
        s += w * dist;
    }
    strength * s
}

/// Rating terms (with λ1/λ2 per observation) plus the graph penalty.
pub fn loss_mfitr(model: &MfitrModel, train: &Dataset, ew: &TaxonomyEdgeWeights, reg: Regularization) -> f64 {
    rating_objective(&model.base, Some(model.view()), train, &UserItems::default(), reg) + graph_penalty(model, ew, reg)
}

fn edge_pass(model: &mut MfitrModel, ew: &TaxonomyEdgeWeights, gamma: f64, reg: Regularization, engine: &Engine) -> Result<()> {
    let scale = 2.0 * gamma * (reg.parent + reg.child);
    if scale == 0.0 || ew.is_empty() {
        return Ok(());
    }
    let edges = ew.edges();
    let n = model.base.num_items;
    if let Some(&(c, p, _)) = edges.iter().find(|e| e.0 as usize >= n || e.1 as usize >= n) {
        return Err(Error::Shape(format!("edge ({c}, {p}) outside the item table")));
    }
    // Edges are sorted by child: one task per child.
    let mut starts = Vec::new();
    for (k, e) in edges.iter().enumerate() {
        if k == 0 || edges[k - 1].0 != e.0 {
            starts.push(k);
        }
    }
    starts.push(edges.len());
    let tasks: Vec<u32> = (0..starts.len() - 1).map(|t| t as u32).collect();
    let d = model.base.dim;
    let q = SharedSlice::new(&mut model.base.q);
    let locks = LockTable::new(n);
    engine.for_each_user(&tasks, &locks, |t, locks| {
        let group = &edges[starts[t as usize]..starts[t as usize + 1]];
        for &(c, p, w) in group {
            let _g = locks.lock_set(&[c as usize, p as usize]);
            // SAFETY: both rows are locked.
            unsafe { edge_update(q, d, c as usize, p as usize, scale * w) }
        }
        Ok(())
    })
}

/// Rating pass followed by one pass over the taxonomy edges.
///
/// Time terms are trained when the base model has them.
pub fn sgd_epoch_mfitr(
    model: &mut MfitrModel,
    train: &Dataset,
    ew: &TaxonomyEdgeWeights,
    plan: &EpochPlan<'_>,
    engine: &Engine,
) -> Result<()> {
    {
        let (base, tables) = model.tables_mut();
        run_rating_pass(base, Some(tables), train, plan, engine)?;
    }
    edge_pass(model, ew, plan.gamma, plan.reg, engine)?;
    check_finite(&model.base, plan.epoch)?;
    if model.ba.iter().chain(&model.qa).any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            epoch: plan.epoch + 1,
            what: "artist parameters".into(),
        });
    }
    Ok(())
}

/// [`sgd_epoch_mfitr`] for a model with time terms.
pub fn sgd_epoch_time_mfitr(
    model: &mut MfitrModel,
    train: &Dataset,
    ew: &TaxonomyEdgeWeights,
    plan: &EpochPlan<'_>,
    engine: &Engine,
) -> Result<()> {
    if !model.base.time {
        return Err(Error::Config("time-mfitr epoch on a model without time terms".into()));
    }
    sgd_epoch_mfitr(model, train, ew, plan, engine)
}
