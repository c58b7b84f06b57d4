//! Latent-factor models: biased MF, SVD++, their time-aware variants and ALS.
//!
//! All SGD-family models share one parameter layout ([`FactorModel`]) with
//! optional implicit-feedback and time blocks. Predictions always add terms
//! in the same order (μ, b_i, b_u, artist bias, x·z, b_{i,bin}, then the
//! inner product) so that a model with zeroed extensions predicts exactly like
//! the simpler model.

pub mod als;
pub mod sgd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, ItemId, Timestamp, TimeBinner, UserId};
use crate::error::{Error, Result};
use crate::hyper::{HyperParams, ModelKind, Regularization};

pub use als::{als_half_step, als_objective, AlsProblem, Side};
pub use sgd::{epoch_order, sgd_epoch, EpochPlan};

/// Marks an item without an artist in artist-slot tables.
pub const NO_ARTIST: u32 = u32::MAX;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Rated items per user (sorted, deduplicated): the implicit set R_u.
#[derive(Debug, Clone, Default)]
pub struct UserItems {
    offsets: Vec<usize>,
    items: Vec<ItemId>,
}

impl UserItems {
    pub fn build(data: &Dataset) -> Self {
        let mut offsets = Vec::with_capacity(data.num_users() + 1);
        let mut items = Vec::with_capacity(data.len());
        offsets.push(0);
        for u in 0..data.num_users() as UserId {
            let start = items.len();
            items.extend(data.user_records(u).map(|r| r.item));
            items[start..].sort_unstable();
            let mut w = start;
            for k in start..items.len() {
                if k == start || items[k] != items[w - 1] {
                    items[w] = items[k];
                    w += 1;
                }
            }
            items.truncate(w);
            offsets.push(items.len());
        }
        UserItems { offsets, items }
    }

    pub fn get(&self, u: UserId) -> &[ItemId] {
        let u = u as usize;
        if u + 1 >= self.offsets.len() {
            return &[];
        }
        &self.items[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn num_users(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }
}

/// Parameters of every factor model.
///
/// Row-major blocks: `p` is `num_users × dim`, `q` and `y` are
/// `num_items × dim`, `x` is `num_users × time_dim`, `z` is
/// `bins × time_dim` and `bibin` is `num_items × bins`. Disabled blocks are
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub kind: ModelKind,
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub time_dim: usize,
    pub implicit: bool,
    pub time: bool,
    pub seed: u64,
    pub mu: f64,
    pub bu: Vec<f64>,
    pub bi: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub bibin: Vec<f64>,
    pub binner: Option<TimeBinner>,
    /// Cached |R_u|^{-1/2} Σ_{j∈R_u} y_j per user, used by [`predict`](Self::predict).
    pub implicit_sum: Vec<f64>,
}

impl FactorModel {
    /// All-zero model. `binner` is required exactly when `kind` uses time.
    pub fn zeros(
        kind: ModelKind,
        num_users: usize,
        num_items: usize,
        dim: usize,
        time_dim: usize,
        binner: Option<TimeBinner>,
    ) -> Result<Self> {
        if kind.is_neighborhood() {
            return Err(Error::Usage(format!("`{kind}` is not a factor model")));
        }
        let time = kind.uses_time();
        if time && binner.is_none() {
            return Err(Error::Config(format!("`{kind}` needs a time binner")));
        }
        let implicit = kind.uses_implicit();
        let bins = binner.map_or(0, |b| b.num_bins());
        let (time_dim, bins) = if time { (time_dim, bins) } else { (0, 0) };
        Ok(FactorModel {
            kind,
            num_users,
            num_items,
            dim,
            time_dim,
            implicit,
            time,
            seed: 0,
            mu: 0.0,
            bu: vec![0.0; num_users],
            bi: vec![0.0; num_items],
            p: vec![0.0; num_users * dim],
            q: vec![0.0; num_items * dim],
            y: if implicit { vec![0.0; num_items * dim] } else { Vec::new() },
            x: vec![0.0; num_users * time_dim],
            z: vec![0.0; bins * time_dim],
            bibin: vec![0.0; num_items * bins],
            binner: if time { binner } else { None },
            implicit_sum: if implicit { vec![0.0; num_users * dim] } else { Vec::new() },
        })
    }

    /// Seeded starting point: biases zero, factor entries uniform in
    /// `[-s, s] / sqrt(dim)` with `s = hyper.init_scale`. ALS models also get
    /// a unit first user component.
    pub fn init(
        kind: ModelKind,
        num_users: usize,
        num_items: usize,
        mu: f64,
        hyper: &HyperParams,
        binner: Option<TimeBinner>,
    ) -> Result<Self> {
        let mut m = FactorModel::zeros(kind, num_users, num_items, hyper.dim, hyper.time_dim, binner)?;
        m.mu = if kind.is_als() { 0.0 } else { mu };
        m.seed = hyper.seed;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let fill = |v: &mut Vec<f64>, width: usize, rng: &mut ChaCha8Rng| {
            if width == 0 {
                return;
            }
            let s = hyper.init_scale / (width as f64).sqrt();
            for e in v.iter_mut() {
                *e = if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
            }
        };
        let dim = m.dim;
        let tdim = m.time_dim;
        fill(&mut m.p, dim, &mut rng);
        fill(&mut m.q, dim, &mut rng);
        fill(&mut m.y, dim, &mut rng);
        fill(&mut m.x, tdim, &mut rng);
        fill(&mut m.z, tdim, &mut rng);
        if kind.is_als() && dim > 0 {
            for u in 0..num_users {
                m.p[u * dim] += 1.0;
            }
        }
        Ok(m)
    }

    pub fn bins(&self) -> usize {
        self.binner.map_or(0, |b| b.num_bins())
    }

    pub fn p_row(&self, u: UserId) -> &[f64] {
        &self.p[u as usize * self.dim..(u as usize + 1) * self.dim]
    }

    pub fn q_row(&self, i: ItemId) -> &[f64] {
        &self.q[i as usize * self.dim..(i as usize + 1) * self.dim]
    }

    pub fn y_row(&self, i: ItemId) -> &[f64] {
        &self.y[i as usize * self.dim..(i as usize + 1) * self.dim]
    }

    pub fn x_row(&self, u: UserId) -> &[f64] {
        &self.x[u as usize * self.time_dim..(u as usize + 1) * self.time_dim]
    }

    pub fn z_row(&self, bin: usize) -> &[f64] {
        &self.z[bin * self.time_dim..(bin + 1) * self.time_dim]
    }

    pub fn bibin_at(&self, i: ItemId, bin: usize) -> f64 {
        self.bibin[i as usize * self.bins() + bin]
    }

    fn check_ids(&self, u: UserId, i: ItemId) -> Result<()> {
        if u as usize >= self.num_users {
            return Err(Error::Lookup(format!("user {u} outside model ({} users)", self.num_users)));
        }
        if i as usize >= self.num_items {
            return Err(Error::Lookup(format!("item {i} outside model ({} items)", self.num_items)));
        }
        Ok(())
    }

    /// Recomputes the cached implicit sums from the rated sets.
    pub fn refresh_implicit(&mut self, user_items: &UserItems) {
        if !self.implicit {
            return;
        }
        let d = self.dim;
        for u in 0..self.num_users {
            let s = implicit_term(self, user_items.get(u as UserId));
            self.implicit_sum[u * d..(u + 1) * d].copy_from_slice(&s);
        }
    }

    /// Cold-start tolerant prediction used for batch scoring.
    ///
    /// Unknown users or items drop the terms they would contribute; timestamps
    /// outside the training range use the nearest bin.
    pub fn predict(&self, u: UserId, i: ItemId, t: Timestamp) -> f64 {
        self.predict_with(u, i, t, None)
    }

    pub(crate) fn predict_with(&self, u: UserId, i: ItemId, t: Timestamp, artist: Option<ArtistView<'_>>) -> f64 {
        let known_u = (u as usize) < self.num_users;
        let known_i = (i as usize) < self.num_items;
        if self.kind.is_als() {
            return if known_u && known_i {
                dot(self.p_row(u), self.q_row(i))
            } else {
                self.mu
            };
        }
        let slot = if known_i { artist.and_then(|a| a.slot(i)) } else { None };
        let mut s = self.mu;
        if known_i {
            s += self.bi[i as usize];
        }
        if known_u {
            s += self.bu[u as usize];
        }
        if let (Some(a), Some(k)) = (artist, slot) {
            s += a.ba[k];
        }
        if self.time {
            let bin = self.binner.expect("time model has a binner").bin_clamped(t);
            if known_u {
                s += dot(self.x_row(u), self.z_row(bin));
            }
            if known_i {
                s += self.bibin_at(i, bin);
            }
        }
        if known_u && known_i {
            let d = self.dim;
            let q = self.q_row(i);
            let p = self.p_row(u);
            let mut acc = 0.0;
            for k in 0..d {
                let qe = match (artist, slot) {
                    (Some(a), Some(sl)) => q[k] + a.qa[sl * d + k],
                    _ => q[k],
                };
                let pe = if self.implicit {
                    p[k] + self.implicit_sum[u as usize * d + k]
                } else {
                    p[k]
                };
                acc += qe * pe;
            }
            s += acc;
        }
        s
    }

    /// Every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub(crate) fn first_non_finite(&self) -> Option<&'static str> {
        let blocks: [(&'static str, &[f64]); 8] = [
            ("b_u", &self.bu),
            ("b_i", &self.bi),
            ("p", &self.p),
            ("q", &self.q),
            ("y", &self.y),
            ("x", &self.x),
            ("z", &self.z),
            ("b_ibin", &self.bibin),
        ];
        blocks
            .into_iter()
            .find(|(_, v)| v.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }
}

/// |R_u|^{-1/2} Σ_{j∈R_u} y_j, summed in `r_u` order; zero for empty sets.
pub fn implicit_term(model: &FactorModel, r_u: &[ItemId]) -> Vec<f64> {
    let d = model.dim;
    let mut s = vec![0.0; d];
    if !model.implicit || r_u.is_empty() {
        return s;
    }
    for &j in r_u {
        for (acc, y) in s.iter_mut().zip(model.y_row(j)) {
            *acc += y;
        }
    }
    let n = 1.0 / (r_u.len() as f64).sqrt();
    for v in &mut s {
        *v *= n;
    }
    s
}

/// Read-only view of per-artist parameters.
#[derive(Debug, Clone, Copy)]
pub struct ArtistView<'a> {
    /// Item id → artist slot, or [`NO_ARTIST`].
    pub slot_of: &'a [u32],
    pub ba: &'a [f64],
    pub qa: &'a [f64],
}

impl ArtistView<'_> {
    pub(crate) fn slot(&self, i: ItemId) -> Option<usize> {
        match self.slot_of.get(i as usize) {
            Some(&s) if s != NO_ARTIST => Some(s as usize),
            _ => None,
        }
    }
}

/// μ + b_i + b_u + q_i·p_u.
pub fn predict_mf(model: &FactorModel, u: UserId, i: ItemId) -> Result<f64> {
    model.check_ids(u, i)?;
    Ok(model.mu + model.bi[i as usize] + model.bu[u as usize] + dot(model.q_row(i), model.p_row(u)))
}

fn dot_effective(q: &[f64], p: &[f64], s: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..q.len() {
        acc += q[k] * (p[k] + s[k]);
    }
    acc
}

/// μ + b_i + b_u + q_i·(p_u + |R_u|^{-1/2} Σ y_j).
pub fn predict_svdpp(model: &FactorModel, u: UserId, i: ItemId, r_u: &[ItemId]) -> Result<f64> {
    model.check_ids(u, i)?;
    if !model.implicit {
        return predict_mf(model, u, i);
    }
    let base = model.mu + model.bi[i as usize] + model.bu[u as usize];
    if r_u.is_empty() {
        return Ok(base + dot(model.q_row(i), model.p_row(u)));
    }
    let s = implicit_term(model, r_u);
    Ok(base + dot_effective(model.q_row(i), model.p_row(u), &s))
}

/// Time-aware prediction: adds x_u·z_{bin(t)} and b_{i,bin(t)}.
pub fn predict_time(model: &FactorModel, u: UserId, i: ItemId, t: Timestamp, r_u: &[ItemId]) -> Result<f64> {
    model.check_ids(u, i)?;
    let binner = model
        .binner
        .ok_or_else(|| Error::Config(format!("`{}` has no time terms", model.kind)))?;
    let bin = binner.bin_of(t)?;
    let mut s = model.mu + model.bi[i as usize] + model.bu[u as usize];
    s += dot(model.x_row(u), model.z_row(bin));
    s += model.bibin_at(i, bin);
    if model.implicit && !r_u.is_empty() {
        let imp = implicit_term(model, r_u);
        Ok(s + dot_effective(model.q_row(i), model.p_row(u), &imp))
    } else {
        Ok(s + dot(model.q_row(i), model.p_row(u)))
    }
}

/// Rating-driven objective shared by every SGD-family model.
///
/// Σ over observations of the squared error plus, per observation,
/// `bias·(b_u² + b_i² [+ b_a²] [+ b_{i,bin}²]) + factor·(‖q_i‖² + ‖p_u‖²
/// [+ ‖q_a‖²] [+ Σ_{j∈R_u}‖y_j‖²]) + time·(‖x_u‖² + ‖z_bin‖²)`.
pub fn rating_objective(
    model: &FactorModel,
    artist: Option<ArtistView<'_>>,
    data: &Dataset,
    user_items: &UserItems,
    reg: Regularization,
) -> f64 {
    let d = model.dim;
    let mut total = 0.0;
    for u in 0..data.num_users() as UserId {
        if data.user_count(u) == 0 {
            continue;
        }
        let r_u = user_items.get(u);
        let (s, y_norm) = if model.implicit && !r_u.is_empty() {
            (implicit_term(model, r_u), r_u.iter().map(|&j| norm2(model.y_row(j))).sum())
        } else {
            (vec![0.0; d], 0.0)
        };
        let p = model.p_row(u);
        for rec in data.user_records(u) {
            let i = rec.item;
            let slot = artist.and_then(|a| a.slot(i));
            let mut pred = model.mu + model.bi[i as usize] + model.bu[u as usize];
            let mut reg_b = model.bu[u as usize].powi(2) + model.bi[i as usize].powi(2);
            let mut reg_f = norm2(model.q_row(i)) + norm2(p) + y_norm;
            let mut reg_t = 0.0;
            let mut qe = model.q_row(i).to_vec();
            if let (Some(a), Some(k)) = (artist, slot) {
                pred += a.ba[k];
                reg_b += a.ba[k].powi(2);
                let qa = &a.qa[k * d..(k + 1) * d];
                reg_f += norm2(qa);
                for (e, v) in qe.iter_mut().zip(qa) {
                    *e += v;
                }
            }
            if model.time {
                let bin = model.binner.expect("time model has a binner").bin_clamped(rec.time);
                pred += dot(model.x_row(u), model.z_row(bin));
                pred += model.bibin_at(i, bin);
                reg_b += model.bibin_at(i, bin).powi(2);
                reg_t += norm2(model.x_row(u)) + norm2(model.z_row(bin));
            }
            pred += if model.implicit && !r_u.is_empty() {
                dot_effective(&qe, p, &s)
            } else {
                dot(&qe, p)
            };
            let e = rec.score - pred;
            total += e * e + reg.bias * reg_b + reg.factor * reg_f + reg.time * reg_t;
        }
    }
    total
}

/// Σ(r − r̂)² + λ Σ per observation (b_i² + b_u² + ‖q_i‖² + ‖p_u‖²).
pub fn loss_mf(model: &FactorModel, data: &Dataset, lambda: f64) -> f64 {
    rating_objective(model, None, data, &UserItems::default(), Regularization::uniform(lambda))
}

/// As [`loss_mf`] with the implicit term and Σ‖y_j‖² in the penalty.
pub fn loss_svdpp(model: &FactorModel, data: &Dataset, lambda: f64) -> f64 {
    rating_objective(model, None, data, &UserItems::build(data), Regularization::uniform(lambda))
}

/// Time-model objective with the three regularization groups.
pub fn loss_time(model: &FactorModel, data: &Dataset, lambda1: f64, lambda2: f64, lambda3: f64) -> f64 {
    let reg = Regularization {
        bias: lambda1,
        factor: lambda2,
        time: lambda3,
        ..Default::default()
    };
    rating_objective(model, None, data, &UserItems::build(data), reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RatingRecord, ScoreScale, Split};

    fn one(r: f64) -> Dataset {
        Dataset::new(vec![RatingRecord::new(0, 0, r, 0)], Split::Train, ScoreScale::default()).unwrap()
    }

    #[test]
    fn mf_prediction() {
        let mut m = FactorModel::zeros(ModelKind::Sgd, 1, 1, 2, 0, None).unwrap();
        m.mu = 50.0;
        assert_eq!(predict_mf(&m, 0, 0).unwrap(), 50.0);
        m.bi[0] = 2.0;
        m.bu[0] = -1.0;
        m.q.copy_from_slice(&[1.0, 2.0]);
        m.p.copy_from_slice(&[3.0, -1.0]);
        assert_eq!(predict_mf(&m, 0, 0).unwrap(), 52.0);
        m.p.copy_from_slice(&[2.0, -1.0]);
        assert_eq!(predict_mf(&m, 0, 0).unwrap(), 51.0);
        assert!(matches!(predict_mf(&m, 1, 0), Err(Error::Lookup(_))));
        assert_eq!(m.predict(7, 0, 0), 52.0);
    }

    #[test]
    fn mf_loss() {
        let mut m = FactorModel::zeros(ModelKind::Sgd, 1, 1, 0, 0, None).unwrap();
        assert_eq!(loss_mf(&m, &one(10.0), 0.0), 100.0);
        m.bu[0] = 1.0;
        m.bi[0] = 1.0;
        m.mu = -2.0;
        assert_eq!(loss_mf(&m, &one(0.0), 0.5), 1.0);
    }

    #[test]
    fn svdpp_prediction() {
        let mut m = FactorModel::zeros(ModelKind::Svdpp, 1, 5, 2, 0, None).unwrap();
        m.p.copy_from_slice(&[1.0, 0.0]);
        m.q[..2].copy_from_slice(&[1.0, 0.0]);
        m.y[2..4].copy_from_slice(&[2.0, 0.0]);
        assert_eq!(predict_svdpp(&m, 0, 0, &[1, 2, 3, 4]).unwrap(), 2.0);
        assert_eq!(predict_svdpp(&m, 0, 0, &[]).unwrap(), 1.0);
        m.refresh_implicit(&UserItems::build(
            &Dataset::new(
                (1..5).map(|j| RatingRecord::new(0, j, 1.0, 0)).collect(),
                Split::Train,
                ScoreScale::default(),
            )
            .unwrap(),
        ));
        assert_eq!(m.predict(0, 0, 0), 2.0);
    }

    #[test]
    fn time_prediction() {
        let binner = TimeBinner::new(0, 99, 10).unwrap();
        let mut m = FactorModel::zeros(ModelKind::TimeSvd, 1, 1, 1, 2, Some(binner)).unwrap();
        m.x.copy_from_slice(&[1.0, 1.0]);
        m.z[6..8].copy_from_slice(&[2.0, -1.0]);
        m.bibin[3] = 3.0;
        assert_eq!(predict_time(&m, 0, 0, 35, &[]).unwrap(), 4.0);
        assert_eq!(predict_time(&m, 0, 0, 30, &[]).unwrap(), predict_time(&m, 0, 0, 39, &[]).unwrap());
        assert!(matches!(predict_time(&m, 0, 0, 100, &[]), Err(Error::Range(_))));
        assert_eq!(m.predict(0, 0, 35), 4.0);
    }

    #[test]
    fn user_items_dedup() {
        let d = Dataset::new(
            vec![
                RatingRecord::new(0, 3, 1.0, 0),
                RatingRecord::new(0, 1, 1.0, 0),
                RatingRecord::new(0, 3, 2.0, 0),
                RatingRecord::new(2, 0, 1.0, 0),
            ],
            Split::Train,
            ScoreScale::default(),
        )
        .unwrap();
        let ui = UserItems::build(&d);
        assert_eq!(ui.get(0), &[1, 3]);
        assert!(ui.get(1).is_empty());
        assert_eq!(ui.get(2), &[0]);
        assert!(ui.get(9).is_empty());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let h = HyperParams {
            dim: 4,
            seed: 9,
            ..HyperParams::default()
        };
        let a = FactorModel::init(ModelKind::Svdpp, 3, 5, 50.0, &h, None).unwrap();
        let b = FactorModel::init(ModelKind::Svdpp, 3, 5, 50.0, &h, None).unwrap();
        assert_eq!(a, b);
        let bound = h.init_scale / 2.0;
        assert!(a.q.iter().chain(&a.p).chain(&a.y).all(|v| v.abs() <= bound));
        assert!(a.bu.iter().chain(&a.bi).all(|&v| v == 0.0));
        assert_eq!(a.mu, 50.0);
    }
}
