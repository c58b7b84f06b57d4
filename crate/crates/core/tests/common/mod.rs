//! Independent reference implementations shared by the integration tests and
//! the acceptance harness.

#![allow(dead_code)]

use multicf::data::{Dataset, RatingRecord, ScoreScale, Split, TimeBinner};
use multicf::factor::FactorModel;
use multicf::mfitr::{MfitrModel, TaxonomyEdgeWeights};
use multicf::taxonomy::{LinkPolicy, TaxonomyBuilder, TaxonomyGraph};
use multicf::{ItemId, ModelKind, Regularization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dataset(records: Vec<RatingRecord>, split: Split) -> Dataset {
    Dataset::new(records, split, ScoreScale::default()).unwrap()
}

/// Each user rates a random subset of items (no repeats) with integer scores.
pub fn random_ratings(rng: &mut ChaCha8Rng, users: usize, items: usize, density: f64, t_max: i64) -> Dataset {
    let mut recs = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(density) {
                let score = rng.random_range(0..=100) as f64;
                recs.push(RatingRecord::new(u as u32, i as u32, score, rng.random_range(0..=t_max)));
            }
        }
    }
    Dataset::with_dims(recs, Split::Train, ScoreScale::default(), users, items).unwrap()
}

// ---------------------------------------------------------------------------
// Objective oracle and gradients

/// A factor model with optional artist terms and taxonomy edges.
#[derive(Clone)]
pub struct GradModel {
    pub base: FactorModel,
    pub mfitr: Option<MfitrModel>,
}

impl GradModel {
    fn factor(&self) -> &FactorModel {
        self.mfitr.as_ref().map_or(&self.base, |m| &m.base)
    }

    /// All trainable parameters as one vector.
    pub fn params(&self) -> Vec<f64> {
        let m = self.factor();
        let mut v: Vec<f64> = [&m.bu, &m.bi, &m.p, &m.q, &m.y, &m.x, &m.z, &m.bibin]
            .iter()
            .flat_map(|b| b.iter().copied())
            .collect();
        if let Some(t) = &self.mfitr {
            v.extend(&t.ba);
            v.extend(&t.qa);
        }
        v
    }

    pub fn set_params(&mut self, v: &[f64]) {
        let mut k = 0;
        let mut take = |dst: &mut Vec<f64>| {
            let n = dst.len();
            dst.copy_from_slice(&v[k..k + n]);
            k += n;
        };
        match &mut self.mfitr {
            Some(t) => {
                let m = &mut t.base;
                for b in [&mut m.bu, &mut m.bi, &mut m.p, &mut m.q, &mut m.y, &mut m.x, &mut m.z, &mut m.bibin] {
                    take(b);
                }
                take(&mut t.ba);
                take(&mut t.qa);
            }
            None => {
                let m = &mut self.base;
                for b in [&mut m.bu, &mut m.bi, &mut m.p, &mut m.q, &mut m.y, &mut m.x, &mut m.z, &mut m.bibin] {
                    take(b);
                }
            }
        }
    }
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Σ_r [(r − r̂)² + per-observation penalties] + (λ3 + λ4) Σ_edges w‖q_c − q_p‖²,
/// written out directly from the model definitions.
pub fn objective_oracle(gm: &GradModel, data: &Dataset, reg: Regularization, edges: &[(ItemId, ItemId, f64)]) -> f64 {
    let m = gm.factor();
    let d = m.dim;
    let td = m.time_dim;
    let row = |v: &[f64], r: usize, w: usize| v[r * w..(r + 1) * w].to_vec();
    let mut total = 0.0;
    for rec in data.records() {
        let u = rec.user as usize;
        let i = rec.item as usize;
        let mut rated: Vec<usize> = data.records().iter().filter(|r| r.user == rec.user).map(|r| r.item as usize).collect();
        rated.sort_unstable();
        rated.dedup();
        let mut pe = row(&m.p, u, d);
        let mut y_pen = 0.0;
        if m.implicit {
            let norm = 1.0 / (rated.len() as f64).sqrt();
            for &j in &rated {
                for k in 0..d {
                    pe[k] += norm * m.y[j * d + k];
                }
                y_pen += sq(&row(&m.y, j, d));
            }
        }
        let mut qe = row(&m.q, i, d);
        let mut pred = m.mu + m.bi[i] + m.bu[u];
        let mut pen_b = m.bu[u].powi(2) + m.bi[i].powi(2);
        let mut pen_f = sq(&qe) + sq(&m.p[u * d..(u + 1) * d]) + y_pen;
        let mut pen_t = 0.0;
        if let Some(t) = &gm.mfitr {
            let s = t.slot_of[i];
            if s != u32::MAX {
                let s = s as usize;
                pred += t.ba[s];
                pen_b += t.ba[s].powi(2);
                let qa = row(&t.qa, s, d);
                pen_f += sq(&qa);
                for k in 0..d {
                    qe[k] += qa[k];
                }
            }
        }
        if m.time {
            let b = m.binner.unwrap().bin_clamped(rec.time);
            let bins = m.binner.unwrap().num_bins();
            let xu = row(&m.x, u, td);
            let zb = row(&m.z, b, td);
            pred += (0..td).map(|k| xu[k] * zb[k]).sum::<f64>();
            pred += m.bibin[i * bins + b];
            pen_b += m.bibin[i * bins + b].powi(2);
            pen_t += sq(&xu) + sq(&zb);
        }
        pred += (0..d).map(|k| qe[k] * pe[k]).sum::<f64>();
        let e = rec.score - pred;
        total += e * e + reg.bias * pen_b + reg.factor * pen_f + reg.time * pen_t;
    }
    let strength = reg.parent + reg.child;
    for &(c, p, w) in edges {
        let diff: f64 = (0..d)
            .map(|k| (m.q[c as usize * d + k] - m.q[p as usize * d + k]).powi(2))
            .sum();
        total += strength * w * diff;
    }
    total
}

/// Central differences of [`objective_oracle`] in every parameter.
pub fn fd_gradient(gm: &GradModel, data: &Dataset, reg: Regularization, edges: &[(ItemId, ItemId, f64)], h: f64) -> Vec<f64> {
    let theta = gm.params();
    let mut probe = gm.clone();
    let mut grad = vec![0.0; theta.len()];
    let mut v = theta.clone();
    for k in 0..theta.len() {
        v[k] = theta[k] + h;
        probe.set_params(&v);
        let plus = objective_oracle(&probe, data, reg, edges);
        v[k] = theta[k] - h;
        probe.set_params(&v);
        let minus = objective_oracle(&probe, data, reg, edges);
        v[k] = theta[k];
        grad[k] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Gradient read off the library's update rules: a rating step with γ = 1
/// moves parameters by −½∇, an edge step with γ = 1 by −∇.
pub fn analytic_gradient(gm: &GradModel, data: &Dataset, reg: Regularization, edges: &[(ItemId, ItemId, f64)]) -> Vec<f64> {
    let theta = gm.params();
    let mut grad = vec![0.0; theta.len()];
    let ui = multicf::factor::UserItems::build(data);
    for rec in data.records() {
        let mut g = gm.clone();
        match &mut g.mfitr {
            Some(t) => t.apply_step(rec, 1.0, reg),
            None => g.base.apply_step(rec, ui.get(rec.user), 1.0, reg),
        }
        for (acc, (new, old)) in grad.iter_mut().zip(g.params().iter().zip(&theta)) {
            *acc += -2.0 * (new - old);
        }
    }
    for &(c, p, w) in edges {
        let mut g = gm.clone();
        g.mfitr.as_mut().unwrap().edge_step(c, p, w, 1.0, reg);
        for (acc, (new, old)) in grad.iter_mut().zip(g.params().iter().zip(&theta)) {
            *acc += -(new - old);
        }
    }
    grad
}

/// max_k |a − f| / max(|a|, |f|, 1).
pub fn max_relative_error(a: &[f64], f: &[f64]) -> f64 {
    a.iter()
        .zip(f)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Artist 0, albums 1 and 2, tracks 3..=9 (track 9 without album).
pub fn small_taxonomy() -> TaxonomyGraph {
    let mut b = TaxonomyBuilder::new();
    b.artist(0, vec![]);
    b.album(1, Some(0), vec![]);
    b.album(2, Some(0), vec![]);
    for t in 3..=5 {
        b.track(t, Some(1), Some(0), vec![]);
    }
    for t in 6..=8 {
        b.track(t, Some(2), None, vec![]);
    }
    b.track(9, None, Some(0), vec![]);
    b.build(LinkPolicy::Strict).unwrap()
}

/// Random model of `kind` on a small instance, ready for gradient checks.
pub fn gradient_instance(kind: ModelKind, seed: u64) -> (GradModel, Dataset, Regularization, Vec<(ItemId, ItemId, f64)>) {
    let mut r = rng(seed);
    let (users, items) = (6, 10);
    let data = random_ratings(&mut r, users, items, 0.4, 99);
    let binner = kind.uses_time().then(|| TimeBinner::new(0, 99, 3).unwrap());
    let mut base = FactorModel::zeros(kind, users, items, 3, 2, binner).unwrap();
    base.mu = 50.0;
    let fill = |v: &mut Vec<f64>, s: f64, r: &mut ChaCha8Rng| v.iter_mut().for_each(|x| *x = r.random_range(-s..s));
    fill(&mut base.bu, 5.0, &mut r);
    fill(&mut base.bi, 5.0, &mut r);
    fill(&mut base.p, 1.0, &mut r);
    fill(&mut base.q, 1.0, &mut r);
    fill(&mut base.y, 1.0, &mut r);
    fill(&mut base.x, 1.0, &mut r);
    fill(&mut base.z, 1.0, &mut r);
    fill(&mut base.bibin, 3.0, &mut r);
    let reg = Regularization {
        bias: r.random_range(0.05..0.5),
        factor: r.random_range(0.05..0.5),
        time: if kind.uses_time() { r.random_range(0.05..0.5) } else { 0.0 },
        parent: if kind.uses_taxonomy() { r.random_range(0.05..0.5) } else { 0.0 },
        child: if kind.uses_taxonomy() { r.random_range(0.05..0.5) } else { 0.0 },
    };
    if !kind.uses_taxonomy() {
        return (GradModel { base, mfitr: None }, data, reg, Vec::new());
    }
    let g = small_taxonomy();
    let mut m = MfitrModel::new(base.clone(), &g);
    fill(&mut m.ba, 5.0, &mut r);
    fill(&mut m.qa, 1.0, &mut r);
    let edges: Vec<(ItemId, ItemId, f64)> = g.edges().map(|(c, p)| (c, p, r.random_range(0.0..1.0))).collect();
    let ew = TaxonomyEdgeWeights::from_edges(edges);
    (GradModel { base, mfitr: Some(m) }, data, reg, ew.edges().to_vec())
}

// ---------------------------------------------------------------------------
// Brute-force neighbourhood oracle

/// O(I²) adjusted-cosine top-K lists, using each user's latest rating of an
/// item and the mean over all of the user's ratings.
pub fn brute_force_neighbors(data: &Dataset, k: usize) -> Vec<Vec<(ItemId, f64)>> {
    let nu = data.num_users();
    let ni = data.num_items();
    let mut latest: Vec<Vec<Option<f64>>> = vec![vec![None; ni]; nu];
    let mut sum = vec![0.0; nu];
    let mut count = vec![0usize; nu];
    for u in 0..nu {
        for r in data.user_records(u as u32) {
            latest[u][r.item as usize] = Some(r.score);
            sum[u] += r.score;
            count[u] += 1;
        }
    }
    let mean: Vec<f64> = (0..nu).map(|u| sum[u] / count[u].max(1) as f64).collect();
    let mut out = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut cand = Vec::new();
        for j in 0..ni {
            if i == j {
                continue;
            }
            let (mut dot, mut si, mut sj) = (0.0, 0.0, 0.0);
            for u in 0..nu {
                if let (Some(a), Some(b)) = (latest[u][i], latest[u][j]) {
                    let (da, db) = (a - mean[u], b - mean[u]);
                    dot += da * db;
                    si += da * da;
                    sj += db * db;
                }
            }
            if si == 0.0 || sj == 0.0 {
                continue;
            }
            let w = (dot / (si * sj).sqrt()).clamp(-1.0, 1.0);
            if w != 0.0 {
                cand.push((j as ItemId, w));
            }
        }
        cand.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        cand.truncate(k);
        out.push(cand);
    }
    out
}

// ---------------------------------------------------------------------------
// Ridge oracle

/// Solves `(XᵀX + λI) w = Xᵀy` by Gauss-Jordan elimination with partial pivoting.
pub fn ridge_oracle(cols: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let m = cols.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for j in 0..m {
        for k in 0..m {
            a[j][k] = cols[j].iter().zip(&cols[k]).map(|(p, q)| p * q).sum();
        }
        a[j][j] += lambda;
        a[j][m] = cols[j].iter().zip(y).map(|(p, t)| p * t).sum();
    }
    for c in 0..m {
        let piv = (c..m).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..m {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                for (v, p) in a[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    a.iter().map(|row| row[m]).collect()
}
