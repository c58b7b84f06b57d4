//! Stochastic gradient descent for every SGD-family model.
//!
//! One task processes all ratings of one user in insertion order. User-side
//! parameters (b_u, p_u, x_u) belong to the task; item-side parameters are
//! touched only under the lock set {item, artist, time bin}. The implicit
//! factors y_j of a user's rated set are updated lazily: the per-rating
//! updates `y_j ← (1 − γλ) y_j + γ e |R_u|^{-1/2} q̃` are folded into one
//! scale `c` and one offset `A` shared by all j ∈ R_u, applied when the user
//! is finished. The result is the same as updating every y_j after every
//! rating, at a cost linear in the number of ratings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{dot, FactorModel, UserItems, NO_ARTIST};
use crate::data::{Dataset, ItemId, RatingRecord, TimeBinner, UserId};
use crate::error::{Error, Result};
use crate::hyper::{HyperParams, ModelKind, Regularization};
use crate::parallel::{Engine, LockTable, SharedSlice};

/// Mutable per-artist parameters handed to the kernel.
pub(crate) struct ArtistTablesMut<'a> {
    pub slot_of: &'a [u32],
    /// Artist slot → lock id (the artist's item id).
    pub lock_of: &'a [ItemId],
    pub ba: &'a mut [f64],
    pub qa: &'a mut [f64],
}

struct ArtistShared<'a> {
    slot_of: &'a [u32],
    lock_of: &'a [ItemId],
    ba: SharedSlice<'a>,
    qa: SharedSlice<'a>,
}

pub(crate) struct Kernel<'a> {
    mu: f64,
    dim: usize,
    tdim: usize,
    bins: usize,
    num_items: usize,
    implicit: bool,
    binner: Option<TimeBinner>,
    reg: Regularization,
    bu: SharedSlice<'a>,
    bi: SharedSlice<'a>,
    p: SharedSlice<'a>,
    q: SharedSlice<'a>,
    y: SharedSlice<'a>,
    x: SharedSlice<'a>,
    z: SharedSlice<'a>,
    bibin: SharedSlice<'a>,
    artist: Option<ArtistShared<'a>>,
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(model: &'a mut FactorModel, artist: Option<ArtistTablesMut<'a>>, reg: Regularization) -> Self {
        let bins = model.bins();
        Kernel {
            mu: model.mu,
            dim: model.dim,
            tdim: model.time_dim,
            bins,
            num_items: model.num_items,
            implicit: model.implicit,
            binner: if model.time { model.binner } else { None },
            reg,
            bu: SharedSlice::new(&mut model.bu),
            bi: SharedSlice::new(&mut model.bi),
            p: SharedSlice::new(&mut model.p),
            q: SharedSlice::new(&mut model.q),
            y: SharedSlice::new(&mut model.y),
            x: SharedSlice::new(&mut model.x),
            z: SharedSlice::new(&mut model.z),
            bibin: SharedSlice::new(&mut model.bibin),
            artist: artist.map(|a| ArtistShared {
                slot_of: a.slot_of,
                lock_of: a.lock_of,
                ba: SharedSlice::new(a.ba),
                qa: SharedSlice::new(a.qa),
            }),
        }
    }

    /// Lock slots needed: items (artists included) then one per time bin.
    pub(crate) fn lock_slots(&self) -> usize {
        self.num_items + self.bins
    }

    /// Runs the updates for all of user `u`'s ratings.
    ///
    /// # Safety
    ///
    /// No other task may run for the same user concurrently, and every other
    /// concurrent task must access item-side state through `locks`.
    pub(crate) unsafe fn run_user<'r>(
        &self,
        u: UserId,
        records: impl Iterator<Item = &'r RatingRecord>,
        r_u: &[ItemId],
        gamma: f64,
        locks: &LockTable,
    ) {
        let d = self.dim;
        let td = self.tdim;
        let uu = u as usize;
        let g = gamma;
        let reg = self.reg;

        let bu = self.bu.at(uu);
        let pu = self.p.slice(uu * d, d);
        let xu = if self.binner.is_some() {
            self.x.slice(uu * td, td)
        } else {
            &mut []
        };

        let implicit = self.implicit && !r_u.is_empty();
        let m = r_u.len() as f64;
        let n = if implicit { 1.0 / m.sqrt() } else { 0.0 };
        let mut s0 = vec![0.0; if implicit { d } else { 0 }];
        if implicit {
            for &j in r_u {
                let _g = locks.lock_one(j as usize);
                let yj = self.y.slice(j as usize * d, d);
                for k in 0..d {
                    s0[k] += yj[k];
                }
            }
        }
        let shrink = 1.0 - g * reg.factor;
        let mut c = 1.0;
        let mut acc = vec![0.0; s0.len()];
        let mut pe = vec![0.0; d];
        let mut qe = vec![0.0; d];

        for rec in records {
            let i = rec.item as usize;
            let bin = self.binner.map(|b| b.bin_clamped(rec.time));
            let slot = self.artist.as_ref().and_then(|a| match a.slot_of.get(i) {
                Some(&s) if s != NO_ARTIST => Some(s as usize),
                _ => None,
            });

            let mut ids = [i, 0, 0];
            let mut n_ids = 1;
            if let (Some(a), Some(s)) = (&self.artist, slot) {
                ids[n_ids] = a.lock_of[s] as usize;
                n_ids += 1;
            }
            if let Some(b) = bin {
                ids[n_ids] = self.num_items + b;
                n_ids += 1;
            }
            let _guard = locks.lock_set(&ids[..n_ids]);

            let qi = self.q.slice(i * d, d);
            let bi = self.bi.at(i);
            let mut art = match (&self.artist, slot) {
                (Some(a), Some(s)) => Some((a.ba.at(s), a.qa.slice(s * d, d))),
                _ => None,
            };

            for k in 0..d {
                pe[k] = if implicit {
                    pu[k] + n * (c * s0[k] + m * acc[k])
                } else {
                    pu[k]
                };
                qe[k] = match &art {
                    Some((_, qa)) => qi[k] + qa[k],
                    None => qi[k],
                };
            }

            let mut pred = self.mu + *bi + *bu;
            if let Some((ba, _)) = &art {
                pred += **ba;
            }
            let time_rows = bin.map(|b| (self.z.slice(b * td, td), self.bibin.at(i * self.bins + b)));
            if let Some((zb, bb)) = &time_rows {
                pred += dot(xu, zb);
                pred += **bb;
            }
            pred += dot(&qe, &pe);
            let e = rec.score - pred;

            let bu0 = *bu;
            *bu = bu0 + g * (e - reg.bias * bu0);
            let bi0 = *bi;
            *bi = bi0 + g * (e - reg.bias * bi0);
            if let Some((ba, _)) = &mut art {
                let b0 = **ba;
                **ba = b0 + g * (e - reg.bias * b0);
            }
            if let Some((zb, bb)) = time_rows {
                let b0 = *bb;
                *bb = b0 + g * (e - reg.bias * b0);
                for k in 0..td {
                    let x0 = xu[k];
                    let z0 = zb[k];
                    xu[k] = x0 + g * (e * z0 - reg.time * x0);
                    zb[k] = z0 + g * (e * x0 - reg.time * z0);
                }
            }
            match art {
                Some((_, qa)) => {
                    for k in 0..d {
                        let q0 = qi[k];
                        let a0 = qa[k];
                        let p0 = pu[k];
                        qi[k] = q0 + g * (e * pe[k] - reg.factor * q0);
                        qa[k] = a0 + g * (e * pe[k] - reg.factor * a0);
                        pu[k] = p0 + g * (e * qe[k] - reg.factor * p0);
                    }
                }
                None => {
                    for k in 0..d {
                        let q0 = qi[k];
                        let p0 = pu[k];
                        qi[k] = q0 + g * (e * pe[k] - reg.factor * q0);
                        pu[k] = p0 + g * (e * qe[k] - reg.factor * p0);
                    }
                }
            }
            if implicit {
                c *= shrink;
                for k in 0..d {
                    acc[k] = shrink * acc[k] + g * e * n * qe[k];
                }
            }
        }

        if implicit {
            for &j in r_u {
                let _g = locks.lock_one(j as usize);
                let yj = self.y.slice(j as usize * d, d);
                for k in 0..d {
                    yj[k] = c * yj[k] + acc[k];
                }
            }
        }
    }
}

/// Users with at least one rating, shuffled by `(seed, epoch)`.
pub fn epoch_order(train: &Dataset, seed: u64, epoch: usize) -> Vec<UserId> {
    let mut order: Vec<UserId> = (0..train.num_users() as UserId)
        .filter(|&u| train.user_count(u) > 0)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);
    order
}

/// Everything one SGD epoch needs besides the model.
#[derive(Debug, Clone)]
pub struct EpochPlan<'a> {
    pub user_items: &'a UserItems,
    pub gamma: f64,
    pub reg: Regularization,
    pub order: Vec<UserId>,
    pub epoch: usize,
}

impl<'a> EpochPlan<'a> {
    /// Plan for epoch `epoch` (0-based): γ·decay^epoch and a seeded user order.
    pub fn new(
        kind: ModelKind,
        train: &Dataset,
        user_items: &'a UserItems,
        hyper: &HyperParams,
        epoch: usize,
    ) -> Self {
        EpochPlan {
            user_items,
            gamma: hyper.gamma * hyper.decay.powi(epoch as i32),
            reg: hyper.regularization(kind),
            order: epoch_order(train, hyper.seed, epoch),
            epoch,
        }
    }
}

pub(crate) fn run_rating_pass(
    model: &mut FactorModel,
    artist: Option<ArtistTablesMut<'_>>,
    train: &Dataset,
    plan: &EpochPlan<'_>,
    engine: &Engine,
) -> Result<()> {
    if train.num_users() > model.num_users || train.num_items() > model.num_items {
        return Err(Error::Shape(format!(
            "training data ({}x{}) exceeds model ({}x{})",
            train.num_users(),
            train.num_items(),
            model.num_users,
            model.num_items
        )));
    }
    let kernel = Kernel::new(model, artist, plan.reg);
    let locks = LockTable::new(kernel.lock_slots());
    engine.for_each_user(&plan.order, &locks, |u, locks| {
        // SAFETY: each user appears once in the order, and the kernel takes
        // item-side locks for everything else.
        unsafe {
            kernel.run_user(u, train.user_records(u), plan.user_items.get(u), plan.gamma, locks);
        }
        Ok(())
    })
}

pub(crate) fn check_finite(model: &FactorModel, epoch: usize) -> Result<()> {
    match model.first_non_finite() {
        Some(what) => Err(Error::Divergence {
            epoch: epoch + 1,
            what: what.to_string(),
        }),
        None => Ok(()),
    }
}

/// One pass over `train` in plan order; which parameter blocks are updated
/// follows the model's implicit/time flags.
pub fn sgd_epoch(model: &mut FactorModel, train: &Dataset, plan: &EpochPlan<'_>, engine: &Engine) -> Result<()> {
    if model.kind.is_als() {
        return Err(Error::Usage("ALS models are trained by half-steps".into()));
    }
    run_rating_pass(model, None, train, plan, engine)?;
    check_finite(model, plan.epoch)
}

impl FactorModel {
    /// Applies the update for a single rating, with `r_u` as the user's
    /// implicit set. With `gamma = 1` the parameter change is minus one half
    /// of the gradient of that rating's objective term.
    pub fn apply_step(&mut self, rec: &RatingRecord, r_u: &[ItemId], gamma: f64, reg: Regularization) {
        let kernel = Kernel::new(self, None, reg);
        let locks = LockTable::new(kernel.lock_slots());
        // SAFETY: single-threaded.
        unsafe { kernel.run_user(rec.user, std::iter::once(rec), r_u, gamma, &locks) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ScoreScale, Split};

    #[test]
    fn single_rating_hand_step() {
        let d = Dataset::new(vec![RatingRecord::new(0, 0, 10.0, 0)], Split::Train, ScoreScale::default()).unwrap();
        let mut m = FactorModel::zeros(ModelKind::Sgd, 1, 1, 0, 0, None).unwrap();
        let ui = UserItems::build(&d);
        let plan = EpochPlan {
            user_items: &ui,
            gamma: 0.1,
            reg: Regularization::uniform(0.0),
            order: vec![0],
            epoch: 0,
        };
        sgd_epoch(&mut m, &d, &plan, &Engine::sequential()).unwrap();
        assert_eq!(m.bu[0], 1.0);
        assert_eq!(m.bi[0], 1.0);
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let d = Dataset::new(
            vec![RatingRecord::new(0, 0, 50.0, 0), RatingRecord::new(1, 1, 50.0, 0)],
            Split::Train,
            ScoreScale::default(),
        )
        .unwrap();
        let mut m = FactorModel::zeros(ModelKind::Sgd, 2, 2, 3, 0, None).unwrap();
        m.mu = 50.0;
        m.q.copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let before = m.clone();
        let ui = UserItems::build(&d);
        let plan = EpochPlan {
            user_items: &ui,
            gamma: 0.1,
            reg: Regularization::uniform(0.0),
            order: vec![1, 0],
            epoch: 0,
        };
        sgd_epoch(&mut m, &d, &plan, &Engine::sequential()).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn divergence_names_epoch() {
        let d = Dataset::new(vec![RatingRecord::new(0, 0, 100.0, 0)], Split::Train, ScoreScale::default()).unwrap();
        let mut m = FactorModel::zeros(ModelKind::Sgd, 1, 1, 2, 0, None).unwrap();
        m.p.copy_from_slice(&[1.0, 1.0]);
        m.q.copy_from_slice(&[1.0, 1.0]);
        let ui = UserItems::build(&d);
        let mut result = Ok(());
        for epoch in 0..200 {
            let plan = EpochPlan {
                user_items: &ui,
                gamma: 1e3,
                reg: Regularization::uniform(0.0),
                order: vec![0],
                epoch,
            };
            result = sgd_epoch(&mut m, &d, &plan, &Engine::sequential());
            if result.is_err() {
                break;
            }
        }
        assert!(matches!(result, Err(Error::Divergence { .. })));
    }

    #[test]
    fn order_is_seeded() {
        let d = Dataset::new(
            (0..50).map(|u| RatingRecord::new(u, 0, 1.0, 0)).collect(),
            Split::Train,
            ScoreScale::default(),
        )
        .unwrap();
        assert_eq!(epoch_order(&d, 3, 0), epoch_order(&d, 3, 0));
        assert_ne!(epoch_order(&d, 3, 0), epoch_order(&d, 3, 1));
        let mut sorted = epoch_order(&d, 3, 0);
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
