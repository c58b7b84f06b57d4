//! Alternating least squares for the pure low-rank model A ≈ U·V.
//!
//! Each half-step fixes one side and solves, row by row,
//! `(Σ w q qᵀ + λI) p = Σ w r q`. Rows are independent, so the result does
//! not depend on the engine's thread count.

use nalgebra::{DMatrix, DVector};

use super::{dot, FactorModel};
use crate::data::{Dataset, ItemIndex, UserId};
use crate::error::{Error, Result};
use crate::parallel::Engine;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Users,
    Items,
}

/// Training data prepared for repeated half-steps.
#[derive(Debug)]
pub struct AlsProblem<'a> {
    train: &'a Dataset,
    items: ItemIndex,
    weights: Option<&'a [f64]>,
}

impl<'a> AlsProblem<'a> {
    /// `weights`, when given, holds one non-negative weight per training record.
    pub fn new(train: &'a Dataset, weights: Option<&'a [f64]>) -> Result<Self> {
        if let Some(w) = weights {
            if w.len() != train.len() {
                return Err(Error::Shape(format!(
                    "{} observation weights for {} ratings",
                    w.len(),
                    train.len()
                )));
            }
            if let Some(bad) = w.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::Config(format!("weight {bad} is negative or not finite")));
            }
        }
        Ok(AlsProblem {
            train,
            items: ItemIndex::build(train),
            weights,
        })
    }

    fn weight(&self, idx: u32) -> f64 {
        self.weights.map_or(1.0, |w| w[idx as usize])
    }

    /// Σ w (r − p·q)² + λ (Σ‖p_u‖² + Σ‖q_i‖²).
    pub fn objective(&self, model: &FactorModel, lambda: f64) -> f64 {
        let mut err = 0.0;
        for (idx, r) in self.train.records().iter().enumerate() {
            let e = r.score - dot(model.p_row(r.user), model.q_row(r.item));
            err += self.weight(idx as u32) * e * e;
        }
        let reg: f64 = model.p.iter().chain(&model.q).map(|v| v * v).sum();
        err + lambda * reg
    }

    /// Solves every row of `side` exactly with the other side held fixed.
    pub fn half_step(&self, model: &mut FactorModel, side: Side, lambda: f64, engine: &Engine) -> Result<()> {
        if !(lambda >= 0.0) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.train.num_users() > model.num_users || self.train.num_items() > model.num_items {
            return Err(Error::Shape("training data exceeds model dimensions".into()));
        }
        let d = model.dim;
        let rows = match side {
            Side::Users => model.num_users,
            Side::Items => model.num_items,
        };
        let mut out = vec![0.0; rows * d];
        {
            let fixed: &[f64] = match side {
                Side::Users => &model.q,
                Side::Items => &model.p,
            };
            let records = self.train.records();
            engine.map_rows(&mut out, d, |row, slot| {
                let obs: &[u32] = match side {
                    Side::Users if row < self.train.num_users() => self.train.user_record_indices(row as UserId),
                    Side::Items if row < self.train.num_items() => self.items.item_record_indices(row as u32),
                    _ => &[],
                };
                let mut a = DMatrix::<f64>::zeros(d, d);
                let mut b = DVector::<f64>::zeros(d);
                for &idx in obs {
                    let r = &records[idx as usize];
                    let other = match side {
                        Side::Users => r.item as usize,
                        Side::Items => r.user as usize,
                    };
                    let v = &fixed[other * d..(other + 1) * d];
                    let w = self.weight(idx);
                    for c in 0..d {
                        let wv = w * v[c];
                        b[c] += wv * r.score;
                        for k in c..d {
                            a[(k, c)] += wv * v[k];
                        }
                    }
                }
                for c in 0..d {
                    a[(c, c)] += lambda;
                    for k in c + 1..d {
                        a[(c, k)] = a[(k, c)];
                    }
                }
                let chol = a.cholesky().ok_or_else(|| {
                    Error::Singular(format!(
                        "{} row {row} has a singular normal matrix",
                        match side {
                            Side::Users => "user",
                            Side::Items => "item",
                        }
                    ))
                })?;
                let x = chol.solve(&b);
                slot.copy_from_slice(x.as_slice());
                Ok(())
            })?;
        }
        if d == 0 {
            return Ok(());
        }
        match side {
            Side::Users => model.p = out,
            Side::Items => model.q = out,
        }
        Ok(())
    }
}

/// One ALS half-step on `train`.
pub fn als_half_step(
    model: &mut FactorModel,
    train: &Dataset,
    side: Side,
    lambda: f64,
    weights: Option<&[f64]>,
    engine: &Engine,
) -> Result<()> {
    AlsProblem::new(train, weights)?.half_step(model, side, lambda, engine)
}

pub fn als_objective(model: &FactorModel, train: &Dataset, lambda: f64, weights: Option<&[f64]>) -> Result<f64> {
    Ok(AlsProblem::new(train, weights)?.objective(model, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RatingRecord, ScoreScale, Split};
    use crate::hyper::ModelKind;

    fn scalar(lambda: f64, weight: Option<&[f64]>) -> Result<f64> {
        let d = Dataset::new(vec![RatingRecord::new(0, 0, 8.0, 0)], Split::Train, ScoreScale::default()).unwrap();
        let mut m = FactorModel::zeros(ModelKind::Als, 1, 1, 1, 0, None).unwrap();
        m.q[0] = 2.0;
        als_half_step(&mut m, &d, Side::Users, lambda, weight, &Engine::sequential())?;
        Ok(m.p[0])
    }

    #[test]
    fn scalar_normal_equations() {
        assert_eq!(scalar(0.0, None).unwrap(), 4.0);
        assert!((scalar(1.0, None).unwrap() - 3.2).abs() < 1e-15);
        assert_eq!(scalar(1.0, Some(&[0.0])).unwrap(), 0.0);
        assert!(matches!(scalar(0.0, Some(&[0.0])), Err(Error::Singular(_))));
    }

    #[test]
    fn unobserved_rows_become_zero() {
        let d = Dataset::with_dims(
            vec![RatingRecord::new(0, 0, 8.0, 0)],
            Split::Train,
            ScoreScale::default(),
            2,
            1,
        )
        .unwrap();
        let mut m = FactorModel::zeros(ModelKind::Als, 2, 1, 2, 0, None).unwrap();
        m.q.copy_from_slice(&[1.0, 1.0]);
        m.p.copy_from_slice(&[5.0, 5.0, 5.0, 5.0]);
        als_half_step(&mut m, &d, Side::Users, 0.5, None, &Engine::sequential()).unwrap();
        assert_eq!(&m.p[2..], &[0.0, 0.0]);
    }

    #[test]
    fn weights_are_validated() {
        let d = Dataset::new(vec![RatingRecord::new(0, 0, 8.0, 0)], Split::Train, ScoreScale::default()).unwrap();
        assert!(matches!(AlsProblem::new(&d, Some(&[1.0, 1.0])), Err(Error::Shape(_))));
        assert!(AlsProblem::new(&d, Some(&[-1.0])).is_err());
    }
}
