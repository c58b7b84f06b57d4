//! Iteration timing across thread counts and factor widths.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hyper::{HyperParams, ModelKind};
use crate::neighborhood::build_neighbors;
use crate::parallel::Engine;
use crate::taxonomy::TaxonomyGraph;
use crate::train::{train, TrainInput, Trainer};

pub const TIMED_ITERATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub algo: ModelKind,
    pub threads: usize,
    pub dim: usize,
    /// Median wall time of one iteration in milliseconds.
    pub iter_ms: f64,
    pub speedup: f64,
    /// Validation RMSE after the timed iterations.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("algo\tthreads\tD\titer_ms\tspeedup\trmse\n");
        for r in &self.rows {
            let rmse = r.rmse.map_or("NA".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.3}\t{:.3}\t{}",
                r.algo, r.threads, r.dim, r.iter_ms, r.speedup, rmse
            );
        }
        s
    }

    pub fn find(&self, algo: ModelKind, threads: usize, dim: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.algo == algo && r.threads == threads && r.dim == dim)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchData<'a> {
    pub train: &'a Dataset,
    pub validation: Option<&'a Dataset>,
    pub taxonomy: Option<&'a TaxonomyGraph>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Median-of-3 iteration time after one discarded warm-up iteration.
///
/// For neighbourhood kinds one iteration is a full table build.
pub fn time_iterations(
    kind: ModelKind,
    data: &BenchData<'_>,
    hyper: &HyperParams,
    engine: &Engine,
) -> Result<(f64, Option<f64>)> {
    let mut input = TrainInput::new(data.train);
    input.validation = data.validation;
    input.taxonomy = data.taxonomy;
    let mut times = Vec::with_capacity(TIMED_ITERATIONS);
    if kind.is_neighborhood() {
        for k in 0..=TIMED_ITERATIONS {
            let start = Instant::now();
            build_neighbors(data.train, hyper.knn_k, hyper.knn_parts, engine)?;
            if k > 0 {
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
        }
        let h = HyperParams { iters: 0, ..hyper.clone() };
        let (model, _) = train(kind, &input, &h, engine)?;
        let rmse = data.validation.and_then(|v| model.rmse_on(v, engine));
        return Ok((median(times), rmse));
    }
    let mut trainer = Trainer::new(kind, &input, hyper)?;
    for k in 0..=TIMED_ITERATIONS {
        let start = Instant::now();
        trainer.step(engine)?;
        if k > 0 {
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let rmse = data.validation.and_then(|v| trainer.rmse_on(v));
    Ok((median(times), rmse))
}

/// Thread sweep at `hyper.dim` (speedup against one thread) followed by a
/// single-threaded width sweep over `dims`.
pub fn bench(
    algorithms: &[(ModelKind, HyperParams)],
    threads: &[usize],
    dims: &[usize],
    data: &BenchData<'_>,
) -> Result<BenchReport> {
    if threads.contains(&0) {
        return Err(Error::Config("thread counts must be at least 1".into()));
    }
    let single = Engine::sequential();
    let mut report = BenchReport::default();
    for (kind, hyper) in algorithms {
        let (base_ms, base_rmse) = time_iterations(*kind, data, hyper, &single)?;
        for &t in threads {
            let (iter_ms, rmse) = if t == 1 {
                (base_ms, base_rmse)
            } else {
                time_iterations(*kind, data, hyper, &Engine::new(t)?)?
            };
            report.rows.push(BenchRow {
                algo: *kind,
                threads: t,
                dim: hyper.dim,
                iter_ms,
                speedup: base_ms / iter_ms,
                rmse,
            });
        }
        for &d in dims {
            if d == hyper.dim && threads.contains(&1) {
                continue;
            }
            let h = HyperParams { dim: d, ..hyper.clone() };
            let (iter_ms, rmse) = if d == hyper.dim {
                (base_ms, base_rmse)
            } else {
                time_iterations(*kind, data, &h, &single)?
            };
            report.rows.push(BenchRow {
                algo: *kind,
                threads: 1,
                dim: d,
                iter_ms,
                speedup: 1.0,
                rmse,
            });
        }
    }
    Ok(report)
}
