//! RMSE and key-aligned comparison of prediction files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{Dataset, ItemId, ScoreScale, Timestamp, UserId};
use crate::error::{Error, Result};

/// Row key shared by prediction files: `(user, item, time)`.
pub type Key = (UserId, ItemId, Timestamp);

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("RMSE of zero points".into()));
    }
    let se: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((se / pred.len() as f64).sqrt())
}

/// Keys of a dataset in record order.
pub fn dataset_keys(data: &Dataset) -> Vec<Key> {
    data.records().iter().map(|r| (r.user, r.item, r.time)).collect()
}

/// Scores keyed by `(user, item, time)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionFile {
    pub keys: Vec<Key>,
    pub scores: Vec<f64>,
}

impl PredictionFile {
    pub fn new(keys: Vec<Key>, scores: Vec<f64>) -> Result<Self> {
        if keys.len() != scores.len() {
            return Err(Error::Shape(format!("{} keys for {} scores", keys.len(), scores.len())));
        }
        Ok(PredictionFile { keys, scores })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Writes `user<TAB>item<TAB>time<TAB>score` lines, clipping to `scale`
    /// when given.
    pub fn save(&self, path: impl AsRef<Path>, scale: Option<ScoreScale>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (&(u, i, t), &s) in self.keys.iter().zip(&self.scores) {
            let s = scale.map_or(s, |sc| sc.clip(s));
            writeln!(out, "{u}\t{i}\t{t}\t{s}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut keys = Vec::new();
        let mut scores = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::parse(n + 1, format!("expected 4 fields, found {}", f.len())));
            }
            let bad = |what: &str| Error::parse(n + 1, format!("bad {what}"));
            let u = f[0].parse().map_err(|_| bad("user"))?;
            let i = f[1].parse().map_err(|_| bad("item"))?;
            let t = f[2].parse().map_err(|_| bad("time"))?;
            let s: f64 = f[3].parse().map_err(|_| bad("score"))?;
            keys.push((u, i, t));
            scores.push(s);
        }
        Ok(PredictionFile { keys, scores })
    }

    /// Scores reordered to follow `keys`; the key sets must match exactly.
    pub fn aligned_to(&self, keys: &[Key]) -> Result<Vec<f64>> {
        let index = key_index(&self.keys)?;
        if self.keys.len() != keys.len() {
            let missing = keys.iter().find(|k| !index.contains_key(k));
            return Err(match missing {
                Some(k) => Error::Alignment(format!("key {k:?} has no prediction")),
                None => Error::Alignment(format!("{} predictions for {} keys", self.keys.len(), keys.len())),
            });
        }
        keys.iter()
            .map(|k| {
                index
                    .get(k)
                    .map(|&idx| self.scores[idx])
                    .ok_or_else(|| Error::Alignment(format!("key {k:?} has no prediction")))
            })
            .collect()
    }
}

fn key_index(keys: &[Key]) -> Result<HashMap<Key, usize>> {
    let mut index = HashMap::with_capacity(keys.len());
    for (n, k) in keys.iter().enumerate() {
        if index.insert(*k, n).is_some() {
            return Err(Error::Alignment(format!("duplicate key {k:?}")));
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub rmse: f64,
    pub count: usize,
}

/// One RMSE row per model, ascending (ties by name).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("model\trmse\tcount\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{:.6}\t{}", r.model, r.rmse, r.count);
        }
        s
    }
}

/// Scores each named prediction file against `truth`, matching rows by key.
pub fn compare(models: &[(String, PredictionFile)], truth: &Dataset) -> Result<EvalReport> {
    let keys = dataset_keys(truth);
    key_index(&keys)?;
    let target: Vec<f64> = truth.records().iter().map(|r| r.score).collect();
    let mut rows = Vec::with_capacity(models.len());
    for (name, file) in models {
        let pred = file
            .aligned_to(&keys)
            .map_err(|e| Error::Alignment(format!("{name}: {e}")))?;
        rows.push(EvalRow {
            model: name.clone(),
            rmse: rmse(&pred, &target)?,
            count: keys.len(),
        });
    }
    rows.sort_by(|a, b| a.rmse.total_cmp(&b.rmse).then_with(|| a.model.cmp(&b.model)));
    Ok(EvalReport { rows })
}
