//! Rating datasets, the TAB-separated rating file format, and time binning.
//!
//! A rating file holds one record per line, `user<TAB>item<TAB>score<TAB>time`,
//! with dense 0-based ids and integer day timestamps. Blank lines and lines
//! starting with `#` are skipped.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type UserId = u32;
pub type ItemId = u32;
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub user: UserId,
    pub item: ItemId,
    pub score: f64,
    pub time: Timestamp,
}

impl RatingRecord {
    pub fn new(user: UserId, item: ItemId, score: f64, time: Timestamp) -> Self {
        RatingRecord {
            user,
            item,
            score,
            time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "valid" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Usage(format!("unknown split `{other}`"))),
        }
    }
}

/// Closed interval of admissible scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreScale {
    lo: f64,
    hi: f64,
}

impl ScoreScale {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "score scale needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(ScoreScale { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, score: f64) -> bool {
        score >= self.lo && score <= self.hi
    }

    pub fn clip(&self, score: f64) -> f64 {
        score.clamp(self.lo, self.hi)
    }
}

impl Default for ScoreScale {
    fn default() -> Self {
        ScoreScale { lo: 0.0, hi: 100.0 }
    }
}

/// An immutable collection of ratings with a per-user index.
///
/// Records keep their insertion order; `user_records` enumerates the rated
/// set of one user (in insertion order) without scanning the whole dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<RatingRecord>,
    split: Split,
    num_users: usize,
    num_items: usize,
    t_min: Timestamp,
    t_max: Timestamp,
    scale: ScoreScale,
    user_offsets: Vec<usize>,
    user_order: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset; user/item counts are one past the largest observed id.
    pub fn new(records: Vec<RatingRecord>, split: Split, scale: ScoreScale) -> Result<Self> {
        let num_users = records.iter().map(|r| r.user as usize + 1).max().unwrap_or(0);
        let num_items = records.iter().map(|r| r.item as usize + 1).max().unwrap_or(0);
        Self::with_dims(records, split, scale, num_users, num_items)
    }

    /// Builds a dataset with declared id-space sizes (which may exceed the
    /// observed ids).
    pub fn with_dims(
        records: Vec<RatingRecord>,
        split: Split,
        scale: ScoreScale,
        num_users: usize,
        num_items: usize,
    ) -> Result<Self> {
        let mut t_min = Timestamp::MAX;
        let mut t_max = Timestamp::MIN;
        for r in &records {
            if (r.user as usize) >= num_users || (r.item as usize) >= num_items {
                return Err(Error::Range(format!(
                    "record ({}, {}) outside declared {}x{} id space",
                    r.user, r.item, num_users, num_items
                )));
            }
            if !scale.contains(r.score) {
                return Err(Error::Range(format!(
                    "score {} outside [{}, {}]",
                    r.score, scale.lo, scale.hi
                )));
            }
            t_min = t_min.min(r.time);
            t_max = t_max.max(r.time);
        }
        if records.is_empty() {
            t_min = 0;
            t_max = 0;
        }

        let mut counts = vec![0usize; num_users + 1];
        for r in &records {
            counts[r.user as usize + 1] += 1;
        }
        for u in 0..num_users {
            counts[u + 1] += counts[u];
        }
        let user_offsets = counts;
        let mut fill = user_offsets.clone();
        let mut user_order = vec![0u32; records.len()];
        for (idx, r) in records.iter().enumerate() {
            let slot = &mut fill[r.user as usize];
            user_order[*slot] = idx as u32;
            *slot += 1;
        }

        Ok(Dataset {
            records,
            split,
            num_users,
            num_items,
            t_min,
            t_max,
            scale,
            user_offsets,
            user_order,
        })
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn t_min(&self) -> Timestamp {
        self.t_min
    }

    pub fn t_max(&self) -> Timestamp {
        self.t_max
    }

    pub fn scale(&self) -> ScoreScale {
        self.scale
    }

    /// Indices (into `records`) of user `u`'s ratings, in insertion order.
    pub fn user_record_indices(&self, u: UserId) -> &[u32] {
        let u = u as usize;
        if u >= self.num_users {
            return &[];
        }
        &self.user_order[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn user_records(&self, u: UserId) -> impl Iterator<Item = &RatingRecord> + '_ {
        self.user_record_indices(u)
            .iter()
            .map(move |&idx| &self.records[idx as usize])
    }

    pub fn user_count(&self, u: UserId) -> usize {
        self.user_record_indices(u).len()
    }

    /// Items rated by `u`, in insertion order (the set R_u).
    pub fn user_items(&self, u: UserId) -> Vec<ItemId> {
        self.user_records(u).map(|r| r.item).collect()
    }

    pub fn mean_score(&self) -> Option<f64> {
        if self.records.is_empty() {
            None
        } else {
            Some(self.records.iter().map(|r| r.score).sum::<f64>() / self.records.len() as f64)
        }
    }

    /// Union of two datasets: `self`'s records followed by `other`'s.
    pub fn concat(&self, other: &Dataset, split: Split) -> Result<Dataset> {
        let mut records = self.records.clone();
        records.extend_from_slice(&other.records);
        Dataset::with_dims(
            records,
            split,
            self.scale,
            self.num_users.max(other.num_users),
            self.num_items.max(other.num_items),
        )
    }

    /// Copy of this dataset with its id space widened to at least the given sizes.
    pub fn widened(&self, num_users: usize, num_items: usize) -> Result<Dataset> {
        Dataset::with_dims(
            self.records.clone(),
            self.split,
            self.scale,
            self.num_users.max(num_users),
            self.num_items.max(num_items),
        )
    }
}

/// Ratings grouped by item, each group sorted by user id.
#[derive(Debug, Clone)]
pub struct ItemIndex {
    offsets: Vec<usize>,
    entries: Vec<u32>,
}

impl ItemIndex {
    pub fn build(data: &Dataset) -> Self {
        let n = data.num_items();
        let mut offsets = vec![0usize; n + 1];
        for r in data.records() {
            offsets[r.item as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut entries = vec![0u32; data.len()];
        for (idx, r) in data.records().iter().enumerate() {
            let slot = &mut fill[r.item as usize];
            entries[*slot] = idx as u32;
            *slot += 1;
        }
        let records = data.records();
        for i in 0..n {
            entries[offsets[i]..offsets[i + 1]].sort_by_key(|&idx| (records[idx as usize].user, idx));
        }
        ItemIndex { offsets, entries }
    }

    /// Record indices of item `i`'s ratings, sorted by user.
    pub fn item_record_indices(&self, i: ItemId) -> &[u32] {
        let i = i as usize;
        if i + 1 >= self.offsets.len() {
            return &[];
        }
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Parses a rating file into a dataset.
pub fn load_ratings(path: impl AsRef<Path>, split: Split, scale: ScoreScale) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(&text, split, scale)
}

pub fn parse_ratings(text: &str, split: Split, scale: ScoreScale) -> Result<Dataset> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 TAB-separated fields, found {}", fields.len()),
            ));
        }
        let user = fields[0]
            .trim()
            .parse::<u32>()
            .map_err(|e| Error::parse(line_no, format!("user `{}`: {e}", fields[0])))?;
        let item = fields[1]
            .trim()
            .parse::<u32>()
            .map_err(|e| Error::parse(line_no, format!("item `{}`: {e}", fields[1])))?;
        let score = fields[2]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|s| s.is_finite())
            .ok_or_else(|| Error::parse(line_no, format!("score `{}` is not a number", fields[2])))?;
        let time = fields[3]
            .trim()
            .parse::<i64>()
            .map_err(|e| Error::parse(line_no, format!("time `{}`: {e}", fields[3])))?;
        if !scale.contains(score) {
            return Err(Error::Range(format!(
                "line {line_no}: score {score} outside [{}, {}]",
                scale.lo(),
                scale.hi()
            )));
        }
        records.push(RatingRecord::new(user, item, score, time));
    }
    Dataset::new(records, split, scale)
}

/// Writes records in the rating file format. Scores use the shortest
/// representation that parses back to the same `f64`.
pub fn write_ratings(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in data.records() {
        writeln!(out, "{}\t{}\t{}\t{}", r.user, r.item, r.score, r.time).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Maps timestamps in `[t_min, t_max]` onto `num_bins` near-equal bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeBinner {
    t_min: Timestamp,
    t_max: Timestamp,
    num_bins: usize,
}

impl TimeBinner {
    pub const DEFAULT_BINS: usize = 30;

    pub fn new(t_min: Timestamp, t_max: Timestamp, num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::Config("time binner needs at least one bin".into()));
        }
        if t_min > t_max {
            return Err(Error::Config(format!("time bounds reversed: {t_min} > {t_max}")));
        }
        Ok(TimeBinner {
            t_min,
            t_max,
            num_bins,
        })
    }

    /// Binner spanning the time range of every given dataset.
    pub fn covering<'a>(datasets: impl IntoIterator<Item = &'a Dataset>, num_bins: usize) -> Result<Self> {
        let mut lo = Timestamp::MAX;
        let mut hi = Timestamp::MIN;
        for d in datasets {
            if !d.is_empty() {
                lo = lo.min(d.t_min());
                hi = hi.max(d.t_max());
            }
        }
        if lo > hi {
            lo = 0;
            hi = 0;
        }
        TimeBinner::new(lo, hi, num_bins)
    }

    pub fn t_min(&self) -> Timestamp {
        self.t_min
    }

    pub fn t_max(&self) -> Timestamp {
        self.t_max
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn bin_of(&self, t: Timestamp) -> Result<usize> {
        if t < self.t_min || t > self.t_max {
            return Err(Error::Range(format!(
                "timestamp {t} outside [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(self.bin_unchecked(t))
    }

    /// Bin of `t` after clamping it into the binner's range.
    pub fn bin_clamped(&self, t: Timestamp) -> usize {
        self.bin_unchecked(t.clamp(self.t_min, self.t_max))
    }

    fn bin_unchecked(&self, t: Timestamp) -> usize {
        let offset = (t - self.t_min) as i128;
        let width = (self.t_max - self.t_min) as i128 + 1;
        (offset * self.num_bins as i128 / width) as usize
    }
}

pub fn bin_of(t: Timestamp, binner: &TimeBinner) -> Result<usize> {
    binner.bin_of(t)
}
