//! Plain-text model files.
//!
//! Layout (one `key value...` header line each, then parameter blocks):
//!
//! ```text
//! multicf-model 1
//! kind time-svdpp
//! seed 42
//! mu 51.25
//! users 100
//! items 250
//! dim 20
//! time_dim 4
//! binner 0 3650 30        (or `binner none`)
//! artists 12              (taxonomy models only)
//! block bu 100 1
//! <one line per row, values separated by spaces>
//! ...
//! end
//! ```
//!
//! Blocks appear in the order `bu bi p q y x z bibin implicit_sum`, then
//! `artist_ids slot_of ba qa` for taxonomy models. Floats are written in
//! shortest round-trip form, so a save/load cycle is exact.
//!
//! Neighbourhood models store `kind`, `beta` and a `neighbors` section in the
//! neighbour-table text format; prediction needs the training ratings again.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::data::{Dataset, TimeBinner};
use crate::error::{Error, Result};
use crate::factor::FactorModel;
use crate::hyper::ModelKind;
use crate::mfitr::MfitrModel;
use crate::neighborhood::{NeighborTable, NeighborhoodPredictor};
use crate::train::{NeighborhoodModel, TrainedModel};

const MAGIC: &str = "multicf-model 1";

fn write_block<T: std::fmt::Display>(s: &mut String, name: &str, values: &[T], cols: usize) {
    let rows = if cols == 0 { 0 } else { values.len() / cols };
    let _ = writeln!(s, "block {name} {rows} {cols}");
    for row in values.chunks(cols.max(1)) {
        let mut first = true;
        for v in row {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
}

/// Serializes a trained model.
pub fn model_to_text(model: &TrainedModel) -> String {
    let mut s = format!("{MAGIC}\n");
    match model {
        TrainedModel::Neighborhood(m) => {
            let _ = writeln!(s, "kind {}", model.kind());
            match m.beta {
                Some(b) => {
                    let _ = writeln!(s, "beta {b}");
                }
                None => s.push_str("beta none\n"),
            }
            s.push_str("neighbors\n");
            s.push_str(&m.predictor.table().to_text());
        }
        TrainedModel::Factor(m) => {
            factor_header(&mut s, m);
            factor_blocks(&mut s, m);
        }
        TrainedModel::Mfitr(m) => {
            factor_header(&mut s, &m.base);
            let _ = writeln!(s, "artists {}", m.artists.len());
            factor_blocks(&mut s, &m.base);
            write_block(&mut s, "artist_ids", &m.artists, 1);
            write_block(&mut s, "slot_of", &m.slot_of, 1);
            write_block(&mut s, "ba", &m.ba, 1);
            write_block(&mut s, "qa", &m.qa, m.base.dim);
        }
    }
    if !matches!(model, TrainedModel::Neighborhood(_)) {
        s.push_str("end\n");
    }
    s
}

fn factor_header(s: &mut String, m: &FactorModel) {
    let _ = writeln!(s, "kind {}", m.kind);
    let _ = writeln!(s, "seed {}", m.seed);
    let _ = writeln!(s, "mu {}", m.mu);
    let _ = writeln!(s, "users {}", m.num_users);
    let _ = writeln!(s, "items {}", m.num_items);
    let _ = writeln!(s, "dim {}", m.dim);
    let _ = writeln!(s, "time_dim {}", m.time_dim);
    match m.binner {
        Some(b) => {
            let _ = writeln!(s, "binner {} {} {}", b.t_min(), b.t_max(), b.num_bins());
        }
        None => s.push_str("binner none\n"),
    }
}

fn factor_blocks(s: &mut String, m: &FactorModel) {
    write_block(s, "bu", &m.bu, 1);
    write_block(s, "bi", &m.bi, 1);
    write_block(s, "p", &m.p, m.dim);
    write_block(s, "q", &m.q, m.dim);
    write_block(s, "y", &m.y, m.dim);
    write_block(s, "x", &m.x, m.time_dim);
    write_block(s, "z", &m.z, m.time_dim);
    write_block(s, "bibin", &m.bibin, m.bins());
    write_block(s, "implicit_sum", &m.implicit_sum, m.dim);
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_text(model)).map_err(|e| Error::io(path, e))
}

/// Reads a model file. Neighbourhood models need the training ratings.
pub fn load_model(path: impl AsRef<Path>, train: Option<&Dataset>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_text(&text, train)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((n, l)) => {
                self.line = n + 1;
                Ok(l)
            }
            None => Err(Error::parse(self.line + 1, "unexpected end of model file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, msg)
    }

    /// `key value...`; returns the value part.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.trim().parse().map_err(|_| self.err(format!("bad {key}")))
    }

    fn block<T: FromStr>(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<T>> {
        let head = self.field("block")?;
        let f: Vec<&str> = head.split_whitespace().collect();
        let expect = [name.to_string(), rows.to_string(), cols.to_string()];
        let empty = rows * cols == 0 && f.len() == 3 && f[0] == name && (f[1] == "0" || f[2] == "0");
        if !empty && f != expect.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(self.err(format!("expected block {name} {rows} {cols}, found `{head}`")));
        }
        if rows * cols == 0 {
            let n: usize = f[1].parse().map_err(|_| self.err("bad row count"))?;
            for _ in 0..n {
                self.next()?;
            }
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let before = out.len();
            for tok in l.split(' ') {
                out.push(tok.parse().map_err(|_| self.err(format!("bad value in block {name}")))?);
            }
            if out.len() - before != cols {
                return Err(self.err(format!("block {name}: expected {cols} values per row")));
            }
        }
        Ok(out)
    }
}

pub fn model_from_text(text: &str, train: Option<&Dataset>) -> Result<TrainedModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err("not a model file"));
    }
    let kind: ModelKind = lines
        .field("kind")?
        .parse()
        .map_err(|_| lines.err("unknown model kind"))?;

    if kind.is_neighborhood() {
        let beta = match lines.field("beta")? {
            "none" => None,
            v => Some(v.parse().map_err(|_| lines.err("bad beta"))?),
        };
        if lines.next()? != "neighbors" {
            return Err(lines.err("expected `neighbors`"));
        }
        let rest: Vec<&str> = lines.inner.map(|(_, l)| l).collect();
        let table = NeighborTable::parse(&rest.join("\n"))?;
        let train = train.ok_or_else(|| Error::Usage("a neighbourhood model needs the training ratings".into()))?;
        return Ok(TrainedModel::Neighborhood(NeighborhoodModel {
            predictor: NeighborhoodPredictor::new(table, train),
            beta,
        }));
    }

    let seed: u64 = lines.parsed("seed")?;
    let mu: f64 = lines.parsed("mu")?;
    let nu: usize = lines.parsed("users")?;
    let ni: usize = lines.parsed("items")?;
    let dim: usize = lines.parsed("dim")?;
    let time_dim: usize = lines.parsed("time_dim")?;
    let binner = match lines.field("binner")? {
        "none" => None,
        v => {
            let f: Vec<i64> = v
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| lines.err("bad binner"))?;
            if f.len() != 3 || f[2] < 1 {
                return Err(lines.err("bad binner"));
            }
            Some(TimeBinner::new(f[0], f[1], f[2] as usize)?)
        }
    };
    let artists: Option<usize> = if kind.uses_taxonomy() { Some(lines.parsed("artists")?) } else { None };

    let mut m = FactorModel::zeros(kind, nu, ni, dim, time_dim, binner)?;
    m.seed = seed;
    m.mu = mu;
    let (td, bins) = (m.time_dim, m.bins());
    m.bu = lines.block("bu", nu, 1)?;
    m.bi = lines.block("bi", ni, 1)?;
    m.p = lines.block("p", nu, dim)?;
    m.q = lines.block("q", ni, dim)?;
    m.y = lines.block("y", if m.implicit { ni } else { 0 }, dim)?;
    m.x = lines.block("x", nu, td)?;
    m.z = lines.block("z", bins, td)?;
    m.bibin = lines.block("bibin", ni, bins)?;
    m.implicit_sum = lines.block("implicit_sum", if m.implicit { nu } else { 0 }, dim)?;

    let model = match artists {
        None => TrainedModel::Factor(m),
        Some(na) => {
            let ids = lines.block("artist_ids", na, 1)?;
            let slot_of = lines.block("slot_of", ni, 1)?;
            let mut mf = MfitrModel::from_parts(m, ids, slot_of);
            mf.ba = lines.block("ba", na, 1)?;
            mf.qa = lines.block("qa", na, dim)?;
            TrainedModel::Mfitr(mf)
        }
    };
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    Ok(model)
}
