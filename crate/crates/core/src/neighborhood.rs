//! Item-based k-nearest-neighbour prediction with adjusted-cosine weights.
//!
//! Similarities are accumulated over co-raters in ascending user order, so the
//! blocked construction in [`build_neighbors`] produces exactly the same
//! floating-point values as a pairwise evaluation of [`adjusted_cosine`].
//! When a user rated the same item more than once, the later rating is used.

use std::cmp::Ordering;
use std::fs;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Dataset, ItemId, Timestamp, UserId};
use crate::error::{Error, Result};
use crate::parallel::Engine;

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_PARTS: usize = 300;
pub const DEFAULT_BETA: f64 = 0.08;

/// Mean training score r̄_u of every user with at least one rating.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMeanTable {
    mean: Vec<Option<f64>>,
}

impl UserMeanTable {
    pub fn get(&self, u: UserId) -> Option<f64> {
        self.mean.get(u as usize).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.mean.iter().filter(|m| m.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn user_means(train: &Dataset) -> UserMeanTable {
    let mean = (0..train.num_users() as UserId)
        .map(|u| {
            let n = train.user_count(u);
            if n == 0 {
                None
            } else {
                Some(train.user_records(u).map(|r| r.score).sum::<f64>() / n as f64)
            }
        })
        .collect();
    UserMeanTable { mean }
}

/// Mean-centred ratings, grouped both by item (sorted by user) and by user.
struct Deviations {
    item_offsets: Vec<usize>,
    item_users: Vec<UserId>,
    item_devs: Vec<f64>,
    user_offsets: Vec<usize>,
    user_items: Vec<ItemId>,
    user_devs: Vec<f64>,
}

impl Deviations {
    fn build(train: &Dataset, means: &UserMeanTable) -> Self {
        let n_items = train.num_items();
        let n_users = train.num_users();
        // Latest rating per (user, item).
        let mut per_user: Vec<(ItemId, UserId, f64)> = Vec::with_capacity(train.len());
        for u in 0..n_users as UserId {
            let Some(mean) = means.get(u) else { continue };
            let start = per_user.len();
            for r in train.user_records(u) {
                per_user.push((r.item, u, r.score - mean));
            }
            let slice = &mut per_user[start..];
            // Stable sort keeps insertion order within an item; keep the last.
            slice.sort_by_key(|e| e.0);
            let mut w = start;
            for k in start..per_user.len() {
                if k + 1 < per_user.len() && per_user[k + 1].0 == per_user[k].0 && per_user[k + 1].1 == u {
                    continue;
                }
                per_user[w] = per_user[k];
                w += 1;
            }
            per_user.truncate(w);
        }

        let mut user_offsets = vec![0usize; n_users + 1];
        for e in &per_user {
            user_offsets[e.1 as usize + 1] += 1;
        }
        for u in 0..n_users {
            user_offsets[u + 1] += user_offsets[u];
        }
        let user_items = per_user.iter().map(|e| e.0).collect();
        let user_devs = per_user.iter().map(|e| e.2).collect();

        let mut item_offsets = vec![0usize; n_items + 1];
        for e in &per_user {
            item_offsets[e.0 as usize + 1] += 1;
        }
        for i in 0..n_items {
            item_offsets[i + 1] += item_offsets[i];
        }
        let mut fill = item_offsets.clone();
        let mut item_users = vec![0; per_user.len()];
        let mut item_devs = vec![0.0; per_user.len()];
        // per_user is ordered by user, so each item's list comes out user-sorted.
        for &(i, u, d) in &per_user {
            let slot = &mut fill[i as usize];
            item_users[*slot] = u;
            item_devs[*slot] = d;
            *slot += 1;
        }
        Deviations {
            item_offsets,
            item_users,
            item_devs,
            user_offsets,
            user_items,
            user_devs,
        }
    }

    fn item(&self, i: ItemId) -> (&[UserId], &[f64]) {
        let i = i as usize;
        if i + 1 >= self.item_offsets.len() {
            return (&[], &[]);
        }
        let r = self.item_offsets[i]..self.item_offsets[i + 1];
        (&self.item_users[r.clone()], &self.item_devs[r])
    }

    fn user(&self, u: UserId) -> (&[ItemId], &[f64]) {
        let r = self.user_offsets[u as usize]..self.user_offsets[u as usize + 1];
        (&self.user_items[r.clone()], &self.user_devs[r])
    }
}

fn finish_similarity(dot: f64, sq_i: f64, sq_j: f64) -> f64 {
    if sq_i == 0.0 || sq_j == 0.0 {
        return 0.0;
    }
    (dot / (sq_i * sq_j).sqrt()).clamp(-1.0, 1.0)
}

/// Adjusted-cosine similarity of items `i` and `j` over their co-raters.
///
/// Zero when there are no co-raters or either centred vector vanishes.
pub fn adjusted_cosine(i: ItemId, j: ItemId, train: &Dataset, means: &UserMeanTable) -> f64 {
    let dev = Deviations::build(train, means);
    pair_similarity(&dev, i, j)
}

/// Adjusted-cosine similarities for many pairs, sharing one pass over the data.
pub fn pair_similarities(train: &Dataset, means: &UserMeanTable, pairs: &[(ItemId, ItemId)]) -> Vec<f64> {
    let dev = Deviations::build(train, means);
    pairs.iter().map(|&(i, j)| pair_similarity(&dev, i, j)).collect()
}

fn pair_similarity(dev: &Deviations, i: ItemId, j: ItemId) -> f64 {
    let (ui, di) = dev.item(i);
    let (uj, dj) = dev.item(j);
    let (mut a, mut b) = (0, 0);
    let (mut dot, mut sq_i, mut sq_j) = (0.0, 0.0, 0.0);
    while a < ui.len() && b < uj.len() {
        match ui[a].cmp(&uj[b]) {
            Ordering::Less => a += 1,
            Ordering::Greater => b += 1,
            Ordering::Equal => {
                dot += di[a] * dj[b];
                sq_i += di[a] * di[a];
                sq_j += dj[b] * dj[b];
                a += 1;
                b += 1;
            }
        }
    }
    finish_similarity(dot, sq_i, sq_j)
}

/// Per-item neighbour lists sorted by |w| descending, ties by smaller id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    k: usize,
    lists: Vec<Vec<(ItemId, f64)>>,
}

impl NeighborTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_items(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, i: ItemId) -> &[(ItemId, f64)] {
        self.lists.get(i as usize).map_or(&[], Vec::as_slice)
    }

    pub fn from_lists(k: usize, lists: Vec<Vec<(ItemId, f64)>>) -> Self {
        NeighborTable { k, lists }
    }

    /// `# k=.. items=..` header, then one `i<TAB>j<TAB>w` line per entry.
    pub fn to_text(&self) -> String {
        let mut s = format!("# k={} items={}\n", self.k, self.lists.len());
        for (i, list) in self.lists.iter().enumerate() {
            for &(j, w) in list {
                let _ = writeln!(s, "{i}\t{j}\t{w}");
            }
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut k = 0;
        let mut n_items = 0;
        let mut lists: Vec<Vec<(ItemId, f64)>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(header) = line.strip_prefix('#') {
                for part in header.split_whitespace() {
                    if let Some(v) = part.strip_prefix("k=") {
                        k = v.parse().map_err(|_| Error::parse(n + 1, "bad k"))?;
                    } else if let Some(v) = part.strip_prefix("items=") {
                        n_items = v.parse().map_err(|_| Error::parse(n + 1, "bad item count"))?;
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse(n + 1, "expected i<TAB>j<TAB>w"));
            }
            let i: usize = f[0].parse().map_err(|_| Error::parse(n + 1, "bad item id"))?;
            let j: ItemId = f[1].parse().map_err(|_| Error::parse(n + 1, "bad neighbour id"))?;
            let w: f64 = f[2].parse().map_err(|_| Error::parse(n + 1, "bad weight"))?;
            if lists.len() <= i {
                lists.resize(i + 1, Vec::new());
            }
            lists[i].push((j, w));
        }
        if lists.len() < n_items {
            lists.resize(n_items, Vec::new());
        }
        Ok(NeighborTable { k, lists })
    }
}

fn rank(a: &(ItemId, f64), b: &(ItemId, f64)) -> Ordering {
    b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0))
}

fn top_k(mut candidates: Vec<(ItemId, f64)>, k: usize) -> Vec<(ItemId, f64)> {
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank);
    candidates
}

/// Builds the K-nearest-neighbour table, `num_parts` item blocks at a time.
///
/// Each block holds dense accumulators for `block × num_items` pairs; the
/// output does not depend on `num_parts` or the engine's thread count.
pub fn build_neighbors(train: &Dataset, k: usize, num_parts: usize, engine: &Engine) -> Result<NeighborTable> {
    if k == 0 {
        return Err(Error::Config("neighbourhood size K must be at least 1".into()));
    }
    if num_parts == 0 {
        return Err(Error::Config("number of item parts must be at least 1".into()));
    }
    let means = user_means(train);
    let dev = Deviations::build(train, &means);
    let n = train.num_items();
    let block = n.div_ceil(num_parts).max(1);
    let mut lists = Vec::with_capacity(n);

    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let width = end - start;
        // [dot, sq_i, sq_j] for every (i in block, j).
        let mut acc = vec![0.0f64; width * n * 3];
        engine.map_rows(&mut acc, n * 3, |row, slot| {
            let i = (start + row) as ItemId;
            let (users, devs) = dev.item(i);
            for (&u, &d_i) in users.iter().zip(devs) {
                let (items, user_devs) = dev.user(u);
                for (&j, &d_j) in items.iter().zip(user_devs) {
                    let cell = &mut slot[j as usize * 3..j as usize * 3 + 3];
                    cell[0] += d_i * d_j;
                    cell[1] += d_i * d_i;
                    cell[2] += d_j * d_j;
                }
            }
            Ok(())
        })?;
        let block_lists = engine.map_indices(width, |row| {
            let i = start + row;
            let slot = &acc[row * n * 3..(row + 1) * n * 3];
            let candidates: Vec<(ItemId, f64)> = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let w = finish_similarity(slot[j * 3], slot[j * 3 + 1], slot[j * 3 + 2]);
                    (w != 0.0).then_some((j as ItemId, w))
                })
                .collect();
            top_k(candidates, k)
        });
        lists.extend(block_lists);
        start = end;
    }
    Ok(NeighborTable { k, lists })
}

/// A user's ratings sorted by item, for intersecting with neighbour lists.
#[derive(Debug, Clone)]
struct RatedItems {
    offsets: Vec<usize>,
    entries: Vec<(ItemId, f64, Timestamp)>,
}

impl RatedItems {
    fn build(train: &Dataset) -> Self {
        let mut offsets = Vec::with_capacity(train.num_users() + 1);
        let mut entries = Vec::with_capacity(train.len());
        offsets.push(0);
        for u in 0..train.num_users() as UserId {
            let start = entries.len();
            entries.extend(train.user_records(u).map(|r| (r.item, r.score, r.time)));
            let slice = &mut entries[start..];
            slice.sort_by_key(|e| e.0);
            // keep the latest rating of duplicated items
            let mut w = start;
            for k in start..entries.len() {
                if k + 1 < entries.len() && entries[k + 1].0 == entries[k].0 {
                    continue;
                }
                entries[w] = entries[k];
                w += 1;
            }
            entries.truncate(w);
            offsets.push(entries.len());
        }
        RatedItems { offsets, entries }
    }

    fn lookup(&self, u: UserId, j: ItemId) -> Option<(f64, Timestamp)> {
        let u = u as usize;
        if u + 1 >= self.offsets.len() {
            return None;
        }
        let list = &self.entries[self.offsets[u]..self.offsets[u + 1]];
        list.binary_search_by_key(&j, |e| e.0).ok().map(|k| (list[k].1, list[k].2))
    }
}

/// Neighbour table plus the training-side lookups prediction needs.
#[derive(Debug, Clone)]
pub struct NeighborhoodPredictor {
    table: NeighborTable,
    means: UserMeanTable,
    global_mean: f64,
    rated: RatedItems,
}

impl NeighborhoodPredictor {
    pub fn new(table: NeighborTable, train: &Dataset) -> Self {
        NeighborhoodPredictor {
            means: user_means(train),
            global_mean: train.mean_score().unwrap_or(0.0),
            rated: RatedItems::build(train),
            table,
        }
    }

    pub fn table(&self) -> &NeighborTable {
        &self.table
    }

    fn fallback(&self, u: UserId) -> f64 {
        self.means.get(u).unwrap_or(self.global_mean)
    }

    /// Weighted average of the user's ratings on neighbours of `i`.
    pub fn predict_knn(&self, u: UserId, i: ItemId) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(j, w) in self.table.neighbors(i) {
            if let Some((r, _)) = self.rated.lookup(u, j) {
                num += w * r;
                den += w.abs();
            }
        }
        if den == 0.0 {
            self.fallback(u)
        } else {
            num / den
        }
    }

    /// Like [`predict_knn`](Self::predict_knn), with each neighbour rating
    /// discounted by `exp(-beta * (t - t_uj))`.
    pub fn predict_knn_time(&self, u: UserId, i: ItemId, t: Timestamp, beta: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(j, w) in self.table.neighbors(i) {
            if let Some((r, t_uj)) = self.rated.lookup(u, j) {
                let decay = (-beta * (t - t_uj) as f64).exp();
                num += decay * w * r;
                den += decay * w.abs();
            }
        }
        if den == 0.0 {
            self.fallback(u)
        } else {
            num / den
        }
    }
}
