//! Item hierarchy: tracks belong to albums, albums to artists.
//!
//! File format, one node per line:
//!
//! ```text
//! kind|item_id|album_id_or_NA|artist_id_or_NA|genre_id,genre_id,...
//! ```
//!
//! `kind` is one of `track`, `album`, `artist`, `genre`. Genre ids are kept
//! for completeness and never feed a model.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::data::ItemId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemKind {
    Track,
    Album,
    Artist,
    Genre,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::Track => "track",
            ItemKind::Album => "album",
            ItemKind::Artist => "artist",
            ItemKind::Genre => "genre",
        })
    }
}

impl FromStr for ItemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "track" => Ok(ItemKind::Track),
            "album" => Ok(ItemKind::Album),
            "artist" => Ok(ItemKind::Artist),
            "genre" => Ok(ItemKind::Genre),
            other => Err(format!("unknown item kind `{other}`")),
        }
    }
}

/// What to do with a link to an undeclared node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkPolicy {
    #[default]
    Strict,
    /// Drop the link and count it in [`TaxonomyGraph::dropped_links`].
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
struct Declaration {
    line: usize,
    kind: ItemKind,
    id: ItemId,
    album: Option<ItemId>,
    artist: Option<ItemId>,
    genres: Vec<u32>,
}

/// Collects node declarations before resolving links.
#[derive(Debug, Clone, Default)]
pub struct TaxonomyBuilder {
    decls: Vec<Declaration>,
}

impl TaxonomyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn artist(&mut self, id: ItemId, genres: Vec<u32>) -> &mut Self {
        self.push(ItemKind::Artist, id, None, None, genres)
    }

    pub fn album(&mut self, id: ItemId, artist: Option<ItemId>, genres: Vec<u32>) -> &mut Self {
        self.push(ItemKind::Album, id, None, artist, genres)
    }

    pub fn track(&mut self, id: ItemId, album: Option<ItemId>, artist: Option<ItemId>, genres: Vec<u32>) -> &mut Self {
        self.push(ItemKind::Track, id, album, artist, genres)
    }

    pub fn genre(&mut self, id: ItemId) -> &mut Self {
        self.push(ItemKind::Genre, id, None, None, Vec::new())
    }

    fn push(
        &mut self,
        kind: ItemKind,
        id: ItemId,
        album: Option<ItemId>,
        artist: Option<ItemId>,
        genres: Vec<u32>,
    ) -> &mut Self {
        let line = self.decls.len() + 1;
        self.decls.push(Declaration {
            line,
            kind,
            id,
            album,
            artist,
            genres,
        });
        self
    }

    pub fn build(self, policy: LinkPolicy) -> Result<TaxonomyGraph> {
        TaxonomyGraph::from_declarations(self.decls, policy)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaxonomyGraph {
    kind: Vec<Option<ItemKind>>,
    album_of: Vec<Option<ItemId>>,
    artist_link: Vec<Option<ItemId>>,
    genres: Vec<Vec<u32>>,
    parents: Vec<Vec<ItemId>>,
    children: Vec<Vec<ItemId>>,
    dropped_links: usize,
}

impl TaxonomyGraph {
    fn from_declarations(decls: Vec<Declaration>, policy: LinkPolicy) -> Result<Self> {
        let n = decls.iter().map(|d| d.id as usize + 1).max().unwrap_or(0);
        let mut g = TaxonomyGraph {
            kind: vec![None; n],
            album_of: vec![None; n],
            artist_link: vec![None; n],
            genres: vec![Vec::new(); n],
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
            dropped_links: 0,
        };
        for d in &decls {
            let slot = &mut g.kind[d.id as usize];
            if slot.is_some() {
                return Err(Error::Structure(format!(
                    "line {}: item {} declared twice",
                    d.line, d.id
                )));
            }
            *slot = Some(d.kind);
        }

        for d in &decls {
            match d.kind {
                ItemKind::Artist | ItemKind::Genre if d.album.is_some() || d.artist.is_some() => {
                    return Err(Error::Structure(format!(
                        "line {}: {} {} cannot have parents",
                        d.line, d.kind, d.id
                    )));
                }
                ItemKind::Album if d.album.is_some() => {
                    return Err(Error::Structure(format!(
                        "line {}: album {} cannot belong to an album",
                        d.line, d.id
                    )));
                }
                _ => {}
            }
            let album = g.resolve(d, d.album, ItemKind::Album, policy)?;
            let artist = g.resolve(d, d.artist, ItemKind::Artist, policy)?;
            let i = d.id as usize;
            g.album_of[i] = album;
            g.artist_link[i] = artist;
            g.genres[i] = d.genres.clone();
            for p in album.into_iter().chain(artist) {
                g.parents[i].push(p);
                g.children[p as usize].push(d.id);
            }
        }
        for list in g.parents.iter_mut().chain(g.children.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        g.check_acyclic()?;
        Ok(g)
    }

    fn resolve(
        &mut self,
        d: &Declaration,
        link: Option<ItemId>,
        expected: ItemKind,
        policy: LinkPolicy,
    ) -> Result<Option<ItemId>> {
        let Some(target) = link else {
            return Ok(None);
        };
        match self.kind.get(target as usize).copied().flatten() {
            Some(k) if k == expected => Ok(Some(target)),
            Some(k) => Err(Error::Structure(format!(
                "line {}: {} {} links to {} {} where an {} is expected",
                d.line, d.kind, d.id, k, target, expected
            ))),
            None => match policy {
                LinkPolicy::Strict => Err(Error::DanglingReference {
                    line: d.line,
                    message: format!("{} {} references undeclared {} {}", d.kind, d.id, expected, target),
                }),
                LinkPolicy::Lenient => {
                    self.dropped_links += 1;
                    Ok(None)
                }
            },
        }
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.kind.len();
        let mut pending: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut visited = 0;
        while let Some(i) = queue.pop_front() {
            visited += 1;
            for &c in &self.children[i] {
                pending[c as usize] -= 1;
                if pending[c as usize] == 0 {
                    queue.push_back(c as usize);
                }
            }
        }
        if visited != n {
            return Err(Error::Structure("parent links form a cycle".into()));
        }
        Ok(())
    }

    /// One past the largest declared id.
    pub fn num_nodes(&self) -> usize {
        self.kind.len()
    }

    pub fn contains(&self, i: ItemId) -> bool {
        self.kind_of(i).is_some()
    }

    pub fn kind_of(&self, i: ItemId) -> Option<ItemKind> {
        self.kind.get(i as usize).copied().flatten()
    }

    /// Parent set P_i, ascending.
    pub fn parents(&self, i: ItemId) -> &[ItemId] {
        self.parents.get(i as usize).map_or(&[], Vec::as_slice)
    }

    /// Child set C_i, ascending.
    pub fn children(&self, i: ItemId) -> &[ItemId] {
        self.children.get(i as usize).map_or(&[], Vec::as_slice)
    }

    pub fn album_of(&self, i: ItemId) -> Option<ItemId> {
        self.album_of.get(i as usize).copied().flatten()
    }

    pub fn genres(&self, i: ItemId) -> &[u32] {
        self.genres.get(i as usize).map_or(&[], Vec::as_slice)
    }

    pub fn dropped_links(&self) -> usize {
        self.dropped_links
    }

    /// Owning artist of a track or album, the artist itself for an artist,
    /// `None` when no artist is known.
    pub fn artist_of(&self, i: ItemId) -> Result<Option<ItemId>> {
        let kind = self
            .kind_of(i)
            .ok_or_else(|| Error::Lookup(format!("item {i} is not in the taxonomy")))?;
        Ok(self.artist_of_kind(i, kind))
    }

    /// Like [`artist_of`](Self::artist_of) but `None` for undeclared items.
    pub fn artist_of_opt(&self, i: ItemId) -> Option<ItemId> {
        self.kind_of(i).and_then(|k| self.artist_of_kind(i, k))
    }

    fn artist_of_kind(&self, i: ItemId, kind: ItemKind) -> Option<ItemId> {
        match kind {
            ItemKind::Artist => Some(i),
            ItemKind::Genre => None,
            ItemKind::Album => self.artist_link[i as usize],
            ItemKind::Track => self.artist_link[i as usize]
                .or_else(|| self.album_of(i).and_then(|a| self.artist_link[a as usize])),
        }
    }

    /// Every (child, parent) link, ordered by child then parent.
    pub fn edges(&self) -> impl Iterator<Item = (ItemId, ItemId)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (c as ItemId, p)))
    }

    /// Declared artists, ascending.
    pub fn artists(&self) -> Vec<ItemId> {
        (0..self.kind.len() as ItemId)
            .filter(|&i| self.kind_of(i) == Some(ItemKind::Artist))
            .collect()
    }

    /// Longest parent chain from any node up to a root.
    pub fn depth(&self) -> usize {
        fn height(g: &TaxonomyGraph, i: usize, memo: &mut [Option<usize>]) -> usize {
            if let Some(h) = memo[i] {
                return h;
            }
            let h = g.parents[i]
                .iter()
                .map(|&p| 1 + height(g, p as usize, memo))
                .max()
                .unwrap_or(0);
            memo[i] = Some(h);
            h
        }
        let mut memo = vec![None; self.kind.len()];
        (0..self.kind.len()).map(|i| height(self, i, &mut memo)).max().unwrap_or(0)
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>, policy: LinkPolicy) -> Result<TaxonomyGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_taxonomy(&text, policy)
}

pub fn parse_taxonomy(text: &str, policy: LinkPolicy) -> Result<TaxonomyGraph> {
    let mut decls = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('|').collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(Error::parse(line, format!("expected 5 `|`-separated fields, found {}", fields.len())));
        }
        let kind = fields[0].trim().parse::<ItemKind>().map_err(|m| Error::parse(line, m))?;
        let id = fields[1]
            .trim()
            .parse::<ItemId>()
            .map_err(|e| Error::parse(line, format!("item id `{}`: {e}", fields[1])))?;
        let link = |s: &str| -> Result<Option<ItemId>> {
            let s = s.trim();
            if s == "NA" || s.is_empty() {
                Ok(None)
            } else {
                s.parse::<ItemId>()
                    .map(Some)
                    .map_err(|e| Error::parse(line, format!("link `{s}`: {e}")))
            }
        };
        let album = link(fields[2])?;
        let artist = link(fields[3])?;
        let genres = match fields.get(4).map(|s| s.trim()) {
            None | Some("") => Vec::new(),
            Some(list) => list
                .split(',')
                .map(|g| {
                    g.trim()
                        .parse::<u32>()
                        .map_err(|e| Error::parse(line, format!("genre `{g}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        decls.push(Declaration {
            line,
            kind,
            id,
            album,
            artist,
            genres,
        });
    }
    TaxonomyGraph::from_declarations(decls, policy)
}

pub fn write_taxonomy(path: impl AsRef<Path>, g: &TaxonomyGraph) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let na = |x: Option<ItemId>| x.map_or_else(|| "NA".to_string(), |v| v.to_string());
    // Roots first so the file reads top-down.
    for kind in [ItemKind::Genre, ItemKind::Artist, ItemKind::Album, ItemKind::Track] {
        for i in 0..g.num_nodes() as ItemId {
            if g.kind_of(i) != Some(kind) {
                continue;
            }
            let genres: Vec<String> = g.genres(i).iter().map(u32::to_string).collect();
            writeln!(
                out,
                "{}|{}|{}|{}|{}",
                kind,
                i,
                na(g.album_of(i)),
                na(g.artist_link[i as usize]),
                genres.join(",")
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}
