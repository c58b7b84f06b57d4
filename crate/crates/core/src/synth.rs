//! Seeded synthetic ratings drawn from a planted taxonomy-aware factor model.
//!
//! Items form `artists × albums_per_artist × tracks_per_album` hierarchies.
//! Ids are laid out as all artists first, then all albums, then all tracks.
//! A user picks a handful of favourite artists (popularity weighted) and
//! rates artists, albums, and tracks from them. Each score is
//!
//! ```text
//! mu + b_u + b_i + b_a + (q_i + q_a) . p_u  [+ drift terms]  + noise
//! ```
//!
//! rounded and clipped to the score scale. With drift on, every user carries
//! a per-day bias slope and per-session offsets, and every item a linear bias
//! trend over the full time range. Each user's chronologically last ratings
//! form the validation and test splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KeyValues;
use crate::data::{write_ratings, Dataset, ItemId, RatingRecord, ScoreScale, Split, Timestamp};
use crate::error::{Error, Result};
use crate::taxonomy::{write_taxonomy, LinkPolicy, TaxonomyBuilder, TaxonomyGraph};

const GLOBAL_MEAN: f64 = 50.0;
const USER_BIAS_SD: f64 = 10.0;
const ITEM_BIAS_SD: f64 = 6.0;
const ARTIST_BIAS_SD: f64 = 8.0;
const INTERACTION_SD: f64 = 10.0;
const ARTIST_INTERACTION_SD: f64 = 6.0;
/// Child factors sit this fraction of the factor scale away from their parent.
const COHERENCE_SPREAD: f64 = 0.35;
const USER_SLOPE_SD: f64 = 0.08;
const SESSION_SD: f64 = 5.0;
const ITEM_TREND_SD: f64 = 6.0;
const GENRE_POOL: u32 = 20;
const FAVOURITE_SHARE: f64 = 0.85;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub artists: usize,
    pub albums_per_artist: usize,
    pub tracks_per_album: usize,
    pub ratings_per_user: usize,
    /// Planted factor dimension.
    pub dim: usize,
    /// Standard deviation of the Gaussian rating noise.
    pub noise: f64,
    pub drift: bool,
    pub coherent_taxonomy: bool,
    pub split_train: f64,
    pub split_valid: f64,
    pub split_test: f64,
    /// Timestamps are drawn from `0..days`.
    pub days: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 1000,
            artists: 50,
            albums_per_artist: 3,
            tracks_per_album: 5,
            ratings_per_user: 40,
            dim: 8,
            noise: 12.0,
            drift: true,
            coherent_taxonomy: true,
            split_train: 0.8,
            split_valid: 0.1,
            split_test: 0.1,
            days: 1000,
            seed: 1,
        }
    }
}

impl SynthConfig {
    const KEYS: [&'static str; 14] = [
        "users",
        "artists",
        "albums_per_artist",
        "tracks_per_album",
        "ratings_per_user",
        "dim",
        "noise",
        "drift",
        "coherent_taxonomy",
        "split_train",
        "split_valid",
        "split_test",
        "days",
        "seed",
    ];

    /// Reads a config from `key=value` pairs; absent keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        if let Some(bad) = kv.keys().find(|k| !Self::KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown synth-config key `{bad}`")));
        }
        let mut c = SynthConfig::default();
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = kv.parsed(stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        take!(users);
        take!(artists);
        take!(albums_per_artist);
        take!(tracks_per_album);
        take!(ratings_per_user);
        take!(dim);
        take!(noise);
        take!(split_train);
        take!(split_valid);
        take!(split_test);
        take!(days);
        take!(seed);
        if let Some(v) = kv.flag("drift")? {
            c.drift = v;
        }
        if let Some(v) = kv.flag("coherent_taxonomy")? {
            c.coherent_taxonomy = v;
        }
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("users", self.users);
        kv.set("artists", self.artists);
        kv.set("albums_per_artist", self.albums_per_artist);
        kv.set("tracks_per_album", self.tracks_per_album);
        kv.set("ratings_per_user", self.ratings_per_user);
        kv.set("dim", self.dim);
        kv.set("noise", self.noise);
        kv.set("drift", u8::from(self.drift));
        kv.set("coherent_taxonomy", u8::from(self.coherent_taxonomy));
        kv.set("split_train", self.split_train);
        kv.set("split_valid", self.split_valid);
        kv.set("split_test", self.split_test);
        kv.set("days", self.days);
        kv.set("seed", self.seed);
        kv
    }

    pub fn num_albums(&self) -> usize {
        self.artists * self.albums_per_artist
    }

    pub fn num_tracks(&self) -> usize {
        self.num_albums() * self.tracks_per_album
    }

    pub fn num_items(&self) -> usize {
        self.artists + self.num_albums() + self.num_tracks()
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.artists == 0 || self.albums_per_artist == 0 || self.tracks_per_album == 0 {
            return Err(Error::Config("users, artists, albums and tracks must all be non-zero".into()));
        }
        if self.ratings_per_user == 0 {
            return Err(Error::Config("ratings_per_user must be non-zero".into()));
        }
        if self.ratings_per_user > self.num_items() {
            return Err(Error::Config(format!(
                "ratings_per_user {} exceeds the {} available items",
                self.ratings_per_user,
                self.num_items()
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be a finite non-negative number".into()));
        }
        let fractions = [self.split_train, self.split_valid, self.split_test];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("split fractions must lie in [0, 1]".into()));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
        }
        if self.days < 1 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        Ok(())
    }

    pub fn artist_id(&self, artist: usize) -> ItemId {
        artist as ItemId
    }

    pub fn album_id(&self, album: usize) -> ItemId {
        (self.artists + album) as ItemId
    }

    pub fn track_id(&self, track: usize) -> ItemId {
        (self.artists + self.num_albums() + track) as ItemId
    }
}

/// Ground-truth parameters the ratings were drawn from.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub dim: usize,
    pub mu: f64,
    pub user_bias: Vec<f64>,
    pub user_factor: Vec<f64>,
    /// Bias slope in score units per day (zero without drift).
    pub user_slope: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub item_factor: Vec<f64>,
    /// Change of the item bias across the whole time range (zero without drift).
    pub item_trend: Vec<f64>,
    /// Indexed by artist number (`0..artists`), which is also the artist's item id.
    pub artist_bias: Vec<f64>,
    pub artist_factor: Vec<f64>,
}

impl PlantedModel {
    pub fn item_factor(&self, i: ItemId) -> &[f64] {
        let i = i as usize;
        &self.item_factor[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_factor(&self, u: usize) -> &[f64] {
        &self.user_factor[u * self.dim..(u + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub taxonomy: TaxonomyGraph,
    pub planted: PlantedModel,
}

impl SyntheticData {
    /// Writes `train.tsv`, `validation.tsv`, `test.tsv`, `taxonomy.txt`, and
    /// `manifest.txt` (the resolved config plus record counts) into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>, config: &SynthConfig) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_ratings(dir.join("train.tsv"), &self.train)?;
        write_ratings(dir.join("validation.tsv"), &self.validation)?;
        write_ratings(dir.join("test.tsv"), &self.test)?;
        write_taxonomy(dir.join("taxonomy.txt"), &self.taxonomy)?;
        let mut manifest = config.to_key_values();
        manifest.set("num_items", config.num_items());
        manifest.set("records_train", self.train.len());
        manifest.set("records_validation", self.validation.len());
        manifest.set("records_test", self.test.len());
        let path = dir.join("manifest.txt");
        std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("finite sd");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Draws the datasets and taxonomy for `config`; a pure function of its input.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let n_items = config.num_items();
    let n_albums = config.num_albums();
    let factor_sd = INTERACTION_SD / (dim as f64).sqrt();

    // Taxonomy.
    let mut builder = TaxonomyBuilder::new();
    let mut artist_genres = Vec::with_capacity(config.artists);
    for a in 0..config.artists {
        let mut genres = vec![rng.random_range(0..GENRE_POOL)];
        if rng.random_bool(0.5) {
            let g = rng.random_range(0..GENRE_POOL);
            if g != genres[0] {
                genres.push(g);
            }
        }
        builder.artist(config.artist_id(a), genres.clone());
        artist_genres.push(genres);
    }
    for al in 0..n_albums {
        let a = al / config.albums_per_artist;
        builder.album(config.album_id(al), Some(config.artist_id(a)), artist_genres[a].clone());
    }
    for t in 0..config.num_tracks() {
        let al = t / config.tracks_per_album;
        let a = al / config.albums_per_artist;
        builder.track(
            config.track_id(t),
            Some(config.album_id(al)),
            Some(config.artist_id(a)),
            artist_genres[a].clone(),
        );
    }
    let taxonomy = builder.build(LinkPolicy::Strict)?;

    // Planted parameters.
    let user_bias = gaussian_vec(&mut rng, config.users, USER_BIAS_SD);
    let user_factor = gaussian_vec(&mut rng, config.users * dim, 1.0);
    let item_bias = gaussian_vec(&mut rng, n_items, ITEM_BIAS_SD);
    let artist_bias = gaussian_vec(&mut rng, config.artists, ARTIST_BIAS_SD);
    let artist_factor = gaussian_vec(&mut rng, config.artists * dim, ARTIST_INTERACTION_SD / (dim as f64).sqrt());
    let mut item_factor = gaussian_vec(&mut rng, n_items * dim, factor_sd);
    if config.coherent_taxonomy {
        let spread = COHERENCE_SPREAD;
        for al in 0..n_albums {
            let parent = config.artist_id(al / config.albums_per_artist) as usize;
            let child = config.album_id(al) as usize;
            for k in 0..dim {
                item_factor[child * dim + k] = item_factor[parent * dim + k] + spread * item_factor[child * dim + k];
            }
        }
        for t in 0..config.num_tracks() {
            let parent = config.album_id(t / config.tracks_per_album) as usize;
            let child = config.track_id(t) as usize;
            for k in 0..dim {
                item_factor[child * dim + k] = item_factor[parent * dim + k] + spread * item_factor[child * dim + k];
            }
        }
    }
    let (user_slope, item_trend) = if config.drift {
        (
            gaussian_vec(&mut rng, config.users, USER_SLOPE_SD),
            gaussian_vec(&mut rng, n_items, ITEM_TREND_SD),
        )
    } else {
        (vec![0.0; config.users], vec![0.0; n_items])
    };
    let planted = PlantedModel {
        dim,
        mu: GLOBAL_MEAN,
        user_bias,
        user_factor,
        user_slope,
        item_bias,
        item_factor,
        item_trend,
        artist_bias,
        artist_factor,
    };

    // Artist popularity: Zipf-like weights over a random artist order.
    let mut order: Vec<usize> = (0..config.artists).collect();
    order.shuffle(&mut rng);
    let mut popularity = vec![0.0; config.artists];
    for (rank, &a) in order.iter().enumerate() {
        popularity[a] = 1.0 / (rank as f64 + 1.0).powf(0.8);
    }
    let pop_total: f64 = popularity.iter().sum();
    let mut pop_cdf = Vec::with_capacity(config.artists);
    let mut acc = 0.0;
    for p in &popularity {
        acc += p / pop_total;
        pop_cdf.push(acc);
    }
    let draw_artist = |rng: &mut ChaCha8Rng| -> usize {
        let x: f64 = rng.random();
        pop_cdf.partition_point(|&c| c < x).min(config.artists - 1)
    };

    let scale = ScoreScale::default();
    let noise = Normal::new(0.0, config.noise).expect("validated noise");
    let session = Normal::new(0.0, SESSION_SD).expect("constant sd");
    let n = config.ratings_per_user;
    let n_valid = (n as f64 * config.split_valid).round() as usize;
    let n_test = ((n as f64 * config.split_test).round() as usize).min(n - n_valid.min(n));
    let n_valid = n_valid.min(n - n_test);
    let n_train = n - n_valid - n_test;

    let mut train = Vec::with_capacity(config.users * n_train);
    let mut valid = Vec::with_capacity(config.users * n_valid);
    let mut test = Vec::with_capacity(config.users * n_test);
    let mut rated = vec![u32::MAX; n_items];
    let mut items = Vec::with_capacity(n);

    for u in 0..config.users {
        let n_fav = (n / 8).clamp(2, 6).min(config.artists);
        let mut favourites = Vec::with_capacity(n_fav);
        while favourites.len() < n_fav {
            let a = draw_artist(&mut rng);
            if !favourites.contains(&a) {
                favourites.push(a);
            }
        }

        items.clear();
        let mut attempts = 0;
        while items.len() < n {
            attempts += 1;
            let item = if attempts > 50 * n {
                rng.random_range(0..n_items) as ItemId
            } else {
                let a = if rng.random_bool(FAVOURITE_SHARE) {
                    favourites[rng.random_range(0..favourites.len())]
                } else {
                    draw_artist(&mut rng)
                };
                let x: f64 = rng.random();
                if x < 0.1 {
                    config.artist_id(a)
                } else if x < 0.3 {
                    config.album_id(a * config.albums_per_artist + rng.random_range(0..config.albums_per_artist))
                } else {
                    let al = a * config.albums_per_artist + rng.random_range(0..config.albums_per_artist);
                    config.track_id(al * config.tracks_per_album + rng.random_range(0..config.tracks_per_album))
                }
            };
            if rated[item as usize] != u as u32 {
                rated[item as usize] = u as u32;
                items.push(item);
            }
        }

        // Activity window and sessions.
        let span = rng.random_range(60..=360).min(config.days);
        let start = rng.random_range(0..=(config.days - span));
        let n_sessions = n.div_ceil(5).max(1);
        let sessions: Vec<(Timestamp, f64)> = (0..n_sessions)
            .map(|_| {
                let day = start + rng.random_range(0..span);
                let offset = if config.drift { session.sample(&mut rng) } else { 0.0 };
                (day, offset)
            })
            .collect();
        let centre = start as f64 + span as f64 / 2.0;

        let mut user_records: Vec<RatingRecord> = items
            .iter()
            .map(|&i| {
                let (day, offset) = sessions[rng.random_range(0..n_sessions)];
                let artist = taxonomy.artist_of_opt(i).expect("generated items have artists") as usize;
                let iu = i as usize;
                let mut score = planted.mu + planted.user_bias[u] + planted.item_bias[iu] + planted.artist_bias[artist];
                let pu = planted.user_factor(u);
                let qi = planted.item_factor(i);
                let qa = &planted.artist_factor[artist * dim..(artist + 1) * dim];
                score += (0..dim).map(|k| (qi[k] + qa[k]) * pu[k]).sum::<f64>();
                if config.drift {
                    score += planted.user_slope[u] * (day as f64 - centre);
                    score += planted.item_trend[iu] * (day as f64 / config.days as f64 - 0.5);
                    score += offset;
                }
                score += noise.sample(&mut rng);
                RatingRecord::new(u as u32, i, scale.clip(score.round()), day)
            })
            .collect();
        user_records.sort_by_key(|r| r.time);
        test.extend_from_slice(&user_records[n - n_test..]);
        valid.extend_from_slice(&user_records[n_train..n - n_test]);
        train.extend_from_slice(&user_records[..n_train]);
    }

    let build = |records, split| Dataset::with_dims(records, split, scale, config.users, n_items);
    Ok(SyntheticData {
        train: build(train, Split::Train)?,
        validation: build(valid, Split::Validation)?,
        test: build(test, Split::Test)?,
        taxonomy,
        planted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            users: 10,
            artists: 4,
            ratings_per_user: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_follow_split_fractions() {
        let d = generate_synthetic(&small()).unwrap();
        assert_eq!(d.train.len(), 160);
        assert_eq!(d.validation.len(), 20);
        assert_eq!(d.test.len(), 20);
    }

    #[test]
    fn splits_are_disjoint_and_chronological() {
        let d = generate_synthetic(&small()).unwrap();
        for u in 0..10 {
            let tr: Vec<_> = d.train.user_records(u).collect();
            let va: Vec<_> = d.validation.user_records(u).collect();
            let te: Vec<_> = d.test.user_records(u).collect();
            let last_train = tr.iter().map(|r| r.time).max().unwrap();
            assert!(va.iter().all(|r| r.time >= last_train));
            let mut items: Vec<_> = tr.iter().chain(&va).chain(&te).map(|r| r.item).collect();
            items.sort_unstable();
            items.dedup();
            assert_eq!(items.len(), 20);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small();
        c.users = 0;
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
        let mut c = small();
        c.split_test = 0.3;
        assert!(matches!(generate_synthetic(&c), Err(Error::Config(_))));
        assert!(SynthConfig::parse("bogus=1").is_err());
    }

    #[test]
    fn config_text_round_trips() {
        let c = SynthConfig {
            noise: 7.5,
            drift: false,
            ..small()
        };
        assert_eq!(SynthConfig::from_key_values(&c.to_key_values()).unwrap(), c);
    }
}
