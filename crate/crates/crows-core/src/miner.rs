//! Run-pattern mining over episode features.
//!
//! The hypothesis space is the meta-rule family {up, down} x descriptor x
//! length: "the descriptor's values rise (fall) strictly over the last L
//! bars". Descriptors are the primary feature columns plus every ordered
//! pairwise difference between them. Search is seeded ILP-style: draw a
//! random (episode, bar) instance, enumerate every pattern that holds
//! there, and keep a candidate if its exact support over the whole corpus
//! clears the threshold. Mining stops at the pattern cap or when the
//! sampling budget runs out.
//!
//! Support counting is exact: one corpus pass per (descriptor, direction)
//! yields the counts for every length at once via the run-length
//! recurrence, and each candidate is decided at most once. Longer runs are
//! never more frequent than shorter ones (anti-monotone counts), but the
//! support *fraction* is not anti-monotone, because the eligible-bar
//! denominator shrinks with length; nothing here prunes on fractions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::rng;

/// What a pattern watches: a column, or the difference of two columns.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureDescriptor {
    Primary(String),
    Diff(String, String),
}

impl FeatureDescriptor {
    /// Stable textual name: the column itself, or `a-b` for differences.
    pub fn name(&self) -> String {
        match self {
            FeatureDescriptor::Primary(c) => c.clone(),
            FeatureDescriptor::Diff(a, b) => format!("{a}-{b}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// One run pattern; identity is the full triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pattern {
    pub direction: Direction,
    pub descriptor: FeatureDescriptor,
    pub length: usize,
}

impl Pattern {
    /// Feature-column name used when the pattern is materialized.
    pub fn column_name(&self) -> String {
        format!(
            "{}_{}_{}",
            self.direction.name(),
            self.descriptor.name(),
            self.length
        )
    }
}

/// A pattern together with its exact corpus support.
#[derive(Clone, Debug, PartialEq)]
pub struct MinedPattern {
    pub pattern: Pattern,
    pub support_count: usize,
    /// `support_count` over the bars where the pattern is evaluable
    /// (`t >= length - 1`).
    pub support_frac: f64,
}

/// Mining parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MinerConfig {
    /// Minimum support fraction; candidates below it are dropped.
    pub support_threshold: f64,
    /// Stop once this many patterns are kept.
    pub max_patterns: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Seed instances to draw; `None` sweeps every (episode, bar) once,
    /// which makes the search exhaustive.
    pub budget: Option<usize>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            support_threshold: 0.05,
            max_patterns: 10,
            min_length: 3,
            max_length: 6,
            budget: Some(10_000),
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.support_threshold > 0.0 && self.support_threshold <= 1.0) {
            return Err(Error::BadParameter {
                what: "support_threshold must be in (0, 1]",
            });
        }
        if self.max_patterns == 0 {
            return Err(Error::BadParameter {
                what: "max_patterns must be >= 1",
            });
        }
        if self.min_length < 2 {
            return Err(Error::BadParameter {
                what: "min_length must be >= 2",
            });
        }
        if self.min_length > self.max_length {
            return Err(Error::BadParameter {
                what: "min_length must not exceed max_length",
            });
        }
        Ok(())
    }
}

/// Indexed view of a training corpus: shared column schema plus value
/// lookup for primary and difference descriptors.
pub struct FactBase<'a> {
    episodes: &'a [Episode],
    names: Vec<String>,
}

/// Validates that all episodes share one column schema and wraps them.
pub fn build_fact_base(episodes: &[Episode]) -> Result<FactBase<'_>> {
    let names: Vec<String> = episodes
        .first()
        .map(|e| e.column_names().map(String::from).collect())
        .unwrap_or_default();
    for ep in episodes {
        let theirs: Vec<&str> = ep.column_names().collect();
        if theirs.len() != names.len()
            || theirs.iter().zip(names.iter()).any(|(a, b)| a != b)
        {
            return Err(Error::MissingColumn(String::from(
                "episodes disagree on feature columns",
            )));
        }
    }
    Ok(FactBase { episodes, names })
}

// Internal descriptor ids: 0..F are primaries in column order, then the
// F*(F-1) ordered pairs (a, b), a != b, in nested column order.
impl<'a> FactBase<'a> {
    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn episode_len(&self, e: usize) -> usize {
        self.episodes[e].len()
    }

    pub fn total_bars(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Bars at which a pattern of this length is evaluable.
    pub fn eligible_bars(&self, length: usize) -> usize {
        self.episodes
            .iter()
            .map(|e| e.len().saturating_sub(length - 1))
            .sum()
    }

    fn n_descriptors(&self) -> usize {
        let f = self.names.len();
        f + f * (f.saturating_sub(1))
    }

    fn descriptor_of(&self, id: usize) -> FeatureDescriptor {
        let f = self.names.len();
        if id < f {
            return FeatureDescriptor::Primary(self.names[id].clone());
        }
        let pair = id - f;
        let a = pair / (f - 1);
        let mut b = pair % (f - 1);
        if b >= a {
            b += 1;
        }
        FeatureDescriptor::Diff(self.names[a].clone(), self.names[b].clone())
    }

    /// The full descriptor universe in internal enumeration order.
    pub fn descriptors(&self) -> Vec<FeatureDescriptor> {
        (0..self.n_descriptors())
            .map(|id| self.descriptor_of(id))
            .collect()
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn(String::from(name)))
    }

    /// Inverse of [`FactBase::descriptor_of`].
    pub fn descriptor_id(&self, desc: &FeatureDescriptor) -> Result<usize> {
        let f = self.names.len();
        match desc {
            FeatureDescriptor::Primary(c) => self.column_index(c),
            FeatureDescriptor::Diff(a, b) => {
                let (ia, ib) = (self.column_index(a)?, self.column_index(b)?);
                if ia == ib {
                    return Err(Error::BadParameter {
                        what: "difference descriptor needs two distinct columns",
                    });
                }
                let off = if ib > ia { ib - 1 } else { ib };
                Ok(f + ia * (f - 1) + off)
            }
        }
    }

    /// Descriptor value at one bar.
    pub fn value(&self, desc: &FeatureDescriptor, episode: usize, t: usize) -> Result<f64> {
        let ep = &self.episodes[episode];
        Ok(match desc {
            FeatureDescriptor::Primary(c) => ep.column(c)?[t],
            FeatureDescriptor::Diff(a, b) => ep.column(a)?[t] - ep.column(b)?[t],
        })
    }

    // Value access by internal id, avoiding name lookups in hot loops.
    fn value_by_id(&self, id: usize, e: usize, t: usize) -> f64 {
        let f = self.names.len();
        let ep = &self.episodes[e];
        if id < f {
            return ep.columns()[id].data[t];
        }
        let pair = id - f;
        let a = pair / (f - 1);
        let mut b = pair % (f - 1);
        if b >= a {
            b += 1;
        }
        ep.columns()[a].data[t] - ep.columns()[b].data[t]
    }

    // Longest strict run in `dir` ending at (e, t), capped at `cap` steps.
    fn run_ending_at(&self, id: usize, dir: Direction, e: usize, t: usize, cap: usize) -> usize {
        let mut run = 0;
        while run < cap && t > run {
            let cur = self.value_by_id(id, e, t - run);
            let prev = self.value_by_id(id, e, t - run - 1);
            let step = match dir {
                Direction::Up => cur > prev,
                Direction::Down => cur < prev,
            };
            if !step {
                break;
            }
            run += 1;
        }
        run
    }

    // Exact support counts for every length in [min_length, max_length],
    // one corpus pass.
    fn count_supports(&self, id: usize, dir: Direction, cfg: &MinerConfig) -> Vec<usize> {
        let mut counts = vec![0usize; cfg.max_length - cfg.min_length + 1];
        for e in 0..self.episodes.len() {
            let len = self.episodes[e].len();
            let mut run = 0usize;
            for t in 1..len {
                let cur = self.value_by_id(id, e, t);
                let prev = self.value_by_id(id, e, t - 1);
                let step = match dir {
                    Direction::Up => cur > prev,
                    Direction::Down => cur < prev,
                };
                run = if step { run + 1 } else { 0 };
                let reach = run + 1;
                if reach >= cfg.min_length {
                    let top = reach.min(cfg.max_length);
                    for l in cfg.min_length..=top {
                        counts[l - cfg.min_length] += 1;
                    }
                }
            }
        }
        counts
    }
}

/// Whether the pattern's run ends at bar `t` of the episode. Out-of-range
/// `t` is a non-occurrence, not an error.
pub fn holds(pattern: &Pattern, episode: &Episode, t: usize) -> Result<bool> {
    let l = pattern.length;
    if t >= episode.len() || t + 1 < l {
        return Ok(false);
    }
    let value = |i: usize| -> Result<f64> {
        Ok(match &pattern.descriptor {
            FeatureDescriptor::Primary(c) => episode.column(c)?[i],
            FeatureDescriptor::Diff(a, b) => episode.column(a)?[i] - episode.column(b)?[i],
        })
    };
    for k in 0..l - 1 {
        let cur = value(t - k)?;
        let prev = value(t - k - 1)?;
        let step = match pattern.direction {
            Direction::Up => cur > prev,
            Direction::Down => cur < prev,
        };
        if !step {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Appends one 0.0/1.0 column per mined pattern, in list order.
pub fn materialize(patterns: &[MinedPattern], episode: &mut Episode) -> Result<()> {
    for mp in patterns {
        let col: Result<Vec<f64>> = (0..episode.len())
            .map(|t| holds(&mp.pattern, episode, t).map(|h| if h { 1.0 } else { 0.0 }))
            .collect();
        episode.push_column(mp.pattern.column_name(), col?)?;
    }
    Ok(())
}

/// Seeded search for frequent run patterns. Identical inputs (corpus,
/// config, seed) give an identical result list, order included.
pub fn mine(fb: &FactBase<'_>, cfg: &MinerConfig, seed: u64) -> Result<Vec<MinedPattern>> {
    cfg.validate()?;
    let total = fb.total_bars();
    if total == 0 {
        return Ok(Vec::new());
    }

    // Bar index -> (episode, t), for uniform seed draws over the corpus.
    let mut bounds = Vec::with_capacity(fb.n_episodes());
    let mut acc = 0usize;
    for e in 0..fb.n_episodes() {
        acc += fb.episode_len(e);
        bounds.push(acc);
    }
    let locate = |flat: usize| -> (usize, usize) {
        let e = bounds.partition_point(|&b| b <= flat);
        let start = if e == 0 { 0 } else { bounds[e - 1] };
        (e, flat - start)
    };

    let eligible: Vec<usize> = (cfg.min_length..=cfg.max_length)
        .map(|l| fb.eligible_bars(l))
        .collect();

    // (descriptor id, direction) -> exact counts per length; computed once.
    let mut counted: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    // (descriptor id, direction, length) -> kept?
    let mut decided: BTreeMap<(usize, u8, usize), bool> = BTreeMap::new();
    let mut kept: Vec<MinedPattern> = Vec::new();

    let mut draw = rng::stream(seed, 0x6d696e65);
    let n_seeds = cfg.budget.unwrap_or(total);
    'search: for i in 0..n_seeds {
        let flat = if cfg.budget.is_some() {
            draw.gen_range(0..total)
        } else {
            i
        };
        let (e, t) = locate(flat);
        for id in 0..fb.n_descriptors() {
            for dir in [Direction::Up, Direction::Down] {
                let run = fb.run_ending_at(id, dir, e, t, cfg.max_length - 1);
                let reach = (run + 1).min(cfg.max_length);
                if reach < cfg.min_length {
                    continue;
                }
                for l in cfg.min_length..=reach {
                    let key = (id, dir as u8, l);
                    if decided.contains_key(&key) {
                        continue;
                    }
                    let counts = counted
                        .entry((id, dir as u8))
                        .or_insert_with(|| fb.count_supports(id, dir, cfg));
                    let count = counts[l - cfg.min_length];
                    let denom = eligible[l - cfg.min_length];
                    let frac = if denom == 0 {
                        0.0
                    } else {
                        count as f64 / denom as f64
                    };
                    let keep = denom > 0 && frac >= cfg.support_threshold;
                    decided.insert(key, keep);
                    if keep {
                        kept.push(MinedPattern {
                            pattern: Pattern {
                                direction: dir,
                                descriptor: fb.descriptor_of(id),
                                length: l,
                            },
                            support_count: count,
                            support_frac: frac,
                        });
                        if kept.len() >= cfg.max_patterns {
                            break 'search;
                        }
                    }
                }
            }
        }
    }

    kept.sort_by(|a, b| {
        b.support_frac
            .partial_cmp(&a.support_frac)
            .expect("support fractions are finite")
            .then_with(|| a.pattern.descriptor.name().cmp(&b.pattern.descriptor.name()))
            .then_with(|| a.pattern.direction.cmp(&b.pattern.direction))
            .then_with(|| a.pattern.length.cmp(&b.pattern.length))
    });
    Ok(kept)
}
