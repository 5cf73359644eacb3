//! Experiment orchestration: train on n symbols for m days, evaluate
//! greedily on day m+1, average over non-overlapping subsets, and render
//! the resulting grid.
//!
//! Every fitting stage (mining, ranking, training) sees training days
//! only; test-day columns are materialized from the frozen patterns,
//! which is causal and therefore legal. Per-run seeds are derived by
//! splitmix chains from the master seed, so results do not depend on
//! execution order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crows_core::agent::{Agent, AgentConfig, Mode};
use crows_core::env::ExitRule;
use crows_core::episode::Episode;
use crows_core::forest::{build_dataset_from_columns, fit_forest, rank_and_select, ForestHyper};
use crows_core::miner::{build_fact_base, materialize, mine, MinedPattern, MinerConfig};
use crows_core::patterns::{append_pattern_flags, FOUR_HORSEMEN, THREE_CROWS};
use crows_core::rng::derive_seed;
use crows_core::trainer::{evaluate, train, Evaluation, IterationStats, PpoHyper};

use crate::config::AppConfig;
use crate::error::{CliError, Result};

/// Seed-stream labels, one per pipeline stage.
const MINE_STREAM: u64 = 1;
const RANK_STREAM: u64 = 2;
const AGENT_STREAM: u64 = 3;
const TRAIN_STREAM: u64 = 4;

pub fn parse_mode(text: &str) -> Result<Mode> {
    match text {
        "vanilla" => Ok(Mode::Vanilla),
        "rl2" => Ok(Mode::Rl2),
        other => Err(CliError::config(format!(
            "unknown agent mode {other:?} (expected \"vanilla\" or \"rl2\")"
        ))),
    }
}

/// Which feature columns the agent observes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSet {
    /// The 20 technical indicator columns.
    Base,
    /// Base plus the two hand-crafted candlestick flags.
    Handcrafted,
    /// Base plus flags for patterns mined from the training days.
    Learned,
    /// Base plus hand-crafted and mined flags.
    Both,
}

impl FeatureSet {
    pub fn label(self) -> &'static str {
        match self {
            FeatureSet::Base => "base",
            FeatureSet::Handcrafted => "+handcrafted",
            FeatureSet::Learned => "+learned",
            FeatureSet::Both => "+both",
        }
    }

    pub fn uses_handcrafted(self) -> bool {
        matches!(self, FeatureSet::Handcrafted | FeatureSet::Both)
    }

    pub fn uses_learned(self) -> bool {
        matches!(self, FeatureSet::Learned | FeatureSet::Both)
    }
}

pub fn parse_feature_set(text: &str) -> Result<FeatureSet> {
    match text.trim_start_matches('+') {
        "base" => Ok(FeatureSet::Base),
        "handcrafted" => Ok(FeatureSet::Handcrafted),
        "learned" => Ok(FeatureSet::Learned),
        "both" => Ok(FeatureSet::Both),
        other => Err(CliError::config(format!(
            "unknown feature set {other:?} (expected base, +handcrafted, +learned, or +both)"
        ))),
    }
}

/// Pipeline knobs shared by every cell of a grid.
#[derive(Clone, Debug)]
pub struct PipelineSettings {
    pub rule: ExitRule,
    pub cost_frac: f64,
    pub miner: MinerConfig,
    pub forest: ForestHyper,
    /// Keep only the top-k ranked columns; `None` keeps all.
    pub top_k: Option<usize>,
    pub hyper: PpoHyper,
    pub hidden_dim: usize,
}

pub fn settings_from_config(cfg: &AppConfig) -> PipelineSettings {
    PipelineSettings {
        rule: cfg.env.exit_rule(),
        cost_frac: cfg.env.cost_frac,
        miner: cfg.miner.miner_config(),
        forest: cfg.ranker.forest_hyper(),
        top_k: cfg.ranker.top_k(),
        hyper: cfg.trainer.ppo_hyper(),
        hidden_dim: cfg.agent.hidden_dim,
    }
}

/// One grid cell: a full train-and-test protocol.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub settings: PipelineSettings,
    pub mode: Mode,
    pub feature_set: FeatureSet,
    pub n_symbols: usize,
    pub m_days: usize,
    pub subsets: usize,
    /// Independent repetitions; each reruns every subset under a fresh seed.
    pub seeds: usize,
    pub seed: u64,
}

/// The full evaluation grid.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub n_symbols: Vec<usize>,
    pub m_days: Vec<usize>,
    pub modes: Vec<Mode>,
    pub feature_sets: Vec<FeatureSet>,
    pub seeds_per_cell: usize,
    pub subsets: usize,
    pub seed: u64,
}

pub fn grid_from_config(cfg: &AppConfig) -> Result<GridSpec> {
    let g = &cfg.grid;
    Ok(GridSpec {
        n_symbols: g.n_symbols.clone(),
        m_days: g.m_days.clone(),
        modes: g.modes.iter().map(|m| parse_mode(m)).collect::<Result<_>>()?,
        feature_sets: g
            .feature_sets
            .iter()
            .map(|f| parse_feature_set(f))
            .collect::<Result<_>>()?,
        seeds_per_cell: g.seeds_per_cell,
        subsets: g.subsets,
        seed: g.seed,
    })
}

/// Episodes indexed by symbol and date, both kept in sorted order.
#[derive(Clone, Debug)]
pub struct EpisodeStore {
    map: BTreeMap<(String, String), Episode>,
    symbols: Vec<String>,
    dates: Vec<String>,
}

impl EpisodeStore {
    pub fn new(episodes: Vec<Episode>) -> Result<EpisodeStore> {
        let mut map = BTreeMap::new();
        for ep in episodes {
            let key = (ep.symbol.clone(), ep.date.clone());
            if map.contains_key(&key) {
                return Err(CliError::data(format!(
                    "duplicate episode for symbol {} on {}",
                    key.0, key.1
                )));
            }
            map.insert(key, ep);
        }
        let mut symbols: Vec<String> = map.keys().map(|(s, _)| s.clone()).collect();
        symbols.dedup();
        let mut dates: Vec<String> = map.keys().map(|(_, d)| d.clone()).collect();
        dates.sort();
        dates.dedup();
        Ok(EpisodeStore { map, symbols, dates })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn get(&self, symbol: &str, date: &str) -> Option<&Episode> {
        self.map.get(&(symbol.to_string(), date.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One subset: a symbol group with m training days and the day after.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subset {
    pub symbols: Vec<String>,
    pub train_days: Vec<String>,
    pub test_day: String,
}

impl Subset {
    /// The test day must come strictly after every training day.
    pub fn validate(&self) -> Result<()> {
        if self.symbols.is_empty() || self.train_days.is_empty() {
            return Err(CliError::config("subset needs >= 1 symbol and >= 1 training day"));
        }
        for d in &self.train_days {
            if *d >= self.test_day {
                return Err(CliError::config(format!(
                    "lookahead: test day {} is not after training day {d}",
                    self.test_day
                )));
            }
        }
        Ok(())
    }
}

/// Carves the store into pairwise non-overlapping subsets: symbol groups
/// of size `n_symbols` crossed with consecutive blocks of `m_days + 1`
/// dates. No (symbol, day) pair appears in two subsets.
pub fn plan_subsets(
    store: &EpisodeStore,
    n_symbols: usize,
    m_days: usize,
    want: usize,
) -> Result<Vec<Subset>> {
    if n_symbols == 0 || m_days == 0 || want == 0 {
        return Err(CliError::config(
            "subset planning needs n_symbols, m_days, and subset count >= 1",
        ));
    }
    let span = m_days + 1;
    let symbol_groups = store.symbols.len() / n_symbols;
    let day_blocks = store.dates.len() / span;
    let capacity = symbol_groups * day_blocks;
    if capacity < want {
        return Err(CliError::data(format!(
            "cannot form {want} non-overlapping subsets of {n_symbols} symbols x {span} days: \
             {} symbols and {} days provide only {capacity} \
             ({symbol_groups} symbol groups x {day_blocks} day blocks)",
            store.symbols.len(),
            store.dates.len(),
        )));
    }
    let mut out = Vec::with_capacity(want);
    'fill: for b in 0..day_blocks {
        for g in 0..symbol_groups {
            if out.len() == want {
                break 'fill;
            }
            let days = &store.dates[b * span..(b + 1) * span];
            let subset = Subset {
                symbols: store.symbols[g * n_symbols..(g + 1) * n_symbols].to_vec(),
                train_days: days[..m_days].to_vec(),
                test_day: days[m_days].clone(),
            };
            subset.validate()?;
            out.push(subset);
        }
    }
    Ok(out)
}

/// Adds flag columns to one episode: the hand-crafted candlestick flags
/// when requested, then one Boolean column per mined pattern. Both are
/// functions of the episode's own past bars, so applying them to a test
/// day leaks nothing.
pub fn add_flag_columns(
    episode: &mut Episode,
    handcrafted: bool,
    patterns: &[MinedPattern],
) -> Result<()> {
    if handcrafted {
        append_pattern_flags(episode)?;
    }
    materialize(patterns, episode)?;
    Ok(())
}

/// Rebuilds the observation columns a checkpointed agent was trained
/// with: hand-crafted flags if the checkpoint lists them, flags for the
/// checkpoint's mined patterns, then exactly the checkpoint's columns in
/// order. Columns already present (for example from an episode cache)
/// are left untouched.
pub fn prepare_for_bundle(
    episodes: &[Episode],
    bundle: &crate::checkpoint::AgentBundle,
) -> Result<Vec<Episode>> {
    let wants_handcrafted = bundle
        .columns
        .iter()
        .any(|c| c == THREE_CROWS || c == FOUR_HORSEMEN);
    episodes
        .iter()
        .map(|ep| {
            let mut ep = ep.clone();
            let has_handcrafted = ep.column_names().any(|c| c == THREE_CROWS);
            if wants_handcrafted && !has_handcrafted {
                append_pattern_flags(&mut ep)?;
            }
            let missing: Vec<MinedPattern> = bundle
                .patterns
                .iter()
                .filter(|p| {
                    let name = p.pattern.column_name();
                    !ep.column_names().any(|c| c == name)
                })
                .cloned()
                .collect();
            materialize(&missing, &mut ep)?;
            ep.select_columns(&bundle.columns)?;
            Ok(ep)
        })
        .collect()
}

/// Everything one subset run produces.
#[derive(Clone, Debug)]
pub struct SubsetArtifacts {
    /// Patterns mined from the training days (empty unless the feature
    /// set includes learned columns).
    pub patterns: Vec<MinedPattern>,
    /// Every candidate column with its importance score, best first.
    pub importance: Vec<(String, f64)>,
    /// Observation columns the agent saw, in rank order.
    pub columns: Vec<String>,
    pub training_log: Vec<IterationStats>,
    pub agent: Agent,
    /// Test episodes after column selection, aligned with the evaluation.
    pub test_episodes: Vec<Episode>,
    pub test_evaluation: Evaluation,
    /// Sum of test-day per-trade fractional returns, in percent.
    pub test_return_pct: f64,
}

/// Runs the full pipeline on one subset: mine and rank on the training
/// days, train the agent, then evaluate greedily on the held-out day.
pub fn run_subset(
    settings: &PipelineSettings,
    mode: Mode,
    feature_set: FeatureSet,
    store: &EpisodeStore,
    subset: &Subset,
    seed: u64,
) -> Result<SubsetArtifacts> {
    subset.validate()?;
    if settings.top_k == Some(0) {
        return Err(CliError::config("top_k must be >= 1 when set"));
    }
    let fetch = |symbol: &str, day: &str| -> Result<Episode> {
        store.get(symbol, day).cloned().ok_or_else(|| {
            CliError::data(format!("no bars for symbol {symbol} on {day}"))
        })
    };
    // Day-major order: episodes of one day are adjacent, giving the
    // trainer same-day trial groups.
    let mut train_eps = Vec::with_capacity(subset.train_days.len() * subset.symbols.len());
    for day in &subset.train_days {
        for symbol in &subset.symbols {
            train_eps.push(fetch(symbol, day)?);
        }
    }
    let mut test_eps = Vec::with_capacity(subset.symbols.len());
    for symbol in &subset.symbols {
        test_eps.push(fetch(symbol, &subset.test_day)?);
    }

    // Mine on the training days while they still hold base columns only.
    let patterns = if feature_set.uses_learned() {
        let fb = build_fact_base(&train_eps)?;
        mine(&fb, &settings.miner, derive_seed(seed, MINE_STREAM))?
    } else {
        Vec::new()
    };
    for ep in train_eps.iter_mut().chain(test_eps.iter_mut()) {
        add_flag_columns(ep, feature_set.uses_handcrafted(), &patterns)?;
    }

    // Rank every candidate column on the training days.
    let names: Vec<String> = train_eps[0].column_names().map(String::from).collect();
    let dataset = build_dataset_from_columns(&train_eps, &names, &settings.rule)?;
    let forest = fit_forest(&dataset, &settings.forest, derive_seed(seed, RANK_STREAM))?;
    let scores = forest.importances();
    let order = rank_and_select(&forest, names.len());
    let importance: Vec<(String, f64)> = order
        .indices
        .iter()
        .map(|&i| (names[i].clone(), scores[i]))
        .collect();
    let keep = settings.top_k.unwrap_or(names.len()).min(names.len());
    let columns: Vec<String> = importance[..keep].iter().map(|(n, _)| n.clone()).collect();
    for ep in train_eps.iter_mut().chain(test_eps.iter_mut()) {
        ep.select_columns(&columns)?;
    }

    let n = subset.symbols.len();
    let groups: Vec<Vec<usize>> = (0..subset.train_days.len())
        .map(|d| (d * n..(d + 1) * n).collect())
        .collect();
    let agent_config = AgentConfig {
        mode,
        feature_dim: columns.len(),
        hidden_dim: settings.hidden_dim,
    };
    let mut agent = Agent::new(agent_config, derive_seed(seed, AGENT_STREAM))?;
    let training_log = train(
        &mut agent,
        &train_eps,
        Some(&groups),
        &settings.rule,
        settings.cost_frac,
        &settings.hyper,
        derive_seed(seed, TRAIN_STREAM),
    )?;

    let test_evaluation = evaluate(&agent, &test_eps, &settings.rule, settings.cost_frac)?;
    let test_return_pct = test_evaluation.episode_returns.iter().sum::<f64>() * 100.0;
    Ok(SubsetArtifacts {
        patterns,
        importance,
        columns,
        training_log,
        agent,
        test_episodes: test_eps,
        test_evaluation,
        test_return_pct,
    })
}

/// Pooled test-day returns for one cell, one entry per (seed, subset).
#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub returns: Vec<f64>,
}

/// Runs every subset under every repetition seed and pools the returns.
pub fn run_experiment(cfg: &ExperimentConfig, store: &EpisodeStore) -> Result<CellOutcome> {
    if cfg.seeds == 0 {
        return Err(CliError::config("seeds must be >= 1"));
    }
    let subsets = plan_subsets(store, cfg.n_symbols, cfg.m_days, cfg.subsets)?;
    let mut returns = Vec::with_capacity(cfg.seeds * subsets.len());
    for rep in 0..cfg.seeds {
        let rep_seed = derive_seed(cfg.seed, rep as u64);
        for (si, subset) in subsets.iter().enumerate() {
            let run_seed = derive_seed(rep_seed, si as u64);
            let art = run_subset(
                &cfg.settings,
                cfg.mode,
                cfg.feature_set,
                store,
                subset,
                run_seed,
            )?;
            returns.push(art.test_return_pct);
        }
    }
    Ok(CellOutcome { returns })
}

/// Mean, standard error, and run count for one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellStats {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl CellStats {
    pub fn from_returns(returns: &[f64]) -> CellStats {
        let count = returns.len();
        let mean = returns.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        CellStats { mean, stderr, count }
    }
}

/// One mode-and-feature-set block of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TableBlock {
    pub label: String,
    /// `cells[row][col]` indexed by (m_days, n_symbols).
    pub cells: Vec<Vec<Option<CellStats>>>,
}

/// The rendered grid: rows are training-day counts, columns are symbol
/// counts, one block per mode-and-feature-set pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub m_days: Vec<usize>,
    pub n_symbols: Vec<usize>,
    pub blocks: Vec<TableBlock>,
}

/// Runs the whole grid. Blocks are ordered mode-major over the config's
/// mode and feature-set lists.
pub fn run_grid(
    settings: &PipelineSettings,
    grid: &GridSpec,
    store: &EpisodeStore,
) -> Result<ResultTable> {
    let mut blocks = Vec::new();
    let mut block_idx = 0u64;
    for &mode in &grid.modes {
        for &feature_set in &grid.feature_sets {
            let block_seed = derive_seed(grid.seed, block_idx);
            let mut cells = Vec::with_capacity(grid.m_days.len());
            for (ri, &m_days) in grid.m_days.iter().enumerate() {
                let row_seed = derive_seed(block_seed, ri as u64);
                let mut row = Vec::with_capacity(grid.n_symbols.len());
                for (ci, &n_symbols) in grid.n_symbols.iter().enumerate() {
                    let cfg = ExperimentConfig {
                        settings: settings.clone(),
                        mode,
                        feature_set,
                        n_symbols,
                        m_days,
                        subsets: grid.subsets,
                        seeds: grid.seeds_per_cell,
                        seed: derive_seed(row_seed, ci as u64),
                    };
                    let outcome = run_experiment(&cfg, store)?;
                    row.push(Some(CellStats::from_returns(&outcome.returns)));
                }
                cells.push(row);
            }
            blocks.push(TableBlock {
                label: format!("{} / {}", mode.name(), feature_set.label()),
                cells,
            });
            block_idx += 1;
        }
    }
    Ok(ResultTable {
        m_days: grid.m_days.clone(),
        n_symbols: grid.n_symbols.clone(),
        blocks,
    })
}

pub const RESULTS_HEADER: &str = "block,m_days,n_symbols,mean_return_pct,stderr,count";

/// Machine-readable grid, one row per filled cell.
pub fn render_csv(table: &ResultTable) -> String {
    let mut out = String::new();
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for block in &table.blocks {
        for (ri, m) in table.m_days.iter().enumerate() {
            for (ci, n) in table.n_symbols.iter().enumerate() {
                if let Some(cell) = &block.cells[ri][ci] {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        block.label, m, n, cell.mean, cell.stderr, cell.count
                    );
                }
            }
        }
    }
    out
}

/// Parses [`render_csv`] output back into a table. Axis values appear in
/// first-encounter order; missing cells stay empty.
pub fn parse_results_csv(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::data("empty results file"))?;
    if header != RESULTS_HEADER {
        return Err(CliError::data(format!(
            "expected results header {RESULTS_HEADER:?}, got {header:?}"
        )));
    }
    let mut m_days: Vec<usize> = Vec::new();
    let mut n_symbols: Vec<usize> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, usize, usize, CellStats)> = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::data(format!(
                "results row {}: expected 6 columns, got {}",
                no + 1,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            CliError::data(format!("results row {}: bad {what} {:?}", no + 1, fields))
        };
        let m: usize = fields[1].parse().map_err(|_| bad("m_days"))?;
        let n: usize = fields[2].parse().map_err(|_| bad("n_symbols"))?;
        let mean: f64 = fields[3].parse().map_err(|_| bad("mean"))?;
        let stderr: f64 = fields[4].parse().map_err(|_| bad("stderr"))?;
        let count: usize = fields[5].parse().map_err(|_| bad("count"))?;
        let bi = match labels.iter().position(|l| l == fields[0]) {
            Some(i) => i,
            None => {
                labels.push(fields[0].to_string());
                labels.len() - 1
            }
        };
        let ri = match m_days.iter().position(|&v| v == m) {
            Some(i) => i,
            None => {
                m_days.push(m);
                m_days.len() - 1
            }
        };
        let ci = match n_symbols.iter().position(|&v| v == n) {
            Some(i) => i,
            None => {
                n_symbols.push(n);
                n_symbols.len() - 1
            }
        };
        rows.push((bi, ri, ci, CellStats { mean, stderr, count }));
    }
    let mut blocks: Vec<TableBlock> = labels
        .into_iter()
        .map(|label| TableBlock {
            label,
            cells: vec![vec![None; n_symbols.len()]; m_days.len()],
        })
        .collect();
    for (bi, ri, ci, cell) in rows {
        blocks[bi].cells[ri][ci] = Some(cell);
    }
    Ok(ResultTable {
        m_days,
        n_symbols,
        blocks,
    })
}

/// Aligned text rendering: one block per mode-and-feature-set pair, rows
/// are training-day counts, columns are symbol counts, cells show
/// `mean (stderr)` in percent.
pub fn render_text(table: &ResultTable) -> String {
    const CELL: usize = 18;
    const LABEL: usize = 8;
    let mut out = String::new();
    for (bi, block) in table.blocks.iter().enumerate() {
        if bi > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "== {} ==", block.label);
        let _ = write!(out, "{:>LABEL$}", "days/sym");
        for n in &table.n_symbols {
            let _ = write!(out, "{:>CELL$}", n);
        }
        out.push('\n');
        for (ri, m) in table.m_days.iter().enumerate() {
            let _ = write!(out, "{:>LABEL$}", m);
            for ci in 0..table.n_symbols.len() {
                match &block.cells[ri][ci] {
                    Some(c) => {
                        let text = format!("{:.3} ({:.3})", c.mean, c.stderr);
                        let _ = write!(out, "{:>CELL$}", text);
                    }
                    None => {
                        let _ = write!(out, "{:>CELL$}", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}
