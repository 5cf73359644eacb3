//! Command-line front end for the trading pipeline.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crows_cli::checkpoint::{load_bundle, save_bundle, AgentBundle};
use crows_cli::config::AppConfig;
use crows_cli::csv_data::{
    build_episodes, load_episodes, read_grouped_bars, write_bar_rows, write_episode_cache,
};
use crows_cli::error::{CliError, Result};
use crows_cli::harness::{
    self, plan_subsets, prepare_for_bundle, render_csv, render_text, run_grid, run_subset,
    EpisodeStore,
};
use crows_cli::pattern_io::{read_patterns, write_importance, write_patterns};
use crows_cli::synth::generate;
use crows_cli::trace::{write_trace, write_training_log};

use crows_core::forest::{build_dataset_from_columns, fit_forest, rank_and_select};
use crows_core::miner::{build_fact_base, materialize, mine};
use crows_core::patterns::append_pattern_flags;

#[derive(Parser)]
#[command(
    name = "crows",
    version,
    about = "Intraday trading experiments: pattern mining, feature ranking, \
             and recurrent PPO agents evaluated on held-out days"
)]
struct Cli {
    /// TOML configuration file; every setting has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a bar CSV into a JSON episode cache.
    Ingest {
        /// Bar CSV (timestamp,symbol,open,high,low,close,volume).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Episode cache to write (.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic bar CSV from the [synth] config section.
    Synth {
        /// Bar CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        symbols: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        bars_per_day: Option<usize>,
    },
    /// Mine run patterns from every provided episode.
    Mine {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Pattern CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank feature columns by random-forest importance.
    Rank {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Mined-pattern CSV whose flag columns join the ranking.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Also rank the two hand-crafted candlestick flags.
        #[arg(long)]
        handcrafted: bool,
        /// Importance CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train an agent on every day but the last, test on the last.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Agent mode: vanilla or rl2.
        #[arg(long, default_value = "vanilla")]
        mode: String,
        /// Feature set: base, +handcrafted, +learned, or +both.
        #[arg(long, default_value = "base")]
        feature_set: String,
        /// Checkpoint file to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-iteration training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Greedily evaluate a checkpointed agent on episodes.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint written by `train`.
        #[arg(long)]
        agent: PathBuf,
        /// Optional per-trade trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Render a results CSV as an aligned text table.
    Report {
        /// Results CSV written by `run-grid`.
        #[arg(long)]
        results: PathBuf,
        /// Text file to write; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full evaluation grid; writes results.csv and report.txt.
    RunGrid {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { data, out } => ingest(&cfg, data.as_deref(), &out),
        Command::Synth {
            out,
            seed,
            symbols,
            days,
            bars_per_day,
        } => synth(&cfg, &out, seed, symbols, days, bars_per_day),
        Command::Mine { data, out, seed } => mine_cmd(&cfg, data.as_deref(), &out, seed),
        Command::Rank {
            data,
            patterns,
            handcrafted,
            out,
            seed,
        } => rank_cmd(&cfg, data.as_deref(), patterns.as_deref(), handcrafted, &out, seed),
        Command::Train {
            data,
            mode,
            feature_set,
            out,
            log,
            seed,
        } => train_cmd(&cfg, data.as_deref(), &mode, &feature_set, &out, log.as_deref(), seed),
        Command::Evaluate { data, agent, trace } => {
            evaluate_cmd(&cfg, data.as_deref(), &agent, trace.as_deref())
        }
        Command::Report { results, out } => report_cmd(&results, out.as_deref()),
        Command::RunGrid { data, out_dir } => run_grid_cmd(&cfg, data.as_deref(), &out_dir),
    }
}

fn ingest(cfg: &AppConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    let path = cfg.resolve_data(data)?;
    let groups = read_grouped_bars(&path)?;
    let episodes = build_episodes(&groups)?;
    write_episode_cache(out, &episodes)?;
    println!(
        "ingested {} episodes ({} bars) into {}",
        episodes.len(),
        groups.iter().map(|g| g.bars.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn synth(
    cfg: &AppConfig,
    out: &Path,
    seed: Option<u64>,
    symbols: Option<usize>,
    days: Option<usize>,
    bars_per_day: Option<usize>,
) -> Result<()> {
    let mut spec = cfg.synth.clone().unwrap_or_default();
    if let Some(v) = seed {
        spec.seed = v;
    }
    if let Some(v) = symbols {
        spec.symbols = v;
    }
    if let Some(v) = days {
        spec.days = v;
    }
    if let Some(v) = bars_per_day {
        spec.bars_per_day = v;
    }
    let output = generate(&spec)?;
    write_bar_rows(out, &output.rows)?;
    println!(
        "wrote {} bars ({} symbols x {} days) to {}",
        output.rows.len(),
        spec.symbols,
        spec.days,
        out.display()
    );
    if output.planted_windows > 0 {
        println!("planted pattern windows: {}", output.planted_windows);
    }
    Ok(())
}

fn mine_cmd(cfg: &AppConfig, data: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let path = cfg.resolve_data(data)?;
    let episodes = load_episodes(&path)?;
    let fb = build_fact_base(&episodes)?;
    let patterns = mine(&fb, &cfg.miner.miner_config(), seed)?;
    write_patterns(out, &patterns)?;
    println!(
        "mined {} patterns from {} episodes into {}",
        patterns.len(),
        episodes.len(),
        out.display()
    );
    Ok(())
}

fn rank_cmd(
    cfg: &AppConfig,
    data: Option<&Path>,
    patterns: Option<&Path>,
    handcrafted: bool,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let path = cfg.resolve_data(data)?;
    let mut episodes = load_episodes(&path)?;
    let mined = match patterns {
        Some(p) => read_patterns(p)?,
        None => Vec::new(),
    };
    for ep in &mut episodes {
        if handcrafted {
            append_pattern_flags(ep)?;
        }
        materialize(&mined, ep)?;
    }
    let names: Vec<String> = episodes[0].column_names().map(String::from).collect();
    let dataset = build_dataset_from_columns(&episodes, &names, &cfg.env.exit_rule())?;
    let forest = fit_forest(&dataset, &cfg.ranker.forest_hyper(), seed)?;
    let scores = forest.importances();
    let order = rank_and_select(&forest, names.len());
    let ranked: Vec<(String, f64)> = order
        .indices
        .iter()
        .map(|&i| (names[i].clone(), scores[i]))
        .collect();
    write_importance(out, &ranked)?;
    println!(
        "ranked {} columns over {} rows into {}",
        names.len(),
        dataset.n_rows(),
        out.display()
    );
    Ok(())
}

fn train_cmd(
    cfg: &AppConfig,
    data: Option<&Path>,
    mode: &str,
    feature_set: &str,
    out: &Path,
    log: Option<&Path>,
    seed: u64,
) -> Result<()> {
    let mode = harness::parse_mode(mode)?;
    let feature_set = harness::parse_feature_set(feature_set)?;
    let path = cfg.resolve_data(data)?;
    let store = EpisodeStore::new(load_episodes(&path)?)?;
    let n = store.symbols().len();
    let m = store.dates().len().saturating_sub(1);
    if m == 0 {
        return Err(CliError::data(
            "training needs at least two days: m training days plus a test day",
        ));
    }
    let subsets = plan_subsets(&store, n, m, 1)?;
    let settings = harness::settings_from_config(cfg);
    let art = run_subset(&settings, mode, feature_set, &store, &subsets[0], seed)?;
    save_bundle(
        out,
        &AgentBundle {
            agent: art.agent,
            columns: art.columns,
            patterns: art.patterns,
        },
    )?;
    if let Some(log_path) = log {
        write_training_log(log_path, &art.training_log)?;
    }
    println!(
        "trained {} / {} on {n} symbols x {m} days; checkpoint {}",
        mode.name(),
        feature_set.label(),
        out.display()
    );
    println!(
        "test day {}: return {:.4}%",
        subsets[0].test_day, art.test_return_pct
    );
    Ok(())
}

fn evaluate_cmd(
    cfg: &AppConfig,
    data: Option<&Path>,
    agent: &Path,
    trace: Option<&Path>,
) -> Result<()> {
    let bundle = load_bundle(agent)?;
    let path = cfg.resolve_data(data)?;
    let episodes = load_episodes(&path)?;
    let prepared = prepare_for_bundle(&episodes, &bundle)?;
    let evaluation = crows_core::trainer::evaluate(
        &bundle.agent,
        &prepared,
        &cfg.env.exit_rule(),
        cfg.env.cost_frac,
    )?;
    for (ep, r) in prepared.iter().zip(&evaluation.episode_returns) {
        println!("{} {}: {:.4}%", ep.symbol, ep.date, r * 100.0);
    }
    let total: f64 = evaluation.episode_returns.iter().sum();
    println!("total: {:.4}%", total * 100.0);
    if let Some(trace_path) = trace {
        write_trace(trace_path, &prepared, &evaluation)?;
        println!("trace written to {}", trace_path.display());
    }
    Ok(())
}

fn report_cmd(results: &Path, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(results)
        .map_err(|e| CliError::data(format!("{}: {e}", results.display())))?;
    let table = harness::parse_results_csv(&text)?;
    let rendered = render_text(&table);
    match out {
        Some(p) => {
            std::fs::write(p, &rendered)?;
            println!("report written to {}", p.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn run_grid_cmd(cfg: &AppConfig, data: Option<&Path>, out_dir: &Path) -> Result<()> {
    let path = cfg.resolve_data(data)?;
    let store = EpisodeStore::new(load_episodes(&path)?)?;
    let settings = harness::settings_from_config(cfg);
    let grid = harness::grid_from_config(cfg)?;
    let table = run_grid(&settings, &grid, &store)?;
    std::fs::create_dir_all(out_dir)?;
    let results_path = out_dir.join("results.csv");
    let report_path = out_dir.join("report.txt");
    std::fs::write(&results_path, render_csv(&table))?;
    let rendered = render_text(&table);
    std::fs::write(&report_path, &rendered)?;
    print!("{rendered}");
    println!(
        "results: {} report: {}",
        results_path.display(),
        report_path.display()
    );
    Ok(())
}
