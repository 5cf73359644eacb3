//! Temporary probe for tuning the regime-flip experiment. Not part of
//! the acceptance gate.

use std::time::Instant;

use crows_core::agent::Mode;
use crows_core::env::ExitRule;
use crows_core::episode::Bar;
use crows_core::forest::ForestHyper;
use crows_core::indicators::build_episode;
use crows_core::miner::MinerConfig;
use crows_core::rng::{self, gaussian};
use crows_core::trainer::PpoHyper;

use crows_cli::harness::{
    run_experiment, EpisodeStore, ExperimentConfig, FeatureSet, PipelineSettings,
};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn settings(hidden_dim: usize, iterations: usize) -> PipelineSettings {
    PipelineSettings {
        rule: ExitRule::default(),
        cost_frac: 0.0,
        miner: MinerConfig {
            support_threshold: 0.05,
            max_patterns: 10_000,
            min_length: 3,
            max_length: 3,
            budget: None,
        },
        forest: ForestHyper {
            n_trees: 12,
            max_depth: 4,
            min_leaf: 40,
            feature_subsample: None,
            bootstrap: true,
        },
        top_k: Some(24),
        hyper: PpoHyper {
            iterations,
            trials_per_iter: 12,
            tasks_per_trial: 2,
            ..PpoHyper::default()
        },
        hidden_dim,
    }
}

fn cell(
    store: &EpisodeStore,
    s: &PipelineSettings,
    mode: Mode,
    n: usize,
    m: usize,
    seeds: usize,
    seed: u64,
) -> f64 {
    let cfg = ExperimentConfig {
        settings: s.clone(),
        mode,
        feature_set: FeatureSet::Base,
        n_symbols: n,
        m_days: m,
        subsets: 1,
        seeds,
        seed,
    };
    mean(&run_experiment(&cfg, store).unwrap().returns)
}

// --- alternating momentum / mean-revert market -----------------------

const FM_BARS: usize = 50;
const FM_KAPPA: f64 = 0.45;
const FM_SIGMA: f64 = 0.004;

fn flip_day_closes(base: f64, kappa: f64, sigma: f64, r: &mut rng::Rng) -> Vec<f64> {
    let eta = sigma * (1.0 - kappa * kappa).sqrt();
    let mut ret = sigma * gaussian(r);
    let mut level = base;
    let mut closes = Vec::with_capacity(FM_BARS);
    for _ in 0..FM_BARS {
        level *= 1.0 + ret;
        closes.push(level);
        ret = kappa * ret + eta * gaussian(r);
    }
    closes
}

fn bars_from_closes(closes: &[f64], r: &mut rng::Rng) -> Vec<Bar> {
    (0..closes.len())
        .map(|t| {
            let close = closes[t];
            let open = if t == 0 {
                close
            } else {
                closes[t - 1] * (1.0 + 0.0002 * gaussian(r))
            };
            let hi = open.max(close);
            let lo = open.min(close);
            Bar {
                open,
                high: hi * (1.0 + 0.0002 * gaussian(r).abs()),
                low: lo * (1.0 - 0.0002 * gaussian(r).abs()),
                close,
                volume: 1.0e4 * (1.0 + 0.3 * gaussian(r).abs()),
            }
        })
        .collect()
}

fn flip_market_store(
    symbols: usize,
    days: usize,
    ratio: f64,
    vol_noise: f64,
    seed: u64,
) -> EpisodeStore {
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
    let mut episodes = Vec::new();
    for s in 0..symbols {
        let symbol_seed = rng::derive_seed(seed, s as u64);
        for d in 0..days {
            let mut r = rng::stream(symbol_seed, d as u64);
            let level0 = 100.0 * (1.0 + 0.1 * s as f64);
            let (kappa, sigma) = if d % 2 == 0 {
                (FM_KAPPA, FM_SIGMA)
            } else {
                (-FM_KAPPA, FM_SIGMA * ratio)
            };
            let day_vol = (vol_noise * gaussian(&mut r).clamp(-2.0, 2.0)).exp();
            let closes = flip_day_closes(level0, kappa, sigma * day_vol, &mut r);
            let bars = bars_from_closes(&closes, &mut r);
            let date = (start + chrono::Duration::days(d as i64)).to_string();
            episodes.push(build_episode(&format!("F{s:02}"), &date, &bars).unwrap());
        }
    }
    EpisodeStore::new(episodes).unwrap()
}

/// Prints how visible the regime is to the feature set: mean sigma_10
/// and mean one-bar move per day parity.
fn leak_report(store: &EpisodeStore) {
    let mut by_parity: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
    for symbol in store.symbols() {
        for date in store.dates() {
            let ep = store.get(symbol, date).unwrap();
            let day = chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap();
            let parity = ((day - start).num_days() as usize) % 2;
            by_parity[parity]
                .0
                .extend_from_slice(ep.column("sigma_10").unwrap());
            let close = ep.column("close").unwrap();
            for t in 1..close.len() {
                by_parity[parity].1.push((close[t] - close[t - 1]).abs());
            }
        }
    }
    for (p, name) in [(0usize, "momentum"), (1, "revert")] {
        let m0 = mean(&by_parity[p].0);
        let sd = (by_parity[p].0.iter().map(|v| (v - m0) * (v - m0)).sum::<f64>()
            / by_parity[p].0.len() as f64)
            .sqrt();
        println!(
            "  {name:<8} sigma_10 {m0:.5} +- {sd:.5}  mean |dclose| {:.5}",
            mean(&by_parity[p].1)
        );
    }
}

/// Rolls the fade rule (buy after a down close, sell after an up close)
/// through every episode and reports per-parity trades and returns. The
/// momentum rule is its mirror image, so balance means the fade EVs on
/// the two parities cancel.
fn fade_rule_report(store: &EpisodeStore) -> (f64, f64) {
    use crows_core::env::{Action, TradingEnv};
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
    let mut ev = [0.0f64; 2];
    let mut trades = [0usize; 2];
    let mut eps = [0usize; 2];
    for symbol in store.symbols() {
        for date in store.dates() {
            let ep = store.get(symbol, date).unwrap();
            let day = chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap();
            let parity = ((day - start).num_days() as usize) % 2;
            let close = ep.column("close").unwrap();
            let mut env = TradingEnv::new(ep, ExitRule::default()).unwrap();
            while !env.is_done() {
                let t = env.t();
                let action = if t == 0 || close[t] < close[t - 1] {
                    Action::Buy
                } else {
                    Action::Sell
                };
                let tr = env.step(action).unwrap();
                ev[parity] += tr.reward;
                trades[parity] += 1;
            }
            eps[parity] += 1;
        }
    }
    let per_ep = [ev[0] / eps[0] as f64, ev[1] / eps[1] as f64];
    println!(
        "    fade momentum {:7.4}/ep ({:.1} trades)  revert {:7.4}/ep ({:.1} trades)",
        per_ep[0],
        trades[0] as f64 / eps[0] as f64,
        per_ep[1],
        trades[1] as f64 / eps[1] as f64,
    );
    (per_ep[0], per_ep[1])
}

#[test]
#[ignore]
fn probe_ratio_sweep() {
    for ratio in [1.3, 1.35, 1.4, 1.45, 1.5] {
        println!("  ratio {ratio} vol_noise 0.35");
        let store = flip_market_store(6, 16, ratio, 0.35, 0xA11F);
        fade_rule_report(&store);
        leak_report(&store);
    }
}

fn probe_flip(label: &str, ratio: f64, vol_noise: f64, iterations: usize) {
    let store = flip_market_store(6, 16, ratio, vol_noise, 0xA11F);
    leak_report(&store);
    fade_rule_report(&store);
    let s = settings(32, iterations);
    for (ri, &m) in [5usize, 10].iter().enumerate() {
        for (ci, &n) in [1usize, 3].iter().enumerate() {
            let t0 = Instant::now();
            let seed = rng::derive_seed(rng::derive_seed(0x661D, ri as u64), ci as u64);
            let rl2 = cell(&store, &s, Mode::Rl2, n, m, 6, seed);
            let van = cell(&store, &s, Mode::Vanilla, n, m, 6, seed);
            println!(
                "  {label} m={m:<2} n={n}: rl2 {rl2:8.3}  vanilla {van:8.3}  ({:.0}s)",
                t0.elapsed().as_secs_f64()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_regimes() {
    probe_flip("F2", 1.1, 0.35, 50);
}
