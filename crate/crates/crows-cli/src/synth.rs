//! Synthetic minute-bar generator.
//!
//! Days are independent random walks in fractional returns, one of four
//! regimes: a fixed upward trend, a trend whose sign flips between days
//! (market-wide, all symbols share the day's sign), mean reversion toward
//! the day's opening level, and a zigzag whose bar-to-bar sign strictly
//! alternates. The zigzag background never produces two consecutive
//! down-closes, which makes planted down-runs the only source of such
//! windows and their mined support directly checkable against the
//! generator's own bookkeeping.
//!
//! A planted pattern is an up-tick, then `run_length - 1` strict down
//! steps, then a pop of `pop_frac` spread over `pop_bars` bars. The
//! terminal bar of the down-run is the predictive signal; a buy there
//! rides the pop. Plants are placed deterministically so that every
//! flagged window lands after the indicator warmup.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crows_core::episode::Bar;
use crows_core::indicators::WARMUP;
use crows_core::rng::{self, gaussian};

use crate::csv_data::BarRow;
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Constant positive drift every day.
    TrendUp,
    /// Trend whose sign alternates by day parity, identically across
    /// symbols: even days drift up, odd days drift down.
    DailyFlip,
    /// Pull toward the day's opening price.
    MeanRevert,
    /// Strictly alternating up/down bars.
    Zigzag,
}

/// A predictive run-pattern injected into the close path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Target fraction of eligible feature bars that end a planted run.
    pub rate: f64,
    pub run_length: usize,
    /// Total upward drift following the run.
    pub pop_frac: f64,
    /// Bars the pop is spread across.
    pub pop_bars: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub symbols: usize,
    pub days: usize,
    pub bars_per_day: usize,
    pub schedule: Schedule,
    /// Per-bar fractional drift magnitude (trend and zigzag regimes).
    pub drift: f64,
    /// Mean-reversion pull per bar, as a fraction of the displacement.
    pub revert_strength: f64,
    /// Per-bar fractional noise sigma.
    pub noise: f64,
    pub base_price: f64,
    /// First calendar day, `YYYY-MM-DD`.
    pub start_date: String,
    pub plant: Option<PlantSpec>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            symbols: 3,
            days: 6,
            bars_per_day: 390,
            schedule: Schedule::DailyFlip,
            drift: 0.0008,
            revert_strength: 0.05,
            noise: 0.002,
            base_price: 100.0,
            start_date: "2020-01-06".to_string(),
            plant: None,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.symbols == 0 || self.days == 0 {
            return Err(CliError::config("synth: symbols and days must be >= 1"));
        }
        if self.bars_per_day < WARMUP + 6 {
            return Err(CliError::config(format!(
                "synth: bars_per_day must be >= {} to clear the indicator warmup",
                WARMUP + 6
            )));
        }
        if !(self.base_price > 0.0) {
            return Err(CliError::config("synth: base_price must be positive"));
        }
        for (name, v) in [("drift", self.drift), ("noise", self.noise)] {
            if !(0.0..=0.05).contains(&v) {
                return Err(CliError::config(format!(
                    "synth: {name} must lie in [0, 0.05]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.revert_strength) {
            return Err(CliError::config("synth: revert_strength must lie in [0, 1]"));
        }
        if NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d").is_err() {
            return Err(CliError::config(format!(
                "synth: bad start_date {:?}",
                self.start_date
            )));
        }
        if let Some(p) = &self.plant {
            if !(0.0..=1.0).contains(&p.rate) {
                return Err(CliError::config("synth: plant.rate must lie in [0, 1]"));
            }
            if p.run_length < 2 || p.pop_bars == 0 || !(p.pop_frac > 0.0) {
                return Err(CliError::config(
                    "synth: plant needs run_length >= 2, pop_bars >= 1, pop_frac > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Generated rows plus the generator's own pattern bookkeeping.
pub struct SynthOutput {
    pub rows: Vec<BarRow>,
    /// Planted windows whose terminal bar is visible after warmup trim,
    /// summed over the corpus.
    pub planted_windows: usize,
}

// Price moves inside a planted segment. The up-tick shields the window
// before the run from flagging; the down steps are large enough that no
// later normalization can blur their ordering.
const PLANT_UP_STEP: f64 = 0.003;
const PLANT_DOWN_STEP: f64 = 0.002;

/// Anchor bars (the up-tick position `a`) for one day's plants; the
/// flagged window ends at `a + run_length - 1`.
fn plant_anchors(spec: &SynthSpec) -> Result<Vec<usize>> {
    let Some(p) = &spec.plant else {
        return Ok(Vec::new());
    };
    if p.rate == 0.0 {
        return Ok(Vec::new());
    }
    let feature_rows = spec.bars_per_day - WARMUP;
    let eligible = feature_rows.saturating_sub(p.run_length - 1);
    let want = (p.rate * eligible as f64).round() as usize;
    if want == 0 {
        return Ok(Vec::new());
    }
    let segment = 1 + (p.run_length - 1) + p.pop_bars;
    let first = WARMUP + 1;
    let last = spec
        .bars_per_day
        .checked_sub(segment + 2)
        .ok_or_else(|| CliError::config("synth: day too short for one plant"))?;
    if last < first {
        return Err(CliError::config("synth: day too short for one plant"));
    }
    let span = last - first;
    let stride = span / want;
    if stride < segment + 2 {
        return Err(CliError::config(
            "synth: plant.rate too high for the day length",
        ));
    }
    Ok((0..want).map(|m| first + m * stride).collect())
}

/// Returns of the planted segment starting at its anchor: one up-tick,
/// the strict down-run, then the linear pop.
fn plant_returns(p: &PlantSpec) -> Vec<f64> {
    let mut r = vec![PLANT_UP_STEP];
    r.extend(std::iter::repeat(-PLANT_DOWN_STEP).take(p.run_length - 1));
    // Linear price pop: equal absolute increments of the pre-pop price.
    let mut level = 1.0;
    for m in 1..=p.pop_bars {
        let next = 1.0 + p.pop_frac * m as f64 / p.pop_bars as f64;
        r.push(next / level - 1.0);
        level = next;
    }
    r
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let start = NaiveDate::parse_from_str(&spec.start_date, "%Y-%m-%d")
        .expect("validated above");
    let anchors = plant_anchors(spec)?;
    let plant_rets = spec.plant.as_ref().map(plant_returns).unwrap_or_default();

    let mut rows = Vec::with_capacity(spec.symbols * spec.days * spec.bars_per_day);
    let mut planted_windows = 0usize;
    for s in 0..spec.symbols {
        let symbol = format!("S{s:02}");
        let symbol_seed = rng::derive_seed(spec.seed, s as u64);
        for d in 0..spec.days {
            let mut r = rng::stream(symbol_seed, d as u64);
            let date = start + Duration::days(d as i64);
            let anchor_price = spec.base_price * (1.0 + 0.1 * s as f64);
            let drift = match spec.schedule {
                Schedule::DailyFlip if d % 2 == 1 => -spec.drift,
                _ => spec.drift,
            };

            // Close path first; opens and wicks hang off it afterwards.
            let mut closes = Vec::with_capacity(spec.bars_per_day);
            closes.push(anchor_price);
            let mut in_plant: Option<usize> = None;
            let mut next_anchor = 0usize;
            for t in 1..spec.bars_per_day {
                if in_plant.is_none()
                    && next_anchor < anchors.len()
                    && t == anchors[next_anchor]
                {
                    in_plant = Some(0);
                    next_anchor += 1;
                }
                let ret = if let Some(k) = in_plant {
                    let ret = plant_rets[k];
                    in_plant = if k + 1 < plant_rets.len() {
                        Some(k + 1)
                    } else {
                        None
                    };
                    ret
                } else {
                    match spec.schedule {
                        Schedule::TrendUp | Schedule::DailyFlip => {
                            drift + spec.noise * gaussian(&mut r)
                        }
                        Schedule::MeanRevert => {
                            let c = *closes.last().expect("nonempty");
                            spec.revert_strength * (anchor_price - c) / anchor_price
                                + spec.noise * gaussian(&mut r)
                        }
                        Schedule::Zigzag => {
                            let sign = if t % 2 == 1 { 1.0 } else { -1.0 };
                            sign * (spec.drift + spec.noise * gaussian(&mut r).abs())
                        }
                    }
                };
                let prev = *closes.last().expect("nonempty");
                let mut next = prev * (1.0 + ret);
                // Positive-price floor; unreachable for sane specs but
                // keeps the Bar invariant safe against extreme draws.
                if next < 0.05 * anchor_price {
                    next = 0.05 * anchor_price;
                }
                closes.push(next);
            }
            planted_windows += anchors.len();

            for (t, &close) in closes.iter().enumerate() {
                let open = if t == 0 { closes[0] } else { closes[t - 1] };
                let body_hi = open.max(close);
                let body_lo = open.min(close);
                let wick = 0.5 * spec.noise;
                let high = body_hi * (1.0 + wick * gaussian(&mut r).abs());
                let low = body_lo * (1.0 - wick * gaussian(&mut r).abs());
                let volume = 1.0e4 * (1.0 + 0.5 * gaussian(&mut r).abs());
                rows.push(BarRow {
                    timestamp: date.and_hms_opt(9, 30, 0).expect("valid time")
                        + Duration::minutes(t as i64),
                    symbol: symbol.clone(),
                    bar: Bar {
                        open,
                        high,
                        low,
                        close,
                        volume,
                    },
                });
            }
        }
    }
    Ok(SynthOutput {
        rows,
        planted_windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csv_data::{build_episodes, SymbolDay};

    fn episodes_of(out: &SynthOutput) -> Vec<crows_core::episode::Episode> {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(String, String), Vec<Bar>> = BTreeMap::new();
        for r in &out.rows {
            groups
                .entry((r.symbol.clone(), r.timestamp.date().to_string()))
                .or_default()
                .push(r.bar);
        }
        build_episodes(
            &groups
                .into_iter()
                .map(|((symbol, date), bars)| SymbolDay { symbol, date, bars })
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_trend_is_strictly_increasing() {
        let spec = SynthSpec {
            symbols: 1,
            days: 1,
            bars_per_day: 60,
            schedule: Schedule::TrendUp,
            drift: 0.0002,
            noise: 0.0,
            ..SynthSpec::default()
        };
        let out = generate(&spec).unwrap();
        let closes: Vec<f64> = out.rows.iter().map(|r| r.bar.close).collect();
        assert!(closes.windows(2).all(|w| w[1] > w[0]));
        // With no noise the wicks collapse onto the body.
        assert!(out
            .rows
            .iter()
            .all(|r| r.bar.high == r.bar.open.max(r.bar.close)));
    }

    #[test]
    fn all_bars_satisfy_invariants_and_build() {
        let spec = SynthSpec {
            symbols: 2,
            days: 3,
            bars_per_day: 70,
            noise: 0.004,
            ..SynthSpec::default()
        };
        let out = generate(&spec).unwrap();
        assert_eq!(out.rows.len(), 2 * 3 * 70);
        for (i, r) in out.rows.iter().enumerate() {
            r.bar.validate(i).unwrap();
        }
        let eps = episodes_of(&out);
        assert_eq!(eps.len(), 6);
        assert_eq!(eps[0].len(), 70 - WARMUP);
    }

    #[test]
    fn zigzag_never_has_two_consecutive_down_closes() {
        let spec = SynthSpec {
            symbols: 1,
            days: 2,
            bars_per_day: 120,
            schedule: Schedule::Zigzag,
            drift: 0.0005,
            noise: 0.001,
            plant: None,
            ..SynthSpec::default()
        };
        let out = generate(&spec).unwrap();
        for day in out.rows.chunks(120) {
            let closes: Vec<f64> = day.iter().map(|r| r.bar.close).collect();
            let downs: Vec<bool> = closes.windows(2).map(|w| w[1] < w[0]).collect();
            assert!(downs.windows(2).all(|w| !(w[0] && w[1])));
        }
    }

    #[test]
    fn planted_runs_are_the_only_down_windows() {
        let plant = PlantSpec {
            rate: 0.06,
            run_length: 3,
            pop_frac: 0.012,
            pop_bars: 4,
        };
        let spec = SynthSpec {
            symbols: 2,
            days: 2,
            bars_per_day: 200,
            schedule: Schedule::Zigzag,
            drift: 0.0005,
            noise: 0.001,
            plant: Some(plant),
            ..SynthSpec::default()
        };
        let out = generate(&spec).unwrap();
        let eps = episodes_of(&out);
        // Count strict 3-down windows in the trimmed close columns.
        let mut windows = 0;
        for ep in &eps {
            let close = ep.column("close").unwrap();
            for w in close.windows(3) {
                if w[0] > w[1] && w[1] > w[2] {
                    windows += 1;
                }
            }
        }
        assert_eq!(windows, out.planted_windows);
        assert!(out.planted_windows > 0);
        // The flag bar is followed by the pop: buying there gains
        // pop_frac before any comparable drawdown.
        let per_day = out.planted_windows / 4;
        assert!(per_day >= 5, "want several plants per day, got {per_day}");
    }

    #[test]
    fn different_seeds_share_schema_not_values() {
        let a = generate(&SynthSpec {
            bars_per_day: 40,
            days: 1,
            symbols: 1,
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        let b = generate(&SynthSpec {
            bars_per_day: 40,
            days: 1,
            symbols: 1,
            seed: 2,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        assert_eq!(a.rows[5].timestamp, b.rows[5].timestamp);
        assert_eq!(a.rows[5].symbol, b.rows[5].symbol);
        assert!(a.rows.iter().zip(&b.rows).any(|(x, y)| x.bar != y.bar));
        let a2 = generate(&SynthSpec {
            bars_per_day: 40,
            days: 1,
            symbols: 1,
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        assert_eq!(a.rows, a2.rows);
    }

    #[test]
    fn overfull_plant_rate_is_rejected() {
        let spec = SynthSpec {
            bars_per_day: 60,
            plant: Some(PlantSpec {
                rate: 0.9,
                run_length: 3,
                pop_frac: 0.01,
                pop_bars: 5,
            }),
            schedule: Schedule::Zigzag,
            ..SynthSpec::default()
        };
        assert!(matches!(generate(&spec), Err(CliError::Config(_))));
    }
}
