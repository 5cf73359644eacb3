//! Normalization and the fixed technical-indicator set.
//!
//! [`build_episode`] turns a day of raw bars into an [`Episode`]: prices are
//! divided by the first close, volume by the first non-zero volume, fifteen
//! indicator columns are computed on the normalized values, and the warm-up
//! prefix where any indicator is undefined is dropped. Raw closes ride along
//! for profit accounting.
//!
//! Every indicator at row `t` reads only bars at indices `<= t`, so
//! truncating a day and recomputing reproduces the shared prefix bit for bit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::episode::{Bar, Column, Episode};
use crate::error::{Error, Result};
use crate::fmath;

/// Rows dropped from the front of each day: the slowest indicators (SMA-20
/// and the Bollinger bands) first exist at index 19.
pub const WARMUP: usize = 19;

/// Column names of the base feature matrix, in order: the five normalized
/// primaries followed by the fifteen indicators.
pub const BASE_FEATURES: [&str; 20] = [
    "open",
    "high",
    "low",
    "close",
    "volume",
    "sma_5",
    "sma_10",
    "sma_20",
    "ema_5",
    "ema_20",
    "rsi_14",
    "macd",
    "macd_signal",
    "boll_upper",
    "boll_lower",
    "sigma_10",
    "roc_10",
    "stoch_k",
    "stoch_d",
    "obv",
];

/// Per-field normalized series plus the retained raw closes.
pub struct NormalizedBars {
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub volume: Vec<f64>,
    pub raw_close: Vec<f64>,
}

/// Divides prices by the first close and volumes by the first non-zero
/// volume. The first normalized close and the first non-zero normalized
/// volume are exactly 1.0.
pub fn normalize(bars: &[Bar]) -> Result<NormalizedBars> {
    let first = bars.first().ok_or(Error::EpisodeTooShort { have: 0, need: 1 })?;
    if !(first.close > 0.0) {
        return Err(Error::NonPositiveBasePrice { close: first.close });
    }
    let base_volume = bars
        .iter()
        .map(|b| b.volume)
        .find(|&v| v > 0.0)
        .ok_or(Error::AllVolumesZero)?;
    let p = first.close;
    Ok(NormalizedBars {
        open: bars.iter().map(|b| b.open / p).collect(),
        high: bars.iter().map(|b| b.high / p).collect(),
        low: bars.iter().map(|b| b.low / p).collect(),
        close: bars.iter().map(|b| b.close / p).collect(),
        volume: bars.iter().map(|b| b.volume / base_volume).collect(),
        raw_close: bars.iter().map(|b| b.close).collect(),
    })
}

/// Validates bars, normalizes, appends the indicator columns, and drops the
/// warm-up rows. Needs at least `WARMUP + 1` bars to leave one usable row.
pub fn build_episode(symbol: &str, date: &str, bars: &[Bar]) -> Result<Episode> {
    for (i, bar) in bars.iter().enumerate() {
        bar.validate(i)?;
    }
    if bars.len() < WARMUP + 1 {
        return Err(Error::EpisodeTooShort {
            have: bars.len(),
            need: WARMUP + 1,
        });
    }
    let nb = normalize(bars)?;

    let macd_line = macd(&nb.close);
    let signal = ema_of(&macd_line, 9);
    let (boll_up, boll_dn) = bollinger(&nb.close, 20, 2.0);
    let k = stoch_k(&nb.high, &nb.low, &nb.close, 14);
    let d = sma_of(&k, 3);

    let series: [(&str, Vec<f64>); 20] = [
        ("open", nb.open),
        ("high", nb.high),
        ("low", nb.low),
        ("close", nb.close.clone()),
        ("volume", nb.volume.clone()),
        ("sma_5", sma_of(&nb.close, 5)),
        ("sma_10", sma_of(&nb.close, 10)),
        ("sma_20", sma_of(&nb.close, 20)),
        ("ema_5", ema_of(&nb.close, 5)),
        ("ema_20", ema_of(&nb.close, 20)),
        ("rsi_14", rsi(&nb.close, 14)),
        ("macd", macd_line),
        ("macd_signal", signal),
        ("boll_upper", boll_up),
        ("boll_lower", boll_dn),
        ("sigma_10", rolling_std(&nb.close, 10)),
        ("roc_10", roc(&nb.close, 10)),
        ("stoch_k", k),
        ("stoch_d", d),
        ("obv", obv(&nb.close, &nb.volume)),
    ];

    let columns: Vec<Column> = series
        .into_iter()
        .map(|(name, data)| {
            let trimmed = data[WARMUP..].to_vec();
            assert!(
                trimmed.iter().all(|v| v.is_finite()),
                "indicator {name} not finite after warm-up"
            );
            Column {
                name: String::from(name),
                data: trimmed,
            }
        })
        .collect();

    Episode::with_features(symbol, date, nb.raw_close[WARMUP..].to_vec(), columns)
}

/// Simple moving average; undefined (NaN) before `n - 1`. NaNs in the input
/// prefix propagate, which keeps chained indicators honest about warm-up.
pub fn sma_of(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in (n - 1)..x.len() {
        out[t] = x[t + 1 - n..=t].iter().sum::<f64>() / n as f64;
    }
    out
}

/// Exponential moving average seeded with the first defined input value.
/// The update `ema += a * (x - ema)` is exact on constant input.
pub fn ema_of(x: &[f64], n: usize) -> Vec<f64> {
    let a = 2.0 / (n as f64 + 1.0);
    let mut out = vec![f64::NAN; x.len()];
    let Some(start) = x.iter().position(|v| !v.is_nan()) else {
        return out;
    };
    let mut ema = x[start];
    out[start] = ema;
    for t in start + 1..x.len() {
        ema += a * (x[t] - ema);
        out[t] = ema;
    }
    out
}

/// Wilder RSI: simple-mean seed over the first `n` changes, then smoothed
/// averages. All gains and no losses pins the value at 100; a flat window
/// reads as neutral 50.
pub fn rsi(close: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; close.len()];
    if close.len() <= n {
        return out;
    }
    let mut avg_gain = 0.0;
    let mut avg_loss = 0.0;
    for t in 1..=n {
        let d = close[t] - close[t - 1];
        avg_gain += d.max(0.0);
        avg_loss += (-d).max(0.0);
    }
    avg_gain /= n as f64;
    avg_loss /= n as f64;
    out[n] = rsi_value(avg_gain, avg_loss);
    for t in n + 1..close.len() {
        let d = close[t] - close[t - 1];
        avg_gain = (avg_gain * (n as f64 - 1.0) + d.max(0.0)) / n as f64;
        avg_loss = (avg_loss * (n as f64 - 1.0) + (-d).max(0.0)) / n as f64;
        out[t] = rsi_value(avg_gain, avg_loss);
    }
    out
}

fn rsi_value(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 {
        if avg_gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// MACD line: EMA(12) minus EMA(26).
pub fn macd(close: &[f64]) -> Vec<f64> {
    let fast = ema_of(close, 12);
    let slow = ema_of(close, 26);
    fast.iter().zip(slow.iter()).map(|(f, s)| f - s).collect()
}

/// Bollinger bands: SMA(n) plus/minus `width` population standard
/// deviations over the same window.
pub fn bollinger(close: &[f64], n: usize, width: f64) -> (Vec<f64>, Vec<f64>) {
    let mid = sma_of(close, n);
    let sd = rolling_std(close, n);
    let upper = mid
        .iter()
        .zip(sd.iter())
        .map(|(m, s)| m + width * s)
        .collect();
    let lower = mid
        .iter()
        .zip(sd.iter())
        .map(|(m, s)| m - width * s)
        .collect();
    (upper, lower)
}

/// Rolling population standard deviation over the last `n` values.
pub fn rolling_std(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in (n - 1)..x.len() {
        let win = &x[t + 1 - n..=t];
        let mean = win.iter().sum::<f64>() / n as f64;
        let var = win.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        out[t] = fmath::sqrt(var);
    }
    out
}

/// Rate of change over `n` bars, in percent.
pub fn roc(close: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; close.len()];
    for t in n..close.len() {
        out[t] = 100.0 * (close[t] - close[t - n]) / close[t - n];
    }
    out
}

/// Stochastic %K over `n` bars; a flat window reads as 50.
pub fn stoch_k(high: &[f64], low: &[f64], close: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; close.len()];
    for t in (n - 1)..close.len() {
        let hh = high[t + 1 - n..=t]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let ll = low[t + 1 - n..=t]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        out[t] = if hh > ll {
            100.0 * (close[t] - ll) / (hh - ll)
        } else {
            50.0
        };
    }
    out
}

/// On-balance volume, accumulated from zero over normalized volume.
pub fn obv(close: &[f64], volume: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; close.len()];
    for t in 1..close.len() {
        let step = if close[t] > close[t - 1] {
            volume[t]
        } else if close[t] < close[t - 1] {
            -volume[t]
        } else {
            0.0
        };
        out[t] = out[t - 1] + step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_bar(price: f64, volume: f64) -> Bar {
        Bar {
            open: price,
            high: price,
            low: price,
            close: price,
            volume,
        }
    }

    #[test]
    fn sma_window_of_three() {
        let out = sma_of(&[1.0, 2.0, 3.0, 4.0], 3);
        assert!(out[0].is_nan() && out[1].is_nan());
        assert_eq!(out[2], 2.0);
        assert_eq!(out[3], 3.0);
    }

    #[test]
    fn rsi_saturates_on_monotone_rise() {
        let close: Vec<f64> = (1..=30).map(|v| v as f64).collect();
        let out = rsi(&close, 14);
        for v in &out[14..] {
            assert_eq!(*v, 100.0);
        }
    }

    #[test]
    fn rsi_flat_is_neutral() {
        let close = vec![5.0; 20];
        let out = rsi(&close, 14);
        assert_eq!(out[14], 50.0);
    }

    #[test]
    fn macd_vanishes_on_constant_series() {
        let close = vec![3.0; 40];
        let line = macd(&close);
        let sig = ema_of(&line, 9);
        assert!(line.iter().all(|&v| v == 0.0));
        assert!(sig.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_divides_by_first_close() {
        let bars = [flat_bar(200.0, 10.0), flat_bar(202.0, 10.0)];
        let nb = normalize(&bars).unwrap();
        assert_eq!(nb.close, vec![1.0, 1.01]);
        assert_eq!(nb.raw_close, vec![200.0, 202.0]);
    }

    #[test]
    fn normalize_divides_by_first_nonzero_volume() {
        let bars = [
            flat_bar(10.0, 0.0),
            flat_bar(10.0, 100.0),
            flat_bar(10.0, 150.0),
        ];
        let nb = normalize(&bars).unwrap();
        assert_eq!(nb.volume, vec![0.0, 1.0, 1.5]);
    }

    #[test]
    fn normalize_rejects_zero_base_price() {
        let mut bar = flat_bar(1.0, 1.0);
        bar.open = 0.0;
        bar.low = 0.0;
        bar.close = 0.0;
        bar.high = 0.0;
        assert!(matches!(
            normalize(&[bar]),
            Err(Error::NonPositiveBasePrice { .. })
        ));
    }

    #[test]
    fn normalize_rejects_all_zero_volume() {
        let bars = [flat_bar(10.0, 0.0), flat_bar(11.0, 0.0)];
        assert!(matches!(normalize(&bars), Err(Error::AllVolumesZero)));
    }

    #[test]
    fn build_drops_warmup_rows() {
        let bars: Vec<Bar> = (0..60)
            .map(|t| flat_bar(100.0 + (t % 7) as f64, 50.0 + t as f64))
            .collect();
        let ep = build_episode("S", "2024-01-02", &bars).unwrap();
        assert_eq!(ep.len(), 60 - WARMUP);
        assert_eq!(ep.width(), BASE_FEATURES.len());
        let names: Vec<&str> = ep.column_names().collect();
        assert_eq!(names, BASE_FEATURES);
    }

    #[test]
    fn build_rejects_short_days() {
        let bars: Vec<Bar> = (0..WARMUP).map(|_| flat_bar(10.0, 1.0)).collect();
        assert!(matches!(
            build_episode("S", "d", &bars),
            Err(Error::EpisodeTooShort { .. })
        ));
    }

    fn bar_strategy() -> impl Strategy<Value = Bar> {
        (
            1.0f64..100.0,
            1.0f64..100.0,
            0.0f64..1.0,
            0.0f64..0.9,
            0.1f64..1000.0,
        )
            .prop_map(|(open, close, eh, el, volume)| Bar {
                open,
                high: open.max(close) + eh,
                low: open.min(close) - el,
                close,
                volume,
            })
    }

    fn day_strategy() -> impl Strategy<Value = (alloc::vec::Vec<Bar>, usize)> {
        prop::collection::vec(bar_strategy(), (WARMUP + 2)..50).prop_flat_map(|bars| {
            let n = bars.len();
            (Just(bars), (WARMUP + 1)..n)
        })
    }

    proptest! {
        // Truncating a day and recomputing reproduces the shared rows
        // exactly: nothing at row t reads bars beyond t.
        #[test]
        fn features_are_causal((bars, cut) in day_strategy()) {
            let full = build_episode("S", "d", &bars).unwrap();
            let head = build_episode("S", "d", &bars[..cut]).unwrap();
            for t in 0..head.len() {
                prop_assert_eq!(full.feature_row(t), head.feature_row(t));
            }
        }

        #[test]
        fn features_are_finite_after_warmup((bars, _cut) in day_strategy()) {
            let ep = build_episode("S", "d", &bars).unwrap();
            for t in 0..ep.len() {
                prop_assert!(ep.feature_row(t).iter().all(|v| v.is_finite()));
            }
        }

        #[test]
        fn normalization_anchors_are_exact((bars, _cut) in day_strategy()) {
            let nb = normalize(&bars).unwrap();
            prop_assert_eq!(nb.close[0], 1.0);
            let first_nonzero = nb.volume.iter().find(|&&v| v > 0.0).unwrap();
            prop_assert_eq!(*first_nonzero, 1.0);
        }
    }
}
