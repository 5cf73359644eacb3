//! Hand-crafted candlestick patterns: three crows and four horsemen.
//!
//! Three crows is three consecutive bars whose opens and closes both
//! strictly decrease; four horsemen is four consecutive bars whose opens
//! and closes both strictly rise. A window flags its last bar, so the
//! columns are causal, and ties break a run.
//!
//! Internally a run length of joint strict moves is maintained per bar;
//! a window of length L ends at `t` exactly when the run at `t` is at
//! least `L - 1` steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::episode::Episode;
use crate::error::Result;

/// Column name of the three-crows flag.
pub const THREE_CROWS: &str = "three_crows";
/// Column name of the four-horsemen flag.
pub const FOUR_HORSEMEN: &str = "four_horsemen";

fn joint_run_flags(open: &[f64], close: &[f64], window: usize, rising: bool) -> Vec<f64> {
    let n = open.len();
    let mut flags = vec![0.0; n];
    let mut run = 0usize;
    for t in 1..n {
        let step = if rising {
            open[t] > open[t - 1] && close[t] > close[t - 1]
        } else {
            open[t] < open[t - 1] && close[t] < close[t - 1]
        };
        run = if step { run + 1 } else { 0 };
        if run >= window - 1 {
            flags[t] = 1.0;
        }
    }
    flags
}

/// 0.0/1.0 column: 1 where a strict 3-bar open-and-close decline ends.
pub fn detect_three_crows(open: &[f64], close: &[f64]) -> Vec<f64> {
    joint_run_flags(open, close, 3, false)
}

/// 0.0/1.0 column: 1 where a strict 4-bar open-and-close rise ends.
pub fn detect_four_horsemen(open: &[f64], close: &[f64]) -> Vec<f64> {
    joint_run_flags(open, close, 4, true)
}

/// Appends both flag columns to the episode.
pub fn append_pattern_flags(episode: &mut Episode) -> Result<()> {
    let open = episode.column("open")?.to_vec();
    let close = episode.column("close")?.to_vec();
    episode.push_column(THREE_CROWS, detect_three_crows(&open, &close))?;
    episode.push_column(FOUR_HORSEMEN, detect_four_horsemen(&open, &close))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Window-by-window reference implementations.
    fn crows_brute(open: &[f64], close: &[f64]) -> Vec<f64> {
        (0..open.len())
            .map(|t| {
                if t >= 2
                    && open[t - 2] > open[t - 1]
                    && open[t - 1] > open[t]
                    && close[t - 2] > close[t - 1]
                    && close[t - 1] > close[t]
                {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn horsemen_brute(open: &[f64], close: &[f64]) -> Vec<f64> {
        (0..open.len())
            .map(|t| {
                if t >= 3
                    && (1..=3).all(|k| {
                        open[t - k] < open[t - k + 1] && close[t - k] < close[t - k + 1]
                    })
                {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn minimal_three_crows() {
        let open = [5.0, 4.0, 3.0];
        let close = [4.5, 3.5, 2.5];
        assert_eq!(detect_three_crows(&open, &close), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn minimal_four_horsemen() {
        let open = [1.0, 2.0, 3.0, 4.0];
        let close = [1.5, 2.5, 3.5, 4.5];
        assert_eq!(
            detect_four_horsemen(&open, &close),
            vec![0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn constant_prices_never_flag() {
        let flat = [2.0; 10];
        assert!(detect_three_crows(&flat, &flat).iter().all(|&f| f == 0.0));
        assert!(detect_four_horsemen(&flat, &flat).iter().all(|&f| f == 0.0));
    }

    #[test]
    fn rising_series_has_no_crows() {
        let up: Vec<f64> = (0..10).map(|v| v as f64).collect();
        assert!(detect_three_crows(&up, &up).iter().all(|&f| f == 0.0));
    }

    // Runs longer than the window flag every terminal bar of an
    // overlapping window. The drop from the flat 10-level into the run
    // is itself a strict step, so the first flag lands one bar earlier
    // than the run's interior alone would suggest.
    #[test]
    fn overlapping_windows_flag_each_terminal_bar() {
        let mut open = vec![10.0; 20];
        let mut close = vec![10.0; 20];
        for (k, t) in (4..=8).enumerate() {
            open[t] = 9.0 - k as f64;
            close[t] = 8.5 - k as f64;
        }
        for (k, t) in (14..=17).enumerate() {
            open[t] = 11.0 + k as f64;
            close[t] = 11.5 + k as f64;
        }
        let crows = detect_three_crows(&open, &close);
        let horsemen = detect_four_horsemen(&open, &close);
        let crow_hits: Vec<usize> = (0..20).filter(|&t| crows[t] == 1.0).collect();
        let horse_hits: Vec<usize> = (0..20).filter(|&t| horsemen[t] == 1.0).collect();
        assert_eq!(crow_hits, vec![5, 6, 7, 8]);
        assert_eq!(horse_hits, vec![16, 17]);
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        let col = prop::collection::vec(prop::sample::select(vec![1.0, 2.0, 3.0]), 4..40);
        (col.clone(), col).prop_map(|(open, close)| {
            let n = open.len().min(close.len());
            (open[..n].to_vec(), close[..n].to_vec())
        })
    }

    proptest! {
        #[test]
        fn equals_window_enumeration((open, close) in series()) {
            prop_assert_eq!(detect_three_crows(&open, &close), crows_brute(&open, &close));
            prop_assert_eq!(detect_four_horsemen(&open, &close), horsemen_brute(&open, &close));
        }

        #[test]
        fn flags_are_mutually_exclusive((open, close) in series()) {
            let crows = detect_three_crows(&open, &close);
            let horsemen = detect_four_horsemen(&open, &close);
            for t in 0..open.len() {
                prop_assert!(!(crows[t] == 1.0 && horsemen[t] == 1.0));
            }
        }

        #[test]
        fn flags_are_causal((open, close) in series()) {
            let full = detect_three_crows(&open, &close);
            let cut = open.len() / 2;
            let head = detect_three_crows(&open[..cut], &close[..cut]);
            prop_assert_eq!(&full[..cut], &head[..]);
        }
    }
}
