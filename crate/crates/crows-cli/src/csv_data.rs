//! Market data files.
//!
//! The interchange format is a flat CSV with header
//! `timestamp,symbol,open,high,low,close,volume`, ISO-8601 minute
//! timestamps, one row per bar. Rows are grouped into (symbol, calendar
//! day) episodes; within a group timestamps must strictly increase, and
//! every parse problem is reported with its 1-based data row number.
//!
//! `ingest` can also cache fully built episodes as JSON; readers accept
//! either format, chosen by file extension.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crows_core::episode::{Bar, Column, Episode};
use crows_core::indicators::build_episode;

use crate::error::{CliError, Result};

/// One CSV row ready for writing.
#[derive(Clone, Debug, PartialEq)]
pub struct BarRow {
    pub timestamp: NaiveDateTime,
    pub symbol: String,
    pub bar: Bar,
}

/// All bars of one symbol on one calendar day, in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDay {
    pub symbol: String,
    /// `YYYY-MM-DD`.
    pub date: String,
    pub bars: Vec<Bar>,
}

const TIMESTAMP_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"];

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_field(row: usize, name: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::data(format!("row {row}: bad {name} value {s:?}")))
}

/// Reads a bar CSV into per-(symbol, day) groups, sorted by symbol then
/// date. Timestamps within a group must strictly increase.
pub fn read_grouped_bars(path: &Path) -> Result<Vec<SymbolDay>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| CliError::data(e.to_string()))?;
        let expect = ["timestamp", "symbol", "open", "high", "low", "close", "volume"];
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expect {
            return Err(CliError::data(format!(
                "unexpected header {got:?}, want {expect:?}"
            )));
        }
    }

    let mut groups: BTreeMap<(String, String), (Vec<Bar>, NaiveDateTime)> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| CliError::data(format!("row {row}: {e}")))?;
        if record.len() != 7 {
            return Err(CliError::data(format!(
                "row {row}: expected 7 fields, found {}",
                record.len()
            )));
        }
        let ts = parse_timestamp(record[0].trim()).ok_or_else(|| {
            CliError::data(format!("row {row}: bad timestamp {:?}", &record[0]))
        })?;
        let symbol = record[1].trim().to_string();
        if symbol.is_empty() {
            return Err(CliError::data(format!("row {row}: empty symbol")));
        }
        let bar = Bar {
            open: parse_field(row, "open", &record[2])?,
            high: parse_field(row, "high", &record[3])?,
            low: parse_field(row, "low", &record[4])?,
            close: parse_field(row, "close", &record[5])?,
            volume: parse_field(row, "volume", &record[6])?,
        };
        let date = ts.date().to_string();
        let key = (symbol.clone(), date.clone());
        match groups.get_mut(&key) {
            Some((bars, last)) => {
                if ts <= *last {
                    return Err(CliError::data(format!(
                        "row {row}: timestamp {ts} not increasing for {symbol} on {date}"
                    )));
                }
                bars.push(bar);
                *last = ts;
            }
            None => {
                groups.insert(key, (vec![bar], ts));
            }
        }
    }
    if groups.is_empty() {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(groups
        .into_iter()
        .map(|((symbol, date), (bars, _))| SymbolDay { symbol, date, bars })
        .collect())
}

/// Groups in-memory rows into per-(symbol, day) episodes under the same
/// rules as [`read_grouped_bars`]: sorted by symbol then date, strictly
/// increasing timestamps within a group.
pub fn group_rows(rows: &[BarRow]) -> Result<Vec<SymbolDay>> {
    let mut groups: BTreeMap<(String, String), (Vec<Bar>, NaiveDateTime)> = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        let date = row.timestamp.date().to_string();
        let key = (row.symbol.clone(), date.clone());
        match groups.get_mut(&key) {
            Some((bars, last)) => {
                if row.timestamp <= *last {
                    return Err(CliError::data(format!(
                        "row {}: timestamp {} not increasing for {} on {date}",
                        idx + 1,
                        row.timestamp,
                        row.symbol
                    )));
                }
                bars.push(row.bar);
                *last = row.timestamp;
            }
            None => {
                groups.insert(key, (vec![row.bar], row.timestamp));
            }
        }
    }
    if groups.is_empty() {
        return Err(CliError::data("no bar rows to group"));
    }
    Ok(groups
        .into_iter()
        .map(|((symbol, date), (bars, _))| SymbolDay { symbol, date, bars })
        .collect())
}

/// Writes bar rows in the interchange format. Floats use the shortest
/// round-trippable representation, so write/read is value-exact.
pub fn write_bar_rows(path: &Path, rows: &[BarRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    w.write_record(["timestamp", "symbol", "open", "high", "low", "close", "volume"])?;
    for r in rows {
        w.write_record([
            r.timestamp.format("%Y-%m-%dT%H:%M").to_string(),
            r.symbol.clone(),
            r.bar.open.to_string(),
            r.bar.high.to_string(),
            r.bar.low.to_string(),
            r.bar.close.to_string(),
            r.bar.volume.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Builds feature episodes from grouped bars, dropping nothing: every
/// group must clear the indicator warmup or the whole read fails.
pub fn build_episodes(groups: &[SymbolDay]) -> Result<Vec<Episode>> {
    groups
        .iter()
        .map(|g| {
            build_episode(&g.symbol, &g.date, &g.bars).map_err(|e| {
                CliError::data(format!("{} {}: {e}", g.symbol, g.date))
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ColumnJson {
    name: String,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EpisodeJson {
    symbol: String,
    date: String,
    raw_close: Vec<f64>,
    columns: Vec<ColumnJson>,
}

/// Caches built episodes as JSON (value-exact float round-trip).
pub fn write_episode_cache(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mirror: Vec<EpisodeJson> = episodes
        .iter()
        .map(|e| EpisodeJson {
            symbol: e.symbol.clone(),
            date: e.date.clone(),
            raw_close: e.raw_close.clone(),
            columns: e
                .columns()
                .iter()
                .map(|c| ColumnJson {
                    name: c.name.clone(),
                    data: c.data.clone(),
                })
                .collect(),
        })
        .collect();
    let text = serde_json::to_string(&mirror)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_episode_cache(path: &Path) -> Result<Vec<Episode>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mirror: Vec<EpisodeJson> = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    mirror
        .into_iter()
        .map(|m| {
            let columns = m
                .columns
                .into_iter()
                .map(|c| Column {
                    name: c.name,
                    data: c.data,
                })
                .collect();
            Episode::with_features(m.symbol, m.date, m.raw_close, columns)
                .map_err(CliError::from)
        })
        .collect()
}

/// Loads episodes from either format: `.json` is read as a cache,
/// anything else as a bar CSV that still needs indicator construction.
pub fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    if path.extension().is_some_and(|e| e == "json") {
        read_episode_cache(path)
    } else {
        build_episodes(&read_grouped_bars(path)?)
    }
}
