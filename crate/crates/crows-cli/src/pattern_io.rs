//! CSV serialization for mined patterns and feature-importance tables.
//!
//! Pattern rows carry enough to rebuild the [`MinedPattern`] exactly:
//! direction, descriptor, window length, and both support figures.
//! Descriptors print as the bare column name for primary columns and as
//! `a-b` for difference columns; base column names never contain `-`, so
//! the split is unambiguous.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crows_core::miner::{Direction, FeatureDescriptor, MinedPattern, Pattern};

use crate::error::{CliError, Result};

pub const PATTERN_HEADER: &str = "direction,descriptor,length,support_count,support_frac";
pub const IMPORTANCE_HEADER: &str = "rank,column,score";

pub fn parse_direction(text: &str) -> Result<Direction> {
    match text {
        "up" => Ok(Direction::Up),
        "down" => Ok(Direction::Down),
        other => Err(CliError::data(format!(
            "unknown run direction {other:?} (expected \"up\" or \"down\")"
        ))),
    }
}

pub fn parse_descriptor(text: &str) -> Result<FeatureDescriptor> {
    if text.is_empty() {
        return Err(CliError::data("empty pattern descriptor"));
    }
    Ok(match text.split_once('-') {
        Some((a, b)) => FeatureDescriptor::Diff(a.to_string(), b.to_string()),
        None => FeatureDescriptor::Primary(text.to_string()),
    })
}

/// One pattern as a space-separated text line, e.g. `down close 3 17 0.23`.
/// Used both inside agent checkpoints and by the CSV round trip below.
pub fn format_pattern_line(mp: &MinedPattern) -> String {
    format!(
        "{} {} {} {} {}",
        mp.pattern.direction.name(),
        mp.pattern.descriptor.name(),
        mp.pattern.length,
        mp.support_count,
        mp.support_frac
    )
}

pub fn parse_pattern_line(line: &str) -> Result<MinedPattern> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(CliError::data(format!(
            "pattern line {line:?}: expected 5 fields, got {}",
            fields.len()
        )));
    }
    let direction = parse_direction(fields[0])?;
    let descriptor = parse_descriptor(fields[1])?;
    let length: usize = fields[2]
        .parse()
        .map_err(|_| CliError::data(format!("pattern line {line:?}: bad length")))?;
    let support_count: usize = fields[3]
        .parse()
        .map_err(|_| CliError::data(format!("pattern line {line:?}: bad support count")))?;
    let support_frac: f64 = fields[4]
        .parse()
        .map_err(|_| CliError::data(format!("pattern line {line:?}: bad support fraction")))?;
    Ok(MinedPattern {
        pattern: Pattern {
            direction,
            descriptor,
            length,
        },
        support_count,
        support_frac,
    })
}

pub fn write_patterns(path: &Path, patterns: &[MinedPattern]) -> Result<()> {
    let mut out = File::create(path)?;
    writeln!(out, "{PATTERN_HEADER}")?;
    for mp in patterns {
        writeln!(
            out,
            "{},{},{},{},{}",
            mp.pattern.direction.name(),
            mp.pattern.descriptor.name(),
            mp.pattern.length,
            mp.support_count,
            mp.support_frac
        )?;
    }
    Ok(())
}

pub fn read_patterns(path: &Path) -> Result<Vec<MinedPattern>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: empty pattern file", path.display())))??;
    if header != PATTERN_HEADER {
        return Err(CliError::data(format!(
            "{}: expected header {PATTERN_HEADER:?}, got {header:?}",
            path.display()
        )));
    }
    let mut patterns = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(CliError::data(format!(
                "{} row {}: expected 5 columns, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        patterns.push(parse_pattern_line(&fields.join(" ")).map_err(|e| {
            CliError::data(format!("{} row {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(patterns)
}

/// Importance table, one row per feature column in rank order.
pub fn write_importance(path: &Path, ranked: &[(String, f64)]) -> Result<()> {
    let mut out = File::create(path)?;
    writeln!(out, "{IMPORTANCE_HEADER}")?;
    for (rank, (column, score)) in ranked.iter().enumerate() {
        writeln!(out, "{},{},{}", rank + 1, column, score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> Vec<MinedPattern> {
        vec![
            MinedPattern {
                pattern: Pattern {
                    direction: Direction::Down,
                    descriptor: FeatureDescriptor::Primary("close".into()),
                    length: 3,
                },
                support_count: 17,
                support_frac: 0.046448087431693985,
            },
            MinedPattern {
                pattern: Pattern {
                    direction: Direction::Up,
                    descriptor: FeatureDescriptor::Diff("sma_5".into(), "sma_20".into()),
                    length: 2,
                },
                support_count: 4,
                support_frac: 0.25,
            },
        ]
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("patterns.csv");
        let original = sample();
        write_patterns(&path, &original).unwrap();
        let back = read_patterns(&path).unwrap();
        assert_eq!(back, original);
    }

    #[test]
    fn text_line_roundtrip_is_exact() {
        for mp in sample() {
            let line = format_pattern_line(&mp);
            assert_eq!(parse_pattern_line(&line).unwrap(), mp);
        }
    }

    #[test]
    fn diff_descriptor_splits_on_the_hyphen() {
        let desc = parse_descriptor("sma_5-sma_20").unwrap();
        assert_eq!(
            desc,
            FeatureDescriptor::Diff("sma_5".into(), "sma_20".into())
        );
        assert_eq!(desc.name(), "sma_5-sma_20");
    }

    #[test]
    fn bad_direction_is_a_data_error() {
        let err = parse_pattern_line("sideways close 3 1 0.5").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("patterns.csv");
        std::fs::write(&path, "direction,descriptor\nup,close\n").unwrap();
        assert_eq!(read_patterns(&path).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn importance_table_lists_ranks_from_one() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("importance.csv");
        let ranked = vec![("close".to_string(), 0.5), ("obv".to_string(), 0.125)];
        write_importance(&path, &ranked).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "rank,column,score\n1,close,0.5\n2,obv,0.125\n");
    }
}
