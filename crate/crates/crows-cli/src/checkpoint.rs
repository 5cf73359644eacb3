//! Plain-text agent checkpoints.
//!
//! A checkpoint bundles everything `evaluate` needs to run an agent on raw
//! bars: the policy weights, the feature columns the agent observes (in
//! order), and any mined patterns whose flag columns must be materialized
//! first. Values print with Rust's shortest-roundtrip float formatting, so
//! save followed by load reproduces every weight bit for bit.
//!
//! Format, line by line:
//!
//! ```text
//! crows-agent v1
//! mode vanilla
//! feature_dim 20
//! hidden_dim 64
//! columns close,open,...
//! patterns 1
//! down close 3 17 0.23
//! tensor lstm.wx 24 256
//! <one line of space-separated values per row>
//! ...six more tensors in PARAM_NAMES order...
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crows_core::agent::{Agent, AgentConfig, PARAM_NAMES};
use crows_core::miner::MinedPattern;
use crows_core::nn::{Linear, Lstm};
use crows_core::Tensor;

use crate::error::{CliError, Result};
use crate::pattern_io::{format_pattern_line, parse_pattern_line};

const MAGIC: &str = "crows-agent v1";

/// An agent plus the data-preparation recipe it was trained with.
#[derive(Clone, Debug)]
pub struct AgentBundle {
    pub agent: Agent,
    /// Observation columns, in the order the agent expects.
    pub columns: Vec<String>,
    /// Patterns whose flag columns appear in `columns`.
    pub patterns: Vec<MinedPattern>,
}

pub fn save_bundle(path: &Path, bundle: &AgentBundle) -> Result<()> {
    let agent = &bundle.agent;
    if bundle.columns.len() != agent.config.feature_dim {
        return Err(CliError::runtime(format!(
            "checkpoint has {} columns but the agent observes {} features",
            bundle.columns.len(),
            agent.config.feature_dim
        )));
    }
    let mut out = File::create(path)?;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "mode {}", agent.config.mode.name())?;
    writeln!(out, "feature_dim {}", agent.config.feature_dim)?;
    writeln!(out, "hidden_dim {}", agent.config.hidden_dim)?;
    writeln!(out, "columns {}", bundle.columns.join(","))?;
    writeln!(out, "patterns {}", bundle.patterns.len())?;
    for mp in &bundle.patterns {
        writeln!(out, "{}", format_pattern_line(mp))?;
    }
    for (name, tensor) in PARAM_NAMES.iter().zip(agent.params()) {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "tensor {name} {}", dims.join(" "))?;
        let row = *tensor.shape().last().unwrap_or(&1);
        for chunk in tensor.data().chunks(row.max(1)) {
            let vals: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", vals.join(" "))?;
        }
    }
    Ok(())
}

struct LineSource {
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    path: String,
}

impl LineSource {
    fn next(&mut self) -> Result<String> {
        self.line_no += 1;
        match self.lines.next() {
            Some(line) => Ok(line?),
            None => Err(CliError::data(format!(
                "{}: truncated checkpoint at line {}",
                self.path, self.line_no
            ))),
        }
    }

    fn field(&mut self, key: &str) -> Result<String> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.to_string()),
            _ => Err(CliError::data(format!(
                "{} line {}: expected \"{key} ...\", got {line:?}",
                self.path, self.line_no
            ))),
        }
    }

    fn usize_field(&mut self, key: &str) -> Result<usize> {
        let text = self.field(key)?;
        text.parse().map_err(|_| {
            CliError::data(format!(
                "{} line {}: bad {key} value {text:?}",
                self.path, self.line_no
            ))
        })
    }
}

pub fn load_bundle(path: &Path) -> Result<AgentBundle> {
    let mut src = LineSource {
        lines: BufReader::new(File::open(path)?).lines(),
        line_no: 0,
        path: path.display().to_string(),
    };
    let magic = src.next()?;
    if magic != MAGIC {
        return Err(CliError::data(format!(
            "{}: not an agent checkpoint (first line {magic:?})",
            src.path
        )));
    }
    let mode = crate::harness::parse_mode(&src.field("mode")?)
        .map_err(|e| CliError::data(format!("{}: {e}", src.path)))?;
    let feature_dim = src.usize_field("feature_dim")?;
    let hidden_dim = src.usize_field("hidden_dim")?;
    let columns_text = src.field("columns")?;
    let columns: Vec<String> = if columns_text.is_empty() {
        Vec::new()
    } else {
        columns_text.split(',').map(str::to_string).collect()
    };
    if columns.len() != feature_dim {
        return Err(CliError::data(format!(
            "{}: {} columns listed but feature_dim is {feature_dim}",
            src.path,
            columns.len()
        )));
    }
    let n_patterns = src.usize_field("patterns")?;
    let mut patterns = Vec::with_capacity(n_patterns);
    for _ in 0..n_patterns {
        let line = src.next()?;
        patterns.push(
            parse_pattern_line(&line)
                .map_err(|e| CliError::data(format!("{} line {}: {e}", src.path, src.line_no)))?,
        );
    }

    let config = AgentConfig {
        mode,
        feature_dim,
        hidden_dim,
    };
    let mut tensors = Vec::with_capacity(PARAM_NAMES.len());
    for name in PARAM_NAMES {
        let header = src.next()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("tensor") || parts.next() != Some(name) {
            return Err(CliError::data(format!(
                "{} line {}: expected \"tensor {name} ...\", got {header:?}",
                src.path, src.line_no
            )));
        }
        let shape: Vec<usize> = parts
            .map(|d| {
                d.parse().map_err(|_| {
                    CliError::data(format!(
                        "{} line {}: bad dimension {d:?}",
                        src.path, src.line_no
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        while data.len() < numel {
            let line = src.next()?;
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    CliError::data(format!(
                        "{} line {}: bad value {tok:?}",
                        src.path, src.line_no
                    ))
                })?;
                data.push(v);
            }
        }
        if data.len() != numel {
            return Err(CliError::data(format!(
                "{}: tensor {name} has {} values, shape needs {numel}",
                src.path,
                data.len()
            )));
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| CliError::data(format!("{}: tensor {name}: {e}", src.path)))?;
        tensors.push(tensor);
    }

    let expected: Vec<Vec<usize>> = {
        let reference = Agent::new(config, 0)
            .map_err(|e| CliError::data(format!("{}: {e}", src.path)))?;
        reference.params().iter().map(|t| t.shape().to_vec()).collect()
    };
    for ((name, tensor), shape) in PARAM_NAMES.iter().zip(&tensors).zip(&expected) {
        if tensor.shape() != shape.as_slice() {
            return Err(CliError::data(format!(
                "{}: tensor {name} has shape {:?}, expected {shape:?}",
                src.path,
                tensor.shape()
            )));
        }
    }

    let mut it = tensors.into_iter();
    let lstm = Lstm {
        wx: it.next().unwrap(),
        wh: it.next().unwrap(),
        b: it.next().unwrap(),
        input_dim: config.input_dim(),
        hidden_dim,
    };
    let policy = Linear {
        w: it.next().unwrap(),
        b: it.next().unwrap(),
    };
    let value = Linear {
        w: it.next().unwrap(),
        b: it.next().unwrap(),
    };
    Ok(AgentBundle {
        agent: Agent {
            config,
            lstm,
            policy,
            value,
        },
        columns,
        patterns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crows_core::agent::Mode;
    use crows_core::miner::{Direction, FeatureDescriptor, Pattern};
    use tempfile::tempdir;

    fn bundle() -> AgentBundle {
        let config = AgentConfig {
            mode: Mode::Rl2,
            feature_dim: 3,
            hidden_dim: 5,
        };
        AgentBundle {
            agent: Agent::new(config, 42).unwrap(),
            columns: vec!["close".into(), "rsi_14".into(), "down_close_3".into()],
            patterns: vec![MinedPattern {
                pattern: Pattern {
                    direction: Direction::Down,
                    descriptor: FeatureDescriptor::Primary("close".into()),
                    length: 3,
                },
                support_count: 9,
                support_frac: 0.1,
            }],
        }
    }

    #[test]
    fn roundtrip_is_bitwise_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let original = bundle();
        save_bundle(&path, &original).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back.columns, original.columns);
        assert_eq!(back.patterns, original.patterns);
        assert_eq!(back.agent.config, original.agent.config);
        for (a, b) in original.agent.params().iter().zip(back.agent.params()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn saving_twice_yields_identical_bytes() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let b = bundle();
        save_bundle(&p1, &b).unwrap();
        save_bundle(&p2, &b).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    #[test]
    fn truncated_file_is_a_data_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        save_bundle(&path, &bundle()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(8).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        assert_eq!(load_bundle(&path).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn wrong_magic_is_a_data_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        std::fs::write(&path, "something else\n").unwrap();
        let err = load_bundle(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("not an agent checkpoint"));
    }

    #[test]
    fn column_count_must_match_feature_dim() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let mut b = bundle();
        b.columns.pop();
        assert_eq!(save_bundle(&path, &b).unwrap_err().exit_code(), 3);
    }
}
