//! Bars and symbol-day episodes.
//!
//! An [`Episode`] is one symbol's trading day after feature construction: a
//! column-oriented matrix of normalized primaries plus indicator (and,
//! later, pattern) columns, aligned with the raw close series the
//! environment uses for profit accounting. Rows are minutes with the
//! warm-up prefix already dropped.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One minute bar as ingested, before normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Checks the price/volume invariants, reporting the bar's index on
    /// failure.
    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: &'static str| Error::InvalidBar { index, reason };
        let finite = [self.open, self.high, self.low, self.close, self.volume]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(bad("non-finite field"));
        }
        if self.high < self.low {
            return Err(bad("high < low"));
        }
        if !(self.low > 0.0) {
            return Err(bad("non-positive price"));
        }
        if self.low > self.open.min(self.close) {
            return Err(bad("low above open/close"));
        }
        if self.high < self.open.max(self.close) {
            return Err(bad("high below open/close"));
        }
        if self.volume < 0.0 {
            return Err(bad("negative volume"));
        }
        Ok(())
    }
}

/// A named feature column.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: Vec<f64>,
}

/// One symbol-day with its feature matrix. Immutable after construction
/// except for appending pattern columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub symbol: String,
    pub date: String,
    /// Un-normalized closes, aligned row for row with the feature columns.
    pub raw_close: Vec<f64>,
    columns: Vec<Column>,
}

impl Episode {
    /// Builds an episode directly from columns. Feature pipelines go through
    /// [`build_episode`](crate::indicators::build_episode); this constructor
    /// serves tests and synthetic fixtures.
    pub fn with_features(
        symbol: impl Into<String>,
        date: impl Into<String>,
        raw_close: Vec<f64>,
        columns: Vec<Column>,
    ) -> Result<Self> {
        let rows = raw_close.len();
        for (i, col) in columns.iter().enumerate() {
            if col.data.len() != rows {
                return Err(Error::DimensionMismatch {
                    what: "feature column length",
                    expected: rows,
                    got: col.data.len(),
                });
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(Error::DuplicateColumn(col.name.clone()));
            }
        }
        Ok(Episode {
            symbol: symbol.into(),
            date: date.into(),
            raw_close,
            columns,
        })
    }

    /// Number of rows (post-warm-up minutes).
    pub fn len(&self) -> usize {
        self.raw_close.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_close.is_empty()
    }

    /// Number of feature columns.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.data.as_slice())
            .ok_or_else(|| Error::MissingColumn(String::from(name)))
    }

    /// All feature values at row `t`, in column order.
    pub fn feature_row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.data[t]).collect()
    }

    /// Appends a column; the name must be new and the length must match.
    pub fn push_column(&mut self, name: impl Into<String>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        if data.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "feature column length",
                expected: self.len(),
                got: data.len(),
            });
        }
        if self.columns.iter().any(|c| c.name == name) {
            return Err(Error::DuplicateColumn(name));
        }
        self.columns.push(Column { name, data });
        Ok(())
    }

    /// Drops every column whose name is not in `keep`, preserving `keep`'s
    /// order. Errors if a requested column is absent.
    pub fn select_columns(&mut self, keep: &[String]) -> Result<()> {
        let mut selected = Vec::with_capacity(keep.len());
        for name in keep {
            let col = self
                .columns
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            selected.push(col.clone());
        }
        self.columns = selected;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ep() -> Episode {
        Episode::with_features(
            "SYM",
            "2024-01-02",
            vec![100.0, 101.0],
            vec![
                Column {
                    name: String::from("close"),
                    data: vec![1.0, 1.01],
                },
                Column {
                    name: String::from("x"),
                    data: vec![0.5, 0.6],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn feature_row_follows_column_order() {
        let e = ep();
        assert_eq!(e.feature_row(1), vec![1.01, 0.6]);
    }

    #[test]
    fn ragged_columns_rejected() {
        let r = Episode::with_features(
            "S",
            "d",
            vec![1.0, 2.0],
            vec![Column {
                name: String::from("c"),
                data: vec![1.0],
            }],
        );
        assert!(r.is_err());
    }

    #[test]
    fn duplicate_column_rejected() {
        let mut e = ep();
        assert!(e.push_column("x", vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn bar_invariants() {
        let good = Bar {
            open: 10.0,
            high: 10.5,
            low: 9.5,
            close: 10.2,
            volume: 100.0,
        };
        assert!(good.validate(0).is_ok());
        let bad = Bar {
            high: 9.0,
            ..good
        };
        assert!(matches!(
            bad.validate(3),
            Err(Error::InvalidBar { index: 3, .. })
        ));
    }

    #[test]
    fn select_reorders_and_drops() {
        let mut e = ep();
        e.select_columns(&[String::from("x")]).unwrap();
        assert_eq!(e.width(), 1);
        assert_eq!(e.feature_row(0), vec![0.5]);
    }
}
