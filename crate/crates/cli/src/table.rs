//! Numeric CSV tables as written by `simulate` and `sweep`.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("input has no header row")]
    Empty,
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("unknown column `{name}` (available: {available})")]
    UnknownColumn { name: String, available: String },
    #[error("row {row}, column `{column}`: `{text}` is not a number")]
    NotANumber {
        row: usize,
        column: String,
        text: String,
    },
}

pub struct Table {
    pub metadata: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut metadata = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| TableError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(TableError::Empty);
        }
        let rows = reader
            .records()
            .map(|r| {
                r.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| TableError::Csv(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            metadata,
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let idx = self.header.iter().position(|h| h == name).ok_or_else(|| {
            TableError::UnknownColumn {
                name: name.to_string(),
                available: self.header.join(", "),
            }
        })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let text = row.get(idx).map(String::as_str).unwrap_or("");
                text.parse::<f64>().map_err(|_| TableError::NotANumber {
                    row: i + 1,
                    column: name.to_string(),
                    text: text.to_string(),
                })
            })
            .collect()
    }

    fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }

    /// A named column, or for `product` the elementwise product of the
    /// detector (or intensity) columns when the table has none.
    pub fn column_or_product(&self, name: &str) -> Result<Vec<f64>, TableError> {
        if name != "product" || self.has(name) {
            return self.column(name);
        }
        let (a, b) = if self.has("D1") {
            ("D1", "D2")
        } else {
            ("I_alpha", "I_beta")
        };
        let (a, b) = (self.column(a)?, self.column(b)?);
        Ok(a.iter().zip(&b).map(|(x, y)| x * y).collect())
    }

    /// Row times from the `t` column, or row indices when there is none.
    pub fn times(&self) -> Vec<f64> {
        self.column("t")
            .unwrap_or_else(|_| (0..self.rows.len()).map(|i| i as f64).collect())
    }

    /// One fringe in rows: from `fringe_bins` metadata, else from the time
    /// step via `fringe_bins_for_step`. `None` (whole table) for tables
    /// without a time axis.
    pub fn default_window(&self, fringe_bins_for_step: impl Fn(f64) -> f64) -> Option<usize> {
        if let Some(n) = self
            .metadata
            .get("fringe_bins")
            .and_then(|v| v.parse::<f64>().ok())
        {
            return Some(n.round().max(2.0) as usize);
        }
        let t = self.column("t").ok()?;
        let step = t
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .fold(f64::INFINITY, f64::min);
        step.is_finite()
            .then(|| fringe_bins_for_step(step).round().max(2.0) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SERIES: &str = "# seed=1\n# fringe_bins=100\nt,D1,D2\n0,1,2\n1,3,4\n";

    #[test]
    fn metadata_and_columns() {
        let t = Table::parse(SERIES).unwrap();
        assert_eq!(t.metadata["seed"], "1");
        assert_eq!(t.column("D2").unwrap(), [2.0, 4.0]);
        assert_eq!(t.column_or_product("product").unwrap(), [2.0, 12.0]);
        assert_eq!(t.default_window(|_| 7.0), Some(100));
        assert!(matches!(
            t.column("C9"),
            Err(TableError::UnknownColumn { .. })
        ));
    }

    #[test]
    fn tables_without_time_use_the_whole_trace() {
        let t = Table::parse("phi,I_alpha,I_beta\n0,0,2\n1,1,1\n").unwrap();
        assert_eq!(t.times(), [0.0, 1.0]);
        assert_eq!(t.default_window(|_| 7.0), None);
        assert_eq!(t.column_or_product("product").unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn window_from_time_step() {
        let t = Table::parse("t,x\n0,1\n0.5,2\n1,3\n").unwrap();
        assert_eq!(t.default_window(|step| 50.0 / step), Some(100));
    }

    #[test]
    fn bad_cells() {
        let t = Table::parse("t,x\n0,abc\n").unwrap();
        assert!(matches!(
            t.column("x"),
            Err(TableError::NotANumber { row: 1, .. })
        ));
        assert_eq!(Table::parse("").err(), Some(TableError::Empty));
    }
}
