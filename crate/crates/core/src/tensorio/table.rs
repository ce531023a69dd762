use std::collections::HashSet;
use std::path::Path;

use super::{io_err, Result, TensorIoError};

pub const SCORE_HEADER: [&str; 8] = [
    "system",
    "unit",
    "unit_index",
    "condition",
    "metric",
    "value",
    "n_items",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub system: String,
    pub unit: String,
    pub unit_index: i64,
    pub condition: String,
    pub metric: String,
    pub value: f64,
    pub n_items: u64,
    pub seed: u64,
}

impl ScoreRow {
    fn key(&self) -> (&str, &str, &str, &str) {
        (&self.system, &self.unit, &self.condition, &self.metric)
    }

    fn key_string(&self) -> String {
        format!(
            "({}, {}, {}, {})",
            self.system, self.unit, self.condition, self.metric
        )
    }
}

/// Valid value range for a metric name. Delta scores are absolute
/// differences of two correlations; everything else is a correlation.
fn metric_range(metric: &str) -> (f64, f64) {
    if metric.starts_with("delta") {
        (0.0, 2.0)
    } else if metric.ends_with("p_value") {
        (0.0, 1.0)
    } else {
        (-1.0, 1.0)
    }
}

/// Ordered collection of score rows with unique
/// `(system, unit, condition, metric)` keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<ScoreRow>) -> Result<Self> {
        let mut t = Self::new();
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, row: ScoreRow) -> Result<()> {
        let (lo, hi) = metric_range(&row.metric);
        if !(row.value.is_finite() && row.value >= lo && row.value <= hi) {
            return Err(TensorIoError::OutOfRange {
                metric: row.metric.clone(),
                value: row.value,
            });
        }
        if self.rows.iter().any(|r| r.key() == row.key()) {
            return Err(TensorIoError::DuplicateKey(row.key_string()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: ScoreTable) -> Result<()> {
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, system: &str, unit: &str, condition: &str, metric: &str) -> Option<&ScoreRow> {
        self.rows
            .iter()
            .find(|r| r.key() == (system, unit, condition, metric))
    }
}

/// Floats are written with 17 significant digits so they parse back to the
/// identical `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_score_table(table: &ScoreTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(SCORE_HEADER).map_err(|e| csv_io(path, e))?;
    for r in table.rows() {
        w.write_record([
            r.system.as_str(),
            r.unit.as_str(),
            &r.unit_index.to_string(),
            r.condition.as_str(),
            r.metric.as_str(),
            &format_float(r.value),
            &r.n_items.to_string(),
            &r.seed.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: csv::Error) -> TensorIoError {
    TensorIoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn read_score_table(path: &Path) -> Result<ScoreTable> {
    if !path.exists() {
        return Err(TensorIoError::MissingFile(path.to_path_buf()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header = rdr.headers().map_err(|e| csv_io(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(TensorIoError::MalformedRow {
            line: 1,
            msg: format!("expected header {}", SCORE_HEADER.join(",")),
        });
    }
    let mut table = ScoreTable::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TensorIoError::MalformedRow {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != SCORE_HEADER.len() {
            return Err(TensorIoError::MalformedRow {
                line,
                msg: format!("expected {} fields, found {}", SCORE_HEADER.len(), rec.len()),
            });
        }
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let parse_err = |what: &str| TensorIoError::MalformedRow {
            line,
            msg: format!("cannot parse {what}"),
        };
        let row = ScoreRow {
            system: field(0).to_string(),
            unit: field(1).to_string(),
            unit_index: field(2).parse().map_err(|_| parse_err("unit_index"))?,
            condition: field(3).to_string(),
            metric: field(4).to_string(),
            value: field(5).parse().map_err(|_| parse_err("value"))?,
            n_items: field(6).parse().map_err(|_| parse_err("n_items"))?,
            seed: field(7).parse().map_err(|_| parse_err("seed"))?,
        };
        if !seen.insert(row.key_string()) {
            return Err(TensorIoError::DuplicateKey(row.key_string()));
        }
        table.push(row)?;
    }
    Ok(table)
}
