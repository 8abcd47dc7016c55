//! Datasets (unconditional, regression, time series), CSV ingestion and
//! column transforms.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three sampling layouts a model can score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    Unconditional,
    Regression,
    TimeSeries,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Unconditional => "unconditional",
            DatasetKind::Regression => "regression",
            DatasetKind::TimeSeries => "timeseries",
        }
    }
}

/// One observation as seen by a score model. Scores differentiate with
/// respect to the point coordinates, the response `y`, or the current value
/// `current` respectively; covariates and lags are fixed.
#[derive(Clone, Copy, Debug)]
pub enum Obs<'a> {
    /// A d-dimensional observation.
    Point(&'a [f64]),
    /// A (predictor, response) pair.
    Pair { x: f64, y: f64 },
    /// A time-series window. `lags` is chronological: `lags.last()` is the
    /// value immediately before `current`.
    Window { current: f64, lags: &'a [f64] },
}

impl Obs<'_> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Obs::Point(_) => "point",
            Obs::Pair { .. } => "pair",
            Obs::Window { .. } => "window",
        }
    }
}

/// Observations in one of the three layouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dataset {
    /// Row-major d-dimensional observations; `values.len() = n * dim`.
    Unconditional { dim: usize, values: Vec<f64> },
    /// Paired predictor/response columns of equal length.
    Regression { x: Vec<f64>, y: Vec<f64> },
    /// An ordered, contiguous series.
    TimeSeries { values: Vec<f64> },
}

impl Dataset {
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        Self::unconditional(1, values)
    }

    pub fn unconditional(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("observation dimension must be >= 1".into()));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::EmptyData);
        }
        Ok(Dataset::Unconditional { dim, values })
    }

    pub fn regression(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::EmptyData);
        }
        Ok(Dataset::Regression { x, y })
    }

    pub fn timeseries(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Dataset::TimeSeries { values })
    }

    pub fn kind(&self) -> DatasetKind {
        match self {
            Dataset::Unconditional { .. } => DatasetKind::Unconditional,
            Dataset::Regression { .. } => DatasetKind::Regression,
            Dataset::TimeSeries { .. } => DatasetKind::TimeSeries,
        }
    }

    /// Number of raw observations N.
    pub fn n_raw(&self) -> usize {
        match self {
            Dataset::Unconditional { dim, values } => values.len() / dim,
            Dataset::Regression { x, .. } => x.len(),
            Dataset::TimeSeries { values } => values.len(),
        }
    }

    /// The underlying series, for time-series data only.
    pub fn series(&self) -> Option<&[f64]> {
        match self {
            Dataset::TimeSeries { values } => Some(values),
            _ => None,
        }
    }
}

/// Declares which CSV columns to read and what dataset they form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Column names, in dataset order (regression: predictor then response).
    pub columns: Vec<String>,
    pub kind: DatasetKind,
}

/// A row skipped during ingestion, with its 1-based file line number.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkippedRow {
    pub line: u64,
    pub column: String,
    pub value: String,
}

/// Ingestion result: the dataset plus line-numbered rejects.
#[derive(Clone, Debug)]
pub struct IngestOutcome {
    pub data: Dataset,
    pub skipped: Vec<SkippedRow>,
}

/// Reads the declared columns of a header-row CSV file into a dataset.
/// Rows with unparseable cells are skipped and reported with line numbers;
/// a missing column, an empty file, or zero usable rows is an error.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<IngestOutcome> {
    let file = std::fs::File::open(path)?;
    ingest_csv_reader(file, schema, &path.display().to_string())
}

pub fn ingest_csv_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
    label: &str,
) -> Result<IngestOutcome> {
    let expected = match schema.kind {
        DatasetKind::Regression => 2,
        DatasetKind::TimeSeries => 1,
        DatasetKind::Unconditional => schema.columns.len().max(1),
    };
    if schema.columns.len() != expected {
        return Err(Error::Config(format!(
            "{} dataset needs {expected} column name(s), got {}",
            schema.kind.name(),
            schema.columns.len()
        )));
    }

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = Vec::with_capacity(schema.columns.len());
    for name in &schema.columns {
        let pos = headers.iter().position(|h| h == name);
        match pos {
            Some(p) => idx.push(p),
            None => return Err(Error::MissingColumn { name: name.clone() }),
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut skipped = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut parsed = Vec::with_capacity(idx.len());
        let mut bad: Option<SkippedRow> = None;
        for (&col, name) in idx.iter().zip(&schema.columns) {
            let cell = record.get(col).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    bad = Some(SkippedRow {
                        line,
                        column: name.clone(),
                        value: cell.to_string(),
                    });
                    break;
                }
            }
        }
        match bad {
            None => rows.push(parsed),
            Some(s) => skipped.push(s),
        }
    }

    if rows.is_empty() {
        return match skipped.first() {
            Some(s) => Err(Error::CsvCell {
                line: s.line,
                column: s.column.clone(),
                value: s.value.clone(),
            }),
            None => Err(Error::EmptyCsv {
                path: label.to_string(),
            }),
        };
    }

    let data = match schema.kind {
        DatasetKind::TimeSeries => Dataset::timeseries(rows.iter().map(|r| r[0]).collect())?,
        DatasetKind::Regression => Dataset::regression(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )?,
        DatasetKind::Unconditional => {
            let dim = idx.len();
            Dataset::unconditional(dim, rows.into_iter().flatten().collect())?
        }
    };
    Ok(IngestOutcome { data, skipped })
}

/// Writes a dataset as CSV with a header row. Float formatting uses the
/// shortest round-trippable representation, so ingesting the file back
/// reproduces the dataset bit-exactly.
pub fn write_csv(path: &Path, data: &Dataset, columns: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(columns)?;
    match data {
        Dataset::TimeSeries { values } => {
            for v in values {
                w.write_record([format_f64(*v)])?;
            }
        }
        Dataset::Regression { x, y } => {
            for (a, b) in x.iter().zip(y) {
                w.write_record([format_f64(*a), format_f64(*b)])?;
            }
        }
        Dataset::Unconditional { dim, values } => {
            for row in values.chunks_exact(*dim) {
                w.write_record(row.iter().map(|v| format_f64(*v)))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    // `{}` prints the shortest digits that parse back to the same f64.
    format!("{v}")
}

/// Column transforms applied before modeling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnTransform {
    /// Natural log; nonpositive values are an error.
    Log,
    /// log x_t - log x_{t-1}; shortens the column by one.
    LogReturn,
    /// (x - mean) / sd with the n-1 divisor.
    Standardize,
    /// Compass-bin index b -> angle b * 2pi / bins.
    BinsToRadians(u32),
}

/// Which column(s) of a dataset a transform applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformTarget {
    /// The series, or every column of an unconditional dataset.
    All,
    /// The predictor column of a regression dataset.
    X,
    /// The response column of a regression dataset.
    Y,
}

/// Applies one transform to one column.
pub fn transform_column(values: &[f64], op: ColumnTransform) -> Result<Vec<f64>> {
    match op {
        ColumnTransform::Log => values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(Error::Transform {
                        index: i,
                        msg: format!("log of nonpositive value {v}"),
                    })
                }
            })
            .collect(),
        ColumnTransform::LogReturn => {
            if values.len() < 2 {
                return Err(Error::Transform {
                    index: 0,
                    msg: "log_return needs at least two values".into(),
                });
            }
            let logs = transform_column(values, ColumnTransform::Log)?;
            Ok(logs.windows(2).map(|w| w[1] - w[0]).collect())
        }
        ColumnTransform::Standardize => {
            let n = values.len();
            if n < 2 {
                return Err(Error::ZeroVariance);
            }
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            if var <= 0.0 {
                return Err(Error::ZeroVariance);
            }
            let sd = var.sqrt();
            Ok(values.iter().map(|v| (v - mean) / sd).collect())
        }
        ColumnTransform::BinsToRadians(bins) => {
            if bins == 0 {
                return Err(Error::Config("bins_to_radians needs bins >= 1".into()));
            }
            let scale = std::f64::consts::TAU / bins as f64;
            Ok(values.iter().map(|v| v * scale).collect())
        }
    }
}

/// Applies a transform to the targeted column(s) of a dataset.
pub fn transform(data: &Dataset, target: TransformTarget, op: ColumnTransform) -> Result<Dataset> {
    match (data, target) {
        (Dataset::TimeSeries { values }, TransformTarget::All) => {
            Dataset::timeseries(transform_column(values, op)?)
        }
        (Dataset::Regression { x, y }, TransformTarget::X) => {
            check_length_preserving(op)?;
            Dataset::regression(transform_column(x, op)?, y.clone())
        }
        (Dataset::Regression { x, y }, TransformTarget::Y) => {
            check_length_preserving(op)?;
            Dataset::regression(x.clone(), transform_column(y, op)?)
        }
        (Dataset::Unconditional { dim, values }, TransformTarget::All) => {
            check_length_preserving(op)?;
            let n = values.len() / dim;
            let mut cols: Vec<Vec<f64>> = (0..*dim)
                .map(|j| (0..n).map(|i| values[i * dim + j]).collect())
                .collect();
            for col in &mut cols {
                *col = transform_column(col, op)?;
            }
            let mut out = Vec::with_capacity(values.len());
            for i in 0..n {
                for col in &cols {
                    out.push(col[i]);
                }
            }
            Dataset::unconditional(*dim, out)
        }
        _ => Err(Error::Config(format!(
            "transform target does not apply to {} data",
            data.kind().name()
        ))),
    }
}

fn check_length_preserving(op: ColumnTransform) -> Result<()> {
    if op == ColumnTransform::LogReturn {
        Err(Error::Config(
            "log_return applies only to a time series".into(),
        ))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_return_example() {
        let e = std::f64::consts::E;
        let out = transform_column(&[1.0, e, e], ColumnTransform::LogReturn).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!(out[1].abs() < 1e-15);
    }

    #[test]
    fn standardize_example() {
        let out = transform_column(&[1.0, 2.0, 3.0], ColumnTransform::Standardize).unwrap();
        assert_eq!(out, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn bins_to_radians_example() {
        let out = transform_column(&[4.0], ColumnTransform::BinsToRadians(16)).unwrap();
        assert!((out[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn log_of_nonpositive_reports_row() {
        let err = transform_column(&[1.0, -2.0], ColumnTransform::Log).unwrap_err();
        match err {
            Error::Transform { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_regression_pairs() {
        let csv = "hp,mpg\n100,30\n200,20\n";
        let schema = CsvSchema {
            columns: vec!["hp".into(), "mpg".into()],
            kind: DatasetKind::Regression,
        };
        let out = ingest_csv_reader(csv.as_bytes(), &schema, "mem").unwrap();
        assert_eq!(out.data.n_raw(), 2);
        assert!(out.skipped.is_empty());
        match out.data {
            Dataset::Regression { x, y } => {
                assert_eq!(x, vec![100.0, 200.0]);
                assert_eq!(y, vec![30.0, 20.0]);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn ingest_skips_bad_rows_with_line_numbers() {
        let csv = "x\n1.0\nnot_a_number\n3.0\n";
        let schema = CsvSchema {
            columns: vec!["x".into()],
            kind: DatasetKind::TimeSeries,
        };
        let out = ingest_csv_reader(csv.as_bytes(), &schema, "mem").unwrap();
        assert_eq!(out.data.n_raw(), 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].line, 3);
    }

    #[test]
    fn ingest_missing_column_is_an_error() {
        let csv = "a,b\n1,2\n";
        let schema = CsvSchema {
            columns: vec!["z".into()],
            kind: DatasetKind::TimeSeries,
        };
        match ingest_csv_reader(csv.as_bytes(), &schema, "mem") {
            Err(Error::MissingColumn { name }) => assert_eq!(name, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_all_bad_rows_is_a_cell_error() {
        let csv = "x\nfoo\nbar\n";
        let schema = CsvSchema {
            columns: vec!["x".into()],
            kind: DatasetKind::TimeSeries,
        };
        match ingest_csv_reader(csv.as_bytes(), &schema, "mem") {
            Err(Error::CsvCell { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_empty_file_is_an_error() {
        let csv = "x\n";
        let schema = CsvSchema {
            columns: vec!["x".into()],
            kind: DatasetKind::TimeSeries,
        };
        assert!(matches!(
            ingest_csv_reader(csv.as_bytes(), &schema, "mem"),
            Err(Error::EmptyCsv { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("micsel-data-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        let values = vec![0.1 + 0.2, 1.0 / 3.0, -5.5e-13, 3000.125, f64::MIN_POSITIVE];
        let data = Dataset::timeseries(values.clone()).unwrap();
        write_csv(&path, &data, &["x".into()]).unwrap();
        let schema = CsvSchema {
            columns: vec!["x".into()],
            kind: DatasetKind::TimeSeries,
        };
        let back = ingest_csv(&path, &schema).unwrap();
        assert_eq!(back.data, data);
        std::fs::remove_file(&path).ok();
    }
}
