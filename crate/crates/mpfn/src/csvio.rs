//! CSV input and output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mixturepfn_core::data::{DataError, FeatureKind, LoadOptions, RawDataset, TabularDataset};
use mixturepfn_core::evalrank::{Metrics, ResultRecord};
use mixturepfn_core::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
    #[error("{path}: line {line}: {msg}")]
    Record {
        path: PathBuf,
        line: u64,
        msg: String,
    },
}

fn open(path: &Path) -> Result<csv::Reader<File>, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn read_cells(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), LoadError> {
    let mut reader = open(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| LoadError::Csv {
            path: path.to_owned(),
            source,
        })?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(LoadError::Data {
            path: path.to_owned(),
            source: DataError::EmptyDataset,
        });
    }
    let header = rows.remove(0);
    Ok((header, rows))
}

fn load_options(categorical: &[String], max_classes: Option<usize>) -> LoadOptions {
    LoadOptions {
        kind_overrides: categorical
            .iter()
            .map(|c| (c.clone(), FeatureKind::Categorical))
            .collect::<BTreeMap<_, _>>(),
        max_classes,
    }
}

/// Reads a labelled CSV; columns listed in `categorical` are forced categorical.
pub fn load_csv(
    path: &Path,
    label: &str,
    categorical: &[String],
    max_classes: Option<usize>,
) -> Result<RawDataset, LoadError> {
    let (header, rows) = read_cells(path)?;
    RawDataset::from_cells(
        &header,
        &rows,
        label,
        &load_options(categorical, max_classes),
    )
    .map_err(|source| LoadError::Data {
        path: path.to_owned(),
        source,
    })
}

/// Reads a train and a test CSV with identical headers into one raw dataset
/// whose first `n_train` rows are the training rows, so both share column
/// kinds, category strings and class codes.
pub fn load_pair(
    train: &Path,
    test: &Path,
    label: &str,
    categorical: &[String],
    max_classes: Option<usize>,
) -> Result<(RawDataset, usize), LoadError> {
    let (header, mut rows) = read_cells(train)?;
    let (test_header, test_rows) = read_cells(test)?;
    if test_header != header {
        return Err(LoadError::Record {
            path: test.to_owned(),
            line: 1,
            msg: format!("header differs from {}", train.display()),
        });
    }
    let n_train = rows.len();
    rows.extend(test_rows);
    let raw = RawDataset::from_cells(
        &header,
        &rows,
        label,
        &load_options(categorical, max_classes),
    )
    .map_err(|source| LoadError::Data {
        path: test.to_owned(),
        source,
    })?;
    Ok((raw, n_train))
}

pub fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Shortest round-trip formatting, so reloading reproduces every bit.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes features and label (as class name) with the given header.
pub fn write_dataset(
    path: &Path,
    ds: &TabularDataset,
    class_names: &[String],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<&str> = ds.column_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|&v| fmt_f64(v)).collect();
        rec.push(class_names[ds.labels[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Writes a raw feature matrix and labels with columns `x0..`, `label`.
pub fn write_matrix_with_labels(path: &Path, x: &Matrix, labels: &[usize]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = (0..x.cols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, y) in x.iter_rows().zip(labels) {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// `row_id,predicted,p_<class>...` in input order.
pub fn write_predictions(
    path: &Path,
    probs: &Matrix,
    class_names: &[String],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["row_id".to_string(), "predicted".to_string()];
    header.extend(class_names.iter().map(|c| format!("p_{c}")));
    w.write_record(&header)?;
    for (i, row) in probs.iter_rows().enumerate() {
        let mut best = 0;
        for (j, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = j;
            }
        }
        let mut rec = vec![i.to_string(), class_names[best].clone()];
        rec.extend(row.iter().map(|&p| fmt_f64(p)));
        w.write_record(&rec)?;
    }
    w.flush()
}

#[derive(Debug, serde::Deserialize)]
struct RecordRow {
    algorithm: String,
    dataset: String,
    fold: u32,
    accuracy: Option<f64>,
    mean_ll: Option<f64>,
    status: String,
}

/// Reads `algorithm,dataset,fold,accuracy,mean_ll,status` rows.
pub fn load_records(path: &Path) -> Result<Vec<ResultRecord>, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for row in reader.deserialize::<RecordRow>() {
        let row = row.map_err(|source| LoadError::Csv {
            path: path.to_owned(),
            source,
        })?;
        let line = out.len() as u64 + 2;
        let bad = |msg: &str| LoadError::Record {
            path: path.to_owned(),
            line,
            msg: msg.to_owned(),
        };
        let metrics = match row.status.as_str() {
            "ok" => {
                let (Some(accuracy), Some(mean_log_likelihood)) = (row.accuracy, row.mean_ll)
                else {
                    return Err(bad("ok record without metrics"));
                };
                if !(0.0..=1.0).contains(&accuracy) {
                    return Err(bad("accuracy outside [0, 1]"));
                }
                if !(mean_log_likelihood <= 0.0) {
                    return Err(bad("mean_ll must be <= 0"));
                }
                Some(Metrics {
                    accuracy,
                    mean_log_likelihood,
                })
            }
            "failed" => None,
            _ => return Err(bad("status must be ok or failed")),
        };
        out.push(ResultRecord {
            algorithm: row.algorithm,
            dataset: row.dataset,
            fold: row.fold,
            metrics,
        });
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[ResultRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "algorithm",
        "dataset",
        "fold",
        "accuracy",
        "mean_ll",
        "status",
    ])?;
    for r in records {
        let (acc, ll, status) = match r.metrics {
            Some(m) => (fmt_f64(m.accuracy), fmt_f64(m.mean_log_likelihood), "ok"),
            None => (String::new(), String::new(), "failed"),
        };
        w.write_record([
            r.algorithm.as_str(),
            &r.dataset,
            &r.fold.to_string(),
            &acc,
            &ll,
            status,
        ])?;
    }
    w.flush()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}
