//! Tabular datasets: raw cell ingestion, imputation, ordinal encoding,
//! outlier clipping, z-scoring, and stratified k-fold splitting.
//!
//! Statistics are always fitted on an explicit set of rows (the training
//! rows of a fold) and then applied to every row, so held-out rows never
//! influence the transform.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::matrix::Matrix;
use crate::rng;

/// Cells treated as missing, compared after trimming whitespace.
pub const MISSING_TOKENS: [&str; 4] = ["", "NaN", "nan", "?"];

/// Numeric cells further than this many standard deviations from the mean are clipped.
pub const CLIP_SIGMAS: f64 = 4.0;

/// Default ceiling on distinct label values; matches the external predictor envelope.
pub const DEFAULT_MAX_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("line {0} has a different number of fields than the header")]
    RaggedRow(usize),
    #[error("line {0} has a missing label")]
    MissingLabel(usize),
    #[error("{0} distinct labels exceed the configured ceiling")]
    TooManyClasses(usize),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("column `{0}` has no observed value")]
    AllMissingColumn(String),
    #[error("{rows} rows cannot be split into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("invalid split parameter: {0}")]
    InvalidSplit(&'static str),
    #[error("label {label} at row {row} is outside [0, {n_classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("feature matrix has {rows} rows but {labels} labels were given")]
    ShapeMismatch { rows: usize, labels: usize },
}

pub type Result<T, E = DataError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Ordinal,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Numeric => "numeric",
            FeatureKind::Categorical => "categorical",
            FeatureKind::Ordinal => "ordinal",
        }
    }
}

/// Storage of one raw column. A categorical-kind column may be stored as
/// numbers once it has been encoded; encoding then is the identity.
#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl RawColumn {
    fn len(&self) -> usize {
        match self {
            RawColumn::Numeric(v) => v.len(),
            RawColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            RawColumn::Numeric(v) => v[row].is_none(),
            RawColumn::Categorical(v) => v[row].is_none(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Columns forced to a kind regardless of their content.
    pub kind_overrides: BTreeMap<String, FeatureKind>,
    /// Maximum number of distinct labels accepted.
    pub max_classes: Option<usize>,
}

/// A dataset as read from its source, before imputation and scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub column_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub columns: Vec<RawColumn>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

fn is_missing_token(s: &str) -> bool {
    MISSING_TOKENS.contains(&s.trim())
}

impl RawDataset {
    /// Builds a raw dataset from a header and string rows. Line numbers in
    /// errors count the header as line 1.
    pub fn from_cells<S: AsRef<str>>(
        header: &[S],
        rows: &[Vec<S>],
        label_column: &str,
        opts: &LoadOptions,
    ) -> Result<Self> {
        let header: Vec<&str> = header.iter().map(|h| h.as_ref().trim()).collect();
        let label_pos = header
            .iter()
            .position(|h| *h == label_column)
            .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != header.len() {
                return Err(DataError::RaggedRow(i + 2));
            }
        }

        let mut raw_labels = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let cell = r[label_pos].as_ref().trim();
            if is_missing_token(cell) {
                return Err(DataError::MissingLabel(i + 2));
            }
            raw_labels.push(cell);
        }
        let class_names = sorted_classes(&raw_labels);
        let max_classes = opts.max_classes.unwrap_or(DEFAULT_MAX_CLASSES);
        if class_names.len() > max_classes {
            return Err(DataError::TooManyClasses(class_names.len()));
        }
        let class_of: BTreeMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let labels = raw_labels.iter().map(|c| class_of[c]).collect();

        let mut column_names = Vec::new();
        let mut feature_kinds = Vec::new();
        let mut columns = Vec::new();
        for (j, name) in header.iter().enumerate() {
            if j == label_pos {
                continue;
            }
            let cells: Vec<&str> = rows.iter().map(|r| r[j].as_ref().trim()).collect();
            let numeric: Option<Vec<Option<f64>>> = cells
                .iter()
                .map(|c| {
                    if is_missing_token(c) {
                        Some(None)
                    } else {
                        c.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
                    }
                })
                .collect();
            let kind = match opts.kind_overrides.get(*name) {
                Some(k) => *k,
                None if numeric.is_some() => FeatureKind::Numeric,
                None => FeatureKind::Categorical,
            };
            let column = match (kind, numeric) {
                (FeatureKind::Categorical, _) | (_, None) => RawColumn::Categorical(
                    cells
                        .iter()
                        .map(|c| (!is_missing_token(c)).then(|| c.to_string()))
                        .collect(),
                ),
                (_, Some(v)) => RawColumn::Numeric(v),
            };
            let kind = match (&column, kind) {
                (RawColumn::Categorical(_), FeatureKind::Numeric) => FeatureKind::Categorical,
                (_, k) => k,
            };
            column_names.push(name.to_string());
            feature_kinds.push(kind);
            columns.push(column);
        }

        Ok(Self {
            column_names,
            feature_kinds,
            columns,
            labels,
            class_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n_rows() {
            for (j, c) in self.columns.iter().enumerate() {
                if c.is_missing(i) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Numeric labels sort numerically, anything else lexicographically.
fn sorted_classes(labels: &[&str]) -> Vec<String> {
    let mut distinct: Vec<&str> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut pairs: Vec<(f64, &str)> = values.into_iter().zip(distinct).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        pairs.into_iter().map(|(_, s)| s.to_string()).collect()
    } else {
        distinct.into_iter().map(|s| s.to_string()).collect()
    }
}

/// Preprocessed numeric dataset: every cell finite, labels in `[0, n_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_kinds: Vec<FeatureKind>,
    pub column_names: Vec<String>,
}

impl TabularDataset {
    /// Numeric-only dataset with generated column names.
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let d = features.cols();
        Self::with_schema(
            features,
            labels,
            n_classes,
            vec![FeatureKind::Numeric; d],
            (0..d).map(|j| alloc::format!("x{j}")).collect(),
        )
    }

    pub fn with_schema(
        features: Matrix,
        labels: Vec<usize>,
        n_classes: usize,
        feature_kinds: Vec<FeatureKind>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(DataError::ShapeMismatch {
                rows: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(DataError::LabelOutOfRange {
                row,
                label,
                n_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            feature_kinds,
            column_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            feature_kinds: self.feature_kinds.clone(),
            column_names: self.column_names.clone(),
        }
    }

    /// Views the processed data as raw numeric columns, keeping the recorded kinds.
    pub fn to_raw(&self) -> RawDataset {
        let columns = (0..self.n_features())
            .map(|j| {
                RawColumn::Numeric(
                    (0..self.n_rows())
                        .map(|i| Some(self.features.get(i, j)))
                        .collect(),
                )
            })
            .collect();
        RawDataset {
            column_names: self.column_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            columns,
            labels: self.labels.clone(),
            class_names: (0..self.n_classes).map(|c| c.to_string()).collect(),
        }
    }
}

/// Fitted transform of one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTransform {
    pub kind: FeatureKind,
    /// Category strings in code order, for columns stored as text.
    pub categories: Option<Vec<String>>,
    /// Replacement for missing (and unseen categorical) cells, in encoded space.
    pub fill: f64,
    pub clip: Option<(f64, f64)>,
    pub mean: f64,
    /// Zero for constant columns, which map to all zeros.
    pub std: f64,
    /// Per-category replacement values under frequency encoding.
    pub code_values: Option<Vec<f64>>,
}

impl ColumnTransform {
    fn encode(&self, column: &RawColumn, row: usize) -> f64 {
        let code = self.code(column, row);
        match &self.code_values {
            Some(values) => values[code as usize],
            None => code,
        }
    }

    fn code(&self, column: &RawColumn, row: usize) -> f64 {
        match column {
            RawColumn::Numeric(v) => v[row].unwrap_or(self.fill),
            RawColumn::Categorical(v) => match (&v[row], &self.categories) {
                (Some(s), Some(cats)) => cats
                    .iter()
                    .position(|c| c == s)
                    .map_or(self.fill, |p| p as f64),
                _ => self.fill,
            },
        }
    }

    fn apply(&self, encoded: f64) -> f64 {
        let v = match self.clip {
            Some((lo, hi)) => encoded.clamp(lo, hi),
            None => encoded,
        };
        if self.std > 0.0 {
            (v - self.mean) / self.std
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CategoricalEncoding {
    /// Category code by first appearance.
    #[default]
    Ordinal,
    /// Share of fit rows holding the category.
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PreprocessOptions {
    pub categorical_encoding: CategoricalEncoding,
    /// Keep only this many columns, highest clipped variance first.
    pub max_features: Option<usize>,
}

/// Column transforms fitted on a set of training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub columns: Vec<ColumnTransform>,
    /// Source columns emitted by [`transform`](Self::transform), ascending.
    pub selected: Vec<usize>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Iterated clip-then-restandardise until every value lies within
/// `CLIP_SIGMAS` of the final mean. Returns `None` when nothing is clipped.
fn fit_clip(values: &[f64]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut clipped: Vec<f64> = values.to_vec();
    for _ in 0..100 {
        let (mean, std) = mean_std(&clipped);
        if std == 0.0 {
            break;
        }
        let nlo = lo.max(mean - CLIP_SIGMAS * std);
        let nhi = hi.min(mean + CLIP_SIGMAS * std);
        if clipped.iter().all(|&v| v >= nlo && v <= nhi) {
            break;
        }
        lo = nlo;
        hi = nhi;
        for (c, &v) in clipped.iter_mut().zip(values) {
            *c = v.clamp(lo, hi);
        }
    }
    (lo.is_finite() || hi.is_finite()).then_some((lo, hi))
}

impl Preprocessor {
    /// Fits imputation, encoding, clipping and scaling on `rows`.
    pub fn fit(raw: &RawDataset, rows: &[usize]) -> Result<Self> {
        Self::fit_with(raw, rows, &PreprocessOptions::default())
    }

    pub fn fit_with(raw: &RawDataset, rows: &[usize], opts: &PreprocessOptions) -> Result<Self> {
        if rows.is_empty() || raw.n_rows() == 0 {
            return Err(DataError::EmptyDataset);
        }
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();

        let mut columns = Vec::with_capacity(raw.n_features());
        let mut variances = Vec::with_capacity(raw.n_features());
        for (j, column) in raw.columns.iter().enumerate() {
            debug_assert_eq!(column.len(), raw.n_rows());
            let kind = raw.feature_kinds[j];
            let name = &raw.column_names[j];
            let (categories, fill) = match column {
                RawColumn::Categorical(cells) => {
                    let mut cats: Vec<String> = Vec::new();
                    let mut counts: Vec<usize> = Vec::new();
                    for &i in &rows {
                        if let Some(s) = &cells[i] {
                            match cats.iter().position(|c| c == s) {
                                Some(p) => counts[p] += 1,
                                None => {
                                    cats.push(s.clone());
                                    counts.push(1);
                                }
                            }
                        }
                    }
                    if cats.is_empty() {
                        return Err(DataError::AllMissingColumn(name.clone()));
                    }
                    // Mode; ties go to the earliest category.
                    let mut mode = 0;
                    for (p, &c) in counts.iter().enumerate() {
                        if c > counts[mode] {
                            mode = p;
                        }
                    }
                    (Some(cats), mode as f64)
                }
                RawColumn::Numeric(cells) => {
                    let observed: Vec<f64> = rows.iter().filter_map(|&i| cells[i]).collect();
                    if observed.is_empty() {
                        return Err(DataError::AllMissingColumn(name.clone()));
                    }
                    let fill = if kind == FeatureKind::Categorical {
                        numeric_mode(&observed)
                    } else {
                        observed.iter().sum::<f64>() / observed.len() as f64
                    };
                    (None, fill)
                }
            };
            let code_values = match (&categories, opts.categorical_encoding) {
                (Some(cats), CategoricalEncoding::Frequency) => {
                    let mut counts = vec![0usize; cats.len()];
                    let probe = ColumnTransform {
                        kind,
                        categories: categories.clone(),
                        fill,
                        clip: None,
                        mean: 0.0,
                        std: 0.0,
                        code_values: None,
                    };
                    for &i in &rows {
                        counts[probe.code(column, i) as usize] += 1;
                    }
                    Some(
                        counts
                            .iter()
                            .map(|&c| c as f64 / rows.len() as f64)
                            .collect(),
                    )
                }
                _ => None,
            };
            let mut t = ColumnTransform {
                kind,
                categories,
                fill,
                clip: None,
                mean: 0.0,
                std: 0.0,
                code_values,
            };
            let encoded: Vec<f64> = rows.iter().map(|&i| t.encode(column, i)).collect();
            if kind == FeatureKind::Numeric {
                t.clip = fit_clip(&encoded);
            }
            let clipped: Vec<f64> = match t.clip {
                Some((lo, hi)) => encoded.iter().map(|v| v.clamp(lo, hi)).collect(),
                None => encoded,
            };
            let (mean, std) = mean_std(&clipped);
            t.mean = mean;
            t.std = if std > 0.0 { std } else { 0.0 };
            variances.push(t.std * t.std);
            columns.push(t);
        }
        let mut selected: Vec<usize> = (0..columns.len()).collect();
        if let Some(cap) = opts.max_features {
            if cap < selected.len() {
                selected.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
                selected.truncate(cap.max(1));
                selected.sort_unstable();
            }
        }
        Ok(Self { columns, selected })
    }

    /// Applies the fitted transforms to every row of `raw`.
    pub fn transform(&self, raw: &RawDataset) -> TabularDataset {
        let n = raw.n_rows();
        let mut features = Matrix::zeros(n, self.selected.len());
        for (out, &j) in self.selected.iter().enumerate() {
            let (t, column) = (&self.columns[j], &raw.columns[j]);
            for i in 0..n {
                features.set(i, out, t.apply(t.encode(column, i)));
            }
        }
        TabularDataset {
            features,
            labels: raw.labels.clone(),
            n_classes: raw.n_classes(),
            feature_kinds: self
                .selected
                .iter()
                .map(|&j| raw.feature_kinds[j])
                .collect(),
            column_names: self
                .selected
                .iter()
                .map(|&j| raw.column_names[j].clone())
                .collect(),
        }
    }
}

fn numeric_mode(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut best, mut best_n) = (sorted[0], 0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > best_n {
            best = sorted[i];
            best_n = j - i;
        }
        i = j;
    }
    best
}

/// Fits on every row and transforms.
pub fn preprocess(raw: &RawDataset) -> Result<TabularDataset> {
    let rows: Vec<usize> = (0..raw.n_rows()).collect();
    Ok(Preprocessor::fit(raw, &rows)?.transform(raw))
}

/// One cross-validation fold. `dev_indices` is carved out of `train_indices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub dev_indices: Vec<usize>,
    pub dev_fraction_permille: u32,
    /// False when some class had fewer members than folds.
    pub stratified: bool,
}

impl FoldSplit {
    /// Training rows with the dev rows removed.
    pub fn fit_indices(&self) -> Vec<usize> {
        let mut dev = self.dev_indices.iter().peekable();
        self.train_indices
            .iter()
            .copied()
            .filter(|i| {
                while dev.peek().is_some_and(|d| **d < *i) {
                    dev.next();
                }
                dev.peek() != Some(&i)
            })
            .collect()
    }
}

/// Seeded k-fold split, stratified by label whenever every class has at least `folds` members.
pub fn kfold_split(
    labels: &[usize],
    folds: usize,
    dev_fraction: f64,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    let n = labels.len();
    if folds < 2 {
        return Err(DataError::InvalidSplit("folds must be at least 2"));
    }
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(DataError::InvalidSplit("dev fraction must lie in (0, 1)"));
    }
    if n < folds {
        return Err(DataError::TooFewRows { rows: n, folds });
    }
    let mut rng = rng::derive(seed, 0xF01D);

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let stratified = by_class.values().all(|rows| rows.len() >= folds);

    let order: Vec<usize> = if stratified {
        let mut order = Vec::with_capacity(n);
        for rows in by_class.values_mut() {
            rows.shuffle(&mut rng);
            order.extend_from_slice(rows);
        }
        order
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    };

    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let mut out = Vec::with_capacity(folds);
    for f in 0..folds {
        let test_indices: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let train_indices: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let mut shuffled = train_indices.clone();
        let mut dev_rng = rng::derive(seed, 0xDE0 + f as u64);
        shuffled.shuffle(&mut dev_rng);
        let n_dev = ((train_indices.len() as f64) * dev_fraction) as usize;
        let mut dev_indices = shuffled[..n_dev.min(train_indices.len())].to_vec();
        dev_indices.sort_unstable();
        out.push(FoldSplit {
            fold_index: f,
            train_indices,
            test_indices,
            dev_indices,
            dev_fraction_permille: libm::round(dev_fraction * 1000.0) as u32,
            stratified,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn cells(rows: &[&str]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.split(',').map(|s| s.to_string()).collect())
            .collect()
    }

    fn header(h: &str) -> Vec<String> {
        h.split(',').map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_missing_cells_and_classes() {
        let raw = RawDataset::from_cells(
            &header("a,b,y"),
            &cells(&["1,2,0", "3,?,1", "5,6,0"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(raw.n_rows(), 3);
        assert_eq!(raw.n_features(), 2);
        assert_eq!(raw.n_classes(), 2);
        assert_eq!(raw.missing_cells(), vec![(1, 1)]);
        assert_eq!(raw.labels, vec![0, 1, 0]);
    }

    #[test]
    fn single_class_label_is_accepted() {
        let raw = RawDataset::from_cells(
            &header("a,y"),
            &cells(&["1,x", "2,x"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(raw.n_classes(), 1);
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = RawDataset::from_cells(
            &header("a,y"),
            &cells(&["1,0", "1,2,3"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, DataError::RaggedRow(3));
    }

    #[test]
    fn label_errors() {
        let opts = LoadOptions::default();
        assert!(matches!(
            RawDataset::from_cells(&header("a,b"), &cells(&["1,2"]), "y", &opts),
            Err(DataError::MissingLabelColumn(_))
        ));
        let many: Vec<String> = (0..11).map(|i| alloc::format!("{i},{i}")).collect();
        let many: Vec<&str> = many.iter().map(|s| s.as_str()).collect();
        assert_eq!(
            RawDataset::from_cells(&header("a,y"), &cells(&many), "y", &opts),
            Err(DataError::TooManyClasses(11))
        );
        let opts = LoadOptions {
            max_classes: Some(20),
            ..Default::default()
        };
        assert!(RawDataset::from_cells(&header("a,y"), &cells(&many), "y", &opts).is_ok());
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let raw = RawDataset::from_cells(
            &header("a,y"),
            &cells(&["1,10", "2,9", "3,2"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(raw.class_names, vec!["2", "9", "10"]);
        assert_eq!(raw.labels, vec![2, 1, 0]);
    }

    #[test]
    fn mean_imputation() {
        let raw = RawDataset::from_cells(
            &header("a,y"),
            &cells(&["1,0", "NaN,1", "3,0"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        let rows = [0, 1, 2];
        let p = Preprocessor::fit(&raw, &rows).unwrap();
        assert_eq!(p.columns[0].fill, 2.0);
        // imputed column [1, 2, 3] standardised
        let ds = p.transform(&raw);
        let s = libm::sqrt(2.0 / 3.0);
        for (i, v) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((ds.features.get(i, 0) - (v - 2.0) / s).abs() < 1e-12);
        }
    }

    #[test]
    fn categorical_first_appearance() {
        let raw = RawDataset::from_cells(
            &header("c,y"),
            &cells(&["red,0", "blue,1", "red,0"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(raw.feature_kinds, vec![FeatureKind::Categorical]);
        let p = Preprocessor::fit(&raw, &[0, 1, 2]).unwrap();
        let t = &p.columns[0];
        assert_eq!(t.categories.as_deref().unwrap(), ["red", "blue"]);
        assert_eq!(t.encode(&raw.columns[0], 0), 0.0);
        assert_eq!(t.encode(&raw.columns[0], 1), 1.0);
        assert_eq!(t.encode(&raw.columns[0], 2), 0.0);
    }

    #[test]
    fn categorical_override_on_numeric_column() {
        let mut opts = LoadOptions::default();
        opts.kind_overrides
            .insert("c".to_string(), FeatureKind::Categorical);
        let raw =
            RawDataset::from_cells(&header("c,y"), &cells(&["7,0", "3,1", "7,0"]), "y", &opts)
                .unwrap();
        let p = Preprocessor::fit(&raw, &[0, 1, 2]).unwrap();
        assert_eq!(p.columns[0].categories.as_deref().unwrap(), ["7", "3"]);
    }

    #[test]
    fn clip_then_standardise_matches_scalar_recompute() {
        let values = [0.0, 0.0, 0.0, 1000.0];
        // straight-line recompute
        let m: f64 = values.iter().sum::<f64>() / 4.0;
        let s = libm::sqrt(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 4.0);
        let (lo, hi) = (m - 4.0 * s, m + 4.0 * s);
        let c: Vec<f64> = values.iter().map(|v| v.clamp(lo, hi)).collect();
        let m2: f64 = c.iter().sum::<f64>() / 4.0;
        let s2 = libm::sqrt(c.iter().map(|v| (v - m2) * (v - m2)).sum::<f64>() / 4.0);
        let expected: Vec<f64> = c.iter().map(|v| (v - m2) / s2).collect();

        let rows: Vec<String> = values.iter().map(|v| alloc::format!("{v},0")).collect();
        let rows: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let raw =
            RawDataset::from_cells(&header("a,y"), &cells(&rows), "y", &LoadOptions::default())
                .unwrap();
        let ds = preprocess(&raw).unwrap();
        for i in 0..4 {
            assert!((ds.features.get(i, 0) - expected[i]).abs() < 1e-12);
        }
        assert!((expected[3] - libm::sqrt(3.0)).abs() < 1e-12);
    }

    #[test]
    fn heavy_outlier_is_clipped_and_output_bounded() {
        let mut rows: Vec<String> = (0..200).map(|i| alloc::format!("{},0", i % 7)).collect();
        rows.push("1e9,1".to_string());
        let rows: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let raw =
            RawDataset::from_cells(&header("a,y"), &cells(&rows), "y", &LoadOptions::default())
                .unwrap();
        let ds = preprocess(&raw).unwrap();
        let col: Vec<f64> = (0..ds.n_rows()).map(|i| ds.features.get(i, 0)).collect();
        assert!(col.iter().all(|v| v.abs() <= CLIP_SIGMAS + 1e-9));
        let (m, s) = mean_std(&col);
        assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_column_is_zero() {
        let raw = RawDataset::from_cells(
            &header("a,y"),
            &cells(&["5,0", "5,1", "5,0"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        let ds = preprocess(&raw).unwrap();
        assert!(ds.features.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_missing_and_empty_errors() {
        let raw = RawDataset::from_cells(
            &header("a,y"),
            &cells(&["?,0", ",1"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(
            preprocess(&raw),
            Err(DataError::AllMissingColumn("a".to_string()))
        );
        let empty = RawDataset::from_cells(
            &header("a,y"),
            &Vec::<Vec<String>>::new(),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(preprocess(&empty), Err(DataError::EmptyDataset));
    }

    #[test]
    fn unseen_category_maps_to_mode() {
        let raw = RawDataset::from_cells(
            &header("c,y"),
            &cells(&["a,0", "b,1", "b,0", "z,1"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        let p = Preprocessor::fit(&raw, &[0, 1, 2]).unwrap();
        let t = &p.columns[0];
        assert_eq!(t.encode(&raw.columns[0], 3), 1.0);
    }

    #[test]
    fn kfold_pigeonhole_and_stratification() {
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let folds = kfold_split(&labels, 10, 0.1, 3).unwrap();
        assert!(folds.iter().all(|f| f.test_indices.len() == 1));
        assert!(!folds[0].stratified);

        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        let folds = kfold_split(&labels, 10, 0.2, 3).unwrap();
        for f in &folds {
            assert!(f.stratified);
            let ones = f.test_indices.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!((f.test_indices.len() - ones, ones), (5, 5));
            assert_eq!(f.dev_indices.len(), 18);
            assert!(f.dev_indices.iter().all(|d| f.train_indices.contains(d)));
            assert_eq!(f.fit_indices().len(), 72);
        }
    }

    #[test]
    fn kfold_errors() {
        assert!(matches!(
            kfold_split(&[0, 1, 0], 10, 0.1, 0),
            Err(DataError::TooFewRows { .. })
        ));
        assert!(kfold_split(&[0; 20], 10, 0.0, 0).is_err());
    }

    #[test]
    fn frequency_encoding_uses_fit_row_shares() {
        let raw = RawDataset::from_cells(
            &header("c,y"),
            &cells(&["red,0", "blue,1", "red,0", "red,1", "green,0"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        let opts = PreprocessOptions {
            categorical_encoding: CategoricalEncoding::Frequency,
            max_features: None,
        };
        let p = Preprocessor::fit_with(&raw, &[0, 1, 2, 3], &opts).unwrap();
        // fit rows: red 3/4, blue 1/4; unseen green falls back to the mode (red)
        assert_eq!(p.columns[0].code_values, Some(vec![0.75, 0.25]));
        let out = p.transform(&raw);
        assert_eq!(out.features.get(4, 0), out.features.get(0, 0));
        assert!(out.features.get(1, 0) < out.features.get(0, 0));
    }

    #[test]
    fn feature_cap_keeps_highest_variance_columns_in_order() {
        let raw = RawDataset::from_cells(
            &header("flat,wide,mid,y"),
            &cells(&["1,0,0,0", "1,10,1,1", "1,-10,2,0", "1,5,-1,1"]),
            "y",
            &LoadOptions::default(),
        )
        .unwrap();
        let opts = PreprocessOptions {
            max_features: Some(2),
            ..Default::default()
        };
        let p = Preprocessor::fit_with(&raw, &[0, 1, 2, 3], &opts).unwrap();
        assert_eq!(p.selected, vec![1, 2]);
        let out = p.transform(&raw);
        assert_eq!(out.column_names, vec!["wide", "mid"]);
        assert_eq!(out.n_features(), 2);
    }
}
