//! CSV ingestion, schema-driven encoding and stratified splitting.
//!
//! Numeric columns are z-scored with train-split statistics, categorical
//! columns are one-hot encoded with a lexicographic vocabulary. The protected
//! attribute never enters the feature matrix; it only survives as the
//! [`Group`] vector.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into serialized dataset containers.
pub const CONTAINER_VERSION: u32 = 1;

/// Raw cell values treated as missing.
const MISSING_MARKERS: [&str; 3] = ["", "?", "NA"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub name: String,
    pub label_column: String,
    pub positive_label_value: String,
    pub protected_column: String,
    pub privileged_value: String,
    pub fair_feature_columns: Vec<String>,
    pub numeric_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    /// When set, only rows whose protected value is the privileged value or
    /// one of these survive; everything else is dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unprivileged_values: Option<Vec<String>>,
    /// Binarizes a numeric protected column before the privileged-value test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_threshold: Option<ProtectedThreshold>,
}

/// `value <= threshold` maps to `at_or_below`, everything else to `above`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectedThreshold {
    pub threshold: f64,
    pub at_or_below: String,
    pub above: String,
}

impl DatasetSchema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let features: BTreeSet<&str> = self
            .numeric_columns
            .iter()
            .chain(&self.categorical_columns)
            .map(String::as_str)
            .collect();
        if features.len() != self.numeric_columns.len() + self.categorical_columns.len() {
            return Err(Error::InvalidSchema(
                "a column is listed more than once among numeric/categorical columns".into(),
            ));
        }
        if self.fair_feature_columns.is_empty() {
            return Err(Error::InvalidSchema(
                "fair_feature_columns must not be empty".into(),
            ));
        }
        for col in &self.fair_feature_columns {
            if !features.contains(col.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "fair feature `{col}` is not a numeric or categorical feature column"
                )));
            }
        }
        if features.contains(self.protected_column.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "protected column `{}` must not be a model feature",
                self.protected_column
            )));
        }
        if features.contains(self.label_column.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "label column `{}` must not be a model feature",
                self.label_column
            )));
        }
        if self.label_column == self.protected_column {
            return Err(Error::InvalidSchema(
                "label and protected column must differ".into(),
            ));
        }
        for col in &self.drop_columns {
            if features.contains(col.as_str())
                || *col == self.label_column
                || *col == self.protected_column
            {
                return Err(Error::InvalidSchema(format!(
                    "dropped column `{col}` is also used by the schema"
                )));
            }
        }
        Ok(())
    }

    fn referenced_columns(&self) -> Vec<&str> {
        let mut cols = vec![self.label_column.as_str(), self.protected_column.as_str()];
        cols.extend(self.numeric_columns.iter().map(String::as_str));
        cols.extend(self.categorical_columns.iter().map(String::as_str));
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Privileged,
    Unprivileged,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::Privileged => Group::Unprivileged,
            Group::Unprivileged => Group::Privileged,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Privileged => "privileged",
            Group::Unprivileged => "unprivileged",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Everything needed to re-encode raw rows exactly as the loader did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub vocabulary: BTreeMap<String, Vec<String>>,
    pub zscore: BTreeMap<String, ZScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub split_seed: u64,
    pub split_fractions: [f64; 3],
    /// Stratified subsample of the cleaned rows, taken before splitting.
    pub max_rows: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            split_seed: 0,
            split_fractions: [0.6, 0.2, 0.2],
            max_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub group: Vec<Group>,
    pub fair_feature_names: Vec<String>,
    pub fair_features: Array2<f64>,
    pub split: Vec<Split>,
    pub encoding: Encoding,
    /// Rows dropped for missing values or excluded protected categories.
    pub dropped_rows: usize,
}

/// The rows of one split, with features copied out.
#[derive(Debug, Clone)]
pub struct SplitView {
    pub split: Split,
    pub rows: Vec<usize>,
    pub features: Array2<f64>,
    pub fair_features: Array2<f64>,
    pub labels: Vec<u8>,
    pub group: Vec<Group>,
}

impl TabularDataset {
    /// Assembles a dataset from already-encoded parts, checking shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        name: impl Into<String>,
        feature_names: Vec<String>,
        features: Array2<f64>,
        labels: Vec<u8>,
        group: Vec<Group>,
        fair_feature_names: Vec<String>,
        fair_features: Array2<f64>,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || group.len() != n || split.len() != n || fair_features.nrows() != n
        {
            return Err(Error::config("rows", "all per-row vectors must have equal length"));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::ShapeMismatch {
                expected: feature_names.len(),
                actual: features.ncols(),
            });
        }
        if fair_feature_names.len() != fair_features.ncols() {
            return Err(Error::ShapeMismatch {
                expected: fair_feature_names.len(),
                actual: fair_features.ncols(),
            });
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::config("labels", "labels must be 0 or 1"));
        }
        Ok(TabularDataset {
            name: name.into(),
            feature_names,
            features,
            labels,
            group,
            fair_feature_names,
            fair_features,
            split,
            encoding: Encoding::default(),
            dropped_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn view(&self, split: Split) -> SplitView {
        let rows = self.indices(split);
        SplitView {
            split,
            features: self.features.select(Axis(0), &rows),
            fair_features: self.fair_features.select(Axis(0), &rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            group: rows.iter().map(|&i| self.group[i]).collect(),
            rows,
        }
    }

    pub fn to_container(&self) -> DatasetContainer {
        DatasetContainer {
            format_version: CONTAINER_VERSION,
            name: self.name.clone(),
            n_rows: self.len(),
            feature_names: self.feature_names.clone(),
            features: self.features.outer_iter().map(|r| r.to_vec()).collect(),
            labels: self.labels.clone(),
            group: self.group.clone(),
            fair_feature_names: self.fair_feature_names.clone(),
            fair_features: self.fair_features.outer_iter().map(|r| r.to_vec()).collect(),
            split: self.split.clone(),
            encoding: self.encoding.clone(),
            dropped_rows: self.dropped_rows,
        }
    }

    /// Serializes to the versioned JSON container.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_container())?)
    }
}

/// Versioned JSON form of a [`TabularDataset`]; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetContainer {
    pub format_version: u32,
    pub name: String,
    pub n_rows: usize,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub group: Vec<Group>,
    pub fair_feature_names: Vec<String>,
    pub fair_features: Vec<Vec<f64>>,
    pub split: Vec<Split>,
    pub encoding: Encoding,
    pub dropped_rows: usize,
}

impl DatasetContainer {
    pub fn into_dataset(self) -> Result<TabularDataset> {
        if self.format_version != CONTAINER_VERSION {
            return Err(Error::config(
                "format_version",
                format!("unsupported container version {}", self.format_version),
            ));
        }
        let to_matrix = |rows: Vec<Vec<f64>>, width: usize| -> Result<Array2<f64>> {
            let n = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            Array2::from_shape_vec((n, width), flat)
                .map_err(|e| Error::config("features", e.to_string()))
        };
        let features = to_matrix(self.features, self.feature_names.len())?;
        let fair = to_matrix(self.fair_features, self.fair_feature_names.len())?;
        let mut ds = TabularDataset::from_parts(
            self.name,
            self.feature_names,
            features,
            self.labels,
            self.group,
            self.fair_feature_names,
            fair,
            self.split,
        )?;
        ds.encoding = self.encoding;
        ds.dropped_rows = self.dropped_rows;
        Ok(ds)
    }
}

pub fn load_dataset(
    csv_path: impl AsRef<Path>,
    schema: &DatasetSchema,
    split_seed: u64,
    split_fractions: [f64; 3],
) -> Result<TabularDataset> {
    load_dataset_with(
        csv_path,
        schema,
        &LoadOptions {
            split_seed,
            split_fractions,
            max_rows: None,
        },
    )
}

pub fn load_dataset_with(
    csv_path: impl AsRef<Path>,
    schema: &DatasetSchema,
    options: &LoadOptions,
) -> Result<TabularDataset> {
    let path = csv_path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_from_reader(file, schema, options)
}

/// Same as [`load_dataset_with`] but reads CSV text from any reader.
pub fn load_from_reader<R: std::io::Read>(
    reader: R,
    schema: &DatasetSchema,
    options: &LoadOptions,
) -> Result<TabularDataset> {
    schema.validate()?;
    validate_fractions(&options.split_fractions)?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    // First occurrence wins for duplicated header names.
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        position.entry(name).or_insert(i);
    }
    let mut column_index = HashMap::new();
    for col in schema.referenced_columns() {
        let idx = *position
            .get(col)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))?;
        column_index.insert(col.to_string(), idx);
    }
    let idx = |c: &str| column_index[c];

    let mut raw: Vec<csv::StringRecord> = Vec::new();
    let mut dropped_missing = 0usize;
    let mut dropped_protected = 0usize;
    let mut group = Vec::new();
    let mut label_values: BTreeSet<String> = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let missing = schema
            .referenced_columns()
            .iter()
            .any(|c| MISSING_MARKERS.contains(&record.get(idx(c)).unwrap_or("")));
        if missing {
            dropped_missing += 1;
            continue;
        }
        let protected_raw = &record[idx(&schema.protected_column)];
        let protected = match &schema.protected_threshold {
            Some(t) => {
                let v: f64 = protected_raw.parse().map_err(|_| Error::InvalidValue {
                    column: schema.protected_column.clone(),
                    row,
                    value: protected_raw.to_string(),
                })?;
                if v <= t.threshold {
                    t.at_or_below.clone()
                } else {
                    t.above.clone()
                }
            }
            None => protected_raw.to_string(),
        };
        let g = if protected == schema.privileged_value {
            Group::Privileged
        } else {
            match &schema.unprivileged_values {
                Some(allowed) if !allowed.contains(&protected) => {
                    dropped_protected += 1;
                    continue;
                }
                _ => Group::Unprivileged,
            }
        };
        label_values.insert(record[idx(&schema.label_column)].to_string());
        group.push(g);
        raw.push(record);
    }
    if dropped_missing > 0 {
        log::info!(
            "{}: dropped {dropped_missing} rows with missing values",
            schema.name
        );
    }
    if dropped_protected > 0 {
        log::info!(
            "{}: dropped {dropped_protected} rows outside the protected comparison set",
            schema.name
        );
    }
    if label_values.len() > 2 {
        return Err(Error::NonBinaryLabel {
            column: schema.label_column.clone(),
            distinct: label_values.len(),
        });
    }
    let labels: Vec<u8> = raw
        .iter()
        .map(|r| u8::from(r[idx(&schema.label_column)] == schema.positive_label_value))
        .collect();

    let strata: Vec<usize> = labels
        .iter()
        .zip(&group)
        .map(|(&y, &g)| stratum_id(g, y))
        .collect();
    for g in [Group::Privileged, Group::Unprivileged] {
        for y in [0u8, 1] {
            if !strata.contains(&stratum_id(g, y)) {
                return Err(Error::EmptyGroup(format!(
                    "no rows with group = {g} and label = {y}; cannot stratify"
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.split_seed);

    // Optional stratified subsample, before splitting.
    let keep: Vec<usize> = match options.max_rows {
        Some(m) if m < raw.len() => {
            let frac = m as f64 / raw.len() as f64;
            let part = stratified_assign(&strata, &[frac, 1.0 - frac], &mut rng);
            (0..raw.len()).filter(|&i| part[i] == 0).collect()
        }
        _ => (0..raw.len()).collect(),
    };
    let raw: Vec<csv::StringRecord> = keep.iter().map(|&i| raw[i].clone()).collect();
    let labels: Vec<u8> = keep.iter().map(|&i| labels[i]).collect();
    let group: Vec<Group> = keep.iter().map(|&i| group[i]).collect();
    let strata: Vec<usize> = keep.iter().map(|&i| strata[i]).collect();

    let part = stratified_assign(&strata, &options.split_fractions, &mut rng);
    let mut split: Vec<Split> = part.iter().map(|&k| Split::ALL[k]).collect();
    repair_coverage(&mut split, &labels, &group)?;

    // Encoding: vocabulary over all rows, z-score statistics over train only.
    let mut encoding = Encoding::default();
    for col in &schema.categorical_columns {
        let cats: BTreeSet<String> = raw.iter().map(|r| r[idx(col)].to_string()).collect();
        encoding
            .vocabulary
            .insert(col.clone(), cats.into_iter().collect());
    }
    let mut numeric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for col in &schema.numeric_columns {
        let mut values = Vec::with_capacity(raw.len());
        for (row, r) in raw.iter().enumerate() {
            let cell = &r[idx(col)];
            let v: f64 = cell.parse().map_err(|_| Error::InvalidValue {
                column: col.clone(),
                row,
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        let train: Vec<f64> = values
            .iter()
            .zip(&split)
            .filter(|(_, &s)| s == Split::Train)
            .map(|(&v, _)| v)
            .collect();
        encoding.zscore.insert(col.clone(), zscore_stats(&train));
        numeric.insert(col.as_str(), values);
    }

    let encode = |cols: &[&String]| -> (Vec<String>, Array2<f64>) {
        let mut names = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for col in cols {
            if let Some(values) = numeric.get(col.as_str()) {
                let z = encoding.zscore[col.as_str()];
                names.push((*col).clone());
                columns.push(values.iter().map(|&v| z.apply(v)).collect());
            } else {
                let vocab = &encoding.vocabulary[col.as_str()];
                for cat in vocab {
                    names.push(format!("{col}={cat}"));
                    columns.push(
                        raw.iter()
                            .map(|r| if &r[idx(col)] == cat { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
            }
        }
        let n = raw.len();
        let width = columns.len();
        let matrix = Array2::from_shape_fn((n, width), |(i, j)| columns[j][i]);
        (names, matrix)
    };

    let feature_cols: Vec<&String> = schema
        .numeric_columns
        .iter()
        .chain(&schema.categorical_columns)
        .collect();
    let fair_cols: Vec<&String> = feature_cols
        .iter()
        .copied()
        .filter(|c| schema.fair_feature_columns.contains(c))
        .collect();
    let (feature_names, features) = encode(&feature_cols);
    let (fair_feature_names, fair_features) = encode(&fair_cols);

    Ok(TabularDataset {
        name: schema.name.clone(),
        feature_names,
        features,
        labels,
        group,
        fair_feature_names,
        fair_features,
        split,
        encoding,
        dropped_rows: dropped_missing + dropped_protected,
    })
}

fn validate_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::config(
            "split_fractions",
            "each fraction must lie strictly between 0 and 1",
        ));
    }
    if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split_fractions", "fractions must sum to 1"));
    }
    Ok(())
}

fn stratum_id(g: Group, y: u8) -> usize {
    (g as usize) * 2 + y as usize
}

fn zscore_stats(values: &[f64]) -> ZScore {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    ZScore {
        mean,
        std: if std > 0.0 { std } else { 1.0 },
    }
}

/// Largest-remainder apportionment of `total` into parts.
fn apportion(total: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for k in order {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Assigns every row to a part so that part sizes match the apportioned
/// totals and each stratum is split as proportionally as integer counts
/// allow. Rows inside a stratum are shuffled with `rng`.
pub(crate) fn stratified_assign(
    strata: &[usize],
    fractions: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let parts = fractions.len();
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        members.entry(s).or_default().push(i);
    }
    let targets = apportion(strata.len(), fractions);
    let keys: Vec<usize> = members.keys().copied().collect();

    let mut alloc = vec![vec![0usize; parts]; keys.len()];
    let mut remaining = vec![0usize; keys.len()];
    let mut deficit = targets.clone();
    let mut candidates = Vec::new();
    for (si, key) in keys.iter().enumerate() {
        let n = members[key].len();
        for k in 0..parts {
            let ideal = n as f64 * fractions[k];
            alloc[si][k] = ideal.floor() as usize;
            deficit[k] -= alloc[si][k];
            candidates.push((ideal - ideal.floor(), si, k));
        }
        remaining[si] = n - alloc[si].iter().sum::<usize>();
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, si, k) in &candidates {
        if remaining[si] > 0 && deficit[k] > 0 {
            alloc[si][k] += 1;
            remaining[si] -= 1;
            deficit[k] -= 1;
        }
    }
    for si in 0..keys.len() {
        for k in 0..parts {
            let take = remaining[si].min(deficit[k]);
            alloc[si][k] += take;
            remaining[si] -= take;
            deficit[k] -= take;
        }
    }

    let mut assignment = vec![0usize; strata.len()];
    for (si, key) in keys.iter().enumerate() {
        let mut rows = members[key].clone();
        rows.shuffle(rng);
        let mut cursor = 0;
        for (k, &count) in alloc[si].iter().enumerate() {
            for &row in &rows[cursor..cursor + count] {
                assignment[row] = k;
            }
            cursor += count;
        }
    }
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Coverage {
    privileged: usize,
    unprivileged: usize,
    negative: usize,
    positive: usize,
}

impl Coverage {
    fn of(rows: impl Iterator<Item = (u8, Group)>) -> Self {
        let mut c = Coverage::default();
        for (y, g) in rows {
            c.add(y, g, 1);
        }
        c
    }

    fn add(&mut self, y: u8, g: Group, sign: isize) {
        let bump = |v: &mut usize| *v = (*v as isize + sign) as usize;
        match g {
            Group::Privileged => bump(&mut self.privileged),
            Group::Unprivileged => bump(&mut self.unprivileged),
        }
        if y == 1 {
            bump(&mut self.positive)
        } else {
            bump(&mut self.negative)
        }
    }

    fn missing(&self) -> usize {
        [self.privileged, self.unprivileged, self.negative, self.positive]
            .iter()
            .filter(|&&c| c == 0)
            .count()
    }
}

/// Swaps rows between splits until every split holds both groups and both
/// labels. Only needed for very small datasets where proportional rounding
/// leaves a split without some group or label.
fn repair_coverage(split: &mut [Split], labels: &[u8], group: &[Group]) -> Result<()> {
    let coverage = |split: &[Split], s: Split| {
        Coverage::of(
            (0..split.len())
                .filter(|&i| split[i] == s)
                .map(|i| (labels[i], group[i])),
        )
    };
    for _ in 0..64 {
        let Some(needy) = Split::ALL
            .into_iter()
            .find(|&s| coverage(split, s).missing() > 0)
        else {
            return Ok(());
        };
        let mut improved = false;
        'search: for donor in Split::ALL.into_iter().filter(|&s| s != needy) {
            let donors: Vec<usize> = (0..split.len()).filter(|&i| split[i] == donor).collect();
            let takers: Vec<usize> = (0..split.len()).filter(|&i| split[i] == needy).collect();
            for &r in &donors {
                for &q in &takers {
                    let mut need = coverage(split, needy);
                    let mut give = coverage(split, donor);
                    let before = need.missing() + give.missing();
                    need.add(labels[q], group[q], -1);
                    need.add(labels[r], group[r], 1);
                    give.add(labels[r], group[r], -1);
                    give.add(labels[q], group[q], 1);
                    if need.missing() + give.missing() < before {
                        split[r] = needy;
                        split[q] = donor;
                        improved = true;
                        break 'search;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    match Split::ALL
        .into_iter()
        .find(|&s| coverage(split, s).missing() > 0)
    {
        None => Ok(()),
        Some(s) => Err(Error::EmptyGroup(format!(
            "the {s} split cannot hold both groups and both labels"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCell {
    pub group: Group,
    pub label: u8,
    pub count: usize,
    /// Share of this label within the group.
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub total: usize,
    pub cells: Vec<ClassCell>,
    /// Groups with no rows at all.
    pub absent_groups: Vec<Group>,
}

impl ClassDistribution {
    pub fn from_labels(labels: &[u8], group: &[Group]) -> Self {
        let mut cells = Vec::new();
        let mut absent_groups = Vec::new();
        for g in [Group::Privileged, Group::Unprivileged] {
            let in_group: Vec<u8> = labels
                .iter()
                .zip(group)
                .filter(|(_, &gg)| gg == g)
                .map(|(&y, _)| y)
                .collect();
            if in_group.is_empty() {
                absent_groups.push(g);
                continue;
            }
            for y in [0u8, 1] {
                let count = in_group.iter().filter(|&&v| v == y).count();
                cells.push(ClassCell {
                    group: g,
                    label: y,
                    count,
                    proportion: count as f64 / in_group.len() as f64,
                });
            }
        }
        ClassDistribution {
            total: labels.len(),
            cells,
            absent_groups,
        }
    }

    pub fn cell(&self, group: Group, label: u8) -> Option<&ClassCell> {
        self.cells
            .iter()
            .find(|c| c.group == group && c.label == label)
    }

    pub fn group_count(&self, group: Group) -> usize {
        self.cells
            .iter()
            .filter(|c| c.group == group)
            .map(|c| c.count)
            .sum()
    }
}

pub fn class_distribution(ds: &TabularDataset) -> ClassDistribution {
    ClassDistribution::from_labels(&ds.labels, &ds.group)
}
