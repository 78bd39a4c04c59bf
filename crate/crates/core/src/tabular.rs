//! Typed tabular data: column schemas, CSV ingestion with level encoding and
//! min–max normalization, splitting and covariance.
//!
//! Every cell is stored as an `f64`. Categorical cells hold the index of their
//! level in the schema's declared order; numeric cells hold the normalized
//! value when the column carries normalization bounds.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{Error, Result};

/// Cell tokens treated as missing during ingestion.
const MISSING_TOKENS: [&str; 4] = ["", "NA", "N/A", "NaN"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<(f64, f64)>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>, normalization: Option<(f64, f64)>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
            normalization,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            levels: levels.into_iter().map(Into::into).collect(),
            normalization: None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ColumnKind::Categorical => {
                if self.levels.is_empty() {
                    return Err(Error::Schema(format!("categorical column `{}` has no levels", self.name)));
                }
                let mut seen = std::collections::HashSet::new();
                for level in &self.levels {
                    if level.is_empty() || !seen.insert(level) {
                        return Err(Error::Schema(format!(
                            "column `{}` has an empty or duplicate level `{level}`",
                            self.name
                        )));
                    }
                }
                if self.normalization.is_some() {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` cannot carry normalization",
                        self.name
                    )));
                }
            }
            ColumnKind::Numeric => {
                if !self.levels.is_empty() {
                    return Err(Error::Schema(format!("numeric column `{}` cannot declare levels", self.name)));
                }
                if let Some((lo, hi)) = self.normalization {
                    if !(lo < hi) {
                        return Err(Error::Schema(format!(
                            "column `{}` normalization requires min < max, got ({lo}, {hi})",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Encoded value → raw value or label.
    pub fn decode(&self, value: f64) -> String {
        match self.kind {
            ColumnKind::Categorical => self
                .levels
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("<invalid {value}>")),
            ColumnKind::Numeric => match self.normalization {
                Some((lo, hi)) => format!("{}", value * (hi - lo) + lo),
                None => format!("{value}"),
            },
        }
    }

    fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }
}

/// A schema document: column specs in dataset order plus the missing-value
/// policy (column name → level label substituted for missing cells).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub missing_policy: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct SchemaFile {
    columns: Vec<SchemaColumn>,
}

#[derive(Deserialize)]
struct SchemaColumn {
    name: String,
    kind: ColumnKind,
    #[serde(default)]
    levels: Vec<String>,
    normalization: Option<[f64; 2]>,
    missing: Option<String>,
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Parse {
            what: "schema file",
            message: e.to_string(),
        })?;
        let mut schema = Schema::default();
        for c in file.columns {
            if let Some(level) = c.missing {
                schema.missing_policy.insert(c.name.clone(), level);
            }
            schema.columns.push(ColumnSpec {
                name: c.name,
                kind: c.kind,
                levels: c.levels,
                normalization: c.normalization.map(|[lo, hi]| (lo, hi)),
            });
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for c in &self.columns {
            c.validate()?;
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        for (col, level) in &self.missing_policy {
            let spec = self
                .columns
                .iter()
                .find(|c| &c.name == col)
                .ok_or_else(|| Error::UnknownColumn(col.clone()))?;
            if spec.level_index(level).is_none() {
                return Err(Error::Schema(format!(
                    "missing policy for `{col}` names undeclared level `{level}`"
                )));
            }
        }
        Ok(())
    }
}

/// Immutable typed table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    values: Vec<f64>,
    n_rows: usize,
}

impl Dataset {
    /// Builds a dataset from already-encoded row-major values, checking the
    /// cell invariants.
    pub fn new(columns: Vec<ColumnSpec>, values: Vec<f64>) -> Result<Self> {
        for c in &columns {
            c.validate()?;
        }
        let p = columns.len();
        if p == 0 {
            return Err(Error::Data("dataset needs at least one column".into()));
        }
        if values.len() % p != 0 {
            return Err(Error::Data(format!(
                "{} cells do not fill rows of {p} columns",
                values.len()
            )));
        }
        let n_rows = values.len() / p;
        for (idx, &v) in values.iter().enumerate() {
            let c = &columns[idx % p];
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite cell in `{}`", c.name)));
            }
            if c.is_categorical() && (v < 0.0 || v.fract() != 0.0 || v as usize >= c.n_levels()) {
                return Err(Error::Data(format!(
                    "cell {v} is not a level index of `{}` ({} levels)",
                    c.name,
                    c.n_levels()
                )));
            }
        }
        Ok(Dataset { columns, values, n_rows })
    }

    /// Builds from column vectors (all the same length).
    pub fn from_columns(columns: Vec<ColumnSpec>, data: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != data.len() {
            return Err(Error::Data("column spec / data count mismatch".into()));
        }
        let n = data.first().map_or(0, Vec::len);
        if data.iter().any(|c| c.len() != n) {
            return Err(Error::Data("columns differ in length".into()));
        }
        let p = data.len();
        let mut values = vec![0.0; n * p];
        for (j, col) in data.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * p + j] = v;
            }
        }
        Dataset::new(columns, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn spec(&self, name: &str) -> Result<&ColumnSpec> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.columns.len();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.columns.len())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.columns.len() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.column_index(name)?))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            columns: self.columns.clone(),
            values,
            n_rows: rows.len(),
        }
    }

    pub fn select_columns(&self, names: &[&str]) -> Result<Dataset> {
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n)).collect::<Result<_>>()?;
        let columns = idx.iter().map(|&j| self.columns[j].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows * idx.len());
        for r in self.rows() {
            values.extend(idx.iter().map(|&j| r[j]));
        }
        Ok(Dataset {
            columns,
            values,
            n_rows: self.n_rows,
        })
    }

    /// Copy of the dataset with one column's cells replaced.
    pub fn with_column(&self, j: usize, cells: &[f64]) -> Result<Dataset> {
        if cells.len() != self.n_rows {
            return Err(Error::Data("replacement column has the wrong length".into()));
        }
        let mut values = self.values.clone();
        let p = self.n_cols();
        for (i, &v) in cells.iter().enumerate() {
            values[i * p + j] = v;
        }
        Dataset::new(self.columns.clone(), values)
    }

    /// Row-wise concatenation of datasets sharing the same columns.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let mut values = Vec::new();
        let mut n_rows = 0;
        for part in parts {
            if part.columns != first.columns {
                return Err(Error::Data("cannot concatenate datasets with different schemas".into()));
            }
            values.extend_from_slice(&part.values);
            n_rows += part.n_rows;
        }
        Ok(Dataset {
            columns: first.columns.clone(),
            values,
            n_rows,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in self.rows() {
            w.write_record(r.iter().zip(&self.columns).map(|(&v, c)| c.decode(v)))?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads a CSV file and encodes it against `schema`.
pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Data("empty file".into()));
    }
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        let h = h.trim();
        if !schema.columns.iter().any(|c| c.name == h) {
            return Err(Error::UnknownColumn(h.to_string()));
        }
        position.insert(h, i);
    }
    let source: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| {
            position
                .get(c.name.as_str())
                .copied()
                .ok_or_else(|| Error::Schema(format!("column `{}` not present in the file header", c.name)))
        })
        .collect::<Result<_>>()?;

    let p = schema.columns.len();
    let mut raw = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        for (spec, &src) in schema.columns.iter().zip(&source) {
            let cell = record.get(src).unwrap_or("").trim();
            let missing = MISSING_TOKENS.contains(&cell);
            let v = match spec.kind {
                ColumnKind::Categorical => {
                    let label = if missing {
                        schema.missing_policy.get(&spec.name).map(String::as_str).ok_or_else(|| {
                            Error::Data(format!(
                                "row {}: missing `{}` without a missing-value policy",
                                line + 1,
                                spec.name
                            ))
                        })?
                    } else {
                        cell
                    };
                    spec.level_index(label).ok_or_else(|| {
                        Error::Data(format!("row {}: `{label}` is not a level of `{}`", line + 1, spec.name))
                    })? as f64
                }
                ColumnKind::Numeric => cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Data(format!("row {}: cannot parse `{cell}` in numeric `{}`", line + 1, spec.name))
                })?,
            };
            raw.push(v);
        }
    }
    if raw.is_empty() {
        return Err(Error::Data("empty file".into()));
    }

    let mut columns = schema.columns.clone();
    let n = raw.len() / p;
    for (j, spec) in columns.iter_mut().enumerate() {
        if spec.kind != ColumnKind::Numeric {
            continue;
        }
        let bounds = match spec.normalization {
            Some(b) => Some(b),
            None => {
                // Learn bounds from this (training) file.
                let col = (0..n).map(|i| raw[i * p + j]);
                let lo = col.clone().fold(f64::INFINITY, f64::min);
                let hi = col.fold(f64::NEG_INFINITY, f64::max);
                (lo < hi).then_some((lo, hi))
            }
        };
        spec.normalization = bounds;
        if let Some((lo, hi)) = bounds {
            for i in 0..n {
                let cell = &mut raw[i * p + j];
                let z = (*cell - lo) / (hi - lo);
                if !(0.0..=1.0).contains(&z) {
                    return Err(Error::Data(format!(
                        "row {}: `{}` = {} lies outside its normalization range [{lo}, {hi}]",
                        i + 1,
                        spec.name,
                        *cell
                    )));
                }
                *cell = z;
            }
        }
    }
    Dataset::new(columns, raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub stratify_on: Option<String>,
}

/// Seeded train/validation partition. With `stratify_on`, each level of that
/// column is split separately so both parts keep its proportions.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if ds.n_rows() < 10 {
        return Err(Error::Data(format!("split needs at least 10 rows, got {}", ds.n_rows())));
    }
    let strata: Vec<Vec<usize>> = match &spec.stratify_on {
        None => vec![(0..ds.n_rows()).collect()],
        Some(name) => {
            let j = ds.column_index(name)?;
            let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for i in 0..ds.n_rows() {
                groups.entry(ds.value(i, j).to_bits()).or_default().push(i);
            }
            if let Some(small) = groups.values().find(|g| g.len() < 2) {
                return Err(Error::Data(format!(
                    "stratum of `{name}` containing row {} has fewer than 2 rows",
                    small[0]
                )));
            }
            groups.into_values().collect()
        }
    };

    let mut rng = stats::rng_for(spec.seed, 0x5117);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for mut group in strata {
        group.shuffle(&mut rng);
        let k = (spec.train_fraction * group.len() as f64).round() as usize;
        train.extend_from_slice(&group[..k]);
        valid.extend_from_slice(&group[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((ds.select_rows(&train), ds.select_rows(&valid)))
}

#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Columns with zero sample variance.
    pub zero_variance: Vec<String>,
}

/// Unbiased (N−1) sample covariance of the encoded representation.
pub fn covariance_matrix(ds: &Dataset) -> Result<CovarianceMatrix> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::Data("covariance needs at least 2 rows".into()));
    }
    let p = ds.n_cols();
    let mut means = vec![0.0; p];
    for r in ds.rows() {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(p, p);
    let mut centered = vec![0.0; p];
    for r in ds.rows() {
        for j in 0..p {
            centered[j] = r[j] - means[j];
        }
        for a in 0..p {
            for b in a..p {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let zero_variance = (0..p)
        .filter(|&j| cov[(j, j)] <= 0.0)
        .map(|j| ds.columns()[j].name.clone())
        .collect();
    Ok(CovarianceMatrix {
        names: ds.columns().iter().map(|c| c.name.clone()).collect(),
        matrix: cov,
        zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn osmi_like_schema() -> Schema {
        Schema::from_toml_str(
            r#"
            [[columns]]
            name = "Age"
            kind = "numeric"
            normalization = [18, 72]

            [[columns]]
            name = "work_interfere"
            kind = "categorical"
            levels = ["No answer", "Never", "Rarely", "Sometimes", "Often"]
            missing = "No answer"

            [[columns]]
            name = "treatment"
            kind = "categorical"
            levels = ["No", "Yes"]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn blank_work_interfere_becomes_no_answer() {
        let csv = "Age,work_interfere,treatment\n30,,No\n45,Often,Yes\n";
        let ds = ingest_reader(csv.as_bytes(), &osmi_like_schema()).unwrap();
        assert_eq!(ds.value(0, 1), 0.0);
        assert_eq!(ds.value(1, 1), 4.0);
    }

    #[test]
    fn age_normalization() {
        let csv = "Age,work_interfere,treatment\n18,Never,No\n45,Never,No\n72,Never,Yes\n";
        let ds = ingest_reader(csv.as_bytes(), &osmi_like_schema()).unwrap();
        assert_eq!(ds.value(0, 0), 0.0);
        assert_eq!(ds.value(1, 0), 0.5);
        assert_eq!(ds.value(2, 0), 1.0);
        assert_eq!(ds.columns()[0].decode(ds.value(1, 0)), "45");
    }

    #[test]
    fn single_row_lower_bound() {
        let csv = "Age,work_interfere,treatment\n18,Rarely,No\n";
        let ds = ingest_reader(csv.as_bytes(), &osmi_like_schema()).unwrap();
        assert_eq!(ds.n_rows(), 1);
        assert_eq!(ds.value(0, 0), 0.0);
    }

    #[test]
    fn ingestion_errors() {
        let schema = osmi_like_schema();
        let unknown = "Age,work_interfere,treatment,extra\n18,Never,No,1\n";
        assert!(matches!(
            ingest_reader(unknown.as_bytes(), &schema),
            Err(Error::UnknownColumn(c)) if c == "extra"
        ));
        let missing_no_policy = "Age,work_interfere,treatment\n18,Never,\n";
        assert!(ingest_reader(missing_no_policy.as_bytes(), &schema).is_err());
        let bad_number = "Age,work_interfere,treatment\nold,Never,No\n";
        assert!(ingest_reader(bad_number.as_bytes(), &schema).is_err());
        assert!(ingest_reader("".as_bytes(), &schema).is_err());
        assert!(ingest_reader("Age,work_interfere,treatment\n".as_bytes(), &schema).is_err());
        let out_of_range = "Age,work_interfere,treatment\n90,Never,No\n";
        assert!(ingest_reader(out_of_range.as_bytes(), &schema).is_err());
    }

    #[test]
    fn schema_invariants() {
        assert!(ColumnSpec::categorical("x", ["a", "a"]).validate().is_err());
        assert!(ColumnSpec::categorical("x", Vec::<String>::new()).validate().is_err());
        assert!(ColumnSpec::numeric("x", Some((1.0, 1.0))).validate().is_err());
        assert!(ColumnSpec::numeric("x", Some((0.0, 1.0))).validate().is_ok());
    }

    #[test]
    fn bounds_learned_when_absent() {
        let schema = Schema {
            columns: vec![ColumnSpec::numeric("x", None)],
            missing_policy: BTreeMap::new(),
        };
        let ds = ingest_reader("x\n2\n4\n3\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.columns()[0].normalization, Some((2.0, 4.0)));
        assert_eq!(ds.column(0), vec![0.0, 1.0, 0.5]);
    }

    fn binary_dataset(n: usize) -> Dataset {
        let cols = vec![ColumnSpec::numeric("x", None), ColumnSpec::categorical("y", ["0", "1"])];
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        Dataset::from_columns(cols, &[x, y]).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = binary_dataset(100);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 7,
            stratify_on: None,
        };
        let (a, b) = split(&ds, &spec).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (80, 20));
        let (a2, b2) = split(&ds, &spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);

        let mut all: Vec<f64> = a.column(0).into_iter().chain(b.column(0)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.column(0));
    }

    #[test]
    fn stratified_split_keeps_balance() {
        let ds = binary_dataset(101);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 3,
            stratify_on: Some("y".into()),
        };
        let (a, b) = split(&ds, &spec).unwrap();
        for part in [&a, &b] {
            let ones = part.column(1).iter().filter(|&&v| v == 1.0).count() as f64;
            let expected = part.n_rows() as f64 * 50.0 / 101.0;
            assert!((ones - expected).abs() <= 1.0, "{ones} vs {expected}");
        }
    }

    #[test]
    fn split_errors() {
        let ds = binary_dataset(9);
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratify_on: None,
        };
        assert!(split(&ds, &spec).is_err());
        let ds = binary_dataset(20);
        let bad = SplitSpec {
            stratify_on: Some("nope".into()),
            ..spec.clone()
        };
        assert!(split(&ds, &bad).is_err());
        let bad_frac = SplitSpec {
            train_fraction: 1.0,
            ..spec
        };
        assert!(split(&ds, &bad_frac).is_err());

        let cols = vec![ColumnSpec::categorical("y", ["0", "1"])];
        let mut y = vec![0.0; 12];
        y[0] = 1.0;
        let lone = Dataset::from_columns(cols, &[y]).unwrap();
        let strat = SplitSpec {
            train_fraction: 0.5,
            seed: 0,
            stratify_on: Some("y".into()),
        };
        assert!(split(&lone, &strat).is_err());
    }

    #[test]
    fn covariance_identical_columns() {
        let cols = vec![ColumnSpec::numeric("a", None), ColumnSpec::numeric("b", None)];
        let a = vec![1.0, 2.0, 4.0, 7.0];
        let ds = Dataset::from_columns(cols, &[a.clone(), a.clone()]).unwrap();
        let cov = covariance_matrix(&ds).unwrap();
        let var = stats::variance(&a, 1);
        assert!((cov.matrix[(0, 1)] - var).abs() < 1e-12);
        assert!((cov.matrix[(0, 0)] - var).abs() < 1e-12);
        assert!(cov.zero_variance.is_empty());
    }

    #[test]
    fn covariance_flags_constant_column() {
        let cols = vec![ColumnSpec::numeric("a", None), ColumnSpec::numeric("c", None)];
        let ds = Dataset::from_columns(cols, &[vec![1.0, 2.0, 3.0], vec![5.0; 3]]).unwrap();
        let cov = covariance_matrix(&ds).unwrap();
        assert_eq!(cov.zero_variance, vec!["c".to_string()]);
    }

    #[test]
    fn covariance_of_independent_coins_vanishes() {
        use rand::Rng;
        let n = 20_000;
        let mut rng = stats::rng_for(11, 0);
        let a: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let b: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let cols = vec![ColumnSpec::numeric("a", None), ColumnSpec::numeric("b", None)];
        let ds = Dataset::from_columns(cols, &[a, b]).unwrap();
        let cov = covariance_matrix(&ds).unwrap();
        assert!(cov.matrix[(0, 1)].abs() < 3.0 / (n as f64).sqrt());
    }
}
