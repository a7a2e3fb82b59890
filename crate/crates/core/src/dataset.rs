//! Tabular data, mini-batches and the coefficient initialization range.

use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Feature matrix stored column-major, plus targets.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

impl DataMatrix {
    /// Builds a matrix from row-major feature values.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<DataMatrix> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::config(format!("row {i} has {} features, expected {d}", row.len())));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        let names = (1..=d).map(|j| format!("x{j}")).collect();
        DataMatrix::from_columns(columns, y, names)
    }

    pub fn from_columns(columns: Vec<Vec<f64>>, y: Vec<f64>, feature_names: Vec<String>) -> Result<DataMatrix> {
        if y.is_empty() {
            return Err(Error::config("no observations"));
        }
        if columns.is_empty() {
            return Err(Error::config("no feature columns"));
        }
        if feature_names.len() != columns.len() {
            return Err(Error::config("feature name count does not match column count"));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != y.len() {
                return Err(Error::config(format!("feature column {j} has {} rows, targets have {}", col.len(), y.len())));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::config(format!("non-finite value at row {i}, column `{}`", feature_names[j])));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite target at row {i}")));
        }
        Ok(DataMatrix {
            columns,
            y,
            feature_names,
        })
    }

    /// Reads a headered CSV; `target` names the column moved into `y`.
    pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<DataMatrix> {
        let path = path.as_ref();
        let load_err = |message: String| Error::Load {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        let headers = reader
            .headers()
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?
            .clone();
        let target_col = headers
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| load_err(format!("target column `{target}` not found")))?;
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != target_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut columns = vec![Vec::new(); feature_names.len()];
        let mut y = Vec::new();
        for (i, record) in reader.records().enumerate() {
            // header is line 1
            let line = i + 2;
            let record = record.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let mut feature = 0;
            for (j, field) in record.iter().enumerate() {
                let column = &headers[j];
                let value: f64 = field
                    .parse()
                    .map_err(|_| load_err(format!("line {line}, column `{column}`: `{field}` is not a number")))?;
                if !value.is_finite() {
                    return Err(load_err(format!("line {line}, column `{column}`: non-finite value `{field}`")));
                }
                if j == target_col {
                    y.push(value);
                } else {
                    columns[feature].push(value);
                    feature += 1;
                }
            }
        }
        if y.is_empty() {
            return Err(load_err("no observations".to_string()));
        }
        if feature_names.is_empty() {
            return Err(load_err("no feature columns besides the target".to_string()));
        }
        DataMatrix::from_columns(columns, y, feature_names).map_err(|e| load_err(e.to_string()))
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Largest absolute feature value over the whole matrix.
    pub fn coefficient_scale(&self) -> f64 {
        self.columns
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Copies the given rows into a contiguous batch tagged with `stamp`.
    pub fn gather(&self, rows: &[usize], stamp: u64) -> Batch {
        Batch {
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).collect())
                .collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            stamp,
        }
    }

    /// The whole matrix as one batch.
    pub fn as_batch(&self, stamp: u64) -> Batch {
        Batch {
            columns: self.columns.clone(),
            y: self.y.clone(),
            stamp,
        }
    }

    pub fn select(&self, rows: &[usize]) -> DataMatrix {
        let batch = self.gather(rows, 0);
        DataMatrix {
            columns: batch.columns,
            y: batch.y,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Seeded shuffle split; `test_fraction` of the rows go to the second part.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(DataMatrix, DataMatrix)> {
        if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
            return Err(Error::config(format!("test fraction {test_fraction} outside (0, 1)")));
        }
        let n = self.n_rows();
        let n_test = ((n as f64) * test_fraction).round() as usize;
        if n_test == 0 || n_test >= n {
            return Err(Error::config(format!("cannot split {n} rows with test fraction {test_fraction}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (test, train) = idx.split_at(n_test);
        Ok((self.select(train), self.select(test)))
    }
}

/// Contiguous copy of some rows, tagged with the generation it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub columns: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub stamp: u64,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Draws a fresh mini-batch every generation.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    batch_size: usize,
    seed: u64,
}

impl BatchSampler {
    pub fn new(batch_size: usize, seed: u64) -> BatchSampler {
        BatchSampler { batch_size, seed }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Uniform sample without replacement when the training set is larger
    /// than the batch size, otherwise every row in order.
    pub fn resample(&self, n_train: usize, generation: u64) -> Vec<usize> {
        if n_train <= self.batch_size {
            return (0..n_train).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[0xba7c, generation]));
        sample(&mut rng, n_train, self.batch_size).into_vec()
    }
}
