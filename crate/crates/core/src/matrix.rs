//! Dense row-major feature matrix with named, provenance-tagged columns.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Which featurizer produced a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Structured,
    Bow,
    Tfidf,
    Word2vec,
    Lda,
    Bertopic,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Structured => "structured",
            Provenance::Bow => "bow",
            Provenance::Tfidf => "tfidf",
            Provenance::Word2vec => "word2vec",
            Provenance::Lda => "lda",
            Provenance::Bertopic => "bertopic",
            Provenance::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("matrix data has {got} values, expected {rows} x {cols}")]
    Shape { rows: usize, cols: usize, got: usize },
    #[error("row count mismatch: {left} vs {right}")]
    RowMismatch { left: usize, right: usize },
    #[error("{0} column names for {1} columns")]
    Names(usize, usize),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    names: Vec<String>,
    provenance: Vec<Provenance>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        n_rows: usize,
        names: Vec<String>,
        provenance: Vec<Provenance>,
        data: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        let cols = names.len();
        if provenance.len() != cols {
            return Err(MatrixError::Names(provenance.len(), cols));
        }
        if data.len() != n_rows * cols {
            return Err(MatrixError::Shape { rows: n_rows, cols, got: data.len() });
        }
        Ok(Self { n_rows, names, provenance, data })
    }

    /// Build from row vectors, naming columns `f0, f1, ...`.
    ///
    /// Panics if rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let names = (0..cols).map(|j| format!("f{j}")).collect();
        Self::from_rows_named(rows, names, Provenance::Synthetic)
    }

    pub fn from_rows_named(rows: &[Vec<f64>], names: Vec<String>, provenance: Provenance) -> Self {
        let cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { n_rows: rows.len(), provenance: vec![provenance; cols], names, data }
    }

    /// An `n_rows x 0` matrix, the identity for [`FeatureMatrix::hstack`].
    pub fn empty(n_rows: usize) -> Self {
        Self { n_rows, names: Vec::new(), provenance: Vec::new(), data: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Concatenate columns of `other` to the right of `self`.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, MatrixError> {
        if self.n_rows != other.n_rows {
            return Err(MatrixError::RowMismatch { left: self.n_rows, right: other.n_rows });
        }
        let cols = self.n_cols() + other.n_cols();
        let mut data = Vec::with_capacity(self.n_rows * cols);
        for i in 0..self.n_rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut provenance = self.provenance.clone();
        provenance.extend(other.provenance.iter().copied());
        Ok(FeatureMatrix { n_rows: self.n_rows, names, provenance, data })
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: rows.len(),
            names: self.names.clone(),
            provenance: self.provenance.clone(),
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            n_rows: self.n_rows,
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            provenance: cols.iter().map(|&j| self.provenance[j]).collect(),
            data,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MatrixError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = self.names.iter().map(|n| csv_field(n)).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a matrix written by [`FeatureMatrix::write_csv`]. Provenance is
    /// recovered from the column-name prefixes.
    pub fn read_csv(path: &Path) -> Result<FeatureMatrix, MatrixError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| MatrixError::Csv(e.to_string()))?;
        let names: Vec<String> =
            reader.headers().map_err(|e| MatrixError::Csv(e.to_string()))?.iter().map(str::to_string).collect();
        let mut data = Vec::new();
        let mut n_rows = 0;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
            for field in rec.iter() {
                data.push(field.parse::<f64>().map_err(|e| MatrixError::Csv(format!("row {}: {e}", i + 1)))?);
            }
            n_rows += 1;
        }
        let provenance = names.iter().map(|n| provenance_of(n)).collect();
        FeatureMatrix::new(n_rows, names, provenance, data)
    }
}

/// Featurizer of a column, judged by its name.
pub fn provenance_of(name: &str) -> Provenance {
    if name.starts_with("bow:") {
        Provenance::Bow
    } else if name.starts_with("tfidf:") {
        Provenance::Tfidf
    } else if name.starts_with("embedding_") {
        Provenance::Word2vec
    } else if name.starts_with("lda_topic_") {
        Provenance::Lda
    } else if name.starts_with("bertopic_") {
        Provenance::Bertopic
    } else {
        Provenance::Structured
    }
}

/// Quote a CSV field if needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
