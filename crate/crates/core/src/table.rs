//! Column-major numeric feature table shared by every module.

use crate::error::{Error, Result};

/// A named, column-major table of f64 features. Every column has the same
/// number of rows and a unique name; all values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureTable {
    /// Builds a table from parallel name and column vectors.
    ///
    /// Fails on duplicate names, ragged columns, or non-finite values. An
    /// empty table (zero columns) is allowed only with an explicit row count
    /// via [`FeatureTable::with_rows`].
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                context: "feature table names vs columns",
                left: names.len(),
                right: columns.len(),
            });
        }
        if columns.is_empty() {
            return Err(Error::EmptyInput("feature table columns"));
        }
        let n_rows = columns[0].len();
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::LengthMismatch {
                    context: "feature table column lengths",
                    left: n_rows,
                    right: col.len(),
                });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in column '{name}'"
                )));
            }
        }
        let mut seen = names.clone();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(
                "duplicate column name in feature table".into(),
            ));
        }
        Ok(Self {
            names,
            columns,
            n_rows,
        })
    }

    /// An empty table with a fixed row count, ready for `push_column`.
    pub fn with_rows(n_rows: usize) -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
            n_rows,
        }
    }

    /// Appends a column, enforcing the table's row count and name uniqueness.
    pub fn push_column(&mut self, name: impl Into<String>, column: Vec<f64>) -> Result<()> {
        let name = name.into();
        if column.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                context: "push_column",
                left: self.n_rows,
                right: column.len(),
            });
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value in column '{name}'"
            )));
        }
        if self.names.iter().any(|n| *n == name) {
            return Err(Error::InvalidInput(format!("duplicate column '{name}'")));
        }
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Column by name, if present.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Column by position.
    pub fn column_at(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    /// A freshly allocated row vector in column order.
    pub fn row(&self, index: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[index]).collect()
    }

    /// New table containing only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureTable> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let col = self
                .column(name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            columns.push(col.to_vec());
        }
        FeatureTable::new(names.to_vec(), columns)
    }

    /// New table containing only the given rows (indices may repeat, so this
    /// also serves bootstrap resampling).
    pub fn take_rows(&self, rows: &[usize]) -> FeatureTable {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        FeatureTable {
            names: self.names.clone(),
            columns,
            n_rows: rows.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> FeatureTable {
        FeatureTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap()
    }

    #[test]
    fn basic_accessors() {
        let t = table();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.column("b"), Some(&[4.0, 5.0, 6.0][..]));
        assert_eq!(t.column("c"), None);
        assert_eq!(t.row(1), vec![2.0, 5.0]);
    }

    #[test]
    fn rejects_ragged_duplicate_and_non_finite() {
        assert!(FeatureTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0], vec![1.0, 2.0]]
        )
        .is_err());
        assert!(FeatureTable::new(
            vec!["a".into(), "a".into()],
            vec![vec![1.0], vec![2.0]]
        )
        .is_err());
        assert!(FeatureTable::new(vec!["a".into()], vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn select_and_take_rows() {
        let t = table();
        let s = t.select(&["b".into()]).unwrap();
        assert_eq!(s.n_cols(), 1);
        assert_eq!(s.column_at(0), &[4.0, 5.0, 6.0]);
        assert!(t.select(&["nope".into()]).is_err());

        let r = t.take_rows(&[2, 0, 0]);
        assert_eq!(r.column("a"), Some(&[3.0, 1.0, 1.0][..]));
    }
}
