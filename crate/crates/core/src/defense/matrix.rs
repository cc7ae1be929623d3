use serde::{Deserialize, Serialize};

use super::DefenseError;

/// Dense row-major matrix of feature vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DefenseError> {
        if data.len() != rows * cols {
            return Err(DefenseError::DimensionMismatch {
                id: format!("<{rows}x{cols} matrix>"),
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DefenseError::InvalidParameter("non-finite feature value".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DefenseError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(DefenseError::DimensionMismatch {
                    id: format!("row {i}"),
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// The first `k` columns.
    pub fn leading_columns(&self, k: usize) -> FeatureMatrix {
        let k = k.min(self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for r in self.iter_rows() {
            data.extend_from_slice(&r[..k]);
        }
        FeatureMatrix {
            rows: self.rows,
            cols: k,
            data,
        }
    }

    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix, DefenseError> {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(DefenseError::DimensionMismatch {
                    id: "<stacked matrix>".into(),
                    expected: cols,
                    found: p.cols,
                });
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(FeatureMatrix { rows, cols, data })
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Feature vectors keyed by sample id, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub matrix: FeatureMatrix,
    index: std::collections::HashMap<String, usize>,
}

impl FeatureSet {
    pub fn new(ids: Vec<String>, matrix: FeatureMatrix) -> Result<Self, DefenseError> {
        if ids.len() != matrix.rows() {
            return Err(DefenseError::InvalidParameter(format!(
                "{} ids for {} rows",
                ids.len(),
                matrix.rows()
            )));
        }
        let mut index = std::collections::HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(DefenseError::InvalidParameter(format!("duplicate id {id:?}")));
            }
        }
        Ok(Self { ids, matrix, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.matrix.row(i))
    }

    /// Rows for `ids` in the given order.
    pub fn gather<S: AsRef<str>>(&self, ids: &[S]) -> Result<FeatureMatrix, DefenseError> {
        let idx = ids
            .iter()
            .map(|id| {
                self.position(id.as_ref())
                    .ok_or_else(|| DefenseError::UnknownId(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.matrix.select(&idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_and_access() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), [3.0, 4.0]);
        assert_eq!(m.select(&[1, 0]).row(0), [3.0, 4.0]);
        assert_eq!(m.leading_columns(1).as_slice(), [1.0, 3.0]);
        assert!(FeatureMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(FeatureMatrix::new(1, 1, vec![f64::NAN]).is_err());
        let s = FeatureSet::new(vec!["a".into(), "b".into()], m).unwrap();
        assert_eq!(s.get("b").unwrap(), [3.0, 4.0]);
        assert!(matches!(s.gather(&["zz"]), Err(DefenseError::UnknownId(_))));
    }
}
