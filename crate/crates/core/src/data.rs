use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations `(t_i, y_i)` with strictly increasing times. Missing
/// observations are absent rows; spacing may be irregular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    ts: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(ts: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if ts.len() != ys.len() {
            return Err(Error::LengthMismatch {
                expected: ts.len(),
                got: ys.len(),
            });
        }
        if let Some(i) = ts.iter().chain(&ys).position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite value at position {}", i % ts.len().max(1))));
        }
        if let Some(i) = ts.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidData(format!(
                "times must be strictly increasing (t[{}] = {} >= t[{}] = {})",
                i,
                ts[i],
                i + 1,
                ts[i + 1]
            )));
        }
        Ok(Dataset { ts, ys })
    }

    pub fn empty() -> Self {
        Dataset {
            ts: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// `(min t, max t)`, or `None` when empty.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((*self.ts.first()?, *self.ts.last()?))
    }

    pub fn without(&self, index: usize) -> Dataset {
        let keep = |v: &[f64]| {
            v.iter()
                .enumerate()
                .filter(|(i, _)| *i != index)
                .map(|(_, x)| *x)
                .collect()
        };
        Dataset {
            ts: keep(&self.ts),
            ys: keep(&self.ys),
        }
    }

    pub fn head(&self, k: usize) -> Dataset {
        let k = k.min(self.len());
        Dataset {
            ts: self.ts[..k].to_vec(),
            ys: self.ys[..k].to_vec(),
        }
    }

    pub fn map_ys(&self, f: impl Fn(f64) -> f64) -> Dataset {
        Dataset {
            ts: self.ts.clone(),
            ys: self.ys.iter().map(|&y| f(y)).collect(),
        }
    }

    /// Builds a dataset from rows in any order; rows are sorted by time and
    /// duplicate times are rejected.
    pub fn from_unsorted(mut rows: Vec<(f64, f64)>) -> Result<Self> {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (ts, ys) = rows.into_iter().unzip();
        Dataset::new(ts, ys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Dataset::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Dataset::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![0.0, 1.0], vec![f64::NAN, 2.0]).is_err());
        let d = Dataset::new(vec![1998.0, 2008.0, 2010.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.span(), Some((1998.0, 2010.0)));
        assert_eq!(d.without(1).ts(), &[1998.0, 2010.0]);
        assert_eq!(d.head(2).ys(), &[1.0, 2.0]);
    }

    #[test]
    fn unsorted_rows() {
        let d = Dataset::from_unsorted(vec![(2.0, 20.0), (1.0, 10.0)]).unwrap();
        assert_eq!(d.ts(), &[1.0, 2.0]);
        assert_eq!(d.ys(), &[10.0, 20.0]);
        assert!(Dataset::from_unsorted(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
    }
}
