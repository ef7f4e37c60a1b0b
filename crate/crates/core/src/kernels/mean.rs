use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial prior mean `sum_k beta_k (t - center)^k` of degree at most two.
/// An empty coefficient list is the zero mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSpec {
    coefficients: Vec<f64>,
    #[serde(default)]
    center: f64,
}

impl MeanSpec {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        Self::centered(coefficients, 0.0)
    }

    pub fn centered(coefficients: Vec<f64>, center: f64) -> Result<Self> {
        if coefficients.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "mean polynomial degree must be at most 2, got {}",
                coefficients.len() - 1
            )));
        }
        if coefficients.iter().any(|b| !b.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidParameter("mean coefficients must be finite".into()));
        }
        Ok(MeanSpec {
            coefficients,
            center,
        })
    }

    pub fn zero() -> Self {
        MeanSpec {
            coefficients: Vec::new(),
            center: 0.0,
        }
    }

    pub fn constant(beta0: f64) -> Self {
        MeanSpec {
            coefficients: vec![beta0],
            center: 0.0,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Polynomial degree, `None` for the zero mean.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients.len().checked_sub(1)
    }

    /// Same mean with every output shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut coefficients = self.coefficients.clone();
        match coefficients.first_mut() {
            Some(b0) => *b0 += c,
            None => coefficients.push(c),
        }
        MeanSpec {
            coefficients,
            center: self.center,
        }
    }

    /// Value of the `order`-th derivative at `t`.
    pub fn eval(&self, order: usize, t: f64) -> f64 {
        let x = t - self.center;
        self.coefficients
            .iter()
            .enumerate()
            .skip(order)
            .map(|(k, b)| {
                let falling: f64 = (0..order).map(|i| (k - i) as f64).product();
                b * falling * x.powi((k - order) as i32)
            })
            .sum()
    }
}

/// Value of the `order`-th derivative of the mean at `t`.
pub fn mean_eval(spec: &MeanSpec, order: usize, t: f64) -> f64 {
    spec.eval(order, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let c = MeanSpec::constant(28.001);
        assert_eq!(c.eval(1, 2017.0), 0.0);
        let q = MeanSpec::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.eval(0, 2.0), 17.0);
        assert_eq!(q.eval(1, 2.0), 14.0);
        assert_eq!(q.eval(2, -5.0), 6.0);
        assert_eq!(MeanSpec::zero().eval(0, 1.0), 0.0);
    }

    #[test]
    fn centered_polynomial() {
        let m = MeanSpec::centered(vec![1.0, 2.0, 3.0], 2000.0).unwrap();
        assert_eq!(m.eval(0, 2002.0), 17.0);
        assert_eq!(m.eval(1, 2000.0), 2.0);
    }

    #[test]
    fn rejects_high_degree() {
        assert!(MeanSpec::new(vec![0.0; 4]).is_err());
    }
}
