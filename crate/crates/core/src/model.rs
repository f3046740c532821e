//! Scalar models `M: R^d → R` as seen by the estimators.

use crate::error::{Error, Result};

pub trait Model: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<f64>;

    /// Analytic gradient when the model provides one.
    fn gradient(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::NotAvailable("model has no analytic gradient".into()))
    }

    fn has_gradient(&self) -> bool {
        false
    }
}

pub(crate) fn check_dim(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::invalid(format!(
            "expected {d} inputs, got {}",
            x.len()
        )));
    }
    Ok(())
}

pub(crate) fn finite(v: f64, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!(
            "non-finite model output {v} at {x:?}"
        )))
    }
}

/// Wraps a closure as a model without gradient.
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Model for FnModel<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(x, self.dim)?;
        finite((self.f)(x), x)
    }
}

/// Wraps a closure and its gradient.
pub struct FnGradModel<F, G> {
    dim: usize,
    f: F,
    g: G,
}

impl<F, G> FnGradModel<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F, g: G) -> Self {
        Self { dim, f, g }
    }
}

impl<F, G> Model for FnGradModel<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(x, self.dim)?;
        finite((self.f)(x), x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.dim)?;
        let g = (self.g)(x);
        if g.len() != self.dim || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!("bad gradient at {x:?}")));
        }
        Ok(g)
    }

    fn has_gradient(&self) -> bool {
        true
    }
}
