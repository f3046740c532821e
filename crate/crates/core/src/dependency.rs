//! Input laws written as dependency models `X_{∼j} = r_j(X_j, Z_{∼j})`, together with the
//! dependent Jacobian `J^d`, the tensor metric `G = (J^d)ᵀJ^d` and the dependent gradient `G⁺∇M`.

use rand::RngCore;

use crate::distributions::Marginal;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, pseudo_inverse, solve_lower, Matrix, SymmetricMatrix};
use rand_distr::{Distribution, StandardNormal};

/// Relative eigenvalue cutoff used for `G⁺`.
pub const METRIC_PINV_TOL: f64 = 1e-12;

/// A joint input law seen through its dependency functions.
///
/// `conditional_map(j, x_j, z)` returns `x_{∼j}` (the `d−1` other coordinates in natural order)
/// and `conditional_map_inverse(j, x)` recovers `z`. `Z_{∼j}` must be independent of `X_j`.
pub trait DependencyModel: Send + Sync {
    fn dim(&self) -> usize;

    fn marginal(&self, j: usize) -> Marginal;

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Column `j` of the dependent Jacobian, i.e. `∂x/∂x_j` along the dependency function `r_j`.
    fn jacobian_column(&self, j: usize, x: &[f64]) -> Vec<f64>;

    fn jacobian(&self, x: &[f64]) -> Matrix {
        let d = self.dim();
        Matrix::from_columns(
            &(0..d)
                .map(|j| self.jacobian_column(j, x))
                .collect::<Vec<_>>(),
        )
        .expect("jacobian columns are finite")
    }

    /// `G⁺(x)`.
    fn metric_pinv(&self, x: &[f64]) -> SymmetricMatrix;

    fn apply_metric_pinv(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.metric_pinv(x).matvec(v)
    }

    fn conditional_map(&self, j: usize, xj: f64, z: &[f64]) -> Result<Vec<f64>>;

    fn conditional_map_inverse(&self, j: usize, x: &[f64]) -> Result<Vec<f64>>;

    fn is_independent(&self) -> bool;

    /// Mean and covariance when the joint law is Gaussian.
    fn gaussian_moments(&self) -> Option<(Vec<f64>, SymmetricMatrix)>;

    fn marginals(&self) -> Vec<Marginal> {
        (0..self.dim()).map(|j| self.marginal(j)).collect()
    }
}

/// Puts `x_j` back at position `j` among the other coordinates.
pub fn assemble(j: usize, xj: f64, rest: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(rest.len() + 1);
    x.extend_from_slice(&rest[..j]);
    x.push(xj);
    x.extend_from_slice(&rest[j..]);
    x
}

/// All coordinates but `j`.
pub fn drop_coord(j: usize, x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &v)| v)
        .collect()
}

/// Mutually independent inputs: `r_j` is the identity on `x_{∼j}` and `G = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct Independent {
    marginals: Vec<Marginal>,
}

impl Independent {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::invalid("need at least one input"));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn iid(d: usize, m: Marginal) -> Result<Self> {
        Self::new(vec![m; d])
    }
}

impl DependencyModel for Independent {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn marginal(&self, j: usize) -> Marginal {
        self.marginals[j]
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    fn jacobian_column(&self, j: usize, _x: &[f64]) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[j] = 1.0;
        e
    }

    fn metric_pinv(&self, _x: &[f64]) -> SymmetricMatrix {
        SymmetricMatrix::identity(self.dim())
    }

    fn apply_metric_pinv(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn conditional_map(&self, j: usize, _xj: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_index(j, self.dim())?;
        check_len(z.len(), self.dim() - 1)?;
        Ok(z.to_vec())
    }

    fn conditional_map_inverse(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_index(j, self.dim())?;
        check_len(x.len(), self.dim())?;
        Ok(drop_coord(j, x))
    }

    fn is_independent(&self) -> bool {
        true
    }

    fn gaussian_moments(&self) -> Option<(Vec<f64>, SymmetricMatrix)> {
        let mut mean = Vec::with_capacity(self.dim());
        let mut var = Vec::with_capacity(self.dim());
        for m in &self.marginals {
            match *m {
                Marginal::Gaussian { mean: mu, var: v } => {
                    mean.push(mu);
                    var.push(v);
                }
                Marginal::Uniform { .. } => return None,
            }
        }
        Some((mean, SymmetricMatrix::from_diag(&var)))
    }
}

#[derive(Clone, Debug)]
struct Conditional {
    // Σ_{∼j,j}/Σ_jj
    gain: Vec<f64>,
    // lower Cholesky factor of Σ_{∼j,∼j} − Σ_{∼j,j}Σ_{j,∼j}/Σ_jj; empty when d = 1
    factor: Matrix,
}

/// `X ~ N(μ, Σ)` with the conditional-Gaussian dependency functions.
#[derive(Clone, Debug)]
pub struct GaussianDependency {
    mean: Vec<f64>,
    cov: SymmetricMatrix,
    chol: Matrix,
    jd: Matrix,
    metric: SymmetricMatrix,
    metric_pinv: SymmetricMatrix,
    conditionals: Vec<Conditional>,
}

impl GaussianDependency {
    pub fn new(mean: Vec<f64>, cov: SymmetricMatrix) -> Result<Self> {
        let d = cov.dim();
        if d == 0 || mean.len() != d {
            return Err(Error::invalid(format!(
                "mean has length {}, covariance is {d}x{d}",
                mean.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("non-finite mean"));
        }
        let chol =
            cholesky(&cov).map_err(|_| Error::invalid("covariance is not positive definite"))?;
        let jd = dependent_jacobian(&cov)?;
        let metric = tensor_metric(&jd)?;
        let metric_pinv = pseudo_inverse(&metric, METRIC_PINV_TOL)?;
        let mut conditionals = Vec::with_capacity(d);
        for j in 0..d {
            let sjj = cov[(j, j)];
            let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
            let gain: Vec<f64> = others.iter().map(|&k| cov[(k, j)] / sjj).collect();
            let mut cc = Matrix::zeros(d - 1, d - 1);
            for (a, &ka) in others.iter().enumerate() {
                for (b, &kb) in others.iter().enumerate() {
                    cc[(a, b)] = cov[(ka, kb)] - cov[(ka, j)] * cov[(j, kb)] / sjj;
                }
            }
            let factor = if d == 1 {
                Matrix::zeros(0, 0)
            } else {
                cholesky(&SymmetricMatrix::symmetrize(&cc)?).map_err(|e| {
                    Error::numeric(format!("conditional covariance for input {j}: {e}"))
                })?
            };
            conditionals.push(Conditional { gain, factor });
        }
        Ok(Self {
            mean,
            cov,
            chol,
            jd,
            metric,
            metric_pinv,
            conditionals,
        })
    }

    /// Bivariate standard Gaussian with correlation `rho`.
    pub fn bivariate(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(Error::invalid(format!(
                "correlation must satisfy |rho| < 1, got {rho}"
            )));
        }
        Self::new(
            vec![0.0, 0.0],
            SymmetricMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])?,
        )
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &SymmetricMatrix {
        &self.cov
    }

    pub fn dependent_jacobian(&self) -> &Matrix {
        &self.jd
    }

    pub fn metric(&self) -> &SymmetricMatrix {
        &self.metric
    }

    pub fn metric_pinv_matrix(&self) -> &SymmetricMatrix {
        &self.metric_pinv
    }
}

impl DependencyModel for GaussianDependency {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn marginal(&self, j: usize) -> Marginal {
        Marginal::Gaussian {
            mean: self.mean[j],
            var: self.cov[(j, j)],
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.chol
            .matvec(&z)
            .iter()
            .zip(&self.mean)
            .map(|(a, m)| a + m)
            .collect()
    }

    fn jacobian_column(&self, j: usize, _x: &[f64]) -> Vec<f64> {
        self.jd.column(j)
    }

    fn jacobian(&self, _x: &[f64]) -> Matrix {
        self.jd.clone()
    }

    fn metric_pinv(&self, _x: &[f64]) -> SymmetricMatrix {
        self.metric_pinv.clone()
    }

    fn apply_metric_pinv(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.metric_pinv.matvec(v)
    }

    fn conditional_map(&self, j: usize, xj: f64, z: &[f64]) -> Result<Vec<f64>> {
        check_index(j, self.dim())?;
        check_len(z.len(), self.dim() - 1)?;
        let c = &self.conditionals[j];
        let lz = c.factor.matvec(z);
        let shift = xj - self.mean[j];
        Ok(drop_coord(j, &self.mean)
            .iter()
            .zip(&c.gain)
            .zip(&lz)
            .map(|((m, g), l)| m + g * shift + l)
            .collect())
    }

    fn conditional_map_inverse(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_index(j, self.dim())?;
        check_len(x.len(), self.dim())?;
        let c = &self.conditionals[j];
        let shift = x[j] - self.mean[j];
        let resid: Vec<f64> = drop_coord(j, x)
            .iter()
            .zip(drop_coord(j, &self.mean))
            .zip(&c.gain)
            .map(|((xk, m), g)| xk - m - g * shift)
            .collect();
        solve_lower(&c.factor, &resid)
    }

    fn is_independent(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|k| i == k || self.cov[(i, k)] == 0.0))
    }

    fn gaussian_moments(&self) -> Option<(Vec<f64>, SymmetricMatrix)> {
        Some((self.mean.clone(), self.cov.clone()))
    }
}

fn check_index(j: usize, d: usize) -> Result<()> {
    if j >= d {
        return Err(Error::invalid(format!(
            "input index {j} out of range for d = {d}"
        )));
    }
    Ok(())
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!(
            "expected a vector of length {want}, got {got}"
        )));
    }
    Ok(())
}

/// `J^d = Σ·diag(Σ₁₁,…,Σ_dd)⁻¹`.
pub fn dependent_jacobian(cov: &SymmetricMatrix) -> Result<Matrix> {
    let d = cov.dim();
    let mut jd = Matrix::zeros(d, d);
    for j in 0..d {
        let sjj = cov[(j, j)];
        if !(sjj > 0.0) {
            return Err(Error::invalid(format!(
                "covariance diagonal entry {j} is {sjj}"
            )));
        }
        for i in 0..d {
            jd[(i, j)] = cov[(i, j)] / sjj;
        }
    }
    Ok(jd)
}

/// `G = (J^d)ᵀ·J^d`.
pub fn tensor_metric(jd: &Matrix) -> Result<SymmetricMatrix> {
    if !jd.is_square() {
        return Err(Error::invalid("dependent Jacobian must be square"));
    }
    SymmetricMatrix::symmetrize(&jd.transpose().matmul(jd))
}

/// `G⁺·∇M`.
pub fn dependent_gradient(grad: &[f64], metric_pinv: &SymmetricMatrix) -> Result<Vec<f64>> {
    if grad.len() != metric_pinv.dim() {
        return Err(Error::invalid("gradient length does not match the metric"));
    }
    Ok(metric_pinv.matvec(grad))
}

/// `(J^d)ᵀ·∇M`.
pub fn dependent_partials(grad: &[f64], jd: &Matrix) -> Result<Vec<f64>> {
    if grad.len() != jd.rows() {
        return Err(Error::invalid(
            "gradient length does not match the Jacobian",
        ));
    }
    Ok(jd.tmatvec(grad))
}
