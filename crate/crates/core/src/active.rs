//! Active directions of `C′` (or of the total-sensitivity matrix), active scores, DGSMs and
//! the conditional-expectation approximator built on a retained subspace.

use serde::Serialize;

use crate::dependency::DependencyModel;
use crate::distributions::RngStream;
use crate::error::{Error, Result};
use crate::gradient::{gradient_samples, GradientSource};
use crate::linalg::{psd_factor, pseudo_inverse, Matrix, Spectrum, SymmetricMatrix};
use crate::model::Model;
use crate::stats::par_collect;
use rand_distr::{Distribution, StandardNormal};

/// Default number of inactive draws per approximated point.
pub const DEFAULT_NS: usize = 100;

#[derive(Clone, Debug, Serialize)]
pub struct ActiveSubspace {
    pub spectrum: Spectrum,
    pub ell: usize,
    /// `d×ℓ`, leading eigenvectors.
    pub w_active: Matrix,
    /// `d×(d−ℓ)`, remaining eigenvectors.
    pub w_inactive: Matrix,
}

impl ActiveSubspace {
    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn is_full(&self) -> bool {
        self.ell == self.dim()
    }
}

pub fn split_subspace(spec: &Spectrum, ell: usize) -> Result<ActiveSubspace> {
    let d = spec.dim();
    if ell == 0 || ell > d {
        return Err(Error::invalid(format!(
            "retained dimension must satisfy 1 <= ell <= {d}, got {ell}"
        )));
    }
    let active: Vec<usize> = (0..ell).collect();
    let inactive: Vec<usize> = (ell..d).collect();
    Ok(ActiveSubspace {
        spectrum: spec.clone(),
        ell,
        w_active: spec.eigenvectors.select_columns(&active),
        w_inactive: spec.eigenvectors.select_columns(&inactive),
    })
}

/// `dα_j(m) = Σ_{k≤m} λ_k·w_{jk}²` for every input `j`.
pub fn active_scores(spec: &Spectrum, m: usize) -> Result<Vec<f64>> {
    let d = spec.dim();
    if m == 0 || m > d {
        return Err(Error::invalid(format!(
            "score order must satisfy 1 <= m <= {d}, got {m}"
        )));
    }
    Ok((0..d)
        .map(|j| {
            (0..m)
                .map(|k| spec.eigenvalues[k] * spec.eigenvectors[(j, k)].powi(2))
                .sum()
        })
        .collect())
}

/// Derivative-based measures `dν*_j = E[(e_jᵀ grad M)²]` and `dμ*_j = E|e_jᵀ grad M|`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DgsmValues {
    pub l2: Vec<f64>,
    pub l1: Vec<f64>,
}

impl DgsmValues {
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let d = samples
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("empty gradient sample"))?;
        let n = samples.len() as f64;
        let mut l2 = vec![0.0; d];
        let mut l1 = vec![0.0; d];
        for g in samples {
            if g.len() != d {
                return Err(Error::invalid("gradient samples have mixed lengths"));
            }
            for j in 0..d {
                l2[j] += g[j] * g[j];
                l1[j] += g[j].abs();
            }
        }
        l2.iter_mut().for_each(|v| *v /= n);
        l1.iter_mut().for_each(|v| *v /= n);
        Ok(Self { l2, l1 })
    }
}

pub fn dgsm(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    source: GradientSource<'_>,
    n: usize,
    rs: RngStream,
) -> Result<DgsmValues> {
    let (g, _) = gradient_samples(model, dep, source, n, rs)?;
    DgsmValues::from_samples(&g)
}

#[derive(Clone, Debug)]
enum InactiveLaw {
    /// `R | W_ℓᵀX = a ~ N(offset + gain·a, F·Fᵀ)`.
    Gaussian {
        offset: Vec<f64>,
        gain: Matrix,
        factor: Matrix,
    },
    /// `R = W_∼ᵀX′` with `X′` a fresh draw of the inputs.
    Projection,
}

/// Monte Carlo version of `M̃(x) = E[M(W_ℓW_ℓᵀx + W_∼R) | W_ℓᵀX = W_ℓᵀx]`.
pub struct SubspaceApproximator<'a> {
    subspace: ActiveSubspace,
    dep: &'a dyn DependencyModel,
    ns: usize,
    law: InactiveLaw,
}

impl<'a> SubspaceApproximator<'a> {
    pub fn new(subspace: ActiveSubspace, dep: &'a dyn DependencyModel, ns: usize) -> Result<Self> {
        if ns == 0 {
            return Err(Error::invalid("Ns must be at least 1"));
        }
        if subspace.dim() != dep.dim() {
            return Err(Error::invalid("subspace and input law differ in dimension"));
        }
        let law = match dep.gaussian_moments() {
            Some((mu, cov)) if !subspace.is_full() => {
                let wa = &subspace.w_active;
                let wi = &subspace.w_inactive;
                let s = cov.matrix();
                let saa = SymmetricMatrix::symmetrize(&wa.transpose().matmul(s).matmul(wa))?;
                let sra = wi.transpose().matmul(s).matmul(wa);
                let srr = wi.transpose().matmul(s).matmul(wi);
                let gain = sra.matmul(pseudo_inverse(&saa, 1e-12)?.matrix());
                let cond = SymmetricMatrix::symmetrize(&srr.sub(&gain.matmul(&sra.transpose())))?;
                let factor = psd_factor(&cond)?;
                let mr = wi.tmatvec(&mu);
                let ma = wa.tmatvec(&mu);
                let ga = gain.matvec(&ma);
                let offset = mr.iter().zip(&ga).map(|(a, b)| a - b).collect();
                InactiveLaw::Gaussian {
                    offset,
                    gain,
                    factor,
                }
            }
            _ => InactiveLaw::Projection,
        };
        Ok(Self {
            subspace,
            dep,
            ns,
            law,
        })
    }

    pub fn subspace(&self) -> &ActiveSubspace {
        &self.subspace
    }

    /// Approximated value at `x`; equals `M(x)` when the whole basis is retained.
    pub fn approximate(&self, model: &dyn Model, x: &[f64], rs: RngStream) -> Result<f64> {
        if self.subspace.is_full() {
            return model.eval(x);
        }
        let wa = &self.subspace.w_active;
        let wi = &self.subspace.w_inactive;
        let a = wa.tmatvec(x);
        let base = wa.matvec(&a);
        let r_dim = wi.cols();
        let mut rng = rs.rng();
        let mut acc = 0.0;
        let mut point = vec![0.0; x.len()];
        let cond_mean = match &self.law {
            InactiveLaw::Gaussian { offset, gain, .. } => {
                let g = gain.matvec(&a);
                Some(
                    offset
                        .iter()
                        .zip(&g)
                        .map(|(o, g)| o + g)
                        .collect::<Vec<f64>>(),
                )
            }
            InactiveLaw::Projection => None,
        };
        for _ in 0..self.ns {
            let r: Vec<f64> = match (&self.law, &cond_mean) {
                (InactiveLaw::Gaussian { factor, .. }, Some(m)) => {
                    let xi: Vec<f64> = (0..r_dim)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect();
                    factor
                        .matvec(&xi)
                        .iter()
                        .zip(m)
                        .map(|(a, b)| a + b)
                        .collect()
                }
                _ => wi.tmatvec(&self.dep.sample(&mut rng)),
            };
            let off = wi.matvec(&r);
            for k in 0..x.len() {
                point[k] = base[k] + off[k];
            }
            acc += model.eval(&point)?;
        }
        Ok(acc / self.ns as f64)
    }

    /// Approximations at every point, point `i` using substream `i`.
    pub fn approximate_all(
        &self,
        model: &dyn Model,
        points: &[Vec<f64>],
        rs: RngStream,
    ) -> Result<Vec<f64>> {
        par_collect(points.len(), |i| {
            self.approximate(model, &points[i], rs.substream(i as u64))
        })
    }
}

/// `(1/N)·Σ(M(x_i) − M̃(x_i))²`.
pub fn approximation_error(exact: &[f64], approx: &[f64]) -> Result<f64> {
    if exact.is_empty() || exact.len() != approx.len() {
        return Err(Error::invalid(
            "approximation error needs two equal, nonempty value lists",
        ));
    }
    Ok(exact
        .iter()
        .zip(approx)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / exact.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependency::{GaussianDependency, Independent};
    use crate::distributions::Marginal;
    use crate::gradient::{estimate_c_analytic, outer_moments};
    use crate::linalg::sym_eig;
    use crate::model::{FnGradModel, FnModel};

    #[test]
    fn split_cases() {
        let spec = sym_eig(&SymmetricMatrix::from_diag(&[1.0, 3.0, 2.0])).unwrap();
        let full = split_subspace(&spec, 3).unwrap();
        assert_eq!(full.w_inactive.cols(), 0);
        let one = split_subspace(&spec, 1).unwrap();
        assert_eq!(one.w_active.column(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(spec.eigenvector(1), vec![0.0, 0.0, 1.0]);
        assert!(split_subspace(&spec, 0).is_err());
        assert!(split_subspace(&spec, 4).is_err());

        let ones = sym_eig(&SymmetricMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap())
            .unwrap();
        let s = split_subspace(&ones, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.w_active[(0, 0)] - h).abs() < 1e-12 && (s.w_active[(1, 0)] - h).abs() < 1e-12);
        let w = s
            .w_active
            .matmul(&s.w_active.transpose())
            .add(&s.w_inactive.matmul(&s.w_inactive.transpose()));
        assert!(w.max_abs_diff(&Matrix::identity(2)) < 1e-10);
    }

    #[test]
    fn scores_on_diagonal() {
        let spec = sym_eig(&SymmetricMatrix::from_diag(&[0.5, 4.0, 2.0])).unwrap();
        let s = active_scores(&spec, 3).unwrap();
        assert!(
            (s[0] - 0.5).abs() < 1e-15 && (s[1] - 4.0).abs() < 1e-15 && (s[2] - 2.0).abs() < 1e-15
        );
        assert!(active_scores(&spec, 0).is_err());
    }

    #[test]
    fn lemma_one_identities_on_estimate() {
        let model = FnModel::new(4, |x: &[f64]| {
            x[0] * x[1] + (x[2] - x[3]).powi(2) + x[0].sin()
        });
        let dep = Independent::iid(4, Marginal::uniform(-1.0, 1.0).unwrap()).unwrap();
        let cfg = crate::gradient::EstimatorConfig::new(300, 0.01, 0.01)
            .unwrap()
            .with_inner(20);
        let (g, _) = gradient_samples(
            &model,
            &dep,
            GradientSource::Estimated(&cfg),
            300,
            RngStream::new(2),
        )
        .unwrap();
        let (c, _) = outer_moments(&g).unwrap();
        let spec = sym_eig(&c).unwrap();
        let nu = DgsmValues::from_samples(&g).unwrap().l2;
        let full = active_scores(&spec, 4).unwrap();
        for j in 0..4 {
            assert!((full[j] - nu[j]).abs() < 1e-8 * nu[j].max(1.0));
        }
        for m in 1..4 {
            let s = active_scores(&spec, m).unwrap();
            let total: f64 = s.iter().sum();
            let lam: f64 = spec.eigenvalues[..m].iter().sum();
            assert!((total - lam).abs() < 1e-8 * lam.abs().max(1.0));
            for j in 0..4 {
                assert!(nu[j] <= s[j] + spec.eigenvalues[m] + 1e-8);
                assert!(s[j] <= active_scores(&spec, m + 1).unwrap()[j] + 1e-12);
            }
        }
    }

    #[test]
    fn dgsm_examples() {
        let model = FnGradModel::new(2, |x: &[f64]| x[0], |_x: &[f64]| vec![1.0, 0.0]);
        let dep = GaussianDependency::bivariate(0.5).unwrap();
        let v = dgsm(
            &model,
            &dep,
            GradientSource::Analytic,
            10,
            RngStream::new(1),
        )
        .unwrap();
        assert!((v.l2[0] - (1.25 / 0.5625f64).powi(2)).abs() < 1e-12);
        assert!((v.l1[1] - 1.0 / 0.5625).abs() < 1e-12);
        let c = FnGradModel::new(2, |_x: &[f64]| 1.0, |_x: &[f64]| vec![0.0, 0.0]);
        assert_eq!(
            dgsm(&c, &dep, GradientSource::Analytic, 10, RngStream::new(1))
                .unwrap()
                .l2,
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn full_subspace_is_exact() {
        let model = FnModel::new(3, |x: &[f64]| (x[0] * 1e7).exp().min(1e300) + x[1] * x[2]);
        let dep = Independent::iid(3, Marginal::standard_normal()).unwrap();
        let spec = sym_eig(&SymmetricMatrix::identity(3)).unwrap();
        let a = SubspaceApproximator::new(split_subspace(&spec, 3).unwrap(), &dep, 5).unwrap();
        let x = [1e-6, 0.3, -2.0];
        assert_eq!(
            a.approximate(&model, &x, RngStream::new(1)).unwrap(),
            model.eval(&x).unwrap()
        );
    }

    #[test]
    fn ridge_function_is_recovered() {
        let w = [0.6, 0.8, 0.0];
        let model = FnModel::new(3, move |x: &[f64]| {
            (w[0] * x[0] + w[1] * x[1] + w[2] * x[2]).powi(3)
        });
        let dep = Independent::iid(3, Marginal::standard_normal()).unwrap();
        let grad_model = FnGradModel::new(
            3,
            move |x: &[f64]| (w[0] * x[0] + w[1] * x[1]).powi(3),
            move |x: &[f64]| {
                let t = 3.0 * (w[0] * x[0] + w[1] * x[1]).powi(2);
                vec![t * w[0], t * w[1], 0.0]
            },
        );
        let c = estimate_c_analytic(&grad_model, &dep, 2000, RngStream::new(5)).unwrap();
        let spec = sym_eig(&c.matrix).unwrap();
        let a = SubspaceApproximator::new(split_subspace(&spec, 1).unwrap(), &dep, 20).unwrap();
        for x in [[0.1, 0.2, 0.3], [1.0, -1.0, 2.0], [-0.5, 0.7, -1.2]] {
            let v = a.approximate(&model, &x, RngStream::new(9)).unwrap();
            assert!((v - model.eval(&x).unwrap()).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn gaussian_conditional_uses_correlation() {
        // M = x₂ with corr 0.8; keeping only x₁ gives E[X₂ | X₁ = x₁] = 0.8·x₁
        let model = FnModel::new(2, |x: &[f64]| x[1]);
        let dep = GaussianDependency::bivariate(0.8).unwrap();
        let spec = sym_eig(&SymmetricMatrix::from_diag(&[2.0, 1.0])).unwrap();
        let a = SubspaceApproximator::new(split_subspace(&spec, 1).unwrap(), &dep, 20_000).unwrap();
        let v = a
            .approximate(&model, &[1.5, -3.0], RngStream::new(4))
            .unwrap();
        assert!((v - 1.2).abs() < 4.0 * (0.36f64 / 20_000.0).sqrt());
    }

    #[test]
    fn error_metric() {
        assert_eq!(approximation_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(approximation_error(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), 2.5);
        assert!(approximation_error(&[], &[]).is_err());
    }
}
