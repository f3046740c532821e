//! Stencil-based Monte Carlo estimators of the dependent gradient and of
//! `C′ = E[grad M · grad Mᵀ]`, plus the bandwidth rules.

use serde::Serialize;

use crate::dependency::DependencyModel;
use crate::distributions::{RngStream, SphericalSampler};
use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix, SymmetricMatrix};
use crate::model::Model;
use crate::stats::{par_collect, par_fold, MatrixMoments, Moments};

/// Draws used to estimate `E‖G⁺(X)·1‖²` for the bandwidth rule.
pub const METRIC_STAT_DRAWS: usize = 1000;

/// Finite-difference nodes `β` and weights `ζ` with `Σ_ℓ ζ_ℓ β_ℓ^r = δ_{r,1}` for `r < L`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stencil {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Stencil {
    pub fn solve(beta: &[f64]) -> Result<Self> {
        let l = beta.len();
        if l < 2 {
            return Err(Error::DegenerateStencil(format!(
                "a stencil needs at least two nodes (got {l}); with one node the weights vanish"
            )));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::invalid(format!("non-finite stencil node {b}")));
        }
        for i in 0..l {
            for j in (i + 1)..l {
                if (beta[i] - beta[j]).abs() <= 1e-12 * beta[i].abs().max(beta[j].abs()).max(1.0) {
                    return Err(Error::invalid(format!(
                        "duplicate stencil node {}",
                        beta[i]
                    )));
                }
            }
        }
        let mut v = Matrix::zeros(l, l);
        for r in 0..l {
            for (k, &b) in beta.iter().enumerate() {
                v[(r, k)] = b.powi(r as i32);
            }
        }
        let mut rhs = vec![0.0; l];
        rhs[1] = 1.0;
        let weights = solve(&v, &rhs)?;
        let s = Self {
            nodes: beta.to_vec(),
            weights,
        };
        if s.residual() > 1e-10 {
            return Err(Error::numeric(format!(
                "stencil system too ill-conditioned (residual {:e})",
                s.residual()
            )));
        }
        Ok(s)
    }

    /// `β = (1, −1)`, `ζ = (½, −½)`.
    pub fn central() -> Self {
        Self {
            nodes: vec![1.0, -1.0],
            weights: vec![0.5, -0.5],
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest violation of the moment constraints.
    pub fn residual(&self) -> f64 {
        (0..self.order())
            .map(|r| {
                let s: f64 = self
                    .nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(b, z)| z * b.powi(r as i32))
                    .sum();
                (s - if r == 1 { 1.0 } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_{ℓ₁≤ℓ₂} |ζ_{ℓ₁}ζ_{ℓ₂}|·β_{ℓ₁}²·β_{ℓ₂}²`, the stencil factor of the bias bound.
    pub fn bias_constant(&self) -> f64 {
        let l = self.order();
        let mut s = 0.0;
        for a in 0..l {
            for b in a..l {
                s += (self.weights[a] * self.weights[b]).abs()
                    * (self.nodes[a] * self.nodes[b]).powi(2);
            }
        }
        s
    }
}

impl Default for Stencil {
    fn default() -> Self {
        Self::central()
    }
}

pub fn solve_stencil(beta: &[f64]) -> Result<Stencil> {
    Stencil::solve(beta)
}

/// Tuning of the perturbation-based estimators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorConfig {
    /// Outer sample size (points `X_i`, or perturbations for a single gradient).
    pub n: usize,
    pub h: f64,
    pub sigma2: f64,
    pub tau: f64,
    /// Centering constant of the direct estimator; `None` uses the mean of `M` over the X-sample.
    pub k0: Option<f64>,
    pub m2: f64,
    /// Perturbations per point for the plug-in estimator; `None` means `max(d, 32)`.
    pub inner: Option<usize>,
    pub stencil: Stencil,
}

impl EstimatorConfig {
    pub fn new(n: usize, h: f64, sigma2: f64) -> Result<Self> {
        let c = Self {
            n,
            h,
            sigma2,
            tau: 0.5,
            k0: None,
            m2: 1.0,
            inner: None,
            stencil: Stencil::central(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Bandwidths from the default rules: `h = N^{−τ}` and the `σ²` bound for this input law.
    pub fn auto(dep: &dyn DependencyModel, n: usize, rs: RngStream) -> Result<Self> {
        Self::auto_with(dep, n, 0.5, 1.0, Stencil::central(), None, rs)
    }

    pub fn auto_with(
        dep: &dyn DependencyModel,
        n: usize,
        tau: f64,
        m2: f64,
        stencil: Stencil,
        sigma2_cap: Option<f64>,
        rs: RngStream,
    ) -> Result<Self> {
        let stat = metric_statistic(dep, rs)?;
        let hp = select_hyperparameters(dep.dim(), n, m2, stat, &stencil, tau, sigma2_cap)?;
        let c = Self {
            n,
            h: hp.h,
            sigma2: hp.sigma2,
            tau,
            k0: None,
            m2,
            inner: None,
            stencil,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_inner(mut self, inner: usize) -> Self {
        self.inner = Some(inner);
        self
    }

    pub fn with_k0(mut self, k0: f64) -> Self {
        self.k0 = Some(k0);
        self
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("N must be positive"));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid(format!(
                "h must be positive, got {}",
                self.h
            )));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        check_tau(self.tau)?;
        if !(self.m2 > 0.0 && self.m2.is_finite()) {
            return Err(Error::invalid(format!(
                "M2 must be positive, got {}",
                self.m2
            )));
        }
        if matches!(self.k0, Some(k) if !k.is_finite()) {
            return Err(Error::invalid("K0 must be finite"));
        }
        if self.inner == Some(0) {
            return Err(Error::invalid("inner sample count must be positive"));
        }
        Ok(())
    }

    pub fn inner_count(&self, d: usize) -> usize {
        self.inner.unwrap_or(d.max(32))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.25 && tau < 1.0) {
        return Err(Error::invalid(format!(
            "tau must lie in (1/4, 1), got {tau}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hyperparameters {
    pub h: f64,
    pub sigma2: f64,
}

/// `h = N^{−τ}` and `σ² = min(cap, 1/(d²·M₂²·κ·s))` with `κ` the stencil bias constant and
/// `s = E‖G⁺(X)·1‖²` (equal to `d` for independent inputs, giving the `d³` form).
pub fn select_hyperparameters(
    d: usize,
    n: usize,
    m2: f64,
    metric_stat: f64,
    stencil: &Stencil,
    tau: f64,
    sigma2_cap: Option<f64>,
) -> Result<Hyperparameters> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("d and N must be positive"));
    }
    if !(m2 > 0.0 && m2.is_finite()) {
        return Err(Error::invalid(format!("M2 must be positive, got {m2}")));
    }
    if !(metric_stat > 0.0 && metric_stat.is_finite()) {
        return Err(Error::invalid(format!(
            "metric statistic must be positive, got {metric_stat}"
        )));
    }
    check_tau(tau)?;
    if matches!(sigma2_cap, Some(c) if !(c > 0.0)) {
        return Err(Error::invalid("sigma2 cap must be positive"));
    }
    let d = d as f64;
    let bound = 1.0 / (d * d * m2 * m2 * stencil.bias_constant() * metric_stat);
    let sigma2 = sigma2_cap.map_or(bound, |c| c.min(bound));
    Ok(Hyperparameters {
        h: (n as f64).powf(-tau),
        sigma2,
    })
}

/// Monte Carlo estimate of `E‖G⁺(X)·1‖² = E[1ᵀG⁺G⁺1]`.
pub fn metric_statistic(dep: &dyn DependencyModel, rs: RngStream) -> Result<f64> {
    if dep.is_independent() {
        return Ok(dep.dim() as f64);
    }
    let ones = vec![1.0; dep.dim()];
    let m = par_fold(
        METRIC_STAT_DRAWS,
        |i| {
            let mut rng = rs.substream(i as u64).rng();
            let x = dep.sample(&mut rng);
            let g = dep.apply_metric_pinv(&x, &ones);
            Ok(g.iter().map(|v| v * v).sum::<f64>())
        },
        Moments::new(),
        |m, v| m.push(v),
    )?;
    Ok(m.mean())
}

/// Which estimator produced a `C′` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CPrimeMethod {
    Analytic,
    Plugin,
    Direct,
}

#[derive(Clone, Debug, Serialize)]
pub struct CPrimeEstimate {
    pub matrix: SymmetricMatrix,
    pub n_model_evals: u64,
    pub method: CPrimeMethod,
    pub config: Option<EstimatorConfig>,
    /// Entrywise standard errors of the Monte Carlo mean.
    pub std_error: Matrix,
}

fn check_model(model: &dyn Model, dep: &dyn DependencyModel) -> Result<()> {
    if model.dim() != dep.dim() {
        return Err(Error::invalid(format!(
            "model has {} inputs but the input law has {}",
            model.dim(),
            dep.dim()
        )));
    }
    Ok(())
}

fn sampler(cfg: &EstimatorConfig, d: usize) -> Result<SphericalSampler> {
    cfg.validate()?;
    SphericalSampler::new(d, cfg.sigma2)
}

// Σ_i Σ_ℓ ζ_ℓ M(x + hβ_ℓV_i)·V_i / (count·h·σ²), an estimate of ∇M(x).
pub(crate) fn raw_gradient_at(
    model: &dyn Model,
    x: &[f64],
    cfg: &EstimatorConfig,
    sampler: &SphericalSampler,
    count: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<f64>> {
    let d = x.len();
    let mut acc = vec![0.0; d];
    let mut xp = vec![0.0; d];
    for _ in 0..count {
        let v = sampler.sample(rng);
        let mut s = 0.0;
        for (&b, &z) in cfg.stencil.nodes().iter().zip(cfg.stencil.weights()) {
            for k in 0..d {
                xp[k] = x[k] + cfg.h * b * v[k];
            }
            s += z * model.eval(&xp)?;
        }
        for k in 0..d {
            acc[k] += s * v[k];
        }
    }
    let scale = 1.0 / (count as f64 * cfg.h * cfg.sigma2);
    acc.iter_mut().for_each(|a| *a *= scale);
    Ok(acc)
}

pub(crate) fn sampler_for(cfg: &EstimatorConfig, d: usize) -> Result<SphericalSampler> {
    sampler(cfg, d)
}

fn gradient_at(
    model: &dyn Model,
    x: &[f64],
    cfg: &EstimatorConfig,
    dep: &dyn DependencyModel,
    sampler: &SphericalSampler,
    count: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<Vec<f64>> {
    Ok(dep.apply_metric_pinv(x, &raw_gradient_at(model, x, cfg, sampler, count, rng)?))
}

/// Spherical-perturbation estimate of `grad M(x) = G⁺∇M(x)` from `cfg.n` perturbations (`L·n` evaluations).
pub fn estimate_gradient(
    model: &dyn Model,
    x: &[f64],
    cfg: &EstimatorConfig,
    dep: &dyn DependencyModel,
    rs: RngStream,
) -> Result<Vec<f64>> {
    check_model(model, dep)?;
    if x.len() != dep.dim() {
        return Err(Error::invalid("point has the wrong dimension"));
    }
    let s = sampler(cfg, dep.dim())?;
    let mut rng = rs.rng();
    gradient_at(model, x, cfg, dep, &s, cfg.n, &mut rng)
}

/// Source of per-point dependent gradients.
#[derive(Clone, Copy, Debug)]
pub enum GradientSource<'a> {
    /// `G⁺∇M` from the model's analytic gradient.
    Analytic,
    /// Perturbation estimate with `cfg.inner_count(d)` perturbations per point.
    Estimated(&'a EstimatorConfig),
}

/// Dependent-gradient samples at `n` draws of `X`, with the number of model evaluations spent.
pub fn gradient_samples(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    source: GradientSource<'_>,
    n: usize,
    rs: RngStream,
) -> Result<(Vec<Vec<f64>>, u64)> {
    check_model(model, dep)?;
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    match source {
        GradientSource::Analytic => {
            if !model.has_gradient() {
                return Err(Error::NotAvailable("model has no analytic gradient".into()));
            }
            let g = par_collect(n, |i| {
                let mut rng = rs.substream(i as u64).rng();
                let x = dep.sample(&mut rng);
                Ok(dep.apply_metric_pinv(&x, &model.gradient(&x)?))
            })?;
            Ok((g, 0))
        }
        GradientSource::Estimated(cfg) => {
            let s = sampler(cfg, dep.dim())?;
            let inner = cfg.inner_count(dep.dim());
            let g = par_collect(n, |i| {
                let mut rng = rs.substream(i as u64).rng();
                let x = dep.sample(&mut rng);
                gradient_at(model, &x, cfg, dep, &s, inner, &mut rng)
            })?;
            let evals = (n * inner * cfg.stencil.order()) as u64;
            Ok((g, evals))
        }
    }
}

/// Mean of `g·gᵀ` over gradient samples with entrywise standard errors.
pub fn outer_moments(samples: &[Vec<f64>]) -> Result<(SymmetricMatrix, Matrix)> {
    let d = samples
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("empty gradient sample"))?;
    let mut mm = MatrixMoments::new(d);
    for g in samples {
        if g.len() != d {
            return Err(Error::invalid("gradient samples have mixed lengths"));
        }
        mm.push_outer(g, g);
    }
    Ok((SymmetricMatrix::symmetrize(&mm.mean())?, mm.std_error()))
}

/// `C′` from analytic dependent gradients at `n` draws of `X`.
pub fn estimate_c_analytic(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    n: usize,
    rs: RngStream,
) -> Result<CPrimeEstimate> {
    let (g, _) = gradient_samples(model, dep, GradientSource::Analytic, n, rs)?;
    let (matrix, std_error) = outer_moments(&g)?;
    Ok(CPrimeEstimate {
        matrix,
        n_model_evals: 0,
        method: CPrimeMethod::Analytic,
        config: None,
        std_error,
    })
}

/// Plug-in `Ĉ′_p = (1/N)Σ ĝ_i ĝ_iᵀ` with per-point gradient estimates.
pub fn estimate_c_plugin(
    model: &dyn Model,
    cfg: &EstimatorConfig,
    dep: &dyn DependencyModel,
    rs: RngStream,
) -> Result<CPrimeEstimate> {
    if cfg.n < 2 {
        return Err(Error::invalid("plug-in estimator needs N >= 2"));
    }
    let (g, evals) = gradient_samples(model, dep, GradientSource::Estimated(cfg), cfg.n, rs)?;
    let (matrix, std_error) = outer_moments(&g)?;
    Ok(CPrimeEstimate {
        matrix,
        n_model_evals: evals,
        method: CPrimeMethod::Plugin,
        config: Some(cfg.clone()),
        std_error,
    })
}

struct DirectSample {
    a: f64,
    b: f64,
    gv: Vec<f64>,
    gw: Vec<f64>,
}

/// Direct estimator of `C′` from two independent perturbations per point:
/// the mean of `a·b/(h²σ⁴)·(G⁺V)(G⁺V′)ᵀ` (symmetrized), where
/// `a = Σ_ℓ ζ_ℓ(M(X + hβ_ℓV) − K₀)` and `b` is the same with `V′`.
///
/// Uses `2·L·N` evaluations, plus `N` when `K₀` is taken as the sample mean of `M`.
pub fn estimate_c_direct(
    model: &dyn Model,
    cfg: &EstimatorConfig,
    dep: &dyn DependencyModel,
    rs: RngStream,
) -> Result<CPrimeEstimate> {
    check_model(model, dep)?;
    let d = dep.dim();
    let s = sampler(cfg, d)?;
    let n = cfg.n;
    if n < 2 {
        return Err(Error::invalid("direct estimator needs N >= 2"));
    }
    let x_rs = rs.fork(1);
    let v_rs = rs.fork(2);
    let draw_x = |i: usize| {
        let mut rng = x_rs.substream(i as u64).rng();
        dep.sample(&mut rng)
    };

    let (k0, extra) = match cfg.k0 {
        Some(k) => (k, 0u64),
        None => {
            let m = par_fold(
                n,
                |i| model.eval(&draw_x(i)),
                Moments::new(),
                |m, v| m.push(v),
            )?;
            (m.mean(), n as u64)
        }
    };

    let stencil = &cfg.stencil;
    let diff = |x: &[f64], v: &[f64]| -> Result<f64> {
        let mut xp = vec![0.0; d];
        let mut acc = 0.0;
        for (&b, &z) in stencil.nodes().iter().zip(stencil.weights()) {
            for k in 0..d {
                xp[k] = x[k] + cfg.h * b * v[k];
            }
            acc += z * (model.eval(&xp)? - k0);
        }
        Ok(acc)
    };

    let scale = 1.0 / (cfg.h * cfg.h * cfg.sigma2 * cfg.sigma2);
    let mm = par_fold(
        n,
        |i| {
            let x = draw_x(i);
            let mut rng = v_rs.substream(i as u64).rng();
            let v = s.sample(&mut rng);
            let w = s.sample(&mut rng);
            Ok(DirectSample {
                a: diff(&x, &v)?,
                b: diff(&x, &w)?,
                gv: dep.apply_metric_pinv(&x, &v),
                gw: dep.apply_metric_pinv(&x, &w),
            })
        },
        MatrixMoments::new(d),
        |mm, t| {
            let c = t.a * t.b * scale;
            let mut term = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    term[i * d + j] = 0.5 * c * (t.gv[i] * t.gw[j] + t.gw[i] * t.gv[j]);
                }
            }
            mm.push(&term);
        },
    )?;

    let evals = extra + (2 * n * stencil.order()) as u64;
    Ok(CPrimeEstimate {
        matrix: SymmetricMatrix::symmetrize(&mm.mean())?,
        n_model_evals: evals,
        method: CPrimeMethod::Direct,
        config: Some(cfg.clone()),
        std_error: mm.std_error(),
    })
}
