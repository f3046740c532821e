//! Total sensitivity functionals: the `Σ^tot` / `dΣ^tot` matrices, sensitivity-based
//! active scores, and derivative-based upper bounds of total indices.

use rand::RngCore;
use serde::Serialize;

use crate::active::{split_subspace, SubspaceApproximator};
use crate::dependency::{assemble, DependencyModel};
use crate::distributions::RngStream;
use crate::error::{Error, Result};
use crate::gradient::{raw_gradient_at, sampler_for, GradientSource};
use crate::linalg::{Matrix, Spectrum, SymmetricMatrix};
use crate::model::Model;
use crate::stats::{par_collect, par_fold, MatrixMoments, Moments};

/// Default number of `X′` draws averaged inside the derivative-based estimators.
pub const DEFAULT_INNER: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaTotKind {
    PickFreezeIndependent,
    DerivativeIndependent,
    DerivativeDependent,
}

#[derive(Clone, Debug, Serialize)]
pub struct SigmaTotEstimate {
    pub matrix: SymmetricMatrix,
    pub kind: SigmaTotKind,
    pub n_model_evals: u64,
    pub n_gradient_evals: u64,
    /// Entrywise standard errors.
    pub std_error: Matrix,
}

/// Per-sample vectors `S̃_k = M(X) − M(X′_k, X_∼k)` and the outputs `M(X)`.
#[derive(Clone, Debug)]
pub struct PickFreeze {
    pub vectors: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
}

pub fn pick_freeze_vectors(
    model: &dyn Model,
    xs: &[Vec<f64>],
    xps: &[Vec<f64>],
) -> Result<PickFreeze> {
    if xs.len() != xps.len() {
        return Err(Error::invalid(format!(
            "samples differ in size: {} vs {}",
            xs.len(),
            xps.len()
        )));
    }
    let d = model.dim();
    if xs.iter().chain(xps).any(|x| x.len() != d) {
        return Err(Error::invalid("sample points have the wrong dimension"));
    }
    let rows = par_collect(xs.len(), |i| {
        let x = &xs[i];
        let y = model.eval(x)?;
        let mut mixed = x.clone();
        let mut s = Vec::with_capacity(d);
        for k in 0..d {
            mixed[k] = xps[i][k];
            s.push(y - model.eval(&mixed)?);
            mixed[k] = x[k];
        }
        Ok((s, y))
    })?;
    let (vectors, outputs) = rows.into_iter().unzip();
    Ok(PickFreeze { vectors, outputs })
}

/// `Σ̂^tot = {(1/N)·Σ S̃S̃ᵀ} ∗ 𝒟*`, i.e. the mean outer product with its diagonal halved.
pub fn estimate_sigma_tot(vectors: &[Vec<f64>]) -> Result<SigmaTotEstimate> {
    if vectors.len() < 2 {
        return Err(Error::invalid("pick-freeze estimator needs N >= 2"));
    }
    let d = vectors[0].len();
    let mut mm = MatrixMoments::new(d);
    let mut term = vec![0.0; d * d];
    for s in vectors {
        if s.len() != d {
            return Err(Error::invalid("pick-freeze vectors have mixed lengths"));
        }
        for i in 0..d {
            for k in 0..d {
                let f = if i == k { 0.5 } else { 1.0 };
                term[i * d + k] = f * s[i] * s[k];
            }
        }
        mm.push(&term);
    }
    Ok(SigmaTotEstimate {
        matrix: SymmetricMatrix::symmetrize(&mm.mean())?,
        kind: SigmaTotKind::PickFreezeIndependent,
        n_model_evals: (vectors.len() * (d + 1)) as u64,
        n_gradient_evals: 0,
        std_error: mm.std_error(),
    })
}

fn require_independent(dep: &dyn DependencyModel) -> Result<()> {
    if !dep.is_independent() {
        return Err(Error::invalid("this estimator requires independent inputs"));
    }
    Ok(())
}

fn check_dims(model: &dyn Model, dep: &dyn DependencyModel) -> Result<()> {
    if model.dim() != dep.dim() {
        return Err(Error::invalid(format!(
            "model has {} inputs but the input law has {}",
            model.dim(),
            dep.dim()
        )));
    }
    Ok(())
}

/// Draws two independent samples and runs the pick-freeze estimator.
pub fn sigma_tot_pick_freeze(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    n: usize,
    rs: RngStream,
) -> Result<(SigmaTotEstimate, PickFreeze)> {
    require_independent(dep)?;
    check_dims(model, dep)?;
    let (xs, xps) = paired_samples(dep, n, rs)?;
    let pf = pick_freeze_vectors(model, &xs, &xps)?;
    Ok((estimate_sigma_tot(&pf.vectors)?, pf))
}

fn paired_samples(
    dep: &dyn DependencyModel,
    n: usize,
    rs: RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let pairs = par_collect(n, |i| {
        let mut rng = rs.substream(i as u64).rng();
        let x = dep.sample(&mut rng);
        let xp = dep.sample(&mut rng);
        Ok((x, xp))
    })?;
    Ok(pairs.into_iter().unzip())
}

struct Partials<'a> {
    model: &'a dyn Model,
    source: GradientSource<'a>,
    sampler: Option<crate::distributions::SphericalSampler>,
    inner: usize,
}

impl<'a> Partials<'a> {
    fn new(model: &'a dyn Model, source: GradientSource<'a>) -> Result<Self> {
        match source {
            GradientSource::Analytic => {
                if !model.has_gradient() {
                    return Err(Error::NotAvailable("model has no analytic gradient".into()));
                }
                Ok(Self {
                    model,
                    source,
                    sampler: None,
                    inner: 0,
                })
            }
            GradientSource::Estimated(cfg) => {
                let d = model.dim();
                Ok(Self {
                    model,
                    source,
                    sampler: Some(sampler_for(cfg, d)?),
                    inner: cfg.inner_count(d),
                })
            }
        }
    }

    fn grad(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        match self.source {
            GradientSource::Analytic => self.model.gradient(x),
            GradientSource::Estimated(cfg) => raw_gradient_at(
                self.model,
                x,
                cfg,
                self.sampler.as_ref().expect("sampler"),
                self.inner,
                rng,
            ),
        }
    }

    fn evals_per_call(&self) -> u64 {
        match self.source {
            GradientSource::Analytic => 0,
            GradientSource::Estimated(cfg) => (self.inner * cfg.stencil.order()) as u64,
        }
    }
}

fn positive_pdf(p: f64, x: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::numeric(format!(
            "input density is {p} at the drawn point {x}"
        )));
    }
    Ok(p)
}

// One estimator for both the dependent matrix dΣ^tot and its independent form Σ̃^tot.
//
// Per sample: X is drawn once from the joint law and Z_∼j = r_j⁻¹(X_∼j | X_j) for every j.
// For each j, `inner` values X′_j are drawn independently from the marginal of X_j and
// dh_j(t) = J^(j)(y)ᵀ∇M(y) is evaluated at y = (t, r_j(t, Z_∼j)). The diagonal averages
// dh_j(X_j)·dh_j(X′_j)·(F(min) − F F′)/(ρρ′); the off-diagonal multiplies the averages
// T_j of dh_j(X′_j)·(F(X′_j) − 1{X′_j ≥ X_j})/ρ(X′_j), which are independent across j given X.
fn derivative_core(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    source: GradientSource<'_>,
    n: usize,
    inner: usize,
    rs: RngStream,
    kind: SigmaTotKind,
) -> Result<SigmaTotEstimate> {
    check_dims(model, dep)?;
    if n < 2 {
        return Err(Error::invalid("derivative-based estimator needs N >= 2"));
    }
    if inner == 0 {
        return Err(Error::invalid("inner sample count must be positive"));
    }
    let d = dep.dim();
    let partials = Partials::new(model, source)?;
    let marginals = dep.marginals();
    let dh = |j: usize, y: &[f64], rng: &mut dyn RngCore| -> Result<f64> {
        let g = partials.grad(y, rng)?;
        let col = dep.jacobian_column(j, y);
        Ok(col.iter().zip(&g).map(|(a, b)| a * b).sum())
    };

    let mm = par_fold(
        n,
        |i| {
            let mut rng = rs.substream(i as u64).rng();
            let x = dep.sample(&mut rng);
            let g0 = partials.grad(&x, &mut rng)?;
            let mut diag = vec![0.0; d];
            let mut t = vec![0.0; d];
            for j in 0..d {
                let m = marginals[j];
                let z = dep.conditional_map_inverse(j, &x)?;
                let dh0: f64 = dep
                    .jacobian_column(j, &x)
                    .iter()
                    .zip(&g0)
                    .map(|(a, b)| a * b)
                    .sum();
                let xj = x[j];
                let fj = m.cdf(xj);
                let pj = positive_pdf(m.pdf(xj), xj)?;
                let mut sd = 0.0;
                let mut st = 0.0;
                for _ in 0..inner {
                    let xp = m.sample(&mut rng);
                    let pp = positive_pdf(m.pdf(xp), xp)?;
                    let fp = m.cdf(xp);
                    let y = assemble(j, xp, &dep.conditional_map(j, xp, &z)?);
                    let dhp = dh(j, &y, &mut rng)?;
                    let kernel = (m.cdf(xj.min(xp)) - fj * fp) / (pj * pp);
                    sd += dh0 * dhp * kernel;
                    let ind = if xp >= xj { 1.0 } else { 0.0 };
                    st += dhp * (fp - ind) / pp;
                }
                diag[j] = sd / inner as f64;
                t[j] = st / inner as f64;
            }
            let mut term = vec![0.0; d * d];
            for a in 0..d {
                for b in 0..d {
                    term[a * d + b] = if a == b { diag[a] } else { t[a] * t[b] };
                }
            }
            Ok(term)
        },
        MatrixMoments::new(d),
        |mm, term| mm.push(&term),
    )?;

    let grad_calls = (n * (1 + d * inner)) as u64;
    Ok(SigmaTotEstimate {
        matrix: SymmetricMatrix::symmetrize(&mm.mean())?,
        kind,
        n_model_evals: grad_calls * partials.evals_per_call(),
        n_gradient_evals: grad_calls,
        std_error: mm.std_error(),
    })
}

/// Derivative-based `Σ̃^tot` for independent inputs.
pub fn estimate_sigma_tot_derivative_independent(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    source: GradientSource<'_>,
    n: usize,
    inner: usize,
    rs: RngStream,
) -> Result<SigmaTotEstimate> {
    require_independent(dep)?;
    derivative_core(
        model,
        dep,
        source,
        n,
        inner,
        rs,
        SigmaTotKind::DerivativeIndependent,
    )
}

/// Derivative-based `dΣ^tot` through the dependency functions of `dep`.
pub fn estimate_d_sigma_tot(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    source: GradientSource<'_>,
    n: usize,
    inner: usize,
    rs: RngStream,
) -> Result<SigmaTotEstimate> {
    derivative_core(
        model,
        dep,
        source,
        n,
        inner,
        rs,
        SigmaTotKind::DerivativeDependent,
    )
}

/// Sample mean and unbiased variance of `M(X)`.
pub fn output_moments(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    n: usize,
    rs: RngStream,
) -> Result<Moments> {
    check_dims(model, dep)?;
    par_fold(
        n,
        |i| {
            let mut rng = rs.substream(i as u64).rng();
            model.eval(&dep.sample(&mut rng))
        },
        Moments::new(),
        |m, v| m.push(v),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct SensitivityScores {
    pub m: usize,
    /// `ϑ_j(m) = Σ_{k≤m} γ_k ϖ_{jk}²`.
    pub theta: Vec<f64>,
    /// `ϑ_j(d)`.
    pub theta_full: Vec<f64>,
    /// `ϑ_j(d)/Var[M]`: total (or dependent total) indices.
    pub total_indices: Vec<f64>,
    pub variance: f64,
}

pub fn sensitivity_scores(spec: &Spectrum, m: usize, variance: f64) -> Result<SensitivityScores> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::DegenerateModel(format!(
            "output variance must be positive, got {variance}"
        )));
    }
    let theta = crate::active::active_scores(spec, m)?;
    let theta_full = crate::active::active_scores(spec, spec.dim())?;
    let total_indices = theta_full.iter().map(|t| t / variance).collect();
    Ok(SensitivityScores {
        m,
        theta,
        theta_full,
        total_indices,
        variance,
    })
}

/// Approximator on the leading `ell` eigenvectors of the total-sensitivity matrix.
pub fn sensitivity_approximator<'a>(
    spec: &Spectrum,
    ell: usize,
    dep: &'a dyn DependencyModel,
    ns: usize,
) -> Result<SubspaceApproximator<'a>> {
    SubspaceApproximator::new(split_subspace(spec, ell)?, dep, ns)
}

/// Approximated value `M̃_s(x)`.
pub fn approximate_sensitivity(
    model: &dyn Model,
    x: &[f64],
    spec: &Spectrum,
    ell: usize,
    dep: &dyn DependencyModel,
    ns: usize,
    rs: RngStream,
) -> Result<f64> {
    sensitivity_approximator(spec, ell, dep, ns)?.approximate(model, x, rs)
}

/// Per-input indices, derivative-based measures and their upper bounds.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub s_first: Vec<f64>,
    pub s_total: Vec<f64>,
    pub s_total_se: Vec<f64>,
    pub ub: Vec<f64>,
    /// Standard error of `S_T − UB` (both from the same sample).
    pub gap_se: Vec<f64>,
    pub ub_abs: Vec<f64>,
    pub s_first_abs: Option<Vec<f64>>,
    pub s_total_abs: Option<Vec<f64>>,
    pub c1: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub variance: f64,
    /// `E|M − E[M]|`.
    pub mean_abs_deviation: f64,
    pub n_model_evals: u64,
}

/// Sobol indices by pick-freeze, DGSMs and the bounds `UB_j`, `UB_j^a`, `C₁` for independent inputs.
///
/// `abs_inner > 0` also estimates the absolute indices `S_j^a`, `S_Tj^a` with that many
/// inner draws for each conditional expectation.
pub fn dgsm_bounds(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    source: GradientSource<'_>,
    n: usize,
    abs_inner: usize,
    rs: RngStream,
) -> Result<BoundReport> {
    require_independent(dep)?;
    check_dims(model, dep)?;
    if n < 2 {
        return Err(Error::invalid("bounds need N >= 2"));
    }
    let d = dep.dim();
    let marginals = dep.marginals();
    let partials = Partials::new(model, source)?;

    struct Row {
        y: f64,
        yp: f64,
        tot: Vec<f64>,
        fo: Vec<f64>,
        g: Vec<f64>,
        w2: Vec<f64>,
        w1: Vec<f64>,
    }

    let rows = par_collect(n, |i| {
        let mut rng = rs.substream(i as u64).rng();
        let x = dep.sample(&mut rng);
        let xp = dep.sample(&mut rng);
        let y = model.eval(&x)?;
        let yp = model.eval(&xp)?;
        let g = partials.grad(&x, &mut rng)?;
        let mut tot = vec![0.0; d];
        let mut fo = vec![0.0; d];
        let mut w2 = vec![0.0; d];
        let mut w1 = vec![0.0; d];
        for j in 0..d {
            let mut a = x.clone();
            a[j] = xp[j];
            tot[j] = model.eval(&a)?;
            let mut b = xp.clone();
            b[j] = x[j];
            fo[j] = model.eval(&b)?;
            let m = marginals[j];
            let f = m.cdf(x[j]);
            let p = positive_pdf(m.pdf(x[j]), x[j])?;
            w1[j] = f * (1.0 - f) / p;
            w2[j] = w1[j] / p;
        }
        Ok(Row {
            y,
            yp,
            tot,
            fo,
            g,
            w2,
            w1,
        })
    })?;

    let mut out = Moments::new();
    rows.iter().for_each(|r| out.push(r.y));
    let mean = out.mean();
    let var = out.variance();
    // a constant output has no variance to share; its indices and bounds are reported as 0
    let inv_var = if var > 0.0 { 1.0 / var } else { 0.0 };
    let mad = rows.iter().map(|r| (r.y - mean).abs()).sum::<f64>() / n as f64;
    let nf = n as f64;

    let mut s_first = vec![0.0; d];
    let mut s_total = vec![0.0; d];
    let mut s_total_se = vec![0.0; d];
    let mut ub = vec![0.0; d];
    let mut gap_se = vec![0.0; d];
    let mut ub_abs = vec![0.0; d];
    let mut nu = vec![0.0; d];
    let mut mu_star = vec![0.0; d];
    for j in 0..d {
        let mut tm = Moments::new();
        let mut gm = Moments::new();
        let mut fo = 0.0;
        let mut ua = 0.0;
        for r in &rows {
            let t = 0.5 * (r.y - r.tot[j]).powi(2) * inv_var;
            let u = 0.5 * r.g[j] * r.g[j] * r.w2[j] * inv_var;
            tm.push(t);
            gm.push(t - u);
            ub[j] += u / nf;
            fo += r.y * (r.fo[j] - r.yp);
            ua += r.g[j].abs() * r.w1[j];
            nu[j] += r.g[j] * r.g[j] / nf;
            mu_star[j] += r.g[j].abs() / nf;
        }
        s_total[j] = tm.mean();
        s_total_se[j] = tm.std_error();
        gap_se[j] = gm.std_error();
        s_first[j] = fo / nf * inv_var;
        ub_abs[j] = if mad > 0.0 { 2.0 * ua / nf / mad } else { 0.0 };
    }
    let mut evals = (n * (2 + 2 * d)) as u64 + n as u64 * partials.evals_per_call();

    let (s_first_abs, s_total_abs) = if abs_inner > 0 && mad > 0.0 {
        let (fa, ta) = absolute_indices(model, dep, n, abs_inner, mean, mad, rs.fork(7))?;
        evals += (n * d * 2 * abs_inner + n) as u64;
        (Some(fa), Some(ta))
    } else {
        (None, None)
    };

    Ok(BoundReport {
        s_first,
        s_total,
        s_total_se,
        ub,
        gap_se,
        ub_abs,
        s_first_abs,
        s_total_abs,
        c1: marginals.iter().map(|m| m.c1()).collect(),
        nu,
        mu_star,
        variance: var,
        mean_abs_deviation: mad,
        n_model_evals: evals,
    })
}

/// `S_j^a = E|E[M|X_j] − E M| / E|M − E M|` and `S_Tj^a = E|M − E[M|X_∼j]| / E|M − E M|`,
/// with each conditional expectation replaced by an average over `inner` fresh draws.
pub fn absolute_indices(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    n: usize,
    inner: usize,
    mean: f64,
    mad: f64,
    rs: RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    require_independent(dep)?;
    if inner == 0 || n == 0 {
        return Err(Error::invalid(
            "absolute indices need positive sample sizes",
        ));
    }
    if !(mad > 0.0) {
        return Err(Error::DegenerateModel(
            "mean absolute deviation is zero".into(),
        ));
    }
    let d = dep.dim();
    let marginals = dep.marginals();
    let (fo, tot) = par_fold(
        n,
        |i| {
            let mut rng = rs.substream(i as u64).rng();
            let x = dep.sample(&mut rng);
            let y = model.eval(&x)?;
            let mut fo = vec![0.0; d];
            let mut tot = vec![0.0; d];
            for j in 0..d {
                let mut a = x.clone();
                let mut cond_rest = 0.0;
                for _ in 0..inner {
                    a[j] = marginals[j].sample(&mut rng);
                    cond_rest += model.eval(&a)?;
                }
                tot[j] = (y - cond_rest / inner as f64).abs();
                let mut cond_j = 0.0;
                for _ in 0..inner {
                    let mut b = dep.sample(&mut rng);
                    b[j] = x[j];
                    cond_j += model.eval(&b)?;
                }
                fo[j] = (cond_j / inner as f64 - mean).abs();
            }
            Ok((fo, tot))
        },
        (vec![0.0; d], vec![0.0; d]),
        |acc, (f, t)| {
            for j in 0..d {
                acc.0[j] += f[j];
                acc.1[j] += t[j];
            }
        },
    )?;
    let scale = 1.0 / (n as f64 * mad);
    Ok((
        fo.iter().map(|v| v * scale).collect(),
        tot.iter().map(|v| v * scale).collect(),
    ))
}
