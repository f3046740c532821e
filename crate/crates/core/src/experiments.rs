//! Data behind the comparison figures: Shapley effects along a correlation sweep, estimated
//! versus analytic spectra, and approximation errors against the retained dimension.

use serde::{Deserialize, Serialize};

use crate::active::{approximation_error, split_subspace, SubspaceApproximator};
use crate::dependency::{DependencyModel, GaussianDependency, Independent};
use crate::distributions::{Marginal, RngStream};
use crate::error::{Error, Result};
use crate::gradient::{
    estimate_c_analytic, estimate_c_direct, estimate_c_plugin, gradient_samples, CPrimeEstimate,
    EstimatorConfig, GradientSource, Stencil,
};
use crate::linalg::{sym_eig, Spectrum, SymmetricMatrix};
use crate::model::{FnGradModel, Model};
use crate::sensitivity::sigma_tot_pick_freeze;
use crate::shapley::{db_shapley, exact_shapley, normalize, LinearGaussianVariance};
use crate::stats::par_collect;
use crate::testfns::{FunctionParams, TestFunction, DEFAULT_QUADRATIC_SEED};

/// Estimator used for the gradient matrix `C′`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DbEstimator {
    Analytic,
    Plugin,
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSettings {
    pub seed: u64,
    pub functions: Vec<String>,
    pub quadratic_seed: u64,
    pub db_estimator: DbEstimator,
    /// Sample size of the `C′` estimator.
    pub n_cprime: usize,
    /// Sample size of the pick-freeze `Σ^tot` estimator.
    pub n_sensitivity: usize,
    /// Points at which approximation errors are measured.
    pub n_points: usize,
    /// Inactive draws per approximated point.
    pub ns: usize,
    pub tau: f64,
    pub m2: f64,
    pub sigma2_cap: Option<f64>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            seed: 7,
            functions: [
                "quadratic-1",
                "quadratic-2",
                "u-product",
                "g-sobol-a",
                "g-sobol-b",
                "g-sobol-c",
            ]
            .map(String::from)
            .to_vec(),
            quadratic_seed: DEFAULT_QUADRATIC_SEED,
            db_estimator: DbEstimator::Direct,
            n_cprime: 200_000,
            n_sensitivity: 10_000,
            n_points: 200,
            ns: crate::active::DEFAULT_NS,
            tau: 0.5,
            m2: 1.0,
            sigma2_cap: None,
        }
    }
}

impl ExperimentSettings {
    pub fn validate(&self) -> Result<()> {
        if self.functions.is_empty() {
            return Err(Error::invalid("no functions selected"));
        }
        for (name, v) in [
            ("n_cprime", self.n_cprime),
            ("n_sensitivity", self.n_sensitivity),
            ("n_points", self.n_points),
            ("ns", self.ns),
        ] {
            if v < 2 {
                return Err(Error::invalid(format!(
                    "{name} must be at least 2, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Catalog entry `name`, with the configured orthogonal matrix for the quadratics.
    pub fn function(&self, name: &str) -> Result<TestFunction> {
        let params = if name.starts_with("quadratic") {
            FunctionParams {
                seed: Some(self.quadratic_seed),
                ..Default::default()
            }
        } else {
            FunctionParams::default()
        };
        TestFunction::by_name(name, &params)
    }
}

/// `C′` of `model` with the estimator and sample size of `settings`.
pub fn estimate_db_matrix(
    model: &dyn Model,
    dep: &dyn DependencyModel,
    settings: &ExperimentSettings,
    rs: RngStream,
) -> Result<CPrimeEstimate> {
    let n = settings.n_cprime;
    match settings.db_estimator {
        DbEstimator::Analytic => estimate_c_analytic(model, dep, n, rs),
        DbEstimator::Plugin | DbEstimator::Direct => {
            let cfg = EstimatorConfig::auto_with(
                dep,
                n,
                settings.tau,
                settings.m2,
                Stencil::central(),
                settings.sigma2_cap,
                rs.fork(0),
            )?;
            if settings.db_estimator == DbEstimator::Plugin {
                estimate_c_plugin(model, &cfg, dep, rs.fork(1))
            } else {
                estimate_c_direct(model, &cfg, dep, rs.fork(1))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Row {
    pub rho: f64,
    /// Normalized effects computed from `∇M`, ignoring the dependence.
    pub phi_duan: [f64; 2],
    /// Normalized derivative-based effects from the dependent gradient.
    pub dphi: [f64; 2],
    /// Variance-based Shapley effects (the budget is `Var M = 1`).
    pub shapley_var: [f64; 2],
}

/// Correlations `−0.99, −0.98, …, 0.99`.
pub fn figure1_grid() -> Vec<f64> {
    (-99..=99).map(|i| i as f64 / 100.0).collect()
}

/// Shapley effects of `M = x₁` under a standard bivariate Gaussian with correlation `rho`.
pub fn figure1_row(rho: f64) -> Result<Figure1Row> {
    let dep = GaussianDependency::bivariate(rho)?;
    let model = FnGradModel::new(2, |x: &[f64]| x[0], |_: &[f64]| vec![1.0, 0.0]);
    // the gradient is constant, so one draw gives the exact moments
    let independent = Independent::iid(2, Marginal::standard_normal())?;
    let (plain, _) = gradient_samples(
        &model,
        &independent,
        GradientSource::Analytic,
        1,
        RngStream::new(0),
    )?;
    let (dependent, _) =
        gradient_samples(&model, &dep, GradientSource::Analytic, 1, RngStream::new(0))?;
    let duan = normalize(&db_shapley(&plain)?)?
        .normalized
        .expect("normalized");
    let ours = normalize(&db_shapley(&dependent)?)?
        .normalized
        .expect("normalized");
    let cov = SymmetricMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])?;
    let var = exact_shapley(&LinearGaussianVariance::new(vec![1.0, 0.0], cov)?, 2)?.effects;
    Ok(Figure1Row {
        rho,
        phi_duan: [duan[0], duan[1]],
        dphi: [ours[0], ours[1]],
        shapley_var: [var[0], var[1]],
    })
}

pub fn figure1() -> Result<Vec<Figure1Row>> {
    figure1_grid().into_iter().map(figure1_row).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// Eigenvectors of `C′`.
    Db,
    /// Eigenvectors of the total-sensitivity matrix.
    Sensitivity,
}

impl Approach {
    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::Db => "db",
            Approach::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure2Row {
    pub function: String,
    pub approach: Approach,
    /// 1-based eigenvalue rank.
    pub k: usize,
    pub lambda: f64,
    pub lambda_true: f64,
}

struct Estimated {
    db_spec: Spectrum,
    sens_spec: Spectrum,
}

fn estimate_both(
    fun: &TestFunction,
    dep: &dyn DependencyModel,
    settings: &ExperimentSettings,
    rs: RngStream,
) -> Result<Estimated> {
    let c = estimate_db_matrix(fun, dep, settings, rs.fork(1))?;
    let db_spec = sym_eig(&c.matrix)?;
    let (k, _) = sigma_tot_pick_freeze(fun, dep, settings.n_sensitivity, rs.fork(2))?;
    let sens_spec = sym_eig(&k.matrix)?;
    Ok(Estimated { db_spec, sens_spec })
}

fn function_stream(settings: &ExperimentSettings, name: &str) -> RngStream {
    // keyed by name so adding or reordering functions leaves the other rows unchanged
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    });
    RngStream::new(settings.seed).fork(tag)
}

/// Estimated and analytic spectra of `C′` and of `Σ^tot` for every selected function.
pub fn figure2(settings: &ExperimentSettings) -> Result<Vec<Figure2Row>> {
    settings.validate()?;
    let mut rows = Vec::new();
    for name in &settings.functions {
        let fun = settings.function(name)?;
        let dep = fun.dependency()?;
        let est = estimate_both(
            &fun,
            dep.as_ref(),
            settings,
            function_stream(settings, name),
        )?;
        let truth_db = fun.analytic_reference("spectrum_C")?.vector()?;
        let truth_sens = fun.analytic_reference("spectrum_K")?.vector()?;
        for (approach, values, truth) in [
            (Approach::Db, &est.db_spec.eigenvalues, truth_db),
            (
                Approach::Sensitivity,
                &est.sens_spec.eigenvalues,
                truth_sens,
            ),
        ] {
            for (k, (&lambda, &lambda_true)) in values.iter().zip(&truth).enumerate() {
                rows.push(Figure2Row {
                    function: name.clone(),
                    approach,
                    k: k + 1,
                    lambda,
                    lambda_true,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure3Row {
    pub function: String,
    pub approach: Approach,
    /// Retained dimension; 0 is the constant approximation by the sample mean.
    pub ell: usize,
    pub err: f64,
}

/// `Err(ℓ) = (1/N)·Σ(M(x_i) − M̃(x_i))²` over `n_points` draws, for `ℓ = 0, …, d`.
pub fn figure3(settings: &ExperimentSettings) -> Result<Vec<Figure3Row>> {
    settings.validate()?;
    let mut rows = Vec::new();
    for name in &settings.functions {
        let fun = settings.function(name)?;
        let dep = fun.dependency()?;
        let rs = function_stream(settings, name);
        let est = estimate_both(&fun, dep.as_ref(), settings, rs)?;
        let pts_rs = rs.fork(3);
        let points = par_collect(settings.n_points, |i| {
            Ok(dep.sample(&mut pts_rs.substream(i as u64).rng()))
        })?;
        let exact = par_collect(points.len(), |i| fun.eval(&points[i]))?;
        let mean = exact.iter().sum::<f64>() / exact.len() as f64;
        let baseline = approximation_error(&exact, &vec![mean; exact.len()])?;
        for (approach, spec, tag) in [
            (Approach::Db, &est.db_spec, 4),
            (Approach::Sensitivity, &est.sens_spec, 5),
        ] {
            rows.push(Figure3Row {
                function: name.clone(),
                approach,
                ell: 0,
                err: baseline,
            });
            for ell in 1..=fun.dim() {
                let approx = SubspaceApproximator::new(
                    split_subspace(spec, ell)?,
                    dep.as_ref(),
                    settings.ns,
                )?;
                let values =
                    approx.approximate_all(&fun, &points, rs.fork(tag).substream(ell as u64))?;
                rows.push(Figure3Row {
                    function: name.clone(),
                    approach,
                    ell,
                    err: approximation_error(&exact, &values)?,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfns::{bivariate_x1_dphi, bivariate_x1_shapley_var};

    #[test]
    fn figure1_matches_closed_forms() {
        let grid = figure1_grid();
        assert_eq!(grid.len(), 199);
        assert_eq!((grid[0], grid[99], grid[198]), (-0.99, 0.0, 0.99));
        for rho in [-0.99, -0.5, 0.0, 0.37, 0.8, 0.99] {
            let row = figure1_row(rho).unwrap();
            assert_eq!(row.phi_duan, [1.0, 0.0]);
            let d = bivariate_x1_dphi(rho).unwrap();
            let s = d[0] + d[1];
            assert!(
                (row.dphi[0] - d[0] / s).abs() < 1e-12 && (row.dphi[1] - d[1] / s).abs() < 1e-12
            );
            let v = bivariate_x1_shapley_var(rho).unwrap();
            assert!(
                (row.shapley_var[0] - v[0]).abs() < 1e-12
                    && (row.shapley_var[1] - v[1]).abs() < 1e-12
            );
        }
    }

    #[test]
    fn settings_reject_unknown_keys() {
        let s: ExperimentSettings = serde_json::from_str(r#"{"seed": 3, "n_points": 50}"#).unwrap();
        assert_eq!((s.seed, s.n_points, s.ns), (3, 50, 100));
        assert!(serde_json::from_str::<ExperimentSettings>(r#"{"sead": 3}"#).is_err());
    }

    #[test]
    fn small_figures_are_reproducible() {
        let settings = ExperimentSettings {
            functions: vec!["quadratic-1".into(), "g-sobol-b".into()],
            db_estimator: DbEstimator::Analytic,
            n_cprime: 2000,
            n_sensitivity: 2000,
            n_points: 20,
            ns: 10,
            ..Default::default()
        };
        let a = figure2(&settings).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!(a, figure2(&settings).unwrap());
        let f3 = figure3(&settings).unwrap();
        assert_eq!(f3.len(), 2 * 2 * 11);
        for r in f3.iter().filter(|r| r.ell == 10) {
            assert!(r.err < 1e-12, "{r:?}");
        }
        let base = f3.iter().find(|r| r.ell == 0).unwrap().err;
        assert!(base > 0.0);
    }
}
