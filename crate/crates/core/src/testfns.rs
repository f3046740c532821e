//! Benchmark functions with their input laws, analytic gradients and closed-form
//! reference quantities.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dependency::{DependencyModel, GaussianDependency, Independent};
use crate::distributions::{Marginal, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{
    orthogonality_defect, orthonormalize_columns, sym_eig, Matrix, SymmetricMatrix,
};
use crate::model::{check_dim, finite, Model};

pub const QUADRATIC_1_EIGENVALUES: [f64; 10] =
    [150.0, 5.0, 0.5, 0.4, 0.1, 0.8, 0.01, 0.0009, 0.005, 0.008];
pub const QUADRATIC_2_EIGENVALUES: [f64; 10] = [
    150.0, 140.0, 130.0, 120.0, 110.0, 100.0, 90.0, 145.0, 145.0, 125.0,
];
pub const U_PRODUCT_WEIGHTS: [f64; 10] =
    [25.0, 25.0, 25.0, 25.0, 25.0, 37.0, 37.0, 37.0, 37.0, 37.0];
/// Variance of each U-product input.
pub const U_PRODUCT_VARIANCE: f64 = 4.0;
pub const G_SOBOL_A: [f64; 10] = [0.0, 0.0, 6.52, 6.52, 6.52, 6.52, 6.52, 6.52, 6.52, 6.52];
pub const G_SOBOL_B: [f64; 10] = [50.0; 10];
pub const G_SOBOL_C: [f64; 10] = [0.0; 10];
/// Seed of the random orthogonal matrix used by the quadratic functions unless overridden.
pub const DEFAULT_QUADRATIC_SEED: u64 = 1;

/// Catalog names accepted by [`TestFunction::by_name`].
pub const CATALOG: [&str; 10] = [
    "linear-x1",
    "quadratic-1",
    "quadratic-2",
    "u-product",
    "g-sobol-a",
    "g-sobol-b",
    "g-sobol-c",
    "m0",
    "m3",
    "m4",
];

/// Optional parameters of a catalog entry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionParams {
    /// Correlation of `linear-x1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Dimension of `m0`, `m3` and `m4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Seed of the orthogonal matrix of the quadratic functions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputLaw {
    Independent {
        marginals: Vec<Marginal>,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: SymmetricMatrix,
    },
}

impl InputLaw {
    pub fn dim(&self) -> usize {
        match self {
            InputLaw::Independent { marginals } => marginals.len(),
            InputLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn dependency(&self) -> Result<Box<dyn DependencyModel>> {
        Ok(match self {
            InputLaw::Independent { marginals } => Box::new(Independent::new(marginals.clone())?),
            InputLaw::Gaussian { mean, covariance } => {
                Box::new(GaussianDependency::new(mean.clone(), covariance.clone())?)
            }
        })
    }

    pub fn is_independent(&self) -> bool {
        matches!(self, InputLaw::Independent { .. })
    }
}

/// A closed-form reference quantity.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Reference {
    Matrix(SymmetricMatrix),
    Vector(Vec<f64>),
    Scalar(f64),
    Flag(bool),
}

impl Reference {
    pub fn matrix(self) -> Result<SymmetricMatrix> {
        match self {
            Reference::Matrix(m) => Ok(m),
            _ => Err(Error::invalid("reference is not a matrix")),
        }
    }

    pub fn vector(self) -> Result<Vec<f64>> {
        match self {
            Reference::Vector(v) => Ok(v),
            _ => Err(Error::invalid("reference is not a vector")),
        }
    }

    pub fn scalar(self) -> Result<f64> {
        match self {
            Reference::Scalar(v) => Ok(v),
            _ => Err(Error::invalid("reference is not a scalar")),
        }
    }
}

// Moments of one factor f(X) of a product of independent factors.
#[derive(Clone, Copy, Debug)]
struct FactorMoments {
    mean: f64,
    second: f64,
    deriv_sq: f64,
    value_deriv: f64,
}

#[derive(Clone, Debug)]
enum Kind {
    LinearX1 { rho: f64 },
    Quadratic { a: Matrix },
    UProduct { u: Vec<f64> },
    GSobol { a: Vec<f64> },
    M0,
    M3,
    M4,
}

/// A catalog entry: the model, its input law and its reference quantities.
#[derive(Clone, Debug)]
pub struct TestFunction {
    name: String,
    dim: usize,
    kind: Kind,
    law: InputLaw,
    params: FunctionParams,
}

/// Summary printed by `list-functions`.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionInfo {
    pub name: String,
    pub dim: usize,
    pub parameters: FunctionParams,
    pub input_law: InputLaw,
    pub has_gradient: bool,
    pub references: Vec<&'static str>,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!(
            "correlation must lie in (-1, 1), got {rho}"
        )));
    }
    Ok(())
}

/// `C′` of `M = x₁` under a standard bivariate Gaussian with correlation `ρ`.
pub fn bivariate_x1_c_prime(rho: f64) -> Result<SymmetricMatrix> {
    check_rho(rho)?;
    let s = (1.0 - rho * rho).powi(4);
    let p = 1.0 + rho * rho;
    SymmetricMatrix::from_rows(&[
        vec![p * p / s, -2.0 * rho * p / s],
        vec![-2.0 * rho * p / s, 4.0 * rho * rho / s],
    ])
}

/// `𝒦 = [[1, ρ²], [ρ², ρ²]]` of `M = x₁`.
pub fn bivariate_x1_k(rho: f64) -> Result<SymmetricMatrix> {
    check_rho(rho)?;
    let r2 = rho * rho;
    SymmetricMatrix::from_rows(&[vec![1.0, r2], vec![r2, r2]])
}

/// Derivative-based Shapley effects `(dΦ₁, dΦ₂)` of `M = x₁`.
pub fn bivariate_x1_dphi(rho: f64) -> Result<[f64; 2]> {
    check_rho(rho)?;
    let s = (1.0 - rho * rho).powi(4);
    let r = rho.abs();
    let p = 1.0 + rho * rho;
    Ok([p * (p + r) / s, r * (p + 4.0 * r) / s])
}

/// Variance-based Shapley effects `(1 − ρ²/2, ρ²/2)` of `M = x₁`; valid for `|ρ| ≤ 1`.
pub fn bivariate_x1_shapley_var(rho: f64) -> Result<[f64; 2]> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::invalid(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    Ok([1.0 - rho * rho / 2.0, rho * rho / 2.0])
}

/// Orthogonal matrix obtained by orthonormalizing a seeded standard Gaussian matrix.
pub fn random_orthogonal(d: usize, seed: u64) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let mut rng = RngStream::new(seed).rng();
    let data: Vec<f64> = (0..d * d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    orthonormalize_columns(&Matrix::from_vec(d, d, data)?)
}

/// `M_q(x) = ½xᵀAx` with `A = PΛPᵀ` and inputs `U(−1, 1)^d`.
pub fn quadratic_build(p: &Matrix, lambda: &[f64]) -> Result<TestFunction> {
    let d = lambda.len();
    if d == 0 || p.rows() != d || p.cols() != d {
        return Err(Error::invalid(format!(
            "P must be {d}x{d}, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    if !p.is_finite() || lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite quadratic parameters"));
    }
    let defect = orthogonality_defect(p);
    if defect > 1e-10 {
        return Err(Error::invalid(format!(
            "P is not orthogonal (defect {defect:.3e})"
        )));
    }
    let a = p.matmul(&Matrix::from_diag(lambda)).matmul(&p.transpose());
    let a = SymmetricMatrix::symmetrize(&a)?.into_matrix();
    Ok(TestFunction {
        name: "quadratic".into(),
        dim: d,
        kind: Kind::Quadratic { a },
        law: InputLaw::Independent {
            marginals: vec![Marginal::Uniform { a: -1.0, b: 1.0 }; d],
        },
        params: FunctionParams::default(),
    })
}

fn standard_cdf(x: f64) -> f64 {
    Marginal::standard_normal().cdf(x)
}

fn standard_pdf(x: f64) -> f64 {
    Marginal::standard_normal().pdf(x)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl TestFunction {
    pub fn by_name(name: &str, params: &FunctionParams) -> Result<Self> {
        let reject = |field: &str| {
            Err(Error::invalid(format!(
                "{name} takes no parameter `{field}`"
            )))
        };
        match name {
            "linear-x1" => {
                if params.d.is_some() {
                    return reject("d");
                }
                if params.seed.is_some() {
                    return reject("seed");
                }
                let rho = params.rho.unwrap_or(0.5);
                check_rho(rho)?;
                let cov = SymmetricMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]])?;
                Ok(TestFunction {
                    name: name.into(),
                    dim: 2,
                    kind: Kind::LinearX1 { rho },
                    law: InputLaw::Gaussian {
                        mean: vec![0.0; 2],
                        covariance: cov,
                    },
                    params: FunctionParams {
                        rho: Some(rho),
                        ..Default::default()
                    },
                })
            }
            "quadratic-1" | "quadratic-2" => {
                if params.rho.is_some() {
                    return reject("rho");
                }
                if params.d.is_some() {
                    return reject("d");
                }
                let seed = params.seed.unwrap_or(DEFAULT_QUADRATIC_SEED);
                let lambda = if name == "quadratic-1" {
                    QUADRATIC_1_EIGENVALUES
                } else {
                    QUADRATIC_2_EIGENVALUES
                };
                let mut f = quadratic_build(&random_orthogonal(10, seed)?, &lambda)?;
                f.name = name.into();
                f.params = FunctionParams {
                    seed: Some(seed),
                    ..Default::default()
                };
                Ok(f)
            }
            "u-product" | "g-sobol-a" | "g-sobol-b" | "g-sobol-c" => {
                if params != &FunctionParams::default() {
                    return Err(Error::invalid(format!("{name} takes no parameters")));
                }
                let (kind, marginal) = match name {
                    "u-product" => (
                        Kind::UProduct {
                            u: U_PRODUCT_WEIGHTS.to_vec(),
                        },
                        Marginal::Gaussian {
                            mean: 0.0,
                            var: U_PRODUCT_VARIANCE,
                        },
                    ),
                    "g-sobol-a" => (
                        Kind::GSobol {
                            a: G_SOBOL_A.to_vec(),
                        },
                        Marginal::Uniform { a: 0.0, b: 1.0 },
                    ),
                    "g-sobol-b" => (
                        Kind::GSobol {
                            a: G_SOBOL_B.to_vec(),
                        },
                        Marginal::Uniform { a: 0.0, b: 1.0 },
                    ),
                    _ => (
                        Kind::GSobol {
                            a: G_SOBOL_C.to_vec(),
                        },
                        Marginal::Uniform { a: 0.0, b: 1.0 },
                    ),
                };
                Ok(TestFunction {
                    name: name.into(),
                    dim: 10,
                    kind,
                    law: InputLaw::Independent {
                        marginals: vec![marginal; 10],
                    },
                    params: FunctionParams::default(),
                })
            }
            "m0" | "m3" | "m4" => {
                if params.rho.is_some() {
                    return reject("rho");
                }
                if params.seed.is_some() {
                    return reject("seed");
                }
                let d = params.d.unwrap_or(2);
                if d == 0 {
                    return Err(Error::invalid("dimension must be positive"));
                }
                let (kind, marginal) = match name {
                    "m0" => (Kind::M0, Marginal::Uniform { a: 0.0, b: 1.0 }),
                    "m3" => (Kind::M3, Marginal::Uniform { a: -1.0, b: 1.0 }),
                    _ => (Kind::M4, Marginal::Uniform { a: -1.0, b: 1.0 }),
                };
                Ok(TestFunction {
                    name: name.into(),
                    dim: d,
                    kind,
                    law: InputLaw::Independent {
                        marginals: vec![marginal; d],
                    },
                    params: FunctionParams {
                        d: Some(d),
                        ..Default::default()
                    },
                })
            }
            _ => Err(Error::invalid(format!(
                "unknown function `{name}`; known: {}",
                CATALOG.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn law(&self) -> &InputLaw {
        &self.law
    }

    pub fn params(&self) -> &FunctionParams {
        &self.params
    }

    pub fn dependency(&self) -> Result<Box<dyn DependencyModel>> {
        self.law.dependency()
    }

    /// Matrix `A` of a quadratic function.
    pub fn quadratic_matrix(&self) -> Option<&Matrix> {
        match &self.kind {
            Kind::Quadratic { a, .. } => Some(a),
            _ => None,
        }
    }

    pub fn reference_names(&self) -> Vec<&'static str> {
        let mut names = vec!["C", "C_prime", "K", "variance", "spectrum_C", "spectrum_K"];
        match self.kind {
            Kind::LinearX1 { .. } => names.extend(["dphi", "phi_duan", "shapley_var"]),
            Kind::M0 => names.push("UB_equality"),
            _ => {}
        }
        names
    }

    pub fn info(&self) -> FunctionInfo {
        FunctionInfo {
            name: self.name.clone(),
            dim: self.dim,
            parameters: self.params.clone(),
            input_law: self.law.clone(),
            has_gradient: true,
            references: self.reference_names(),
        }
    }

    // Product functions Π f_j(x_j) with independent inputs.
    fn factor_moments(&self) -> Option<Vec<FactorMoments>> {
        match &self.kind {
            Kind::UProduct { u } => {
                let s2 = U_PRODUCT_VARIANCE;
                // E Φ(X)², E φ(X)², E φ(X) for X ~ N(0, s2)
                let e_cdf_sq = 0.25 + (s2 / (1.0 + s2)).asin() / (2.0 * std::f64::consts::PI);
                let e_pdf_sq = 1.0 / (2.0 * std::f64::consts::PI * (1.0 + 2.0 * s2).sqrt());
                let e_pdf = 1.0 / (2.0 * std::f64::consts::PI * (1.0 + s2)).sqrt();
                Some(
                    u.iter()
                        .map(|&w| FactorMoments {
                            mean: w / 2.0,
                            second: w * w * e_cdf_sq,
                            deriv_sq: w * w * e_pdf_sq,
                            value_deriv: w * w * e_pdf / 2.0,
                        })
                        .collect(),
                )
            }
            Kind::GSobol { a } => Some(
                a.iter()
                    .map(|&aj| FactorMoments {
                        mean: 1.0,
                        second: (4.0 / 3.0 + 2.0 * aj + aj * aj) / ((1.0 + aj) * (1.0 + aj)),
                        deriv_sq: 16.0 / ((1.0 + aj) * (1.0 + aj)),
                        value_deriv: 0.0,
                    })
                    .collect(),
            ),
            Kind::M0 => Some(vec![
                FactorMoments {
                    mean: 0.0,
                    second: 1.0 / 12.0,
                    deriv_sq: 1.0,
                    value_deriv: 0.0
                };
                self.dim
            ]),
            Kind::M3 => Some(
                (0..self.dim)
                    .map(|j| {
                        if j % 2 == 0 {
                            FactorMoments {
                                mean: 0.0,
                                second: 1.0 / 3.0,
                                deriv_sq: 1.0,
                                value_deriv: 0.0,
                            }
                        } else {
                            FactorMoments {
                                mean: 4.0 / 3.0,
                                second: 28.0 / 15.0,
                                deriv_sq: 4.0 / 3.0,
                                value_deriv: 0.0,
                            }
                        }
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    fn product_references(f: &[FactorMoments]) -> Result<(SymmetricMatrix, SymmetricMatrix, f64)> {
        let d = f.len();
        let others = |skip: &[usize]| -> f64 {
            (0..d)
                .filter(|k| !skip.contains(k))
                .map(|k| f[k].second)
                .product()
        };
        let mut c = Matrix::zeros(d, d);
        let mut k = Matrix::zeros(d, d);
        for i in 0..d {
            let vi = f[i].second - f[i].mean * f[i].mean;
            for j in 0..d {
                if i == j {
                    c[(i, i)] = f[i].deriv_sq * others(&[i]);
                    k[(i, i)] = vi * others(&[i]);
                } else {
                    let vj = f[j].second - f[j].mean * f[j].mean;
                    c[(i, j)] = f[i].value_deriv * f[j].value_deriv * others(&[i, j]);
                    k[(i, j)] = vi * vj * others(&[i, j]);
                }
            }
        }
        let variance = others(&[]) - f.iter().map(|m| m.mean * m.mean).product::<f64>();
        Ok((SymmetricMatrix::new(c)?, SymmetricMatrix::new(k)?, variance))
    }

    // (C, K, Var M) under the input law, C with plain gradients.
    fn moment_references(&self) -> Result<(SymmetricMatrix, SymmetricMatrix, f64)> {
        if let Some(f) = self.factor_moments() {
            return Self::product_references(&f);
        }
        let d = self.dim;
        match &self.kind {
            Kind::LinearX1 { rho } => Ok((
                SymmetricMatrix::from_diag(&[1.0, 0.0]),
                bivariate_x1_k(*rho)?,
                1.0,
            )),
            Kind::Quadratic { a, .. } => {
                // X ~ U(−1,1)^d: E X² = 1/3, Var X² = 4/45
                let c = SymmetricMatrix::symmetrize(&a.matmul(a).scale(1.0 / 3.0))?;
                let mut k = Matrix::zeros(d, d);
                let mut variance = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        if i == j {
                            let off: f64 = (0..d)
                                .filter(|&l| l != i)
                                .map(|l| a[(i, l)] * a[(i, l)] / 9.0)
                                .sum();
                            k[(i, i)] = a[(i, i)] * a[(i, i)] / 45.0 + off;
                            variance += a[(i, i)] * a[(i, i)] / 45.0;
                        } else {
                            k[(i, j)] = a[(i, j)] * a[(i, j)] / 9.0;
                            if i < j {
                                variance += a[(i, j)] * a[(i, j)] / 9.0;
                            }
                        }
                    }
                }
                Ok((c, SymmetricMatrix::symmetrize(&k)?, variance))
            }
            Kind::M4 => {
                // ∂_j M = (j+1) + 2x_j
                let mut c = Matrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        c[(i, j)] =
                            ((i + 1) * (j + 1)) as f64 + if i == j { 4.0 / 3.0 } else { 0.0 };
                    }
                }
                let k: Vec<f64> = (0..d)
                    .map(|j| ((j + 1) as f64).powi(2) / 3.0 + 4.0 / 45.0)
                    .collect();
                let variance = k.iter().sum();
                Ok((
                    SymmetricMatrix::new(c)?,
                    SymmetricMatrix::from_diag(&k),
                    variance,
                ))
            }
            _ => unreachable!("product kinds handled above"),
        }
    }

    /// Closed-form reference quantity `name` (see [`TestFunction::reference_names`]).
    pub fn analytic_reference(&self, name: &str) -> Result<Reference> {
        if !self.reference_names().contains(&name) {
            return Err(Error::NotAvailable(format!(
                "{} has no reference `{name}`",
                self.name
            )));
        }
        let rho = match self.kind {
            Kind::LinearX1 { rho } => Some(rho),
            _ => None,
        };
        let (c, k, variance) = self.moment_references()?;
        Ok(match name {
            "C" => Reference::Matrix(c),
            "C_prime" => match rho {
                Some(r) => Reference::Matrix(bivariate_x1_c_prime(r)?),
                None => Reference::Matrix(c),
            },
            "K" => Reference::Matrix(k),
            "variance" => Reference::Scalar(variance),
            "spectrum_C" => match rho {
                Some(r) => Reference::Vector(sym_eig(&bivariate_x1_c_prime(r)?)?.eigenvalues),
                None => Reference::Vector(sym_eig(&c)?.eigenvalues),
            },
            "spectrum_K" => Reference::Vector(sym_eig(&k)?.eigenvalues),
            "dphi" => Reference::Vector(bivariate_x1_dphi(rho.unwrap_or(0.0))?.to_vec()),
            "phi_duan" => Reference::Vector(vec![1.0, 0.0]),
            "shapley_var" => {
                Reference::Vector(bivariate_x1_shapley_var(rho.unwrap_or(0.0))?.to_vec())
            }
            "UB_equality" => Reference::Flag(true),
            _ => unreachable!("checked against reference_names"),
        })
    }
}

impl Model for TestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(x, self.dim)?;
        let v = match &self.kind {
            Kind::LinearX1 { .. } => x[0],
            Kind::Quadratic { a, .. } => 0.5 * crate::linalg::dot(x, &a.matvec(x)),
            Kind::UProduct { u } => u
                .iter()
                .zip(x)
                .map(|(w, &xj)| w * standard_cdf(xj))
                .product(),
            Kind::GSobol { a } => a
                .iter()
                .zip(x)
                .map(|(aj, xj)| ((4.0 * xj - 2.0).abs() + aj) / (1.0 + aj))
                .product(),
            Kind::M0 => x.iter().map(|xj| xj - 0.5).product(),
            Kind::M3 => x
                .iter()
                .enumerate()
                .map(|(j, &xj)| if j % 2 == 0 { xj } else { 1.0 + xj * xj })
                .product(),
            Kind::M4 => x
                .iter()
                .enumerate()
                .map(|(j, &xj)| (j + 1) as f64 * xj + xj * xj)
                .sum(),
        };
        finite(v, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.dim)?;
        let d = self.dim;
        // ∂_j Π f_k = f'_j · Π_{k≠j} f_k, computed without dividing by f_j
        let product_grad = |vals: Vec<f64>, derivs: Vec<f64>| -> Vec<f64> {
            (0..d)
                .map(|j| derivs[j] * (0..d).filter(|&k| k != j).map(|k| vals[k]).product::<f64>())
                .collect()
        };
        let g = match &self.kind {
            Kind::LinearX1 { .. } => vec![1.0, 0.0],
            Kind::Quadratic { a, .. } => a.matvec(x),
            Kind::UProduct { u } => product_grad(
                u.iter()
                    .zip(x)
                    .map(|(w, &xj)| w * standard_cdf(xj))
                    .collect(),
                u.iter()
                    .zip(x)
                    .map(|(w, &xj)| w * standard_pdf(xj))
                    .collect(),
            ),
            Kind::GSobol { a } => product_grad(
                a.iter()
                    .zip(x)
                    .map(|(aj, xj)| ((4.0 * xj - 2.0).abs() + aj) / (1.0 + aj))
                    .collect(),
                a.iter()
                    .zip(x)
                    .map(|(aj, xj)| 4.0 * sign(4.0 * xj - 2.0) / (1.0 + aj))
                    .collect(),
            ),
            Kind::M0 => product_grad(x.iter().map(|xj| xj - 0.5).collect(), vec![1.0; d]),
            Kind::M3 => product_grad(
                x.iter()
                    .enumerate()
                    .map(|(j, &xj)| if j % 2 == 0 { xj } else { 1.0 + xj * xj })
                    .collect(),
                x.iter()
                    .enumerate()
                    .map(|(j, &xj)| if j % 2 == 0 { 1.0 } else { 2.0 * xj })
                    .collect(),
            ),
            Kind::M4 => x
                .iter()
                .enumerate()
                .map(|(j, &xj)| (j + 1) as f64 + 2.0 * xj)
                .collect(),
        };
        for (v, xj) in g.iter().zip(x) {
            finite(*v, std::slice::from_ref(xj))?;
        }
        Ok(g)
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradient::{gradient_samples, outer_moments, GradientSource};
    use crate::sensitivity::sigma_tot_pick_freeze;
    use crate::stats::Moments;

    fn f(name: &str) -> TestFunction {
        TestFunction::by_name(name, &FunctionParams::default()).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let c = f("g-sobol-c");
        assert_eq!(c.eval(&[1.0; 10]).unwrap(), 1024.0);
        let mut x = [0.3; 10];
        x[4] = 0.5;
        assert_eq!(c.eval(&x).unwrap(), 0.0);
        let u = f("u-product");
        let expect = 25f64.powi(5) * 37f64.powi(5) / 1024.0;
        assert!((u.eval(&[0.0; 10]).unwrap() - expect).abs() <= 1e-12 * expect);
        assert!(matches!(u.eval(&[0.0; 3]), Err(Error::InvalidInput(_))));
        assert!(TestFunction::by_name("nope", &FunctionParams::default()).is_err());
        assert!(TestFunction::by_name(
            "u-product",
            &FunctionParams {
                rho: Some(0.1),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn quadratic_spectra() {
        let q1 = f("quadratic-1");
        let spec = q1
            .analytic_reference("spectrum_C")
            .unwrap()
            .vector()
            .unwrap();
        assert!((spec[0] - 7500.0).abs() < 1e-9);
        let q2 = f("quadratic-2");
        let spec = q2
            .analytic_reference("spectrum_C")
            .unwrap()
            .vector()
            .unwrap();
        let ratio = spec[0] / spec[9];
        assert!((ratio - (150.0f64 / 90.0).powi(2)).abs() < 1e-9);

        let id = quadratic_build(&Matrix::identity(3), &[3.0, 2.0, 1.0]).unwrap();
        let c = id.analytic_reference("C").unwrap().matrix().unwrap();
        assert_eq!(
            c.matrix()
                .max_abs_diff(&Matrix::from_diag(&[3.0, 4.0 / 3.0, 1.0 / 3.0])),
            0.0
        );
        let mut bad = Matrix::identity(3);
        bad[(0, 1)] = 0.1;
        assert!(quadratic_build(&bad, &[1.0, 1.0, 1.0]).is_err());
        assert!(orthogonality_defect(&random_orthogonal(10, 42).unwrap()) < 1e-12);
    }

    #[test]
    fn bivariate_references() {
        let m = TestFunction::by_name(
            "linear-x1",
            &FunctionParams {
                rho: Some(0.5),
                ..Default::default()
            },
        )
        .unwrap();
        let k = m.analytic_reference("K").unwrap().matrix().unwrap();
        assert_eq!(
            k.matrix().to_rows(),
            vec![vec![1.0, 0.25], vec![0.25, 0.25]]
        );
        let c = m.analytic_reference("C_prime").unwrap().matrix().unwrap();
        let s = 0.75f64.powi(4);
        assert!((c[(0, 0)] - 1.5625 / s).abs() < 1e-12 && (c[(0, 1)] + 1.25 / s).abs() < 1e-12);
        let dphi = bivariate_x1_dphi(0.8).unwrap();
        let gap = (dphi[0] - dphi[1]) / (dphi[0] + dphi[1]);
        assert!((gap - 0.01646).abs() < 1e-5);
        assert_eq!(bivariate_x1_dphi(0.0).unwrap(), [1.0, 0.0]);
        assert!(matches!(
            m.analytic_reference("nothing"),
            Err(Error::NotAvailable(_))
        ));
        assert!(matches!(
            f("m0").analytic_reference("UB_equality"),
            Ok(Reference::Flag(true))
        ));
        assert!(f("u-product").analytic_reference("dphi").is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(11).rng();
        let h = 1e-5;
        for name in CATALOG {
            let fun = f(name);
            let dep = fun.dependency().unwrap();
            let mut checked = 0;
            while checked < 100 {
                let x = dep.sample(&mut rng);
                if name.starts_with("g-sobol") && x.iter().any(|v| (v - 0.5).abs() < 1e-3) {
                    continue;
                }
                let g = fun.gradient(&x).unwrap();
                for j in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (fun.eval(&xp).unwrap() - fun.eval(&xm).unwrap()) / (2.0 * h);
                    let scale = g.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
                    assert!(
                        (fd - g[j]).abs() <= 1e-4 * scale.max(fd.abs()),
                        "{name} j={j}: {fd} vs {}",
                        g[j]
                    );
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn reference_moments_match_monte_carlo() {
        for name in ["u-product", "g-sobol-a", "m0", "m3", "m4", "quadratic-1"] {
            let fun = f(name);
            let dep = fun.dependency().unwrap();
            let (samples, _) = gradient_samples(
                &fun,
                dep.as_ref(),
                GradientSource::Analytic,
                40_000,
                RngStream::new(3),
            )
            .unwrap();
            let (c, se) = outer_moments(&samples).unwrap();
            let c_ref = fun.analytic_reference("C").unwrap().matrix().unwrap();
            for i in 0..fun.dim() {
                for j in 0..fun.dim() {
                    let tol = 5.0 * se[(i, j)] + 1e-12 * c_ref.matrix().max_abs();
                    assert!(
                        (c[(i, j)] - c_ref[(i, j)]).abs() <= tol,
                        "{name} C[{i},{j}] {} vs {}",
                        c[(i, j)],
                        c_ref[(i, j)]
                    );
                }
            }
            let mut rng = RngStream::new(4).rng();
            let ys: Vec<f64> = (0..40_000)
                .map(|_| fun.eval(&dep.sample(&mut rng)).unwrap())
                .collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let mut sq = Moments::new();
            ys.iter().for_each(|y| sq.push((y - mean).powi(2)));
            let v = fun
                .analytic_reference("variance")
                .unwrap()
                .scalar()
                .unwrap();
            assert!(
                (sq.mean() - v).abs() < 5.0 * sq.std_error(),
                "{name} variance {} vs {v}",
                sq.mean()
            );
        }
    }

    #[test]
    fn structural_families_are_diagonal() {
        let m3 = TestFunction::by_name(
            "m3",
            &FunctionParams {
                d: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        let dep = m3.dependency().unwrap();
        let (samples, _) = gradient_samples(
            &m3,
            dep.as_ref(),
            GradientSource::Analytic,
            20_000,
            RngStream::new(5),
        )
        .unwrap();
        let (c, se) = outer_moments(&samples).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(
                        c[(i, j)].abs() <= 3.0 * se[(i, j)] + 1e-15,
                        "C[{i},{j}] = {}",
                        c[(i, j)]
                    );
                }
            }
        }

        let m4 = TestFunction::by_name(
            "m4",
            &FunctionParams {
                d: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        let dep = m4.dependency().unwrap();
        let (k, _) = sigma_tot_pick_freeze(&m4, dep.as_ref(), 20_000, RngStream::new(6)).unwrap();
        let k_ref = m4.analytic_reference("K").unwrap().matrix().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(k.matrix[(i, j)].abs() <= 3.0 * k.std_error[(i, j)] + 1e-15);
                } else {
                    assert!((k.matrix[(i, i)] - k_ref[(i, i)]).abs() <= 4.0 * k.std_error[(i, i)]);
                }
            }
        }
    }
}
