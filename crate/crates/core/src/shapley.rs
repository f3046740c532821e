//! Derivative-based Shapley effects from gradient samples, and exact Shapley values of a
//! coalition game by subset enumeration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix, SymmetricMatrix};

/// Largest number of players accepted by [`exact_shapley`].
pub const MAX_EXACT_PLAYERS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapleyResult {
    pub effects: Vec<f64>,
    /// `effects / budget`, filled in by [`normalize`].
    pub normalized: Option<Vec<f64>>,
    pub budget: f64,
    pub order: u8,
}

// Sum in ascending order so the result does not depend on how the terms were enumerated.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.iter().sum()
}

fn check_samples(samples: &[Vec<f64>]) -> Result<usize> {
    let d = samples
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("empty gradient sample"))?;
    if d == 0 {
        return Err(Error::invalid("gradient samples have no coordinates"));
    }
    if samples.iter().any(|g| g.len() != d) {
        return Err(Error::invalid("gradient samples have mixed lengths"));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite gradient sample"));
    }
    Ok(d)
}

// E[g_j²] on the diagonal, E|g_j g_k| off it.
fn abs_moments(samples: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let n = samples.len() as f64;
    let mut a = vec![vec![0.0; d]; d];
    for g in samples {
        for j in 0..d {
            for k in j..d {
                a[j][k] += (g[j] * g[k]).abs();
            }
        }
    }
    for j in 0..d {
        for k in j..d {
            a[j][k] /= n;
            a[k][j] = a[j][k];
        }
    }
    a
}

/// `dΦ_j = E[g_j²] + ½·Σ_{k≠j} E|g_j g_k|` with budget `Σ_{k₁≤k₂} E|g_{k₁} g_{k₂}|`.
///
/// With plain gradients `∇M` instead of dependent gradients this is the effect that ignores
/// the dependence between inputs.
pub fn db_shapley(samples: &[Vec<f64>]) -> Result<ShapleyResult> {
    let d = check_samples(samples)?;
    let a = abs_moments(samples, d);
    let effects: Vec<f64> = (0..d)
        .map(|j| a[j][j] + 0.5 * sorted_sum((0..d).filter(|&k| k != j).map(|k| a[j][k]).collect()))
        .collect();
    let mut terms = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for k in j..d {
            terms.push(a[j][k]);
        }
    }
    Ok(ShapleyResult {
        effects,
        normalized: None,
        budget: sorted_sum(terms),
        order: 2,
    })
}

/// Adds the third-order terms `⅓·Σ_{{k₁,k₂}⊆D∖{j}} E|g_j g_{k₁} g_{k₂}|` to the second-order effects.
/// The budget is the sum of the resulting effects.
pub fn db_shapley_third(samples: &[Vec<f64>]) -> Result<ShapleyResult> {
    let base = db_shapley(samples)?;
    let d = base.effects.len();
    if d < 3 {
        return Ok(ShapleyResult { order: 3, ..base });
    }
    let n = samples.len() as f64;
    // t[j][k1][k2] for k1 < k2, all distinct
    let mut t = vec![0.0; d * d * d];
    for g in samples {
        for j in 0..d {
            for k1 in 0..d {
                if k1 == j {
                    continue;
                }
                for k2 in (k1 + 1)..d {
                    if k2 == j {
                        continue;
                    }
                    t[(j * d + k1) * d + k2] += (g[j] * (g[k1] * g[k2])).abs();
                }
            }
        }
    }
    let effects: Vec<f64> = (0..d)
        .map(|j| {
            let mut terms = Vec::new();
            for k1 in 0..d {
                for k2 in (k1 + 1)..d {
                    if k1 != j && k2 != j {
                        terms.push(t[(j * d + k1) * d + k2] / n);
                    }
                }
            }
            base.effects[j] + sorted_sum(terms) / 3.0
        })
        .collect();
    let budget = sorted_sum(effects.clone());
    Ok(ShapleyResult {
        effects,
        normalized: None,
        budget,
        order: 3,
    })
}

/// Divides the effects by the budget.
pub fn normalize(r: &ShapleyResult) -> Result<ShapleyResult> {
    if !(r.budget > 0.0) || !r.budget.is_finite() {
        return Err(Error::DegenerateModel(format!(
            "Shapley budget must be positive, got {}",
            r.budget
        )));
    }
    let normalized = r.effects.iter().map(|e| e / r.budget).collect();
    Ok(ShapleyResult {
        normalized: Some(normalized),
        ..r.clone()
    })
}

/// A coalition game `η(u)` over subsets of `{0, …, d−1}` given as bit masks.
pub trait CoalitionValue {
    fn value(&self, coalition: u64) -> Result<f64>;
}

impl<F: Fn(u64) -> f64> CoalitionValue for F {
    fn value(&self, coalition: u64) -> Result<f64> {
        Ok(self(coalition))
    }
}

/// `Φ_j = (1/d)·Σ_{u⊆D∖{j}} C(d−1,|u|)⁻¹·[η(u∪{j}) − η(u)]` by enumerating all `2^d` coalitions.
pub fn exact_shapley(oracle: &dyn CoalitionValue, d: usize) -> Result<ShapleyResult> {
    if d == 0 {
        return Err(Error::invalid("need at least one player"));
    }
    if d > MAX_EXACT_PLAYERS {
        return Err(Error::SizeLimit(format!(
            "exact Shapley values limited to d <= {MAX_EXACT_PLAYERS}, got {d}"
        )));
    }
    let full = 1u64 << d;
    let mut eta = Vec::with_capacity(full as usize);
    for u in 0..full {
        let v = oracle.value(u)?;
        if !v.is_finite() {
            return Err(Error::invalid(format!("coalition value for {u:#b} is {v}")));
        }
        eta.push(v);
    }
    let scale = eta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if eta[0].abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::invalid(format!(
            "empty coalition must have value 0, got {}",
            eta[0]
        )));
    }
    // weight(s) = 1 / (d·C(d−1, s))
    let mut weight = vec![0.0; d];
    let mut binom = 1.0;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (d as f64 * binom);
        binom = binom * (d - 1 - s) as f64 / (s + 1) as f64;
    }
    let effects = (0..d)
        .map(|j| {
            let bit = 1u64 << j;
            let mut terms = Vec::with_capacity((full / 2) as usize);
            for u in 0..full {
                if u & bit == 0 {
                    let s = u.count_ones() as usize;
                    terms.push(weight[s] * (eta[(u | bit) as usize] - eta[u as usize]));
                }
            }
            sorted_sum(terms)
        })
        .collect();
    Ok(ShapleyResult {
        effects,
        normalized: None,
        budget: eta[(full - 1) as usize],
        order: 2,
    })
}

/// `η(u) = Var(E[aᵀX | X_u]) = aᵀΣ_{•u}Σ_{uu}⁻¹Σ_{u•}a` for `X ~ N(μ, Σ)`.
#[derive(Clone, Debug)]
pub struct LinearGaussianVariance {
    a: Vec<f64>,
    cov: SymmetricMatrix,
}

impl LinearGaussianVariance {
    pub fn new(a: Vec<f64>, cov: SymmetricMatrix) -> Result<Self> {
        if a.len() != cov.dim() {
            return Err(Error::invalid(
                "coefficient vector and covariance differ in size",
            ));
        }
        Ok(Self { a, cov })
    }
}

impl CoalitionValue for LinearGaussianVariance {
    fn value(&self, u: u64) -> Result<f64> {
        let idx: Vec<usize> = (0..self.a.len()).filter(|&j| u >> j & 1 == 1).collect();
        if idx.is_empty() {
            return Ok(0.0);
        }
        let s = self.cov.matrix();
        let k = idx.len();
        let mut suu = Matrix::zeros(k, k);
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in idx.iter().enumerate() {
                suu[(p, q)] = s[(i, j)];
            }
        }
        // c = Σ_{u•}a
        let c: Vec<f64> = idx
            .iter()
            .map(|&i| (0..self.a.len()).map(|j| s[(i, j)] * self.a[j]).sum())
            .collect();
        let y = solve(&suu, &c)?;
        Ok(c.iter().zip(&y).map(|(a, b)| a * b).sum())
    }
}
