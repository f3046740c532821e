//! Running moments and the deterministic parallel fold used by every Monte Carlo loop.

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::Matrix;

// Work is cut into fixed-size chunks so the reduction order never depends on the thread count.
const CHUNK: usize = 4096;

/// Evaluates `f(i)` for `i in 0..n` in parallel and folds the results sequentially in index order.
pub(crate) fn par_fold<T, A, F, G>(n: usize, f: F, mut acc: A, mut fold: G) -> Result<A>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
    G: FnMut(&mut A, T),
{
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let items: Vec<T> = (start..end)
            .into_par_iter()
            .map(&f)
            .collect::<Result<Vec<T>>>()?;
        for t in items {
            fold(&mut acc, t);
        }
        start = end;
    }
    Ok(acc)
}

/// Collects `f(i)` for `i in 0..n` in index order.
pub(crate) fn par_collect<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par_fold(n, f, Vec::with_capacity(n), |v, t| v.push(t))
}

/// Welford mean and variance of a scalar stream.
#[derive(Clone, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 with fewer than two values).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Entrywise Welford moments of a stream of `d×d` matrices.
#[derive(Clone, Debug)]
pub struct MatrixMoments {
    d: usize,
    entries: Vec<Moments>,
}

impl MatrixMoments {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            entries: vec![Moments::new(); d * d],
        }
    }

    /// Adds one row-major `d×d` term.
    pub fn push(&mut self, term: &[f64]) {
        debug_assert_eq!(term.len(), self.d * self.d);
        for (m, &t) in self.entries.iter_mut().zip(term) {
            m.push(t);
        }
    }

    /// Adds `a·bᵀ`.
    pub fn push_outer(&mut self, a: &[f64], b: &[f64]) {
        for i in 0..self.d {
            for j in 0..self.d {
                self.entries[i * self.d + j].push(a[i] * b[j]);
            }
        }
    }

    pub fn count(&self) -> u64 {
        self.entries.first().map_or(0, Moments::count)
    }

    pub fn mean(&self) -> Matrix {
        Matrix::from_vec(
            self.d,
            self.d,
            self.entries.iter().map(Moments::mean).collect(),
        )
        .expect("finite moments")
    }

    pub fn std_error(&self) -> Matrix {
        Matrix::from_vec(
            self.d,
            self.d,
            self.entries.iter().map(Moments::std_error).collect(),
        )
        .expect("finite moments")
    }
}
