//! Limit theory for the M-estimator: finite-sample normalized statistics and
//! direct samplers of their limiting laws, so that the two can be compared.

use nalgebra::{DMatrix, DVector};

use crate::ar::UnitRoot;

pub mod finite_n;
pub mod limit;
pub mod moments;
pub mod normalizers;
pub mod partial_sums;

pub use finite_n::{finite_n_statistic, psi_prime_replacement_gap, FiniteNStatistic};
pub use limit::{
    dyadic_brownian, limit_sample_complex, limit_sample_real_root, limit_sample_spec, LimitOptions,
};
pub use moments::{loss_moments, LossMoments};
pub use normalizers::{
    alternating_binomial, normalizer_j, normalizer_k, normalizer_l, pair_change_of_basis, plain_binomial,
};
pub use partial_sums::{partial_sums, PartialSumBundle};

/// One root group of the characteristic polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitCase {
    RealRoot { root: UnitRoot, mult: usize },
    ComplexPair { theta: f64, mult: usize },
}

impl LimitCase {
    pub fn dim(&self) -> usize {
        match *self {
            LimitCase::RealRoot { mult, .. } => mult,
            LimitCase::ComplexPair { mult, .. } => 2 * mult,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            LimitCase::RealRoot { root: UnitRoot::Plus, mult } => format!("plus{mult}"),
            LimitCase::RealRoot { root: UnitRoot::Minus, mult } => format!("minus{mult}"),
            LimitCase::ComplexPair { theta, mult } => format!("pair{mult}@{theta}"),
        }
    }
}

/// A realization of a normalized Hessian-type matrix, the matching score
/// vector, and `matrix⁻¹ · vector`.
#[derive(Debug, Clone)]
pub struct LimitLawSample {
    pub case: LimitCase,
    pub matrix: DMatrix<f64>,
    pub vector: DVector<f64>,
    pub solution: Vec<f64>,
    /// Draws discarded because the matrix was numerically singular.
    pub resamples: usize,
}

impl LimitLawSample {
    /// `case,component,value` rows (1-based component index) for the
    /// solution vector.
    pub fn csv_rows(&self) -> String {
        let label = self.case.label();
        self.solution.iter().enumerate().map(|(i, v)| format!("{label},{},{v}\n", i + 1)).collect()
    }
}

pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min = eig.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if min > 0.0 && max.is_finite() {
        max / min
    } else {
        f64::INFINITY
    }
}

pub(crate) fn solve(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<Vec<f64>> {
    let s = m.clone().lu().solve(v)?;
    s.iter().all(|x| x.is_finite()).then(|| s.iter().copied().collect())
}
