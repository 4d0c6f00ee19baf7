//! Finite-sample normalized score and Hessian blocks built from simulated
//! series and their true innovations.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::ar::{component_filters, RootSpec, TimeSeries, UnitRoot};
use crate::error::{Error, Result};
use crate::estimation::Loss;

use super::normalizers::{normalizer_j, normalizer_k, normalizer_l};
use super::{condition_number, solve, LimitCase, LimitLawSample};

#[derive(Debug, Clone)]
pub struct FiniteNStatistic {
    /// One entry per root group; `None` when its matrix is singular.
    pub blocks: Vec<Option<LimitLawSample>>,
    pub singular: usize,
    /// Full normalized matrix across all groups, including cross blocks.
    pub matrix: DMatrix<f64>,
    pub ranges: Vec<Range<usize>>,
}

impl FiniteNStatistic {
    /// Largest absolute entry outside the diagonal blocks.
    pub fn cross_block_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for (a, ra) in self.ranges.iter().enumerate() {
            for (b, rb) in self.ranges.iter().enumerate() {
                if a == b {
                    continue;
                }
                for i in ra.clone() {
                    for j in rb.clone() {
                        worst = worst.max(self.matrix[(i, j)].abs());
                    }
                }
            }
        }
        worst
    }
}

/// Normalized lag vectors `z_t` for `t = 1..n`, the ordered root groups, and
/// their coordinate ranges. Pre-sample component values are taken as zero,
/// which is exact under a zero warm start.
fn normalized_regressors(
    series: &TimeSeries,
    spec: &RootSpec,
    a_n: f64,
) -> Result<(Vec<DVector<f64>>, Vec<LimitCase>, Vec<Range<usize>>)> {
    let n = series.len();
    let comps = component_filters(series, spec)?;
    let lagged = |c: &[f64], t: usize, lag: usize| if t > lag { c[t - lag - 1] } else { 0.0 };

    let mut parts: Vec<(LimitCase, DMatrix<f64>, Vec<f64>)> = Vec::new();
    if let Some(u) = comps.u {
        parts.push((LimitCase::RealRoot { root: UnitRoot::Plus, mult: spec.r }, normalizer_j(spec.r, n, a_n)?, u));
    }
    if let Some(v) = comps.v {
        parts.push((LimitCase::RealRoot { root: UnitRoot::Minus, mult: spec.s }, normalizer_k(spec.s, n, a_n)?, v));
    }
    for (&(theta, d), w) in spec.pairs.iter().zip(comps.w) {
        parts.push((LimitCase::ComplexPair { theta, mult: d }, normalizer_l(theta, d, n, a_n)?, w));
    }

    let mut ranges = Vec::new();
    let mut offset = 0;
    for (_, m, _) in &parts {
        ranges.push(offset..offset + m.nrows());
        offset += m.nrows();
    }
    let z = (1..=n)
        .map(|t| {
            let mut out = DVector::zeros(offset);
            for ((_, m, comp), range) in parts.iter().zip(&ranges) {
                let lags = DVector::from_fn(m.ncols(), |k, _| lagged(comp, t, k + 1));
                out.rows_mut(range.start, range.len()).copy_from(&(m * lags));
            }
            out
        })
        .collect();
    Ok((z, parts.into_iter().map(|p| p.0).collect(), ranges))
}

fn innovations(series: &TimeSeries) -> Result<&[f64]> {
    series
        .innovations
        .as_deref()
        .ok_or_else(|| Error::argument("the series carries no innovation trace"))
}

/// Per-group `(matrix, vector, matrix⁻¹ vector)` with
/// `matrix = Σ z_t z_tᵀ ψ'(ε_t)` and `vector = Σ z_t ψ(ε_t)`.
pub fn finite_n_statistic(series: &TimeSeries, spec: &RootSpec, loss: &Loss, a_n: f64) -> Result<FiniteNStatistic> {
    let eps = innovations(series)?;
    let (z, cases, ranges) = normalized_regressors(series, spec, a_n)?;
    let dim = ranges.last().map_or(0, |r| r.end);
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut vector = DVector::zeros(dim);
    for (zt, &e) in z.iter().zip(eps) {
        matrix.ger(loss.psi_prime(e), zt, zt, 1.0);
        vector.axpy(loss.psi(e), zt, 1.0);
    }
    let mut singular = 0;
    let blocks = cases
        .iter()
        .zip(&ranges)
        .map(|(case, r)| {
            let m = matrix.view((r.start, r.start), (r.len(), r.len())).into_owned();
            let v = vector.rows(r.start, r.len()).into_owned();
            let sol = (condition_number(&m) < 1e12).then(|| solve(&m, &v)).flatten();
            match sol {
                Some(solution) => Some(LimitLawSample { case: *case, matrix: m, vector: v, solution, resamples: 0 }),
                None => {
                    singular += 1;
                    None
                }
            }
        })
        .collect();
    Ok(FiniteNStatistic { blocks, singular, matrix, ranges })
}

/// Largest absolute entry of `Σ z_t z_tᵀ (ψ'(ε_t) - E ψ')`, the error made by
/// replacing `ψ'` with its mean in the normalized Hessian.
pub fn psi_prime_replacement_gap(
    series: &TimeSeries,
    spec: &RootSpec,
    loss: &Loss,
    a_n: f64,
    e_psi_prime: f64,
) -> Result<f64> {
    let eps = innovations(series)?;
    let (z, _, ranges) = normalized_regressors(series, spec, a_n)?;
    let dim = ranges.last().map_or(0, |r| r.end);
    let mut gap = DMatrix::zeros(dim, dim);
    for (zt, &e) in z.iter().zip(eps) {
        gap.ger(loss.psi_prime(e) - e_psi_prime, zt, zt, 1.0);
    }
    Ok(gap.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::{expand_polynomial, simulate_ar};
    use crate::estimation::{huber_loss, ls_estimate};
    use crate::rng::stream;
    use crate::stable::{norming_constant, InnovationSpec};
    use crate::stats::median;
    use std::f64::consts::PI;

    fn simulate(spec: &RootSpec, inn: &InnovationSpec, n: usize, seed: u64) -> TimeSeries {
        let m = expand_polynomial(spec).unwrap();
        let eps = inn.sample(n, &mut stream(seed, 0)).unwrap();
        simulate_ar(&m, &eps, None).unwrap()
    }

    #[test]
    fn quadratic_pair_block_equals_scaled_ls_error() {
        let spec = RootSpec::new(0, 0, vec![(PI / 4.0, 1)]).unwrap();
        let inn = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let s = simulate(&spec, &inn, 300, 1);
        let a_n = norming_constant(&inn, s.len()).unwrap();
        let stat = finite_n_statistic(&s, &spec, &Loss::Quadratic, a_n).unwrap();
        let block = stat.blocks[0].as_ref().unwrap();
        let ls = ls_estimate(&s.full(), 2).unwrap();
        let scale = (s.len() as f64).sqrt() * a_n;
        let expect = [scale * (ls.phi_hat[0] - 2f64.sqrt()), scale * (ls.phi_hat[1] + 1.0)];
        for i in 0..2 {
            assert!((block.solution[i] - expect[i]).abs() < 1e-6 * (1.0 + expect[i].abs()));
        }
    }

    #[test]
    fn random_walk_block_is_dickey_fuller_ratio() {
        let spec = RootSpec::new(1, 0, vec![]).unwrap();
        let inn = InnovationSpec::exact_sas(2.0, 1.0).unwrap();
        let s = simulate(&spec, &inn, 400, 2);
        let a_n = norming_constant(&inn, s.len()).unwrap();
        let stat = finite_n_statistic(&s, &spec, &Loss::Quadratic, a_n).unwrap();
        let b = stat.blocks[0].as_ref().unwrap();
        let eps = s.innovations.as_ref().unwrap();
        let x = &s.values;
        let num: f64 = (1..x.len()).map(|t| x[t - 1] * eps[t]).sum();
        let den: f64 = (1..x.len()).map(|t| x[t - 1] * x[t - 1]).sum();
        let n = s.len() as f64;
        assert!((b.matrix[(0, 0)] - den / (n * a_n * a_n)).abs() < 1e-10);
        assert!((b.solution[0] - n.sqrt() * a_n * num / den).abs() < 1e-8 * (1.0 + b.solution[0].abs()));
    }

    #[test]
    fn quadratic_matrix_is_normalized_gram() {
        let spec = RootSpec::new(2, 0, vec![]).unwrap();
        let inn = InnovationSpec::exact_sas(1.7, 1.0).unwrap();
        let s = simulate(&spec, &inn, 200, 3);
        let a_n = norming_constant(&inn, s.len()).unwrap();
        let stat = finite_n_statistic(&s, &spec, &Loss::Quadratic, a_n).unwrap();
        let j = normalizer_j(2, s.len(), a_n).unwrap();
        let full = s.full();
        let mut gram = DMatrix::zeros(2, 2);
        for t in 2..full.len() {
            let lag = DVector::from_vec(vec![full[t - 1], full[t - 2]]);
            gram += &lag * lag.transpose();
        }
        let expect = &j * gram * j.transpose();
        let got = &stat.blocks[0].as_ref().unwrap().matrix;
        assert!((got - &expect).abs().max() < 1e-10 * (1.0 + expect.abs().max()));
        assert!((got - got.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn expected_psi_prime_replacement_shrinks() {
        let spec = RootSpec::new(1, 0, vec![]).unwrap();
        let inn = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let loss = huber_loss(5.0).unwrap();
        let e_psi_prime = 1.0 - inn.tail_prob(5.0);
        let med = |n: usize| {
            let gaps: Vec<f64> = (0..200)
                .map(|i| {
                    let s = simulate(&spec, &inn, n, 1000 + i);
                    let a_n = norming_constant(&inn, n).unwrap();
                    psi_prime_replacement_gap(&s, &spec, &loss, a_n, e_psi_prime).unwrap()
                })
                .collect();
            median(&gaps)
        };
        let (m1, m2, m3) = (med(500), med(2000), med(8000));
        assert!(m1 > m2 && m2 > m3, "{m1} {m2} {m3}");
    }

    #[test]
    fn cross_blocks_vanish() {
        let spec = RootSpec::new(1, 0, vec![(PI / 3.0, 1)]).unwrap();
        let inn = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let loss = huber_loss(5.0).unwrap();
        let med = |n: usize| {
            let v: Vec<f64> = (0..100)
                .map(|i| {
                    let s = simulate(&spec, &inn, n, 5000 + i);
                    let a_n = norming_constant(&inn, n).unwrap();
                    finite_n_statistic(&s, &spec, &loss, a_n).unwrap().cross_block_max()
                })
                .collect();
            median(&v)
        };
        let (small, large) = (med(500), med(8000));
        assert!(large < 0.5 * small, "{small} {large}");
    }

    #[test]
    fn missing_trace_is_an_error() {
        let spec = RootSpec::new(1, 0, vec![]).unwrap();
        let s = TimeSeries { warm_start: vec![0.0], ..TimeSeries::from_values(vec![1.0, 2.0, 3.0]) };
        assert!(finite_n_statistic(&s, &spec, &Loss::Quadratic, 1.0).is_err());
    }
}
