//! Direct samplers of the limiting laws.
//!
//! Paths live on the dyadic grid `k/2^L` with `2^L ≥ mesh`. Brownian parts are
//! built level by level (Lévy construction), so raising the mesh with the same
//! seed refines a path without moving its existing points. Lebesgue integrals
//! use the trapezoid rule, Itô integrals use left-point sums.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ar::{RootSpec, UnitRoot};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::stable::{
    accumulate_jumps, lepage_jumps, orbit_period, orbit_phase, Jump, PhaseLaw, DEFAULT_TRUNCATION,
};

use super::moments::LossMoments;
use super::{condition_number, solve, LimitCase, LimitLawSample};

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    /// Minimum number of grid intervals; rounded up to a power of two.
    pub mesh: usize,
    /// Poisson arrivals retained in each LePage series.
    pub truncation: usize,
    /// Jump-direction law for the bivariate process.
    pub phase: PhaseLaw,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self { mesh: 2048, truncation: DEFAULT_TRUNCATION, phase: PhaseLaw::Orbit }
    }
}

impl LimitOptions {
    fn validate(&self) -> Result<()> {
        if self.mesh < 1000 {
            return Err(Error::argument(format!("mesh must be at least 1000, got {}", self.mesh)));
        }
        if self.mesh > 1 << 24 {
            return Err(Error::argument("mesh is too large"));
        }
        if self.truncation == 0 {
            return Err(Error::argument("truncation must be at least 1"));
        }
        Ok(())
    }

    fn levels(&self) -> u32 {
        self.mesh.next_power_of_two().trailing_zeros()
    }
}

/// Standard Brownian motion at `k/2^levels`, `k = 0..=2^levels`.
pub fn dyadic_brownian<R: Rng + ?Sized>(levels: u32, rng: &mut R) -> Vec<f64> {
    let m = 1usize << levels;
    let mut b = vec![0.0; m + 1];
    b[m] = rng.sample(StandardNormal);
    let mut half = m / 2;
    let mut var = 0.25;
    while half >= 1 {
        let sd = f64::sqrt(var);
        let mut i = half;
        while i < m {
            let z: f64 = rng.sample(StandardNormal);
            b[i] = 0.5 * (b[i - half] + b[i + half]) + sd * z;
            i += 2 * half;
        }
        half /= 2;
        var *= 0.5;
    }
    b
}

fn grid(levels: u32) -> Vec<f64> {
    let m = 1usize << levels;
    (0..=m).map(|k| k as f64 / m as f64).collect()
}

/// Cumulative trapezoid integral from 0.
fn cumulative<T>(values: &[T], h: f64) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let mut out = Vec::with_capacity(values.len());
    let mut acc = T::default();
    out.push(acc);
    for w in values.windows(2) {
        acc = acc + (w[0] + w[1]) * (0.5 * h);
        out.push(acc);
    }
    out
}

fn trapezoid(values: impl Iterator<Item = f64>, len: usize, h: f64) -> f64 {
    let mut total = 0.0;
    for (k, v) in values.enumerate() {
        let w = if k == 0 || k + 1 == len { 0.5 } else { 1.0 };
        total += w * v;
    }
    total * h
}

fn ito(integrand: &[f64], driver: &[f64]) -> f64 {
    integrand.iter().zip(driver.windows(2)).map(|(a, w)| a * (w[1] - w[0])).sum()
}

/// Independent streams for the separate ingredients of one draw.
fn sub_streams<R: Rng + ?Sized>(rng: &mut R) -> impl FnMut() -> StreamRng {
    let seed: u64 = rng.random();
    let mut next = 0;
    move || {
        next += 1;
        stream(seed, next)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    Ok(())
}

fn corr_at_two(alpha: f64, moments: &LossMoments) -> Result<f64> {
    if alpha < 2.0 {
        return Ok(0.0);
    }
    moments
        .driver_corr
        .ok_or_else(|| Error::argument("α = 2 needs corr(ε, ψ(ε)) in the loss moments"))
}

/// Scalar stable path on the dyadic grid plus its Gaussian driver (the whole
/// path at α = 2, the small-jump stand-in otherwise).
fn stable_path(alpha: f64, opts: &LimitOptions, next: &mut impl FnMut() -> StreamRng) -> (Vec<f64>, Vec<f64>) {
    let levels = opts.levels();
    let mut jump_rng = next();
    let mut bm_rng = next();
    let bm = dyadic_brownian(levels, &mut bm_rng);
    if alpha == 2.0 {
        return (bm.clone(), bm);
    }
    let (jumps, var) = lepage_jumps(alpha, opts.truncation, &mut jump_rng);
    let sd = var.sqrt();
    let path = accumulate_jumps(&grid(levels), &jumps).iter().zip(&bm).map(|(j, b)| j + sd * b).collect();
    (path, bm)
}

/// `Γ⁻¹F` for the root `+1` (or `Υ⁻¹H` for `-1`) with multiplicity `mult`.
pub fn limit_sample_real_root<R: Rng + ?Sized>(
    mult: usize,
    alpha: f64,
    moments: &LossMoments,
    opts: &LimitOptions,
    root: UnitRoot,
    rng: &mut R,
) -> Result<LimitLawSample> {
    check_alpha(alpha)?;
    opts.validate()?;
    if mult == 0 {
        return Err(Error::argument("multiplicity must be at least 1"));
    }
    let rho = corr_at_two(alpha, moments)?;
    let levels = opts.levels();
    let h = 1.0 / (1usize << levels) as f64;
    let sign = if root == UnitRoot::Plus { 1.0 } else { -1.0 };
    let mut next = sub_streams(rng);

    for attempt in 0..MAX_RESAMPLES {
        let (s, driver) = stable_path(alpha, opts, &mut next);
        let other = dyadic_brownian(levels, &mut next());
        let tilt = (1.0 - rho * rho).max(0.0).sqrt();
        let w: Vec<f64> = driver.iter().zip(&other).map(|(b, o)| rho * b + tilt * o).collect();

        // integrated[j] holds S_{j+1}
        let mut integrated = vec![s];
        for _ in 1..mult {
            let prev = integrated.last().unwrap();
            integrated.push(cumulative(prev, h));
        }
        let len = integrated[0].len();
        let pick = |i: usize| &integrated[mult - 1 - i];
        let matrix = DMatrix::from_fn(mult, mult, |i, j| {
            moments.psi_prime * trapezoid(pick(i).iter().zip(pick(j)).map(|(a, b)| a * b), len, h)
        });
        let vector = DVector::from_fn(mult, |i, _| sign * moments.psi_sd() * ito(pick(i), &w));
        if condition_number(&matrix) < 1e12 {
            if let Some(solution) = solve(&matrix, &vector) {
                return Ok(LimitLawSample {
                    case: LimitCase::RealRoot { root, mult },
                    matrix,
                    vector,
                    solution,
                    resamples: attempt,
                });
            }
        }
    }
    Err(Error::estimation("limit matrix stayed singular after repeated resampling"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn cis(a: f64) -> Self {
        Self::new(a.cos(), a.sin())
    }
    fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl std::ops::Add for C64 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
}

impl std::ops::Mul<f64> for C64 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

/// Bivariate process `T = T₁ + iT₂` on the dyadic grid, with the Brownian
/// pair that drives its Gaussian part.
fn bivariate_path(
    theta: f64,
    alpha: f64,
    opts: &LimitOptions,
    next: &mut impl FnMut() -> StreamRng,
) -> (Vec<C64>, [Vec<f64>; 2]) {
    let levels = opts.levels();
    let g = grid(levels);
    let mut jump_rng = next();
    let mut phase_rng = next();
    let b1 = dyadic_brownian(levels, &mut next());
    let b2 = dyadic_brownian(levels, &mut next());

    if alpha == 2.0 {
        let t = match opts.phase {
            PhaseLaw::Orbit => b1.iter().zip(&b2).map(|(x, y)| C64::new(x * FRAC_1_SQRT_2, y * FRAC_1_SQRT_2)).collect(),
            PhaseLaw::Drift => drift_integral(theta, &g, &b1, 1.0),
        };
        return (t, [b1, b2]);
    }

    let (jumps, var) = lepage_jumps(alpha, opts.truncation, &mut jump_rng);
    let period = orbit_period(theta);
    let (mut j1, mut j2) = (Vec::with_capacity(jumps.len()), Vec::with_capacity(jumps.len()));
    for jump in &jumps {
        let angle = match opts.phase {
            PhaseLaw::Orbit => orbit_phase(period, &mut phase_rng),
            PhaseLaw::Drift => theta * jump.location,
        };
        j1.push(Jump { location: jump.location, size: jump.size * angle.cos() });
        j2.push(Jump { location: jump.location, size: jump.size * angle.sin() });
    }
    let p1 = accumulate_jumps(&g, &j1);
    let p2 = accumulate_jumps(&g, &j2);
    let rem: Vec<C64> = match opts.phase {
        PhaseLaw::Orbit => {
            let sd = (0.5 * var).sqrt();
            b1.iter().zip(&b2).map(|(x, y)| C64::new(sd * x, sd * y)).collect()
        }
        PhaseLaw::Drift => drift_integral(theta, &g, &b1, var.sqrt()),
    };
    let t = p1.iter().zip(&p2).zip(&rem).map(|((a, b), r)| C64::new(a + r.re, b + r.im)).collect();
    (t, [b1, b2])
}

/// `sd ∫_0^t e^{iθu} dB(u)` by left-point sums.
fn drift_integral(theta: f64, g: &[f64], b: &[f64], sd: f64) -> Vec<C64> {
    let mut acc = C64::default();
    let mut out = vec![acc];
    for k in 1..g.len() {
        acc = acc + C64::cis(theta * g[k - 1]) * (sd * (b[k] - b[k - 1]));
        out.push(acc);
    }
    out
}

/// `Λ⁻¹G` for the pair `e^{±iθ}` with multiplicity `d`.
///
/// With `𝒯₀ = T` and `𝒯_j = c ∫ 𝒯_{j-1}`, `c = i e^{-iθ} / (2 sin θ)`, the
/// entry for group `i`, lag `a` against group `j`, lag `b` is
/// `E ψ' / (2 sin²θ) ∫ Re(e^{i(a-b)θ} 𝒯_{i-1} conj(𝒯_{j-1})) dt`, and the score
/// entry is `Re(e^{-i(2-a)θ} ∫ 𝒯_{i-1} dR) / sin θ` with `R = R₁ + iR₂`.
pub fn limit_sample_complex<R: Rng + ?Sized>(
    theta: f64,
    d: usize,
    alpha: f64,
    moments: &LossMoments,
    opts: &LimitOptions,
    rng: &mut R,
) -> Result<LimitLawSample> {
    check_alpha(alpha)?;
    opts.validate()?;
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::domain(format!("theta must lie in (0, π), got {theta}")));
    }
    if d == 0 {
        return Err(Error::argument("multiplicity must be at least 1"));
    }
    let rho = corr_at_two(alpha, moments)?;
    let levels = opts.levels();
    let h = 1.0 / (1usize << levels) as f64;
    let sin = theta.sin();
    let cos = theta.cos();
    let c = C64::new(0.5, 0.5 * cos / sin);
    let r_sd = (0.5 * moments.psi_sq).sqrt();
    let mut next = sub_streams(rng);

    for attempt in 0..MAX_RESAMPLES {
        let (t, [b1, b2]) = bivariate_path(theta, alpha, opts, &mut next);
        let o1 = dyadic_brownian(levels, &mut next());
        let o2 = dyadic_brownian(levels, &mut next());
        let tilt = (1.0 - rho * rho).max(0.0).sqrt();
        // At α = 2 the score driver is correlated with T through the
        // reflection (x, y) ↦ (-sin θ x + cos θ y, cos θ x + sin θ y).
        let r1: Vec<f64> = (0..b1.len()).map(|k| r_sd * (rho * (-sin * b1[k] + cos * b2[k]) + tilt * o1[k])).collect();
        let r2: Vec<f64> = (0..b1.len()).map(|k| r_sd * (rho * (cos * b1[k] + sin * b2[k]) + tilt * o2[k])).collect();

        let mut iterated = vec![t];
        for _ in 1..d {
            let prev = iterated.last().unwrap();
            iterated.push(cumulative(prev, h).into_iter().map(|z| z.mul(c)).collect());
        }
        let len = iterated[0].len();
        let dim = 2 * d;
        let matrix = DMatrix::from_fn(dim, dim, |row, col| {
            let (i, a) = (row / 2, row % 2 + 1);
            let (j, b) = (col / 2, col % 2 + 1);
            let rot = C64::cis((a as f64 - b as f64) * theta);
            let vals = iterated[i].iter().zip(&iterated[j]).map(|(x, y)| rot.mul(*x).mul(y.conj()).re);
            moments.psi_prime / (2.0 * sin * sin) * trapezoid(vals, len, h)
        });
        // symmetrize away rounding so the matrix is exactly symmetric
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let vector = DVector::from_fn(dim, |row, _| {
            let (i, a) = (row / 2, row % 2 + 1);
            let re: Vec<f64> = iterated[i].iter().map(|z| z.re).collect();
            let im: Vec<f64> = iterated[i].iter().map(|z| z.im).collect();
            let integral = C64::new(ito(&re, &r1) - ito(&im, &r2), ito(&re, &r2) + ito(&im, &r1));
            C64::cis(-(2.0 - a as f64) * theta).mul(integral).re / sin
        });
        if condition_number(&matrix) < 1e12 {
            if let Some(solution) = solve(&matrix, &vector) {
                return Ok(LimitLawSample {
                    case: LimitCase::ComplexPair { theta, mult: d },
                    matrix,
                    vector,
                    solution,
                    resamples: attempt,
                });
            }
        }
    }
    Err(Error::estimation("limit matrix stayed singular after repeated resampling"))
}

/// One independent draw per root group, in the order `+1`, `-1`, pairs.
pub fn limit_sample_spec<R: Rng + ?Sized>(
    spec: &RootSpec,
    alpha: f64,
    moments: &LossMoments,
    opts: &LimitOptions,
    rng: &mut R,
) -> Result<Vec<LimitLawSample>> {
    spec.validate()?;
    let mut out = Vec::new();
    if spec.r > 0 {
        out.push(limit_sample_real_root(spec.r, alpha, moments, opts, UnitRoot::Plus, rng)?);
    }
    if spec.s > 0 {
        out.push(limit_sample_real_root(spec.s, alpha, moments, opts, UnitRoot::Minus, rng)?);
    }
    for &(theta, d) in &spec.pairs {
        out.push(limit_sample_complex(theta, d, alpha, moments, opts, rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, median, variance};

    fn moments() -> LossMoments {
        LossMoments::new(1.5, 0.9, Some(0.95)).unwrap()
    }

    #[test]
    fn dyadic_brownian_refines_and_has_unit_variance() {
        let coarse = dyadic_brownian(4, &mut stream(1, 0));
        let fine = dyadic_brownian(6, &mut stream(1, 0));
        for k in 0..=16 {
            assert_eq!(coarse[k], fine[4 * k]);
        }
        let mids: Vec<f64> = (0..20_000).map(|i| dyadic_brownian(3, &mut stream(2, i))[3]).collect();
        let se = 0.375 * (2.0 / 19_999.0f64).sqrt();
        assert!((variance(&mids) - 0.375).abs() < 3.0 * se);
        assert!(mean(&mids).abs() < 0.03);
    }

    #[test]
    fn small_mesh_rejected() {
        let o = LimitOptions { mesh: 100, ..LimitOptions::default() };
        assert!(limit_sample_real_root(1, 1.5, &moments(), &o, UnitRoot::Plus, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn gaussian_case_needs_correlation() {
        let m = LossMoments::new(1.0, 1.0, None).unwrap();
        let r = limit_sample_real_root(1, 2.0, &m, &LimitOptions::default(), UnitRoot::Plus, &mut stream(0, 0));
        assert!(r.is_err());
    }

    #[test]
    fn zero_score_gives_zero_solution() {
        let m = LossMoments::new(0.0, 1.0, None).unwrap();
        let s = limit_sample_real_root(2, 1.3, &m, &LimitOptions::default(), UnitRoot::Plus, &mut stream(0, 1)).unwrap();
        assert!(s.solution.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn real_matrix_is_symmetric() {
        let s = limit_sample_real_root(3, 1.3, &moments(), &LimitOptions::default(), UnitRoot::Minus, &mut stream(0, 2))
            .unwrap();
        assert_eq!(s.matrix, s.matrix.transpose());
        assert_eq!(s.solution.len(), 3);
    }

    #[test]
    fn pair_matrix_has_cosine_structure() {
        for &theta in &[PI / 4.0, 1.0, PI / 2.0] {
            let s = limit_sample_complex(theta, 1, 1.3, &moments(), &LimitOptions::default(), &mut stream(3, 0)).unwrap();
            let m = &s.matrix;
            assert!((m[(0, 0)] - m[(1, 1)]).abs() < 1e-12 * m[(0, 0)]);
            assert!((m[(0, 1)] / m[(0, 0)] - theta.cos()).abs() < 1e-3);
        }
    }

    #[test]
    fn higher_pair_multiplicity_has_paired_entries() {
        let s = limit_sample_complex(0.9, 2, 1.5, &moments(), &LimitOptions::default(), &mut stream(4, 0)).unwrap();
        let m = &s.matrix;
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(2 * i, 2 * j)] - m[(2 * i + 1, 2 * j + 1)]).abs() < 1e-9 * (1.0 + m[(2 * i, 2 * j)].abs()));
                assert!((m[(2 * i, 2 * j + 1)] - m[(2 * j + 1, 2 * i)]).abs() < 1e-9 * (1.0 + m[(2 * i, 2 * j + 1)].abs()));
                if i == j {
                    assert!((m[(2 * i, 2 * i + 1)] - m[(2 * i + 1, 2 * i)]).abs() < 1e-9 * (1.0 + m[(2 * i, 2 * i + 1)].abs()));
                }
            }
        }
        assert_eq!(s.solution.len(), 4);
    }

    #[test]
    fn permutation_invariance_of_solution() {
        let s = limit_sample_real_root(2, 1.3, &moments(), &LimitOptions::default(), UnitRoot::Plus, &mut stream(5, 0)).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pm = &p * &s.matrix * p.transpose();
        let pv = &p * &s.vector;
        let sol = solve(&pm, &pv).unwrap();
        assert!((sol[0] - s.solution[1]).abs() < 1e-10 * (1.0 + s.solution[1].abs()));
        assert!((sol[1] - s.solution[0]).abs() < 1e-10 * (1.0 + s.solution[0].abs()));
    }

    #[test]
    fn doubling_mesh_barely_moves_gaussian_draws() {
        let base = LimitOptions { mesh: 1 << 14, ..LimitOptions::default() };
        let fine = LimitOptions { mesh: 1 << 15, ..base };
        let rel: Vec<f64> = (0..40)
            .map(|i| {
                let a = limit_sample_real_root(1, 2.0, &moments(), &base, UnitRoot::Plus, &mut stream(6, i)).unwrap();
                let b = limit_sample_real_root(1, 2.0, &moments(), &fine, UnitRoot::Plus, &mut stream(6, i)).unwrap();
                let dm = (a.matrix[(0, 0)] - b.matrix[(0, 0)]).abs() / b.matrix[(0, 0)].abs();
                let dv = (a.vector[0] - b.vector[0]).abs() / b.vector[0].abs().max(1e-3);
                dm.max(dv)
            })
            .collect();
        assert!(median(&rel) < 1e-2, "median relative change {}", median(&rel));
    }

    #[test]
    fn spec_draws_follow_group_order() {
        let spec = RootSpec::new(1, 1, vec![]).unwrap();
        let draws = limit_sample_spec(&spec, 1.3, &moments(), &LimitOptions::default(), &mut stream(7, 0)).unwrap();
        assert_eq!(draws.len(), 2);
        assert_eq!(draws[0].case, LimitCase::RealRoot { root: UnitRoot::Plus, mult: 1 });
        assert_eq!(draws[1].case, LimitCase::RealRoot { root: UnitRoot::Minus, mult: 1 });
        assert!(draws[0].csv_rows().starts_with("plus1,1,"));
    }
}
