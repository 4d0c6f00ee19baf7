//! Heavy-tailed innovations and stable limit processes.
//!
//! Innovations come in two families: exact symmetric α-stable draws
//! (Chambers–Mallows–Stuck) and symmetric Pareto draws with tail exactly
//! `x^-α`. Stable laws use the `S(α, 0, σ, 0)` parameterization with
//! characteristic function `exp(-|σ s|^α)`; at α = 2 this is `N(0, 2σ²)`.
//!
//! Limit processes are simulated with the LePage series
//! `S(t) = Σ δ_k Γ_k^{-1/α} 1{U_k ≤ t}`. The series is cut after a fixed
//! number of Poisson arrivals and the discarded small jumps are replaced by a
//! Brownian term whose variance is the exact conditional variance of the
//! remainder given the last retained arrival.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad;

/// Default number of Poisson arrivals retained in a LePage series.
pub const DEFAULT_TRUNCATION: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Symmetric α-stable, sampled exactly.
    ExactSas,
    /// `|ε| = σ U^{-1/α}` with a fair random sign.
    SymmetricPareto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationSpec {
    pub alpha: f64,
    pub family: Family,
    pub scale: f64,
    /// Right-tail weight `p` in `P(ε > x) / P(|ε| > x) → p`.
    pub p_tail: f64,
}

impl InnovationSpec {
    pub fn new(alpha: f64, family: Family, scale: f64) -> Result<Self> {
        let spec = Self { alpha, family, scale, p_tail: 0.5 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn exact_sas(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(alpha, Family::ExactSas, scale)
    }

    /// Unit-scale symmetric Pareto: `P(|ε| > x) = x^-α` for `x ≥ 1`.
    pub fn pareto(alpha: f64) -> Result<Self> {
        Self::new(alpha, Family::SymmetricPareto, 1.0)
    }

    /// Only the symmetric case `p = 1/2` is supported.
    pub fn with_p_tail(mut self, p_tail: f64) -> Result<Self> {
        self.p_tail = p_tail;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {}", self.scale)));
        }
        if self.p_tail != 0.5 {
            return Err(Error::domain(format!(
                "only symmetric innovations (p = 1/2) are supported, got p = {}",
                self.p_tail
            )));
        }
        if self.family == Family::SymmetricPareto && self.alpha >= 2.0 {
            return Err(Error::domain("the Pareto family needs alpha < 2"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        match self.family {
            Family::ExactSas => sample_exact_sas(self, n, rng),
            Family::SymmetricPareto => sample_pareto_tail(self, n, rng),
        }
    }

    /// `P(|ε| > x)`.
    pub fn tail_prob(&self, x: f64) -> f64 {
        let z = x / self.scale;
        match self.family {
            Family::ExactSas => sas_abs_tail(self.alpha, z),
            Family::SymmetricPareto => {
                if z <= 1.0 {
                    1.0
                } else {
                    z.powf(-self.alpha)
                }
            }
        }
    }

    /// `E ε²` when finite (only the Gaussian member of the exact family).
    pub fn second_moment(&self) -> Option<f64> {
        (self.family == Family::ExactSas && self.alpha == 2.0).then(|| 2.0 * self.scale * self.scale)
    }
}

/// Draws from `S(α, 0, σ, 0)` by the Chambers–Mallows–Stuck transform.
pub fn sample_exact_sas<R: Rng + ?Sized>(spec: &InnovationSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.family != Family::ExactSas {
        return Err(Error::argument("sample_exact_sas needs the ExactSas family"));
    }
    let alpha = spec.alpha;
    let sigma = spec.scale;
    if alpha == 2.0 {
        let sd = std::f64::consts::SQRT_2 * sigma;
        return Ok((0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect());
    }
    Ok((0..n).map(|_| sigma * cms_unit(alpha, rng)).collect())
}

fn cms_unit<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    // v uniform on the open interval (-π/2, π/2)
    let v = PI * (rng.sample::<f64, _>(rand_distr::Open01) - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Draws with `P(|ε| > x) = (x/σ)^-α` for `x ≥ σ` and a fair sign.
pub fn sample_pareto_tail<R: Rng + ?Sized>(spec: &InnovationSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.family != Family::SymmetricPareto {
        return Err(Error::argument("sample_pareto_tail needs the SymmetricPareto family"));
    }
    let inv = -1.0 / spec.alpha;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.sample(rand_distr::Open01);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * spec.scale * u.powf(inv)
        })
        .collect())
}

/// `P(|X| > x)` for unit-scale `S(α, 0, 1, 0)`.
///
/// Closed forms at α = 1 (Cauchy) and α = 2 (`N(0, 2)`); otherwise Nolan's
/// integral representation of the distribution function, evaluated in log
/// space so the integrand never forms `0 · ∞`.
pub fn sas_abs_tail(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    if alpha == 2.0 {
        return erfc(x / 2.0);
    }
    if alpha == 1.0 {
        return 1.0 - 2.0 / PI * x.atan();
    }
    let a = alpha / (alpha - 1.0);
    let b = 1.0 / (alpha - 1.0);
    let lx = x.ln();
    let log_v = move |theta: f64| -> f64 {
        a * lx + b * theta.cos().ln() - a * (alpha * theta).sin().ln() + ((alpha - 1.0) * theta).cos().ln()
    };
    let right = if alpha > 1.0 {
        quad::integrate(|t| (-log_v(t).exp()).exp(), 0.0, FRAC_PI_2, 1e-300, 1e-11) / PI
    } else {
        quad::integrate(|t| -(-log_v(t).exp()).exp_m1(), 0.0, FRAC_PI_2, 1e-300, 1e-11) / PI
    };
    (2.0 * right).clamp(0.0, 1.0)
}

/// Leading term of the stable tail, `P(|X| > x) ~ 2 C_α x^-α` with
/// `C_α = Γ(α) sin(πα/2) / π`.
pub fn sas_tail_constant(alpha: f64) -> f64 {
    2.0 * gamma(alpha) * (PI * alpha / 2.0).sin() / PI
}

/// Norming constants `a_n = inf{x : P(|ε| > x) ≤ 1/n}`.
///
/// At α = 2 the Gaussian convention `a_n = √(n E ε²)` is used instead, so
/// that normalized partial sums are asymptotically standard.
pub fn norming_constant(spec: &InnovationSpec, n: usize) -> Result<f64> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::argument("norming constant needs n >= 1"));
    }
    let nf = n as f64;
    let sigma = spec.scale;
    match spec.family {
        Family::SymmetricPareto => Ok(sigma * nf.powf(1.0 / spec.alpha)),
        Family::ExactSas if spec.alpha == 2.0 => Ok((nf * 2.0).sqrt() * sigma),
        Family::ExactSas if spec.alpha == 1.0 => Ok(sigma * (FRAC_PI_2 * (1.0 - 1.0 / nf)).tan()),
        Family::ExactSas => Ok(sigma * cached_quantile(spec.alpha, n)),
    }
}

fn cached_quantile(alpha: f64, n: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (alpha.to_bits(), n);
    if let Some(&q) = cache.lock().expect("quantile cache poisoned").get(&key) {
        return q;
    }
    let q = invert_sas_tail(alpha, 1.0 / n as f64);
    cache.lock().expect("quantile cache poisoned").insert(key, q);
    q
}

fn invert_sas_tail(alpha: f64, target: f64) -> f64 {
    if target >= 1.0 {
        return 0.0;
    }
    let guess = (sas_tail_constant(alpha) / target).powf(1.0 / alpha).max(1e-3);
    let (mut lo, mut hi) = (guess, guess);
    while sas_abs_tail(alpha, lo) < target {
        lo *= 0.5;
    }
    while sas_abs_tail(alpha, hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if sas_abs_tail(alpha, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Scale constant `K` of the LePage sum: `Σ δ_k Γ_k^{-1/α}` has characteristic
/// function `exp(-K |s|^α)`, so it is `S(α, 0, K^{1/α}, 0)`.
///
/// `K = Γ(1-α) cos(πα/2)` for α ≠ 1 and `π/2` at α = 1; the expression is
/// continuous through α = 1.
pub fn lepage_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain(format!("LePage constant needs alpha in (0, 2), got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(FRAC_PI_2);
    }
    Ok(gamma(1.0 - alpha) * (PI * alpha / 2.0).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Limit of ordinary partial sums.
    S,
    /// Limit of alternating-sign partial sums; an independent copy of `S`.
    S1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub location: f64,
    pub size: f64,
}

#[derive(Debug, Clone)]
pub struct LePagePath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub alpha: f64,
    pub truncation: usize,
    pub kind: PathKind,
    /// Retained jumps in arrival order (empty for α = 2).
    pub jumps: Vec<Jump>,
    /// Standard deviation at `t = 1` of the Brownian stand-in for the
    /// discarded jumps.
    pub remainder_sd: f64,
}

impl LePagePath {
    pub fn value_at_end(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// Warns when the discarded part of the series is large relative to the
    /// scale of `S(1)`.
    pub fn truncation_warning(&self, rel_tol: f64) -> Option<String> {
        if self.alpha >= 2.0 {
            return None;
        }
        let scale = lepage_constant(self.alpha).ok()?.powf(1.0 / self.alpha);
        let ratio = self.remainder_sd / scale;
        (ratio > rel_tol).then(|| {
            format!(
                "LePage truncation {} leaves a remainder with relative sd {ratio:.3e} (> {rel_tol:.1e})",
                self.truncation
            )
        })
    }

    /// `(t, value)` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

/// Uniform grid `0, 1/m, …, 1`.
pub fn unit_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|i| i as f64 / m as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::argument("empty grid"));
    }
    if grid.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
        return Err(Error::argument("grid points must lie in [0, 1]"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::argument("grid must be strictly increasing"));
    }
    Ok(())
}

/// Draws the retained arrivals: `(Γ_k, δ_k, U_k)` for `k = 1..=truncation`,
/// consumed from the stream in arrival order so longer truncations extend
/// shorter ones. Returns the jumps and the last arrival time.
fn poisson_arrivals<R: Rng + ?Sized, F: FnMut(&mut R) -> f64>(
    alpha: f64,
    truncation: usize,
    rng: &mut R,
    mut extra: F,
) -> (Vec<(Jump, f64)>, f64) {
    let mut gamma_k = 0.0;
    let inv = -1.0 / alpha;
    let jumps = (0..truncation)
        .map(|_| {
            gamma_k += rng.sample::<f64, _>(Exp1);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let location: f64 = rng.random();
            let mark = extra(rng);
            (Jump { location, size: sign * gamma_k.powf(inv) }, mark)
        })
        .collect();
    (jumps, gamma_k)
}

/// Retained LePage jumps in arrival order and the conditional variance of the
/// discarded remainder.
pub fn lepage_jumps<R: Rng + ?Sized>(alpha: f64, truncation: usize, rng: &mut R) -> (Vec<Jump>, f64) {
    let (marked, last) = poisson_arrivals(alpha, truncation, rng, |_| 0.0);
    (marked.into_iter().map(|(j, _)| j).collect(), remainder_variance(alpha, last))
}

/// Conditional variance of `Σ_{k>N} δ_k Γ_k^{-1/α}` given `Γ_N = g`:
/// `∫_g^∞ x^{-2/α} dx`.
pub fn remainder_variance(alpha: f64, last_arrival: f64) -> f64 {
    let q = 2.0 / alpha;
    last_arrival.powf(1.0 - q) / (q - 1.0)
}

fn brownian_on_grid<R: Rng + ?Sized>(grid: &[f64], sd: f64, rng: &mut R) -> Vec<f64> {
    let mut prev_t = 0.0;
    let mut acc = 0.0;
    grid.iter()
        .map(|&t| {
            acc += sd * (t - prev_t).sqrt() * rng.sample::<f64, _>(StandardNormal);
            prev_t = t;
            acc
        })
        .collect()
}

/// Sums the jump sizes with location `≤ t` for each grid point.
pub fn accumulate_jumps(grid: &[f64], jumps: &[Jump]) -> Vec<f64> {
    let mut by_location: Vec<(f64, f64)> = jumps.iter().map(|j| (j.location, j.size)).collect();
    by_location.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut idx = 0;
    let mut acc = 0.0;
    grid.iter()
        .map(|&t| {
            while idx < by_location.len() && by_location[idx].0 <= t {
                acc += by_location[idx].1;
                idx += 1;
            }
            acc
        })
        .collect()
}

/// One path of `S` (or `S⁽¹⁾`) on `grid`. At α = 2 this is standard Brownian
/// motion.
pub fn lepage_path<R: Rng + ?Sized>(
    alpha: f64,
    kind: PathKind,
    grid: &[f64],
    truncation: usize,
    rng: &mut R,
) -> Result<LePagePath> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if truncation == 0 {
        return Err(Error::argument("truncation must be at least 1"));
    }
    check_grid(grid)?;
    if alpha == 2.0 {
        return Ok(LePagePath {
            grid: grid.to_vec(),
            values: brownian_on_grid(grid, 1.0, rng),
            alpha,
            truncation,
            kind,
            jumps: Vec::new(),
            remainder_sd: 0.0,
        });
    }
    let (jumps, var) = lepage_jumps(alpha, truncation, rng);
    let remainder_sd = var.sqrt();
    let mut values = accumulate_jumps(grid, &jumps);
    for (v, b) in values.iter_mut().zip(brownian_on_grid(grid, remainder_sd, rng)) {
        *v += b;
    }
    Ok(LePagePath { grid: grid.to_vec(), values, alpha, truncation, kind, jumps, remainder_sd })
}

/// Direction law of the jumps of the bivariate process `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseLaw {
    /// Jump at time `U` points along `(cos θU, sin θU)`.
    Drift,
    /// Jump direction uniform on the orbit `{kθ mod 2π}`, independent of its
    /// time. This is the limit of `a_n^{-1} Σ (cos kθ, sin kθ) ε_k`.
    Orbit,
}

/// Period of `k ↦ kθ mod 2π` when θ/2π is rational with a small denominator.
pub fn orbit_period(theta: f64) -> Option<usize> {
    let frac = theta / (2.0 * PI);
    (1..=10_000usize).find(|&q| {
        let x = frac * q as f64;
        (x - x.round()).abs() < 1e-9 * q as f64
    })
}

/// A phase uniform on the orbit of θ (or on the circle when the orbit is
/// dense).
pub fn orbit_phase<R: Rng + ?Sized>(period: Option<usize>, rng: &mut R) -> f64 {
    match period {
        Some(q) => 2.0 * PI * rng.random_range(0..q) as f64 / q as f64,
        None => 2.0 * PI * rng.random::<f64>(),
    }
}

/// `(T₁, T₂)` on `grid`.
///
/// For α < 2 the jumps are `δ_k Γ_k^{-1/α}` placed at `U_k` with direction
/// given by `phase`. At α = 2 the process is the Gaussian analogue:
/// `∫ (cos θu, sin θu) dB(u)` under [`PhaseLaw::Drift`] and `(B₁, B₂)/√2`
/// under [`PhaseLaw::Orbit`].
pub fn bivariate_stable_t<R: Rng + ?Sized>(
    theta: f64,
    alpha: f64,
    grid: &[f64],
    truncation: usize,
    phase: PhaseLaw,
    rng: &mut R,
) -> Result<(LePagePath, LePagePath)> {
    if !(theta > 0.0 && theta < 2.0 * PI) {
        return Err(Error::domain(format!("theta must lie in (0, 2π), got {theta}")));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if truncation == 0 {
        return Err(Error::argument("truncation must be at least 1"));
    }
    check_grid(grid)?;
    let make = |values: Vec<f64>, jumps: Vec<Jump>, remainder_sd: f64| LePagePath {
        grid: grid.to_vec(),
        values,
        alpha,
        truncation,
        kind: PathKind::S,
        jumps,
        remainder_sd,
    };

    let (jumps1, jumps2, var, mut v1, mut v2) = if alpha == 2.0 {
        (Vec::new(), Vec::new(), 1.0, vec![0.0; grid.len()], vec![0.0; grid.len()])
    } else {
        let period = orbit_period(theta);
        let (marked, last) = poisson_arrivals(alpha, truncation, rng, |r| match phase {
            PhaseLaw::Drift => 0.0,
            PhaseLaw::Orbit => orbit_phase(period, r),
        });
        let mut j1 = Vec::with_capacity(marked.len());
        let mut j2 = Vec::with_capacity(marked.len());
        for (jump, mark) in &marked {
            let angle = match phase {
                PhaseLaw::Drift => theta * jump.location,
                PhaseLaw::Orbit => *mark,
            };
            j1.push(Jump { location: jump.location, size: jump.size * angle.cos() });
            j2.push(Jump { location: jump.location, size: jump.size * angle.sin() });
        }
        let v1 = accumulate_jumps(grid, &j1);
        let v2 = accumulate_jumps(grid, &j2);
        (j1, j2, remainder_variance(alpha, last), v1, v2)
    };

    // Gaussian part: the whole process at α = 2, the small-jump remainder
    // otherwise. Increment covariance over [a, b] is var · ∫ d dᵀ du with d
    // the jump direction.
    let mut prev = 0.0;
    let (mut g1, mut g2) = (0.0, 0.0);
    for (i, &t) in grid.iter().enumerate() {
        let dt = t - prev;
        let (c11, c12, c22) = match phase {
            PhaseLaw::Orbit => (0.5 * dt, 0.0, 0.5 * dt),
            PhaseLaw::Drift => direction_moments(theta, prev, t),
        };
        let (z1, z2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let (x1, x2) = correlated_pair(c11 * var, c12 * var, c22 * var, z1, z2);
        g1 += x1;
        g2 += x2;
        v1[i] += g1;
        v2[i] += g2;
        prev = t;
    }
    let sd = if alpha == 2.0 { 0.0 } else { var.sqrt() };
    Ok((make(v1, jumps1, sd), make(v2, jumps2, sd)))
}

/// `∫_a^b (cos², cos·sin, sin²)(θu) du`.
fn direction_moments(theta: f64, a: f64, b: f64) -> (f64, f64, f64) {
    let dt = b - a;
    if dt == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let s2 = ((2.0 * theta * b).sin() - (2.0 * theta * a).sin()) / (4.0 * theta);
    let cs = ((theta * b).sin().powi(2) - (theta * a).sin().powi(2)) / (2.0 * theta);
    (0.5 * dt + s2, cs, 0.5 * dt - s2)
}

/// Maps independent standard normals to a pair with covariance
/// `[[c11, c12], [c12, c22]]` via a 2×2 Cholesky factor.
fn correlated_pair(c11: f64, c12: f64, c22: f64, z1: f64, z2: f64) -> (f64, f64) {
    let l11 = c11.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { c12 / l11 } else { 0.0 };
    let l22 = (c22 - l21 * l21).max(0.0).sqrt();
    (l11 * z1, l21 * z1 + l22 * z2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{ks_one_sample, mean, quantile, variance};

    #[test]
    fn spec_validation() {
        assert!(InnovationSpec::exact_sas(0.0, 1.0).is_err());
        assert!(InnovationSpec::exact_sas(2.1, 1.0).is_err());
        assert!(InnovationSpec::exact_sas(1.5, 0.0).is_err());
        assert!(InnovationSpec::pareto(2.0).is_err());
        assert!(InnovationSpec::exact_sas(1.5, 1.0).unwrap().with_p_tail(0.7).is_err());
        assert!(InnovationSpec::exact_sas(0.5, 1.0).unwrap().with_p_tail(0.5).is_ok());
    }

    #[test]
    fn wrong_family_is_rejected() {
        let mut rng = stream(1, 0);
        let p = InnovationSpec::pareto(1.3).unwrap();
        assert!(matches!(sample_exact_sas(&p, 3, &mut rng), Err(Error::Argument(_))));
        let s = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        assert!(matches!(sample_pareto_tail(&s, 3, &mut rng), Err(Error::Argument(_))));
    }

    #[test]
    fn gaussian_reduction_has_unit_variance() {
        let spec = InnovationSpec::exact_sas(2.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let xs = sample_exact_sas(&spec, 100_000, &mut stream(11, 0)).unwrap();
        let v = variance(&xs);
        // s.e. of a normal sample variance is σ² √(2/(n-1))
        let se = (2.0 / 99_999.0f64).sqrt();
        assert!((v - 1.0).abs() < 3.0 * se, "variance {v}");
    }

    #[test]
    fn cauchy_reduction_passes_ks() {
        let spec = InnovationSpec::exact_sas(1.0, 1.0).unwrap();
        let xs = sample_exact_sas(&spec, 100_000, &mut stream(12, 0)).unwrap();
        let r = ks_one_sample(&xs, |x| 0.5 + x.atan() / PI);
        assert!(!r.rejects_at(0.01), "KS {r:?}");
    }

    #[test]
    fn cms_matches_numeric_tail() {
        let spec = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let xs = sample_exact_sas(&spec, 100_000, &mut stream(13, 0)).unwrap();
        let r = ks_one_sample(&xs, |x| {
            let t = 0.5 * sas_abs_tail(1.3, x.abs());
            if x >= 0.0 {
                1.0 - t
            } else {
                t
            }
        });
        assert!(!r.rejects_at(0.01), "KS {r:?}");
    }

    #[test]
    fn pareto_support_and_tail() {
        let spec = InnovationSpec::pareto(0.5).unwrap();
        let xs = sample_pareto_tail(&spec, 10, &mut stream(14, 0)).unwrap();
        assert!(xs.iter().all(|x| x.abs() >= 1.0));

        let spec = InnovationSpec::pareto(1.3).unwrap();
        let xs = sample_pareto_tail(&spec, 100_000, &mut stream(15, 0)).unwrap();
        let n = xs.len() as f64;
        let frac = xs.iter().filter(|x| x.abs() > 10.0).count() as f64 / n;
        let p = 10f64.powf(-1.3);
        assert!((p - 0.0501).abs() < 1e-4);
        assert!((frac - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt(), "{frac}");
        let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        let med = quantile(&abs, 0.5);
        assert!((med - 2f64.powf(1.0 / 1.3)).abs() < 0.02, "median {med}");
    }

    #[test]
    fn norming_constant_closed_forms() {
        let p = InnovationSpec::pareto(1.3).unwrap();
        assert!((norming_constant(&p, 100).unwrap() - 34.551).abs() < 1e-3);
        let p = InnovationSpec::pareto(0.5).unwrap();
        assert!((norming_constant(&p, 4).unwrap() - 16.0).abs() < 1e-12);
        let g = InnovationSpec::exact_sas(2.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!((norming_constant(&g, 400).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn cauchy_norming_matches_bisection_oracle() {
        // Independent oracle: bisection on 1 - (2/π) arctan(x) = 1/n.
        let n = 1000.0;
        let (mut lo, mut hi) = (1.0f64, 1e6f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - 2.0 / PI * mid.atan() > 1.0 / n {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let spec = InnovationSpec::exact_sas(1.0, 1.0).unwrap();
        let a = norming_constant(&spec, 1000).unwrap();
        assert!((a / lo - 1.0).abs() < 1e-3);
    }

    #[test]
    fn numeric_tail_inversion_hits_target() {
        for &alpha in &[0.5, 0.9, 1.3, 1.7, 1.95] {
            let spec = InnovationSpec::exact_sas(alpha, 1.0).unwrap();
            for &n in &[10usize, 1000, 100_000] {
                let a = norming_constant(&spec, n).unwrap();
                let tail = spec.tail_prob(a);
                assert!((tail * n as f64 - 1.0).abs() < 1e-8, "alpha {alpha} n {n} tail {tail}");
            }
        }
    }

    #[test]
    fn numeric_tail_agrees_with_series_expansion() {
        // Bergström series, convergent for α < 1:
        // P(X > x) = (1/π) Σ (-1)^{k+1} Γ(kα)/k! sin(kπα/2) x^{-kα}
        let alpha: f64 = 0.6;
        for &x in &[3.0f64, 10.0, 50.0] {
            let mut s = 0.0;
            let mut fact = 1.0;
            for k in 1..60 {
                let kf = k as f64;
                fact *= kf;
                let term = gamma(kf * alpha) / fact * (kf * PI * alpha / 2.0).sin() * x.powf(-kf * alpha);
                s += if k % 2 == 1 { term } else { -term };
            }
            let oracle = 2.0 * s / PI;
            let got = sas_abs_tail(alpha, x);
            assert!((got / oracle - 1.0).abs() < 1e-7, "x {x}: {got} vs {oracle}");
        }
    }

    #[test]
    fn tail_index_visible_in_samples() {
        let spec = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let xs = sample_exact_sas(&spec, 100_000, &mut stream(16, 0)).unwrap();
        let c = sas_tail_constant(1.3);
        for &x in &[10.0f64, 30.0, 100.0] {
            let count = xs.iter().filter(|e| e.abs() > x).count() as f64;
            let emp = count / xs.len() as f64 * x.powf(1.3);
            let se = count.sqrt() / xs.len() as f64 * x.powf(1.3);
            // The exact tail is within a few percent of the asymptote by x = 10.
            let exact = sas_abs_tail(1.3, x) * x.powf(1.3);
            assert!((exact / c - 1.0).abs() < 0.05);
            assert!((emp - exact).abs() < 3.5 * se, "x {x}: {emp} vs {exact}");
        }
    }

    #[test]
    fn lepage_constant_values() {
        assert!((lepage_constant(1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let half = (PI / 4.0).cos() * PI.sqrt();
        assert!((lepage_constant(0.5).unwrap() - half).abs() < 1e-12);
        assert!((half - 1.2533).abs() < 1e-4);
        for eps in [1e-4, -1e-4] {
            let k = lepage_constant(1.0 + eps).unwrap();
            assert!((k - FRAC_PI_2).abs() < 1e-3, "{eps}: {k}");
        }
        assert!(lepage_constant(1.7).unwrap() > 0.0);
        assert!(lepage_constant(2.0).is_err());
    }

    #[test]
    fn lepage_starts_at_zero_and_is_prefix_stable() {
        let grid = unit_grid(100);
        let short = lepage_path(1.3, PathKind::S, &grid, 50, &mut stream(3, 9)).unwrap();
        let long = lepage_path(1.3, PathKind::S, &grid, 500, &mut stream(3, 9)).unwrap();
        assert_eq!(short.values[0], 0.0);
        assert_eq!(&long.jumps[..50], &short.jumps[..]);
        assert!(short.remainder_sd > long.remainder_sd);
    }

    #[test]
    fn lepage_is_piecewise_constant_between_jumps() {
        let grid = unit_grid(2000);
        let p = lepage_path(0.8, PathKind::S, &grid, 20, &mut stream(4, 0)).unwrap();
        // with few jumps and negligible remainder, most increments are tiny
        let big = p.values.windows(2).filter(|w| (w[1] - w[0]).abs() > 10.0 * p.remainder_sd).count();
        assert!(big <= 20);
    }

    #[test]
    fn truncation_warning_fires_for_short_series() {
        let grid = unit_grid(10);
        let p = lepage_path(1.9, PathKind::S, &grid, 5, &mut stream(5, 0)).unwrap();
        assert!(p.truncation_warning(0.01).is_some());
        let q = lepage_path(0.5, PathKind::S, &grid, 10_000, &mut stream(5, 0)).unwrap();
        assert!(q.truncation_warning(0.01).is_none());
    }

    #[test]
    fn brownian_branch_has_unit_variance() {
        let grid = unit_grid(1000);
        let ends: Vec<f64> = (0..10_000)
            .map(|i| lepage_path(2.0, PathKind::S, &grid, 1, &mut stream(6, i)).unwrap().value_at_end())
            .collect();
        let se = (2.0 / 9999.0f64).sqrt();
        assert!((variance(&ends) - 1.0).abs() < 3.0 * se);
        assert!(mean(&ends).abs() < 3.0 / 100.0);
    }

    #[test]
    fn bivariate_starts_at_origin_and_validates() {
        let grid = unit_grid(50);
        let (t1, t2) = bivariate_stable_t(PI / 4.0, 1.3, &grid, 100, PhaseLaw::Drift, &mut stream(7, 0)).unwrap();
        assert_eq!((t1.values[0], t2.values[0]), (0.0, 0.0));
        assert!(bivariate_stable_t(0.0, 1.3, &grid, 100, PhaseLaw::Drift, &mut stream(7, 0)).is_err());
    }

    #[test]
    fn drift_gaussian_variance_matches_quadrature() {
        let theta = PI / 4.0;
        // closed form of ∫_0^1 cos²(θu) du
        let exact = 0.5 + (2.0 * theta).sin() / (4.0 * theta);
        let grid = unit_grid(20);
        let ends: Vec<f64> = (0..20_000)
            .map(|i| {
                let (t1, _) =
                    bivariate_stable_t(theta, 2.0, &grid, 1, PhaseLaw::Drift, &mut stream(8, i)).unwrap();
                t1.value_at_end()
            })
            .collect();
        let se = exact * (2.0 / 19_999.0f64).sqrt();
        assert!((variance(&ends) - exact).abs() < 3.0 * se, "{} vs {exact}", variance(&ends));
    }

    #[test]
    fn orbit_period_detection() {
        assert_eq!(orbit_period(PI / 4.0), Some(8));
        assert_eq!(orbit_period(PI / 2.0), Some(4));
        assert_eq!(orbit_period(2.0 * PI / 3.0), Some(3));
        assert_eq!(orbit_period(1.0), None);
    }
}
