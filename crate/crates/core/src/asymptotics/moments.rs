//! Moments of the score function under the innovation law.
//!
//! For symmetric `ε` with `G(x) = P(|ε| > x)` and smooth `g` with `g(0) = 0`,
//! `E g(|ε|) = ∫_0^∞ g'(x) G(x) dx`; every moment below is evaluated that way
//! with adaptive quadrature.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::estimation::Loss;
use crate::quad;
use crate::stable::{Family, InnovationSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossMoments {
    /// `E ψ²(ε)`.
    pub psi_sq: f64,
    /// `E ψ'(ε)`.
    pub psi_prime: f64,
    /// `corr(ε, ψ(ε))`, defined only when `ε` has a finite variance.
    pub driver_corr: Option<f64>,
}

impl LossMoments {
    pub fn new(psi_sq: f64, psi_prime: f64, driver_corr: Option<f64>) -> Result<Self> {
        if !(psi_sq >= 0.0 && psi_prime > 0.0) {
            return Err(Error::domain("need E ψ² >= 0 and E ψ' > 0"));
        }
        if let Some(r) = driver_corr {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::domain("correlation must lie in [-1, 1]"));
            }
        }
        Ok(Self { psi_sq, psi_prime, driver_corr })
    }

    pub fn psi_sd(&self) -> f64 {
        self.psi_sq.sqrt()
    }
}

/// `∫_0^upper f(x) G(x) dx`, split at the kinks of `f` and `G`.
fn against_tail<F: Fn(f64) -> f64>(spec: &InnovationSpec, f: F, upper: f64, kinks: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = kinks.iter().copied().filter(|&k| k > 0.0 && k < upper).collect();
    if spec.family == Family::SymmetricPareto && spec.scale < upper {
        cuts.push(spec.scale);
    }
    cuts.push(0.0);
    cuts.push(upper);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| quad::integrate(|x| f(x) * spec.tail_prob(x), w[0], w[1], 1e-14, 1e-11))
        .sum()
}

/// Upper limit beyond which the Gaussian tail is negligible.
fn gaussian_cutoff(spec: &InnovationSpec) -> f64 {
    40.0 * spec.scale
}

/// Moments are memoized per (loss, innovation law); the quadratures under a
/// stable tail are far costlier than any caller's per-replicate work.
pub fn loss_moments(loss: &Loss, spec: &InnovationSpec) -> Result<LossMoments> {
    static CACHE: OnceLock<Mutex<HashMap<String, LossMoments>>> = OnceLock::new();
    spec.validate()?;
    let key = format!("{loss:?}|{spec:?}");
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.lock().expect("moment cache poisoned").get(&key) {
        return Ok(*m);
    }
    let m = compute_moments(loss, spec)?;
    cache.lock().expect("moment cache poisoned").insert(key, m);
    Ok(m)
}

fn compute_moments(loss: &Loss, spec: &InnovationSpec) -> Result<LossMoments> {
    let finite_var = spec.second_moment();
    let (psi_sq, psi_prime, eps_psi) = match *loss {
        Loss::Quadratic => {
            let v = finite_var
                .ok_or_else(|| Error::domain("quadratic loss needs innovations with finite variance"))?;
            (v, 1.0, Some(v))
        }
        Loss::Huber { c } => {
            let psi_sq = against_tail(spec, |x| 2.0 * x, c, &[]);
            let psi_prime = 1.0 - spec.tail_prob(c);
            let eps_psi = finite_var.map(|_| {
                let g = |x: f64| if x < c { 2.0 * x } else { c };
                against_tail(spec, g, gaussian_cutoff(spec) + c, &[c])
            });
            (psi_sq, psi_prime, eps_psi)
        }
        Loss::SmoothHuber { c, delta } => {
            let kinks = [c - delta, c + delta];
            let upper = c + delta;
            let psi_sq = against_tail(spec, |x| 2.0 * loss.psi(x) * loss.psi_prime(x), upper, &kinks);
            let psi_prime = 1.0 - against_tail(spec, |x| if x > c - delta { 0.5 / delta } else { 0.0 }, upper, &kinks);
            let eps_psi = finite_var.map(|_| {
                against_tail(
                    spec,
                    |x| loss.psi(x) + x * loss.psi_prime(x),
                    gaussian_cutoff(spec) + upper,
                    &kinks,
                )
            });
            (psi_sq, psi_prime, eps_psi)
        }
    };
    let driver_corr = match (eps_psi, finite_var) {
        (Some(e), Some(v)) if psi_sq > 0.0 => Some((e / (v * psi_sq).sqrt()).clamp(-1.0, 1.0)),
        _ => None,
    };
    LossMoments::new(psi_sq, psi_prime, driver_corr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{huber_loss, smooth_huber_loss};
    use crate::stats::normal_cdf;
    use std::f64::consts::PI;

    #[test]
    fn huber_under_gaussian_matches_closed_form() {
        // ε ~ N(0, 1): E ψ² = E[ε²; |ε|≤c] + c² P(|ε|>c) with
        // E[ε²; |ε|≤c] = (2Φ(c)-1) - 2cφ(c), and E[εψ] = E[ε²; |ε|≤c] + 2cφ(c).
        let spec = InnovationSpec::exact_sas(2.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        for c in [0.5f64, 1.345, 3.0] {
            let phi = (-0.5 * c * c).exp() / (2.0 * PI).sqrt();
            let inner = 2.0 * normal_cdf(c) - 1.0;
            let tail = 2.0 * (1.0 - normal_cdf(c));
            let psi_sq = inner - 2.0 * c * phi + c * c * tail;
            let eps_psi = inner - 2.0 * c * phi + c * 2.0 * phi;
            let m = loss_moments(&huber_loss(c).unwrap(), &spec).unwrap();
            assert!((m.psi_sq - psi_sq).abs() < 1e-9, "c {c}: {} vs {psi_sq}", m.psi_sq);
            assert!((m.psi_prime - inner).abs() < 1e-12);
            let corr = eps_psi / psi_sq.sqrt();
            assert!((m.driver_corr.unwrap() - corr).abs() < 1e-9);
        }
    }

    #[test]
    fn huber_under_pareto_closed_form() {
        // G(x) = 1 on [0,1], x^-α beyond: ∫_0^c 2x G = 1 + 2(c^{2-α} - 1)/(2-α)
        let alpha = 1.3;
        let c = 5.0;
        let spec = InnovationSpec::pareto(alpha).unwrap();
        let m = loss_moments(&huber_loss(c).unwrap(), &spec).unwrap();
        let expect = 1.0 + 2.0 * (f64::powf(c, 2.0 - alpha) - 1.0) / (2.0 - alpha);
        assert!((m.psi_sq - expect).abs() < 1e-9);
        assert!((m.psi_prime - (1.0 - c.powf(-alpha))).abs() < 1e-14);
        assert!(m.driver_corr.is_none());
    }

    #[test]
    fn quadratic_needs_finite_variance() {
        let spec = InnovationSpec::exact_sas(1.5, 1.0).unwrap();
        assert!(loss_moments(&Loss::Quadratic, &spec).is_err());
        let g = InnovationSpec::exact_sas(2.0, 1.0).unwrap();
        let m = loss_moments(&Loss::Quadratic, &g).unwrap();
        assert_eq!((m.psi_sq, m.psi_prime, m.driver_corr), (2.0, 1.0, Some(1.0)));
    }

    #[test]
    fn smooth_huber_close_to_huber() {
        let spec = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let h = loss_moments(&huber_loss(2.0).unwrap(), &spec).unwrap();
        let s = loss_moments(&smooth_huber_loss(2.0).unwrap(), &spec).unwrap();
        assert!((h.psi_sq - s.psi_sq).abs() < 1e-2 * h.psi_sq);
        assert!((h.psi_prime - s.psi_prime).abs() < 1e-3);
    }
}
