//! m-out-of-n residual bootstrap for M-estimates of unstable autoregressions.

use rand::Rng;
use rayon::prelude::*;

use crate::ar::{simulate_ar, ArModel};
use crate::error::{Error, Result};
use crate::estimation::{m_estimate, residuals, Loss, MOptions};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::stable::InnovationSpec;
use crate::stats::quantile_sorted;

/// Share of dropped replicates above which a summary is flagged.
pub const DROP_FLAG_SHARE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MRule {
    /// `m = n / ln(ln n)`.
    NOverLogLog,
    /// `m = n^γ` with `γ ∈ (0, 1)`.
    Pow(f64),
}

impl Default for MRule {
    fn default() -> Self {
        MRule::Pow(0.95)
    }
}

impl MRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MRule::Pow(g) if !(g > 0.0 && g < 1.0) => {
                Err(Error::domain(format!("resample exponent must lie in (0, 1), got {g}")))
            }
            _ => Ok(()),
        }
    }

    /// The unrounded rule value.
    pub fn raw(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            MRule::NOverLogLog => nf / nf.ln().ln(),
            MRule::Pow(g) => nf.powf(g),
        }
    }

    /// Rounded rule value, raised to at least `2p + 2` and capped at `n - 1`.
    pub fn m_for(&self, n: usize, p: usize) -> Result<usize> {
        self.validate()?;
        let floor = 2 * p + 2;
        if n < floor + 1 {
            return Err(Error::argument(format!(
                "series length {n} leaves no room for a resample size between {floor} and n - 1"
            )));
        }
        let raw = self.raw(n);
        let m = if raw.is_finite() && raw > 0.0 { raw.round() as usize } else { n - 1 };
        Ok(m.clamp(floor, n - 1))
    }

    pub fn label(&self) -> String {
        match *self {
            MRule::NOverLogLog => "n/lnln(n)".into(),
            MRule::Pow(g) => format!("n^{g}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub m_rule: MRule,
    pub replicates: usize,
    pub level: f64,
    pub loss: Loss,
    pub solver: MOptions,
}

impl BootstrapConfig {
    pub fn new(m_rule: MRule, replicates: usize, level: f64, loss: Loss) -> Result<Self> {
        let cfg = Self { m_rule, replicates, level, loss, solver: MOptions::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.m_rule.validate()?;
        if self.replicates < 100 {
            return Err(Error::argument(format!("need at least 100 bootstrap replicates, got {}", self.replicates)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::domain(format!("confidence level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

/// Empirical distribution of centered residuals `e_i - ē`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualEdf {
    pub centered: Vec<f64>,
}

impl ResidualEdf {
    pub fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        (0..k).map(|_| self.centered[rng.random_range(0..self.centered.len())]).collect()
    }

    /// All residuals vanish at rounding level relative to `scale`.
    pub fn is_degenerate(&self, scale: f64) -> bool {
        let tol = 1e-12 * scale.max(1.0);
        self.centered.iter().all(|e| e.abs() <= tol)
    }
}

pub fn centered_residual_edf(residuals: &[f64]) -> Result<ResidualEdf> {
    if residuals.is_empty() {
        return Err(Error::argument("no residuals to resample"));
    }
    if residuals.iter().any(|e| !e.is_finite()) {
        return Err(Error::argument("residuals contain non-finite values"));
    }
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok(ResidualEdf { centered: residuals.iter().map(|e| e - mean).collect() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// Successful replicate estimates, one row per replicate.
    pub estimates: Vec<Vec<f64>>,
    /// Percentile interval for each coefficient.
    pub interval: Vec<(f64, f64)>,
    pub level: f64,
    pub m_used: usize,
    pub center: Vec<f64>,
    pub requested: usize,
    pub dropped: usize,
    /// More than [`DROP_FLAG_SHARE`] of the replicates were dropped.
    pub flagged: bool,
}

impl BootstrapSummary {
    /// Percentile interval at another level from the same replicates.
    pub fn interval_at(&self, level: f64) -> Result<Vec<(f64, f64)>> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
        }
        percentile_intervals(&self.estimates, self.center.len(), level)
    }

    /// `coefficient,lower,upper,center,m,B` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coefficient,lower,upper,center,m,B\n");
        for (i, ((lo, hi), c)) in self.interval.iter().zip(&self.center).enumerate() {
            out.push_str(&format!("{},{lo},{hi},{c},{},{}\n", i + 1, self.m_used, self.estimates.len()));
        }
        out
    }
}

fn percentile_intervals(estimates: &[Vec<f64>], p: usize, level: f64) -> Result<Vec<(f64, f64)>> {
    if estimates.is_empty() {
        return Err(Error::estimation("every bootstrap replicate failed"));
    }
    let tail = 0.5 * (1.0 - level);
    Ok((0..p)
        .map(|i| {
            let mut col: Vec<f64> = estimates.iter().map(|row| row[i]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, tail), quantile_sorted(&col, 1.0 - tail))
        })
        .collect())
}

/// Resamples centered residuals of the fit `phi_hat` to `x`, rebuilds series
/// of length `m` (including `p` zero pre-sample values) from the fitted
/// recursion, and re-estimates each one.
///
/// When the residuals vanish to rounding the resampling law is a point mass
/// and each replicate reproduces `phi_hat`.
pub fn bootstrap_replicates<R: Rng + ?Sized>(
    x: &[f64],
    phi_hat: &[f64],
    config: &BootstrapConfig,
    rng: &mut R,
) -> Result<BootstrapSummary> {
    config.validate()?;
    let p = phi_hat.len();
    let m = config.m_rule.m_for(x.len(), p)?;
    let edf = centered_residual_edf(&residuals(x, phi_hat)?)?;
    let model = ArModel::new(phi_hat.to_vec())?;
    let base: u64 = rng.random();

    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let outcomes: Vec<Option<Vec<f64>>> = if edf.is_degenerate(scale) {
        vec![Some(phi_hat.to_vec()); config.replicates]
    } else {
        (0..config.replicates)
            .into_par_iter()
            .map(|b| {
                let mut r = stream(base, b as u64);
                let eps = edf.draw(m - p, &mut r);
                let series = simulate_ar(&model, &eps, None).ok()?.full();
                let fit = m_estimate(&series, p, &config.loss, &config.solver).ok()?;
                fit.converged.then_some(fit.phi_hat)
            })
            .collect()
    };
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    let estimates: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let interval = percentile_intervals(&estimates, p, config.level)?;
    Ok(BootstrapSummary {
        estimates,
        interval,
        level: config.level,
        m_used: m,
        center: phi_hat.to_vec(),
        requested: config.replicates,
        dropped,
        flagged: dropped as f64 > DROP_FLAG_SHARE * config.replicates as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    /// Share of intervals that contain the true coefficient.
    pub coverage: f64,
    pub covered: usize,
    /// Outer replicates that produced an interval.
    pub completed: usize,
    /// Outer replicates whose original fit or bootstrap failed.
    pub failed: usize,
    /// Completed replicates whose bootstrap summary was flagged.
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageExperiment {
    pub model: ArModel,
    pub innovations: InnovationSpec,
    /// Total series length, including the pre-sample values.
    pub n: usize,
    /// Index (0-based) of the coefficient whose interval is checked.
    pub coefficient: usize,
    pub warm_start: Option<Vec<f64>>,
}

/// Repeats simulate → fit → bootstrap → interval `outer_reps` times; outer
/// replicate `i` draws from `stream(seed, i)`.
pub fn coverage_experiment(
    exp: &CoverageExperiment,
    config: &BootstrapConfig,
    outer_reps: usize,
    seed: u64,
) -> Result<CoverageResult> {
    coverage_with(exp, config, outer_reps, seed, |rng, k| exp.innovations.sample(k, rng))
}

/// [`coverage_experiment`] with a custom innovation source.
pub(crate) fn coverage_with<F>(
    exp: &CoverageExperiment,
    config: &BootstrapConfig,
    outer_reps: usize,
    seed: u64,
    draw: F,
) -> Result<CoverageResult>
where
    F: Fn(&mut StreamRng, usize) -> Result<Vec<f64>> + Sync,
{
    config.validate()?;
    let p = exp.model.order();
    if exp.coefficient >= p {
        return Err(Error::argument("coefficient index exceeds the model order"));
    }
    if outer_reps == 0 {
        return Err(Error::argument("need at least one outer replicate"));
    }
    config.m_rule.m_for(exp.n, p)?;
    let truth = exp.model.phi[exp.coefficient];
    let cell = derive_seed(seed, &[exp.n as u64, exp.innovations.alpha.to_bits()]);

    let outcomes: Vec<Option<(bool, bool)>> = (0..outer_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cell, i as u64);
            let eps = draw(&mut rng, exp.n - p).ok()?;
            let x = simulate_ar(&exp.model, &eps, exp.warm_start.as_deref()).ok()?.full();
            let fit = m_estimate(&x, p, &config.loss, &config.solver).ok()?;
            let summary = bootstrap_replicates(&x, &fit.phi_hat, config, &mut rng).ok()?;
            let (lo, hi) = summary.interval[exp.coefficient];
            let slack = 1e-12 * (1.0 + truth.abs());
            Some((lo - slack <= truth && truth <= hi + slack, summary.flagged))
        })
        .collect();
    let completed: Vec<(bool, bool)> = outcomes.iter().flatten().copied().collect();
    let covered = completed.iter().filter(|c| c.0).count();
    Ok(CoverageResult {
        coverage: if completed.is_empty() { f64::NAN } else { covered as f64 / completed.len() as f64 },
        covered,
        completed: completed.len(),
        failed: outer_reps - completed.len(),
        flagged: completed.iter().filter(|c| c.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::{expand_polynomial, simulate_observed, RootSpec};
    use crate::asymptotics::loss_moments;
    use crate::estimation::huber_loss;
    use crate::stats::{mean, variance};
    use std::f64::consts::PI;

    fn model123() -> ArModel {
        expand_polynomial(&RootSpec::new(0, 0, vec![(PI / 4.0, 1)]).unwrap()).unwrap()
    }

    fn cfg(b: usize) -> BootstrapConfig {
        BootstrapConfig::new(MRule::Pow(0.95), b, 0.95, huber_loss(5.0).unwrap()).unwrap()
    }

    #[test]
    fn m_rules() {
        assert_eq!(MRule::Pow(0.95).m_for(100, 2).unwrap(), 79);
        assert_eq!(MRule::Pow(0.9).m_for(50, 2).unwrap(), 34);
        assert_eq!(MRule::NOverLogLog.m_for(100, 2).unwrap(), 65);
        // n / ln ln n exceeds n below e^e and is capped
        assert_eq!(MRule::NOverLogLog.m_for(12, 2).unwrap(), 11);
        assert_eq!(MRule::Pow(0.5).m_for(20, 2).unwrap(), 6);
        assert!(MRule::Pow(0.95).m_for(6, 2).is_err());
        assert!(MRule::Pow(1.0).validate().is_err());
        for n in 3..2000 {
            assert!(MRule::NOverLogLog.m_for(n, 0).map_or(true, |m| m < n));
        }
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(MRule::default(), 99, 0.95, Loss::Quadratic).is_err());
        assert!(BootstrapConfig::new(MRule::default(), 100, 1.0, Loss::Quadratic).is_err());
    }

    #[test]
    fn edf_examples() {
        let e = centered_residual_edf(&[1.0, -1.0]).unwrap();
        assert_eq!(e.centered, vec![1.0, -1.0]);
        let e = centered_residual_edf(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(e.centered, vec![-2.0, 0.0, 2.0]);
        let draws = e.draw(100_000, &mut stream(1, 0));
        assert!(draws.iter().all(|d| [-2.0, 0.0, 2.0].contains(d)));
        let se = (variance(&draws) / draws.len() as f64).sqrt();
        assert!(mean(&draws).abs() < 3.0 * se);
        assert!(centered_residual_edf(&[]).is_err());
    }

    #[test]
    fn perfect_fit_gives_zero_width() {
        let m = model123();
        let x = simulate_ar(&m, &[0.0; 40], Some(&[1.0, 0.5])).unwrap().full();
        let fit = m_estimate(&x, 2, &huber_loss(5.0).unwrap(), &MOptions::default()).unwrap();
        let s = bootstrap_replicates(&x, &fit.phi_hat, &cfg(100), &mut stream(2, 0)).unwrap();
        for (i, (lo, hi)) in s.interval.iter().enumerate() {
            assert_eq!(lo, hi);
            assert_eq!(*lo, fit.phi_hat[i]);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let m = model123();
        let inn = InnovationSpec::exact_sas(1.7, 1.0).unwrap();
        let x = simulate_observed(&m, &inn, 60, None, &mut stream(3, 0)).unwrap();
        let fit = m_estimate(&x, 2, &huber_loss(5.0).unwrap(), &MOptions::default()).unwrap();
        let a = bootstrap_replicates(&x, &fit.phi_hat, &cfg(100), &mut stream(4, 0)).unwrap();
        let b = bootstrap_replicates(&x, &fit.phi_hat, &cfg(100), &mut stream(4, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimates.len() + a.dropped, 100);
        assert!(a.to_csv().starts_with("coefficient,lower,upper,center,m,B\n1,"));
    }

    #[test]
    fn intervals_nest_and_ignore_order() {
        let m = model123();
        let inn = InnovationSpec::exact_sas(1.3, 1.0).unwrap();
        let x = simulate_observed(&m, &inn, 80, None, &mut stream(5, 0)).unwrap();
        let fit = m_estimate(&x, 2, &huber_loss(5.0).unwrap(), &MOptions::default()).unwrap();
        let mut s = bootstrap_replicates(&x, &fit.phi_hat, &cfg(200), &mut stream(6, 0)).unwrap();
        let narrow = s.interval_at(0.90).unwrap();
        let wide = s.interval_at(0.99).unwrap();
        for (n, w) in narrow.iter().zip(&wide) {
            assert!(w.0 <= n.0 && n.1 <= w.1 && n.0 <= n.1);
        }
        let before = s.interval_at(0.95).unwrap();
        s.estimates.reverse();
        assert_eq!(before, s.interval_at(0.95).unwrap());
    }

    #[test]
    fn resampled_scores_are_centered() {
        let m = model123();
        let inn = InnovationSpec::exact_sas(1.7, 1.0).unwrap();
        let loss = huber_loss(5.0).unwrap();
        let x = simulate_observed(&m, &inn, 2000, None, &mut stream(7, 0)).unwrap();
        let fit = m_estimate(&x, 2, &loss, &MOptions::default()).unwrap();
        let edf = centered_residual_edf(&fit.residuals).unwrap();
        // the resampling law's own score mean is within sampling error of zero
        let exact: Vec<f64> = edf.centered.iter().map(|&e| loss.psi(e)).collect();
        assert!(mean(&exact).abs() < 3.0 * (variance(&exact) / exact.len() as f64).sqrt());
        // and the draws reproduce it
        let psi: Vec<f64> = edf.draw(100_000, &mut stream(8, 0)).iter().map(|&e| loss.psi(e)).collect();
        let se = (variance(&psi) / psi.len() as f64).sqrt();
        assert!((mean(&psi) - mean(&exact)).abs() < 3.0 * se);
    }

    #[test]
    fn plug_in_psi_variance_is_consistent() {
        let m = model123();
        let inn = InnovationSpec::exact_sas(2.0, 1.0).unwrap();
        let loss = huber_loss(1.0).unwrap();
        let x = simulate_observed(&m, &inn, 8000, None, &mut stream(9, 0)).unwrap();
        let fit = m_estimate(&x, 2, &loss, &MOptions::default()).unwrap();
        let plug: f64 = fit.residuals.iter().map(|&e| loss.psi(e).powi(2)).sum::<f64>() / fit.residuals.len() as f64;
        let target = loss_moments(&loss, &inn).unwrap().psi_sq;
        assert!((plug / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn coverage_edge_cases() {
        let m = model123();
        let inn = InnovationSpec::exact_sas(1.7, 1.0).unwrap();
        let exp = CoverageExperiment { model: m.clone(), innovations: inn, n: 50, coefficient: 0, warm_start: None };
        let one = coverage_experiment(&exp, &cfg(100), 1, 11).unwrap();
        assert!(one.coverage == 0.0 || one.coverage == 1.0);
        assert_eq!(coverage_experiment(&exp, &cfg(100), 4, 3).unwrap(), coverage_experiment(&exp, &cfg(100), 4, 3).unwrap());
    }

    #[test]
    fn zero_noise_covers_everything() {
        let exp = CoverageExperiment {
            model: model123(),
            innovations: InnovationSpec::exact_sas(2.0, 1.0).unwrap(),
            n: 40,
            coefficient: 0,
            warm_start: Some(vec![1.0, 0.5]),
        };
        let r = coverage_with(&exp, &cfg(100), 5, 1, |_, k| Ok(vec![0.0; k])).unwrap();
        assert_eq!(r.coverage, 1.0);
    }
}
