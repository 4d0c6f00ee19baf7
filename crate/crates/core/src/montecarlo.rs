//! Monte Carlo tables of estimation error over an (n, α, estimator) grid.

use rand::Rng;
use rayon::prelude::*;

use crate::ar::{simulate_observed, ArModel};
use crate::error::{Error, Result};
use crate::estimation::{ls_estimate, m_estimate, Loss, MOptions};
use crate::rng::{derive_seed, stream};
use crate::stable::{Family, InnovationSpec};
use crate::stats::{ipr90, median, quantile_sorted, sorted};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    LeastSquares,
    M(Loss),
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::LeastSquares => "LS".to_string(),
            Estimator::M(loss) => format!("M-{}", loss.name()),
        }
    }

    /// Stable identifier mixed into the cell seed.
    fn id(&self) -> u64 {
        match self {
            Estimator::LeastSquares => 0,
            Estimator::M(Loss::Quadratic) => 1,
            Estimator::M(Loss::Huber { c }) => derive_seed(2, &[c.to_bits()]),
            Estimator::M(Loss::SmoothHuber { c, delta }) => derive_seed(3, &[c.to_bits(), delta.to_bits()]),
        }
    }

    pub fn fit(&self, x: &[f64], p: usize, opts: &MOptions) -> Result<Vec<f64>> {
        match self {
            Estimator::LeastSquares => Ok(ls_estimate(x, p)?.phi_hat),
            Estimator::M(loss) => {
                let fit = m_estimate(x, p, loss, opts)?;
                if !fit.converged {
                    return Err(Error::estimation(format!(
                        "no convergence after {} iterations (gradient {:e})",
                        fit.iterations, fit.gradient_norm
                    )));
                }
                Ok(fit.phi_hat)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub model: ArModel,
    pub family: Family,
    pub scale: f64,
    /// Total series lengths, pre-sample values included.
    pub ns: Vec<usize>,
    pub alphas: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub replicates: usize,
    /// 0-based index of the coefficient whose error is summarized.
    pub coefficient: usize,
    pub seed: u64,
    pub solver: MOptions,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.model.order();
        if self.replicates == 0 {
            return Err(Error::argument("replicates must be at least 1"));
        }
        if self.coefficient >= p {
            return Err(Error::argument("coefficient index exceeds the model order"));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n < 2 * p + 2) {
            return Err(Error::argument(format!("n = {n} is below 2p + 2 = {}", 2 * p + 2)));
        }
        if self.ns.is_empty() || self.alphas.is_empty() || self.estimators.is_empty() {
            return Err(Error::argument("the n, alpha and estimator lists must be non-empty"));
        }
        for &a in &self.alphas {
            InnovationSpec::new(a, self.family, self.scale)?;
        }
        Ok(())
    }

    /// Seed of the stream family for one grid cell.
    pub fn cell_seed(&self, n: usize, alpha: f64, estimator: &Estimator) -> u64 {
        derive_seed(self.seed, &[n as u64, alpha.to_bits(), estimator.id()])
    }
}

/// One grid cell: absolute errors of the tracked coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub alpha: f64,
    pub estimator: String,
    /// `|φ̂ − φ|` for every replicate that produced an estimate, in replicate order.
    pub errors: Vec<f64>,
    pub failed: usize,
    /// First failure message, if any.
    pub first_failure: Option<String>,
}

impl CellResult {
    pub fn median(&self) -> f64 {
        median(&self.errors)
    }

    pub fn ipr90(&self) -> f64 {
        ipr90(&self.errors)
    }

    /// Central `level` band for the median of `k` draws resampled from this
    /// cell's errors.
    pub fn median_band<R: Rng + ?Sized>(&self, k: usize, resamples: usize, level: f64, rng: &mut R) -> Result<(f64, f64)> {
        if self.errors.is_empty() || k == 0 || resamples == 0 {
            return Err(Error::argument("median band needs errors, k >= 1 and resamples >= 1"));
        }
        let meds: Vec<f64> = (0..resamples)
            .map(|_| {
                let draw: Vec<f64> = (0..k).map(|_| self.errors[rng.random_range(0..self.errors.len())]).collect();
                median(&draw)
            })
            .collect();
        let s = sorted(&meds);
        let tail = 0.5 * (1.0 - level);
        Ok((quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    /// Cells ordered by n, then α, then estimator, as listed in the config.
    pub cells: Vec<CellResult>,
}

impl SummaryTable {
    pub fn get(&self, n: usize, alpha: f64, estimator: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.n == n && c.alpha == alpha && c.estimator == estimator)
    }

    /// `n,alpha,estimator,median,ipr90,completed` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,alpha,estimator,median,ipr90,completed\n");
        for c in &self.cells {
            let (med, ipr) = if c.errors.is_empty() { (f64::NAN, f64::NAN) } else { (c.median(), c.ipr90()) };
            out.push_str(&format!("{},{},{},{med},{ipr},{}\n", c.n, c.alpha, c.estimator, c.errors.len()));
        }
        out
    }

    /// `n,alpha,estimator,failed,requested,first_error` rows.
    pub fn failures_csv(&self) -> String {
        let mut out = String::from("n,alpha,estimator,failed,requested,first_error\n");
        for c in &self.cells {
            let msg = c.first_failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
            out.push_str(&format!(
                "{},{},{},{},{},{msg}\n",
                c.n,
                c.alpha,
                c.estimator,
                c.failed,
                c.failed + c.errors.len()
            ));
        }
        out
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.failed).sum()
    }
}

/// Runs every cell; replicate `r` of a cell draws from
/// `stream(cell_seed, r)`, so the table does not depend on thread count.
pub fn run_table(config: &McConfig) -> Result<SummaryTable> {
    config.validate()?;
    let mut cells = Vec::new();
    for &n in &config.ns {
        for &alpha in &config.alphas {
            for est in &config.estimators {
                cells.push(run_cell(config, n, alpha, est)?);
            }
        }
    }
    Ok(SummaryTable { cells })
}

pub fn run_cell(config: &McConfig, n: usize, alpha: f64, estimator: &Estimator) -> Result<CellResult> {
    let spec = InnovationSpec::new(alpha, config.family, config.scale)?;
    let p = config.model.order();
    let truth = config.model.phi[config.coefficient];
    let seed = config.cell_seed(n, alpha, estimator);
    let outcomes: Vec<std::result::Result<f64, String>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            let x = simulate_observed(&config.model, &spec, n, None, &mut rng).map_err(|e| e.to_string())?;
            let phi = estimator.fit(&x, p, &config.solver).map_err(|e| e.to_string())?;
            Ok((phi[config.coefficient] - truth).abs())
        })
        .collect();
    let mut errors = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    let mut first_failure = None;
    for o in outcomes {
        match o {
            Ok(e) => errors.push(e),
            Err(msg) => {
                failed += 1;
                first_failure.get_or_insert(msg);
            }
        }
    }
    Ok(CellResult { n, alpha, estimator: estimator.label(), errors, failed, first_failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::{expand_polynomial, RootSpec};
    use crate::estimation::huber_loss;
    use std::f64::consts::PI;

    fn config(replicates: usize) -> McConfig {
        McConfig {
            model: expand_polynomial(&RootSpec::new(0, 0, vec![(PI / 4.0, 1)]).unwrap()).unwrap(),
            family: Family::ExactSas,
            scale: 1.0,
            ns: vec![10, 50],
            alphas: vec![1.3, 2.0],
            estimators: vec![Estimator::M(huber_loss(5.0).unwrap()), Estimator::LeastSquares],
            replicates,
            coefficient: 0,
            seed: 11,
            solver: MOptions::default(),
        }
    }

    #[test]
    fn table_shape_and_ipr_sign() {
        let t = run_table(&config(50)).unwrap();
        assert_eq!(t.cells.len(), 2 * 2 * 2);
        assert_eq!(t.cells[0].n, 10);
        assert_eq!(t.cells[1].estimator, "LS");
        for c in &t.cells {
            assert!(c.ipr90() >= 0.0);
            assert_eq!(c.errors.len() + c.failed, 50);
        }
        assert_eq!(t.to_csv().lines().count(), 9);
        assert_eq!(t.failures_csv().lines().count(), 9);
    }

    #[test]
    fn single_replicate_gives_zero_ipr() {
        let t = run_table(&config(1)).unwrap();
        for c in &t.cells {
            assert_eq!(c.errors.len(), 1);
            assert_eq!(c.ipr90(), 0.0);
            assert_eq!(c.median(), c.errors[0]);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let cfg = config(40);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_table(&cfg).unwrap());
        let b = four.install(|| run_table(&cfg).unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn cells_have_distinct_streams() {
        let cfg = config(1);
        let m = Estimator::M(huber_loss(5.0).unwrap());
        let seeds = [
            cfg.cell_seed(10, 1.3, &m),
            cfg.cell_seed(10, 1.3, &Estimator::LeastSquares),
            cfg.cell_seed(50, 1.3, &m),
            cfg.cell_seed(10, 2.0, &m),
        ];
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }

    #[test]
    fn scaled_down_median_inside_band_of_full_run() {
        let mut cfg = config(2000);
        cfg.ns = vec![50];
        cfg.alphas = vec![1.3];
        cfg.estimators = vec![Estimator::M(huber_loss(5.0).unwrap())];
        let full = run_table(&cfg).unwrap();
        cfg.replicates = 200;
        cfg.seed = 12;
        let small = run_table(&cfg).unwrap();
        let band = full.cells[0].median_band(200, 2000, 0.99, &mut stream(1, 0)).unwrap();
        let m = small.cells[0].median();
        assert!(band.0 <= m && m <= band.1, "{m} outside {band:?}");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = config(0);
        assert!(run_table(&cfg).is_err());
        cfg.replicates = 1;
        cfg.ns = vec![5];
        assert!(run_table(&cfg).is_err());
        cfg.ns = vec![10];
        cfg.coefficient = 2;
        assert!(run_table(&cfg).is_err());
        cfg.coefficient = 0;
        cfg.alphas = vec![2.5];
        assert!(run_table(&cfg).is_err());
    }
}
