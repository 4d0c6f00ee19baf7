//! Least-squares and M-estimation of autoregressive coefficients.
//!
//! All estimators take the observed series `x_1, …, x_n` and regress `x_t` on
//! `(x_{t-1}, …, x_{t-p})` for `t = p+1..n`, conditioning on the first `p`
//! observations. There is no intercept.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// `ρ(x) = x²/2`.
    Quadratic,
    /// Quadratic on `[-c, c]`, linear beyond.
    Huber { c: f64 },
    /// Huber with `ψ'` ramped linearly from 1 to 0 over `[c-δ, c+δ]`, so `ψ'`
    /// is Lipschitz with constant `1/(2δ)`.
    SmoothHuber { c: f64, delta: f64 },
}

pub fn huber_loss(c: f64) -> Result<Loss> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("Huber threshold must be positive, got {c}")));
    }
    Ok(Loss::Huber { c })
}

/// Smoothed Huber loss with ramp half-width `δ = c/100`.
pub fn smooth_huber_loss(c: f64) -> Result<Loss> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("Huber threshold must be positive, got {c}")));
    }
    Ok(Loss::SmoothHuber { c, delta: 0.01 * c })
}

impl Loss {
    pub fn name(&self) -> String {
        match self {
            Loss::Quadratic => "quadratic".into(),
            Loss::Huber { c } => format!("huber(c={c})"),
            Loss::SmoothHuber { c, delta } => format!("smooth-huber(c={c},delta={delta})"),
        }
    }

    /// Lipschitz constant of `ψ'`, when it has one.
    pub fn lipschitz_k(&self) -> Option<f64> {
        match *self {
            Loss::Quadratic => Some(0.0),
            Loss::Huber { .. } => None,
            Loss::SmoothHuber { delta, .. } => Some(0.5 / delta),
        }
    }

    pub fn rho(&self, x: f64) -> f64 {
        match *self {
            Loss::Quadratic => 0.5 * x * x,
            Loss::Huber { c } => {
                let a = x.abs();
                if a <= c {
                    0.5 * x * x
                } else {
                    c * a - 0.5 * c * c
                }
            }
            Loss::SmoothHuber { c, delta } => {
                let a = x.abs();
                let lo = c - delta;
                if a <= lo {
                    0.5 * x * x
                } else if a < c + delta {
                    let s = a - lo;
                    0.5 * lo * lo + lo * s + 0.5 * s * s - s * s * s / (12.0 * delta)
                } else {
                    let at_edge = 0.5 * lo * lo + 2.0 * c * delta - 2.0 * delta * delta / 3.0;
                    at_edge + c * (a - c - delta)
                }
            }
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        match *self {
            Loss::Quadratic => x,
            Loss::Huber { c } => x.clamp(-c, c),
            Loss::SmoothHuber { c, delta } => {
                let a = x.abs();
                let lo = c - delta;
                let v = if a <= lo {
                    a
                } else if a < c + delta {
                    let s = a - lo;
                    lo + s - s * s / (4.0 * delta)
                } else {
                    c
                };
                v.copysign(x)
            }
        }
    }

    /// Derivative of `ψ`; at Huber's kinks the inner value is used.
    pub fn psi_prime(&self, x: f64) -> f64 {
        match *self {
            Loss::Quadratic => 1.0,
            Loss::Huber { c } => {
                if x.abs() <= c {
                    1.0
                } else {
                    0.0
                }
            }
            Loss::SmoothHuber { c, delta } => {
                let a = x.abs();
                if a <= c - delta {
                    1.0
                } else if a < c + delta {
                    1.0 - (a - c + delta) / (2.0 * delta)
                } else {
                    0.0
                }
            }
        }
    }

    /// `ρ(x + h) - ρ(x)`, evaluated without cancellation on the quadratic
    /// and linear pieces.
    fn rho_change(&self, x: f64, h: f64) -> f64 {
        let y = x + h;
        match *self {
            Loss::Quadratic => h * (x + 0.5 * h),
            Loss::Huber { c } if x.abs() <= c && y.abs() <= c => h * (x + 0.5 * h),
            Loss::Huber { c } if x.abs() > c && y.abs() > c && x.signum() == y.signum() => c * h * x.signum(),
            _ => self.rho(y) - self.rho(x),
        }
    }

    /// IRLS weight `ψ(x)/x`, with `ψ'(0)` at the origin.
    fn weight(&self, x: f64) -> f64 {
        if x == 0.0 {
            self.psi_prime(0.0)
        } else {
            self.psi(x) / x
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Iteratively reweighted least squares.
    Irls,
    /// Damped Newton with backtracking.
    Newton,
    /// Takes whichever of the two gives the lower objective at each step.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub solver: Solver,
}

impl Default for MOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, solver: Solver::Auto }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub phi_hat: Vec<f64>,
    pub residuals: Vec<f64>,
    pub objective: f64,
    /// `max_i |Σ ψ(e_t) x_{t-i}|` at the returned coefficients.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted iterate, starting from the initial value.
    pub objective_trace: Vec<f64>,
}

impl EstimationResult {
    /// `key = value` lines.
    pub fn to_key_value(&self) -> String {
        let phi: Vec<String> = self.phi_hat.iter().map(|v| format!("{v}")).collect();
        format!(
            "phi_hat = {}\nobjective = {}\ngradient_norm = {}\niterations = {}\nconverged = {}\n",
            phi.join(","),
            self.objective,
            self.gradient_norm,
            self.iterations,
            self.converged
        )
    }

    /// `index,estimate` rows with 1-based lag index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,estimate\n");
        for (i, v) in self.phi_hat.iter().enumerate() {
            out.push_str(&format!("{},{v}\n", i + 1));
        }
        out
    }
}

/// Regression data: responses `x_t` and lag rows for `t = p+1..n`.
struct Design<'a> {
    x: &'a [f64],
    p: usize,
}

impl<'a> Design<'a> {
    fn new(x: &'a [f64], p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::argument("order p must be at least 1"));
        }
        if x.len() <= 2 * p {
            return Err(Error::argument(format!("series length {} must exceed 2p = {}", x.len(), 2 * p)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("series contains non-finite values"));
        }
        Ok(Self { x, p })
    }

    fn rows(&self) -> usize {
        self.x.len() - self.p
    }

    fn response(&self, row: usize) -> f64 {
        self.x[row + self.p]
    }

    /// Lag `i` (1-based) of row `row`.
    fn lag(&self, row: usize, i: usize) -> f64 {
        self.x[row + self.p - i]
    }

    fn residual(&self, row: usize, beta: &[f64]) -> f64 {
        self.response(row) - (1..=self.p).map(|i| beta[i - 1] * self.lag(row, i)).sum::<f64>()
    }

    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.rows()).map(|r| self.residual(r, beta)).collect()
    }

    fn objective(&self, loss: &Loss, beta: &[f64]) -> f64 {
        (0..self.rows()).map(|r| loss.rho(self.residual(r, beta))).sum()
    }

    /// Objective at `next` minus objective at `beta`, summed term by term so
    /// that decreases far below the rounding level of the total still show.
    fn objective_change(&self, loss: &Loss, beta: &[f64], next: &[f64]) -> f64 {
        let delta: Vec<f64> = next.iter().zip(beta).map(|(a, b)| a - b).collect();
        (0..self.rows())
            .map(|r| {
                let h = -(1..=self.p).map(|i| delta[i - 1] * self.lag(r, i)).sum::<f64>();
                loss.rho_change(self.residual(r, beta), h)
            })
            .sum()
    }

    fn lag_sup(&self, row: usize) -> f64 {
        (1..=self.p).map(|i| self.lag(row, i).abs()).fold(0.0, f64::max)
    }

    /// Weighted normal equations `Σ w_t z_t z_tᵀ` and `Σ w_t z_t a_t`.
    fn weighted<F: Fn(usize) -> (f64, f64)>(&self, f: F) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.p;
        let mut m = DMatrix::zeros(p, p);
        let mut v = DVector::zeros(p);
        for r in 0..self.rows() {
            let (w, a) = f(r);
            if w == 0.0 && a == 0.0 {
                continue;
            }
            for i in 0..p {
                let zi = self.lag(r, i + 1);
                v[i] += zi * a;
                for j in 0..=i {
                    m[(i, j)] += w * zi * self.lag(r, j + 1);
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        (m, v)
    }
}

/// `ε̂_t = x_t - Σ φ̂_i x_{t-i}` for `t = p+1..n`.
pub fn residuals(x: &[f64], phi_hat: &[f64]) -> Result<Vec<f64>> {
    let d = Design::new(x, phi_hat.len())?;
    Ok(d.residuals(phi_hat))
}

/// `Σ ρ(e_t)` and its gradient `-Σ ψ(e_t) (x_{t-1}, …, x_{t-p})`.
pub fn objective_and_gradient(x: &[f64], p: usize, loss: &Loss, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
    if beta.len() != p {
        return Err(Error::argument("beta length differs from p"));
    }
    let d = Design::new(x, p)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    for r in 0..d.rows() {
        let e = d.residual(r, beta);
        value += loss.rho(e);
        let s = loss.psi(e);
        for (i, g) in grad.iter_mut().enumerate() {
            *g -= s * d.lag(r, i + 1);
        }
    }
    Ok((value, grad))
}

/// Ordinary least squares through a Householder QR factorization.
pub fn ls_estimate(x: &[f64], p: usize) -> Result<EstimationResult> {
    let d = Design::new(x, p)?;
    let beta = ls_solve(&d)?;
    Ok(finish(&d, &Loss::Quadratic, beta, 0, true, Vec::new()))
}

fn ls_solve(d: &Design) -> Result<Vec<f64>> {
    let n = d.rows();
    let p = d.p;
    let z = DMatrix::from_fn(n, p, |r, c| d.lag(r, c + 1));
    let y = DVector::from_fn(n, |r, _| d.response(r));
    let qr = z.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 {
        return Err(Error::estimation("all lagged regressors are zero"));
    }
    if (0..p).any(|i| r[(i, i)].abs() < 1e-12 * max_diag) {
        return Err(Error::estimation("lagged design matrix is rank deficient"));
    }
    let qty = qr.q().transpose() * y;
    let sol = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::estimation("triangular solve failed"))?;
    Ok(sol.iter().copied().collect())
}

fn finish(
    d: &Design,
    loss: &Loss,
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
) -> EstimationResult {
    let residuals = d.residuals(&beta);
    let objective = residuals.iter().map(|&e| loss.rho(e)).sum();
    let gradient_norm = score_sup(d, loss, &residuals).0;
    EstimationResult { phi_hat: beta, residuals, objective, gradient_norm, iterations, converged, objective_trace }
}

/// `max_i |Σ ψ(e_t) x_{t-i}|` and the scale `1 + Σ |ψ(e_t)| max_i |x_{t-i}|`.
fn score_sup(d: &Design, loss: &Loss, residuals: &[f64]) -> (f64, f64) {
    let mut g = vec![0.0; d.p];
    let mut scale = 1.0;
    for (r, &e) in residuals.iter().enumerate() {
        let s = loss.psi(e);
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += s * d.lag(r, i + 1);
        }
        scale += s.abs() * d.lag_sup(r);
    }
    (g.iter().map(|v| v.abs()).fold(0.0, f64::max), scale)
}

/// Size of the score error caused by rounding each residual to one ulp of
/// the terms it is computed from. Scores below this are indistinguishable
/// from zero, which matters when one lag is many orders above the others.
fn rounding_floor(d: &Design, loss: &Loss, beta: &[f64], residuals: &[f64]) -> f64 {
    let mut floor = 0.0;
    for (r, &e) in residuals.iter().enumerate() {
        let terms = d.response(r).abs() + (0..d.p).map(|i| (beta[i] * d.lag(r, i + 1)).abs()).sum::<f64>();
        floor += loss.psi_prime(e).abs() * terms * d.lag_sup(r);
    }
    8.0 * f64::EPSILON * floor
}

fn solve_spd(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<Vec<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        let s = ch.solve(v);
        if s.iter().all(|x| x.is_finite()) {
            return Some(s.iter().copied().collect());
        }
    }
    let s = m.clone().lu().solve(v)?;
    s.iter().all(|x| x.is_finite()).then(|| s.iter().copied().collect())
}

/// One IRLS update: weighted least squares with weights `ψ(e)/e`.
fn irls_candidate(d: &Design, loss: &Loss, beta: &[f64]) -> Option<Vec<f64>> {
    let (m, v) = d.weighted(|r| {
        let w = loss.weight(d.residual(r, beta));
        (w, w * d.response(r))
    });
    solve_spd(&m, &v)
}

/// Damped Newton step with Levenberg regularization and backtracking.
fn newton_candidate(d: &Design, loss: &Loss, beta: &[f64]) -> Option<Vec<f64>> {
    let (h, g) = d.weighted(|r| {
        let e = d.residual(r, beta);
        (loss.psi_prime(e), loss.psi(e))
    });
    // g holds Σ ψ z = -gradient, so the Newton direction solves H δ = g.
    let trace = h.trace().abs().max(f64::MIN_POSITIVE);
    let mut lambda = 0.0;
    for _ in 0..12 {
        let mut hl = h.clone();
        for i in 0..d.p {
            hl[(i, i)] += lambda;
        }
        if let Some(step) = solve_spd(&hl, &g) {
            let mut t = 1.0;
            for _ in 0..40 {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
                if d.objective_change(loss, beta, &trial) < 0.0 {
                    return Some(trial);
                }
                t *= 0.5;
            }
        }
        lambda = if lambda == 0.0 { 1e-10 * trace } else { lambda * 100.0 };
    }
    None
}

/// Full Newton step without line search, used once the objective is flat.
fn newton_direction(d: &Design, loss: &Loss, beta: &[f64]) -> Option<Vec<f64>> {
    let (h, g) = d.weighted(|r| {
        let e = d.residual(r, beta);
        (loss.psi_prime(e), loss.psi(e))
    });
    let step = solve_spd(&h, &g)?;
    Some(beta.iter().zip(&step).map(|(b, s)| b + s).collect())
}

/// Minimizes `Σ ρ(x_t - βᵀz_t)` starting from least squares.
pub fn m_estimate(x: &[f64], p: usize, loss: &Loss, opts: &MOptions) -> Result<EstimationResult> {
    let d = Design::new(x, p)?;
    let mut beta = ls_solve(&d)?;
    let mut trace = vec![d.objective(loss, &beta)];
    let mut last_step = f64::INFINITY;
    let norm = |b: &[f64]| b.iter().map(|v| v * v).sum::<f64>().sqrt();

    for iter in 0..opts.max_iter {
        let res = d.residuals(&beta);
        let (gsup, scale) = score_sup(&d, loss, &res);
        let grad_ok = gsup <= opts.tol * scale + rounding_floor(&d, loss, &beta, &res);
        if grad_ok && last_step <= opts.tol * (1.0 + norm(&beta)) {
            return Ok(finish(&d, loss, beta, iter, true, trace));
        }

        let mut cands = Vec::new();
        match opts.solver {
            Solver::Irls => cands.extend(irls_candidate(&d, loss, &beta)),
            Solver::Newton => cands.extend(newton_candidate(&d, loss, &beta)),
            Solver::Auto => {
                cands.extend(irls_candidate(&d, loss, &beta));
                cands.extend(newton_candidate(&d, loss, &beta));
            }
        }
        if opts.solver == Solver::Irls && !cands.iter().any(|c| d.objective_change(loss, &beta, c) < 0.0) {
            // IRLS can stall where the weights are degenerate; fall back.
            cands.extend(newton_candidate(&d, loss, &beta));
        }
        if opts.solver != Solver::Irls {
            cands.extend(newton_direction(&d, loss, &beta));
        }
        // Candidates are compared through their exact change in objective;
        // near the optimum that change is far below the rounding level of
        // the objective itself.
        let best = cands
            .into_iter()
            .map(|c| {
                let change = d.objective_change(loss, &beta, &c);
                (c, change)
            })
            .filter(|(_, change)| *change < 0.0)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(c, _)| {
                let obj = d.objective(loss, &c);
                (c, obj)
            });

        match best {
            Some((next, obj)) => {
                last_step = norm(&next.iter().zip(&beta).map(|(a, b)| a - b).collect::<Vec<_>>());
                beta = next;
                trace.push(obj);
            }
            None => {
                // No descent is possible in floating point.
                return Ok(finish(&d, loss, beta, iter, grad_ok, trace));
            }
        }
    }
    let res = d.residuals(&beta);
    let (gsup, scale) = score_sup(&d, loss, &res);
    let converged = gsup <= opts.tol * scale + rounding_floor(&d, loss, &beta, &res);
    Ok(finish(&d, loss, beta, opts.max_iter, converged, trace))
}
