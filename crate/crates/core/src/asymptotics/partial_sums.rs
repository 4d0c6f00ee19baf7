//! Normalized partial-sum processes of the innovations and of `ψ(ε)`.

use crate::error::{Error, Result};
use crate::estimation::Loss;
use crate::stable::{norming_constant, InnovationSpec};

use super::moments::loss_moments;

/// Processes evaluated at `t = k/g`, `k = 0..=g`; the value at `t` sums the
/// first `⌊nt⌋` terms.
#[derive(Debug, Clone)]
pub struct PartialSumBundle {
    pub grid: Vec<f64>,
    pub a_n: f64,
    /// `a_n^{-1} Σ ε_k`.
    pub s: Vec<f64>,
    /// `a_n^{-1} Σ (-1)^k ε_k`.
    pub s1: Vec<f64>,
    /// `a_n^{-1} Σ (cos kθ, sin kθ) ε_k`, when θ was given.
    pub t: Option<(Vec<f64>, Vec<f64>)>,
    /// `n^{-1/2} Σ ψ(ε_k)`.
    pub w: Vec<f64>,
    /// `n^{-1/2} Σ (ψ'(ε_k) - E ψ'(ε))`.
    pub v: Vec<f64>,
    /// `n^{-1/2} Σ (sin (k-1)θ, cos (k-1)θ) ψ(ε_k)`, when θ was given.
    pub r: Option<(Vec<f64>, Vec<f64>)>,
}

impl PartialSumBundle {
    pub fn t_paths(&self) -> Result<(&[f64], &[f64])> {
        self.t
            .as_ref()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .ok_or_else(|| Error::argument("T needs an angle θ"))
    }

    pub fn r_paths(&self) -> Result<(&[f64], &[f64])> {
        self.r
            .as_ref()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .ok_or_else(|| Error::argument("R needs an angle θ"))
    }
}

pub fn partial_sums(
    innovations: &[f64],
    spec: &InnovationSpec,
    loss: &Loss,
    theta: Option<f64>,
    grid_size: usize,
) -> Result<PartialSumBundle> {
    let n = innovations.len();
    if n == 0 || grid_size == 0 {
        return Err(Error::argument("partial sums need innovations and a positive grid size"));
    }
    let a_n = norming_constant(spec, n)?;
    let e_psi_prime = loss_moments(loss, spec)?.psi_prime;
    let root_n = (n as f64).sqrt();
    let grid: Vec<f64> = (0..=grid_size).map(|k| k as f64 / grid_size as f64).collect();
    let cut: Vec<usize> = grid.iter().map(|&t| ((n as f64 * t + 1e-9).floor() as usize).min(n)).collect();

    let mut cum = vec![[0.0f64; 8]; n + 1];
    for (k0, &e) in innovations.iter().enumerate() {
        let k = k0 + 1;
        let kf = k as f64;
        let psi = loss.psi(e);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let (ct, st, cp, sp) = match theta {
            Some(th) => ((kf * th).cos(), (kf * th).sin(), ((kf - 1.0) * th).cos(), ((kf - 1.0) * th).sin()),
            None => (0.0, 0.0, 0.0, 0.0),
        };
        let prev = cum[k0];
        let inc = [e, sign * e, ct * e, st * e, psi, loss.psi_prime(e) - e_psi_prime, sp * psi, cp * psi];
        for j in 0..8 {
            cum[k][j] = prev[j] + inc[j];
        }
    }
    let column = |j: usize, scale: f64| -> Vec<f64> { cut.iter().map(|&c| cum[c][j] / scale).collect() };
    Ok(PartialSumBundle {
        s: column(0, a_n),
        s1: column(1, a_n),
        t: theta.map(|_| (column(2, a_n), column(3, a_n))),
        w: column(4, root_n),
        v: column(5, root_n),
        r: theta.map(|_| (column(6, root_n), column(7, root_n))),
        grid,
        a_n,
    })
}
