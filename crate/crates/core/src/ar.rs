//! Autoregressions whose characteristic roots all lie on the unit circle.
//!
//! The characteristic polynomial is `φ(z) = 1 - φ₁z - … - φ_p z^p` and factors
//! as `(1-z)^r (1+z)^s Π (1 - 2cos θ_k z + z²)^{d_k}`. Each factor has a
//! component series obtained by applying the remaining factors to `X`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stable::InnovationSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RootSpec {
    /// Multiplicity of the root `+1`.
    pub r: usize,
    /// Multiplicity of the root `-1`.
    pub s: usize,
    /// `(θ_k, d_k)` for the conjugate pairs `e^{±iθ_k}`.
    pub pairs: Vec<(f64, usize)>,
}

impl RootSpec {
    pub fn new(r: usize, s: usize, pairs: Vec<(f64, usize)>) -> Result<Self> {
        let spec = Self { r, s, pairs };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(theta, d)) in self.pairs.iter().enumerate() {
            if !(theta > 0.0 && theta < PI) {
                return Err(Error::domain(format!("theta must lie in (0, π), got {theta}")));
            }
            if d == 0 {
                return Err(Error::domain("complex root multiplicity must be positive"));
            }
            if self.pairs[..i].iter().any(|&(other, _)| (other - theta).abs() < 1e-12) {
                return Err(Error::domain(format!("duplicate complex root angle {theta}")));
            }
        }
        if self.order() == 0 {
            return Err(Error::domain("the model needs at least one unit root"));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.r + self.s + 2 * self.pairs.iter().map(|p| p.1).sum::<usize>()
    }
}

/// Coefficients (ascending powers) of `(1 - z)^m`.
pub fn plus_factor(m: usize) -> Vec<f64> {
    power(&[1.0, -1.0], m)
}

/// Coefficients of `(1 + z)^m`.
pub fn minus_factor(m: usize) -> Vec<f64> {
    power(&[1.0, 1.0], m)
}

/// Coefficients of `(1 - 2cos θ z + z²)^m`.
pub fn pair_factor(theta: f64, m: usize) -> Vec<f64> {
    power(&[1.0, -2.0 * theta.cos(), 1.0], m)
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn power(base: &[f64], m: usize) -> Vec<f64> {
    (0..m).fold(vec![1.0], |acc, _| poly_mul(&acc, base))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub phi: Vec<f64>,
    pub spec: Option<RootSpec>,
}

impl ArModel {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::argument("an AR model needs at least one coefficient"));
        }
        Ok(Self { phi, spec: None })
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    /// `(1, -φ₁, …, -φ_p)`.
    pub fn char_poly(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.phi.iter().map(|c| -c)).collect()
    }

    /// Inverse characteristic roots, i.e. eigenvalues of the companion matrix.
    /// They have the same moduli as the roots when those are on the circle.
    pub fn companion_eigenvalues(&self) -> Vec<(f64, f64)> {
        let p = self.order();
        let mut m = DMatrix::<f64>::zeros(p, p);
        for (j, &c) in self.phi.iter().enumerate() {
            m[(0, j)] = c;
        }
        for i in 1..p {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
    }

    /// Roots grouped into clusters of nearby values, returned as
    /// `(centroid, size)`. Repeated roots split under rounding by roughly
    /// `ε^{1/m}`; the centroid is accurate to rounding.
    pub fn root_clusters(&self) -> Vec<((f64, f64), usize)> {
        let eig = self.companion_eigenvalues();
        let mut used = vec![false; eig.len()];
        let mut clusters = Vec::new();
        for i in 0..eig.len() {
            if used[i] {
                continue;
            }
            let mut members = vec![i];
            used[i] = true;
            let mut k = 0;
            while k < members.len() {
                let (a, b) = eig[members[k]];
                for j in 0..eig.len() {
                    if !used[j] && (eig[j].0 - a).hypot(eig[j].1 - b) < 1e-3 {
                        used[j] = true;
                        members.push(j);
                    }
                }
                k += 1;
            }
            let n = members.len() as f64;
            let re = members.iter().map(|&j| eig[j].0).sum::<f64>() / n;
            let im = members.iter().map(|&j| eig[j].1).sum::<f64>() / n;
            clusters.push(((re, im), members.len()));
        }
        clusters
    }

    /// Checks that every root has modulus one within `tol`.
    pub fn verify_unit_roots(&self, tol: f64) -> Result<()> {
        for ((re, im), _) in self.root_clusters() {
            let dev = (re.hypot(im) - 1.0).abs();
            if dev > tol {
                return Err(Error::domain(format!(
                    "root {re:+.6}{im:+.6}i is off the unit circle by {dev:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// `ε_t = X_t - Σ φ_i X_{t-i}` for `t = 1..n`.
    pub fn residuals(&self, series: &TimeSeries) -> Result<Vec<f64>> {
        let p = self.order();
        if series.warm_start.len() != p {
            return Err(Error::argument("warm start length differs from the model order"));
        }
        let full = series.full();
        Ok((p..full.len())
            .map(|t| full[t] - self.phi.iter().enumerate().map(|(i, c)| c * full[t - 1 - i]).sum::<f64>())
            .collect())
    }
}

/// `φ = ` negated tail of the expanded characteristic polynomial.
pub fn expand_polynomial(spec: &RootSpec) -> Result<ArModel> {
    spec.validate()?;
    let mut poly = poly_mul(&plus_factor(spec.r), &minus_factor(spec.s));
    for &(theta, d) in &spec.pairs {
        poly = poly_mul(&poly, &pair_factor(theta, d));
    }
    Ok(ArModel { phi: poly[1..].iter().map(|c| -c).collect(), spec: Some(spec.clone()) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// `X_1, …, X_n`.
    pub values: Vec<f64>,
    /// `ε_1, …, ε_n` when the series was simulated.
    pub innovations: Option<Vec<f64>>,
    /// Pre-sample values `X_{1-p}, …, X_0` in time order.
    pub warm_start: Vec<f64>,
    pub model: Option<ArModel>,
}

impl TimeSeries {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values, innovations: None, warm_start: Vec::new(), model: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Warm start followed by the observed values.
    pub fn full(&self) -> Vec<f64> {
        self.warm_start.iter().chain(&self.values).copied().collect()
    }
}

/// Runs `X_t = Σ φ_i X_{t-i} + ε_t`. The warm start defaults to zeros.
pub fn simulate_ar(model: &ArModel, innovations: &[f64], warm_start: Option<&[f64]>) -> Result<TimeSeries> {
    let p = model.order();
    let warm = match warm_start {
        Some(w) if w.len() != p => {
            return Err(Error::argument(format!("warm start has length {}, expected {p}", w.len())));
        }
        Some(w) => w.to_vec(),
        None => vec![0.0; p],
    };
    let mut full = warm.clone();
    full.reserve(innovations.len());
    for &e in innovations {
        let t = full.len();
        let x = e + model.phi.iter().enumerate().map(|(i, c)| c * full[t - 1 - i]).sum::<f64>();
        full.push(x);
    }
    Ok(TimeSeries {
        values: full[p..].to_vec(),
        innovations: Some(innovations.to_vec()),
        warm_start: warm,
        model: Some(model.clone()),
    })
}

/// `y_t = Σ_k c_k x_{t-k}`, with `x` indexed from `offset` pre-sample values;
/// returns one output per post-offset input. Values before the start of `x`
/// are treated as zero.
pub fn apply_filter(coeffs: &[f64], x: &[f64], offset: usize) -> Vec<f64> {
    (offset..x.len())
        .map(|t| coeffs.iter().enumerate().filter(|(k, _)| *k <= t).map(|(k, c)| c * x[t - k]).sum())
        .collect()
}

/// A series of total length `n` whose first `p` entries are the warm start
/// (zeros by default), followed by `n - p` simulated values.
pub fn simulate_observed<R: rand::Rng + ?Sized>(
    model: &ArModel,
    innovations: &InnovationSpec,
    n: usize,
    warm_start: Option<&[f64]>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = model.order();
    if n <= p {
        return Err(Error::argument(format!("series length {n} must exceed the model order {p}")));
    }
    let eps = innovations.sample(n - p, rng)?;
    Ok(simulate_ar(model, &eps, warm_start)?.full())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    /// Component for the root `+1`, when `r > 0`.
    pub u: Option<Vec<f64>>,
    /// Component for the root `-1`, when `s > 0`.
    pub v: Option<Vec<f64>>,
    /// One component per conjugate pair.
    pub w: Vec<Vec<f64>>,
}

/// Coefficients of `φ(z)` with the factor for one root group removed.
fn complementary(spec: &RootSpec, skip: Factor) -> Vec<f64> {
    let mut poly = vec![1.0];
    if skip != Factor::Plus {
        poly = poly_mul(&poly, &plus_factor(spec.r));
    }
    if skip != Factor::Minus {
        poly = poly_mul(&poly, &minus_factor(spec.s));
    }
    for (k, &(theta, d)) in spec.pairs.iter().enumerate() {
        if skip != Factor::Pair(k) {
            poly = poly_mul(&poly, &pair_factor(theta, d));
        }
    }
    poly
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Factor {
    Plus,
    Minus,
    Pair(usize),
}

/// Applies the complementary factor of `φ(B)` for each root group, so that
/// `(1-B)^r u_t = (1+B)^s v_t = (1 - 2cos θ_k B + B²)^{d_k} w_t(k) = ε_t`.
/// Component values are for `t = 1..n`; pre-sample inputs come from the warm
/// start.
pub fn component_filters(series: &TimeSeries, spec: &RootSpec) -> Result<Components> {
    spec.validate()?;
    let p = spec.order();
    if series.warm_start.len() != p {
        return Err(Error::argument(format!(
            "series warm start has length {}, model order is {p}",
            series.warm_start.len()
        )));
    }
    if series.len() <= p {
        return Err(Error::argument("series must be longer than the model order"));
    }
    let full = series.full();
    let filter = |skip| apply_filter(&complementary(spec, skip), &full, p);
    Ok(Components {
        u: (spec.r > 0).then(|| filter(Factor::Plus)),
        v: (spec.s > 0).then(|| filter(Factor::Minus)),
        w: (0..spec.pairs.len()).map(|k| filter(Factor::Pair(k))).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitRoot {
    Plus,
    Minus,
}

/// `u(j) = (1 ∓ B)^{m-j} u` for `j = 1..m`, so `u(m)` is the component itself.
/// Values before the first observation are taken as zero.
pub fn difference_stack(component: &[f64], multiplicity: usize, root: UnitRoot) -> Result<Vec<Vec<f64>>> {
    if multiplicity == 0 {
        return Err(Error::argument("multiplicity must be at least 1"));
    }
    let base = match root {
        UnitRoot::Plus => [1.0, -1.0],
        UnitRoot::Minus => [1.0, 1.0],
    };
    let mut out = vec![component.to_vec()];
    for _ in 1..multiplicity {
        let prev = out.last().unwrap();
        out.push(apply_filter(&base, prev, 0));
    }
    out.reverse();
    Ok(out)
}

/// Builds the same stack from innovations: `u(1) = Σ ε`, `u(j) = Σ u(j-1)`
/// for the root `+1`, and `(-1)^t v_t(j+1) = Σ_{i≤t} (-1)^i v_i(j)` for `-1`.
pub fn integrate_stack(innovations: &[f64], multiplicity: usize, root: UnitRoot) -> Result<Vec<Vec<f64>>> {
    if multiplicity == 0 {
        return Err(Error::argument("multiplicity must be at least 1"));
    }
    let mut out = Vec::with_capacity(multiplicity);
    let mut prev = innovations.to_vec();
    for _ in 0..multiplicity {
        let mut acc = 0.0;
        let next: Vec<f64> = prev
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                // time index t = i + 1
                let sign = if root == UnitRoot::Minus && i % 2 == 0 { -1.0 } else { 1.0 };
                acc += sign * x;
                sign * acc
            })
            .collect();
        out.push(next.clone());
        prev = next;
    }
    Ok(out)
}
