//! Normalizing matrices that map lagged components to asymptotically
//! non-degenerate coordinates.

use nalgebra::DMatrix;

use crate::ar::pair_factor;
use crate::error::{Error, Result};

fn binomial_row(k: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..k {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

/// Lower-triangular matrix whose row `i` holds the coefficients of
/// `(1 - B)^{i-1}`, so it maps `(u_{t-1}, …, u_{t-r})` to
/// `(u_{t-1}(r), u_{t-1}(r-1), …, u_{t-1}(1))`.
pub fn alternating_binomial(r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, r, |i, j| {
        if j > i {
            0.0
        } else {
            let c = binomial_row(i)[j];
            if j % 2 == 0 { c } else { -c }
        }
    })
}

/// Lower-triangular matrix of plain binomial coefficients, the `(1 + B)`
/// analogue of [`alternating_binomial`].
pub fn plain_binomial(s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(s, s, |i, j| if j > i { 0.0 } else { binomial_row(i)[j] })
}

fn ladder(m: usize, n: usize, a_n: f64) -> Vec<f64> {
    let nf = n as f64;
    (0..m).map(|i| nf.powf((m - i) as f64 - 0.5) * a_n).collect()
}

fn check(m: usize, n: usize, a_n: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::argument("multiplicity must be at least 1"));
    }
    if n == 0 || !(a_n > 0.0) {
        return Err(Error::argument("normalizers need n >= 1 and a_n > 0"));
    }
    Ok(())
}

/// `diag(n^{r-1/2} a_n, …, n^{1/2} a_n)^{-1}` times [`alternating_binomial`].
pub fn normalizer_j(r: usize, n: usize, a_n: f64) -> Result<DMatrix<f64>> {
    check(r, n, a_n)?;
    let scale = ladder(r, n, a_n);
    let mut m = alternating_binomial(r);
    for (i, s) in scale.iter().enumerate() {
        m.row_mut(i).scale_mut(1.0 / s);
    }
    Ok(m)
}

/// The root `-1` counterpart of [`normalizer_j`].
pub fn normalizer_k(s: usize, n: usize, a_n: f64) -> Result<DMatrix<f64>> {
    check(s, n, a_n)?;
    let scale = ladder(s, n, a_n);
    let mut m = plain_binomial(s);
    for (i, sc) in scale.iter().enumerate() {
        m.row_mut(i).scale_mut(1.0 / sc);
    }
    Ok(m)
}

/// Maps `(w_{t-1}, …, w_{t-2d})` to `(y_{t-1}(1), y_{t-2}(1), …, y_{t-1}(d),
/// y_{t-2}(d))` with `y(j) = (1 - 2cos θ B + B²)^{d-j} w`.
pub fn pair_change_of_basis(theta: f64, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::argument("multiplicity must be at least 1"));
    }
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(Error::domain(format!("theta must lie in (0, π), got {theta}")));
    }
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for j in 1..=d {
        let coeffs = pair_factor(theta, d - j);
        for (k, c) in coeffs.iter().enumerate() {
            m[(2 * (j - 1), k)] = *c;
            m[(2 * (j - 1) + 1, k + 1)] = *c;
        }
    }
    Ok(m)
}

/// Block `j` of the pair change of basis divided by `n^{(2j-1)/2} a_n`.
pub fn normalizer_l(theta: f64, d: usize, n: usize, a_n: f64) -> Result<DMatrix<f64>> {
    check(d, n, a_n)?;
    let mut m = pair_change_of_basis(theta, d)?;
    let nf = n as f64;
    for j in 0..d {
        let s = nf.powf(j as f64 + 0.5) * a_n;
        m.row_mut(2 * j).scale_mut(1.0 / s);
        m.row_mut(2 * j + 1).scale_mut(1.0 / s);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::apply_filter;
    use crate::rng::stream;
    use rand::Rng;
    use std::f64::consts::PI;

    #[test]
    fn binomial_goldens() {
        let c = alternating_binomial(2);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, -1.0]));
        let c = alternating_binomial(3);
        assert_eq!(c.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, -2.0, 1.0]);
        let k = plain_binomial(2);
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        let k = plain_binomial(3);
        assert_eq!(k.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn scalar_cases() {
        let j = normalizer_j(1, 100, 3.0).unwrap();
        assert!((j[(0, 0)] - 1.0 / 30.0).abs() < 1e-15);
        let k = normalizer_k(1, 100, 3.0).unwrap();
        assert!((k[(0, 0)] - 1.0 / 30.0).abs() < 1e-15);
        let l = normalizer_l(1.0, 1, 100, 3.0).unwrap();
        assert!((l[(0, 0)] - 1.0 / 30.0).abs() < 1e-15 && l[(0, 1)] == 0.0 && l[(1, 0)] == 0.0);
        assert!((l[(1, 1)] - 1.0 / 30.0).abs() < 1e-15);
        assert_eq!(pair_change_of_basis(0.7, 1).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn ladder_order() {
        let j = normalizer_j(2, 4, 1.0).unwrap();
        // row 1 scaled by n^{3/2}, row 2 by n^{1/2}
        assert!((j[(0, 0)] - 1.0 / 8.0).abs() < 1e-15);
        assert!((j[(1, 1)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_angles_rejected() {
        assert!(normalizer_l(0.0, 1, 10, 1.0).is_err());
        assert!(normalizer_l(PI, 2, 10, 1.0).is_err());
        assert!(normalizer_j(0, 10, 1.0).is_err());
    }

    #[test]
    fn change_of_basis_matches_direct_filtering() {
        let theta = PI / 2.0;
        let mut rng = stream(9, 0);
        let w: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.5).collect();
        let y1 = apply_filter(&pair_factor(theta, 1), &w, 0);
        let y2 = w.clone();
        let d = pair_change_of_basis(theta, 2).unwrap();
        for t in 10..50 {
            let lags = nalgebra::DVector::from_fn(4, |k, _| w[t - k]);
            let got = &d * lags;
            let expect = [y1[t], y1[t - 1], y2[t], y2[t - 1]];
            for i in 0..4 {
                assert!((got[i] - expect[i]).abs() < 1e-8);
            }
        }
    }
}
