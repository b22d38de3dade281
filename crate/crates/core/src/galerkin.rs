//! Real Galerkin matrices of linearised fluxes.
//!
//! The linearisation of `F(h) = p h + q h²/2 + κ h³ s(h)`, `s = ∂h + ∂³h`, is
//!
//! ```text
//! DF(h) g = m·g + w·(∂g + ∂³g),   m = p + q h + 3κ h² s,   w = κ h³.
//! ```
//!
//! A real field of order `N` is packed as `[a0?, Re a1..aN, Im a1..aN]`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::models::{curvature_term, FluxCoeffs};
use crate::spectral::{pointwise, SpectralField};

/// Coefficients of `m` and `w` up to `|n| <= 2N`, which is what the truncated
/// linear map needs.
pub(crate) struct LinearisedFlux {
    m: SpectralField,
    w: SpectralField,
}

impl LinearisedFlux {
    pub fn new(fc: &FluxCoeffs, h: &SpectralField) -> Self {
        let n = h.order();
        let s = curvature_term(h);
        let FluxCoeffs { p, q, kappa } = *fc;
        let m = pointwise(&[h, &s], 3, 2 * n, |v| {
            p + q * v[0] + 3.0 * kappa * v[0] * v[0] * v[1]
        });
        let w = pointwise(&[h], 3, 2 * n, |v| kappa * v[0] * v[0] * v[0]);
        Self { m, w }
    }

    /// Entry `(n, k)` of the complex matrix of `DF(h)` on `|n|, |k| <= N`.
    pub fn flux_entry(&self, n: i64, k: i64) -> Complex64 {
        let kf = k as f64;
        let sym = Complex64::new(0.0, kf - kf * kf * kf);
        self.m.coeff(n - k) + self.w.coeff(n - k) * sym
    }

    /// Entry of `g ↦ -∂(DF(h) g)`.
    pub fn rhs_entry(&self, n: i64, k: i64) -> Complex64 {
        Complex64::new(0.0, -(n as f64)) * self.flux_entry(n, k)
    }
}

/// Real matrix of a complex operator acting on real fields.
///
/// Rows: `[Re n=0 if with_mean_row, Re n=1..N, Im n=1..N]`; columns likewise
/// with the mean column optional.
pub(crate) fn real_matrix(
    order: usize,
    with_mean_col: bool,
    with_mean_row: bool,
    entry: impl Fn(i64, i64) -> Complex64,
) -> DMatrix<f64> {
    let n = order;
    let row0 = usize::from(with_mean_row);
    let col0 = usize::from(with_mean_col);
    let mut mat = DMatrix::zeros(row0 + 2 * n, col0 + 2 * n);
    let rows: Vec<i64> = if with_mean_row {
        (0..=n as i64).collect()
    } else {
        (1..=n as i64).collect()
    };
    for &r in &rows {
        let put = |mat: &mut DMatrix<f64>, col: usize, z: Complex64| {
            if r == 0 {
                mat[(0, col)] = z.re;
            } else {
                let i = row0 + (r as usize - 1);
                mat[(i, col)] = z.re;
                mat[(i + n, col)] = z.im;
            }
        };
        if with_mean_col {
            put(&mut mat, 0, entry(r, 0));
        }
        for k in 1..=n as i64 {
            let plus = entry(r, k);
            let minus = entry(r, -k);
            let cx = col0 + (k as usize - 1);
            put(&mut mat, cx, plus + minus);
            put(&mut mat, cx + n, Complex64::new(0.0, 1.0) * (plus - minus));
        }
    }
    mat
}

/// `[Re a1..aN, Im a1..aN]`.
pub(crate) fn pack(h: &SpectralField) -> DVector<f64> {
    let n = h.order();
    let mut v = DVector::zeros(2 * n);
    for k in 1..=n {
        let a = h.coeff(k as i64);
        v[k - 1] = a.re;
        v[k - 1 + n] = a.im;
    }
    v
}

pub(crate) fn unpack(order: usize, mean: f64, v: &DVector<f64>) -> SpectralField {
    let mut h = SpectralField::constant(order, mean);
    for k in 1..=order {
        h.set_mode(k as i64, Complex64::new(v[k - 1], v[k - 1 + order]));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{flux_field, rhs_with};

    fn sample(order: usize) -> SpectralField {
        SpectralField::from_modes(
            order,
            1.1,
            &[(1, 0.2, 0.4), (2, 0.1, -0.3), (3, 0.05, 1.0), (5, 0.01, 2.0)],
        )
        .unwrap()
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let fc = FluxCoeffs {
            p: 0.3,
            q: 0.8,
            kappa: 1.2,
        };
        let n = 8;
        let h = sample(n);
        let lin = LinearisedFlux::new(&fc, &h);
        let jac = real_matrix(n, false, false, |a, b| lin.rhs_entry(a, b));
        let y0 = pack(&h);
        let step = 1e-6;
        for col in 0..2 * n {
            let mut yp = y0.clone();
            let mut ym = y0.clone();
            yp[col] += step;
            ym[col] -= step;
            let fp = pack(&rhs_with(&fc, &unpack(n, h.mean(), &yp)));
            let fm = pack(&rhs_with(&fc, &unpack(n, h.mean(), &ym)));
            let fd = (fp - fm) / (2.0 * step);
            let diff = (&fd - jac.column(col)).amax();
            assert!(diff < 1e-5 * (1.0 + fd.amax()), "column {col}: {diff}");
        }

        let flux_jac = real_matrix(n, true, true, |a, b| lin.flux_entry(a, b));
        let mut y = DVector::zeros(2 * n + 1);
        y[0] = h.mean();
        y.rows_mut(1, 2 * n).copy_from(&y0);
        let mut yp = y.clone();
        yp[0] += step;
        let mut ym = y.clone();
        ym[0] -= step;
        let eval = |v: &DVector<f64>| {
            let f = flux_field(&fc, &unpack(n, v[0], &v.rows(1, 2 * n).into_owned()));
            let mut out = DVector::zeros(2 * n + 1);
            out[0] = f.mean();
            out.rows_mut(1, 2 * n).copy_from(&pack(&f));
            out
        };
        let fd = (eval(&yp) - eval(&ym)) / (2.0 * step);
        assert!((&fd - flux_jac.column(0)).amax() < 1e-6);
    }
}
