//! Interface geometry: polar curves, curvature, circle fits and the spiral
//! of the interface centre.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{k_constant, k_tilde, AsymptoticFit};
use crate::models::{canonical_transform, wrap_angle, FrameTransform, Layer, PhysicalParams};
use crate::spectral::{fft_size, NormKind, SpectralField};

/// Curvature of `r = 1 + εh(θ)` as a function of `θ`.
pub fn curvature(h: &SpectralField, eps: f64) -> Result<SpectralField> {
    let n = h.order();
    let m = fft_size(8 * n + 16);
    let hv = h.to_grid(m);
    let d1 = h.derivative(1).to_grid(m);
    let d2 = h.derivative(2).to_grid(m);
    let mut kappa = Vec::with_capacity(m);
    for j in 0..m {
        let r = 1.0 + eps * hv[j];
        if r <= 0.0 {
            return Err(Error::NonPositiveRadius {
                theta: 2.0 * PI * j as f64 / m as f64,
                radius: r,
            });
        }
        let e1 = eps * d1[j];
        let num = 2.0 * e1 * e1 - eps * r * d2[j] + r * r;
        let den = (r * r + e1 * e1).powf(1.5);
        kappa.push(num / den);
    }
    Ok(SpectralField::from_grid(n, &kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceCurve {
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
}

impl InterfaceCurve {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.theta
            .iter()
            .zip(&self.r)
            .map(|(&t, &r)| (r * t.cos(), r * t.sin()))
    }
}

/// Samples the interface `r = 1 + εh` (inner layer) or `r = η − εh` (outer
/// layer) at `samples` uniform angles.
pub fn interface_curve(
    h: &SpectralField,
    phys: &PhysicalParams,
    samples: usize,
) -> Result<InterfaceCurve> {
    let vals = h.to_grid(samples);
    let mut theta = Vec::with_capacity(samples);
    let mut r = Vec::with_capacity(samples);
    for (j, v) in vals.into_iter().enumerate() {
        let th = 2.0 * PI * j as f64 / samples as f64;
        let rad = match phys.layer {
            Layer::Inner => 1.0 + phys.eps * v,
            Layer::Outer => phys.eta - phys.eps * v,
        };
        if rad <= 0.0 {
            return Err(Error::NonPositiveRadius {
                theta: th,
                radius: rad,
            });
        }
        theta.push(th);
        r.push(rad);
    }
    Ok(InterfaceCurve { theta, r })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// rms geometric distance of the points to the circle
    pub rms: f64,
}

/// Algebraic (Kåsa) circle fit followed by one Gauss–Newton pass on the
/// geometric distance.
pub fn fit_circle(curve: &InterfaceCurve) -> Result<CircleFit> {
    let pts: Vec<(f64, f64)> = curve.points().collect();
    if pts.len() < 8 {
        return Err(Error::DegenerateCircle(format!(
            "{} points, need at least 8",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;

    // x² + y² + D x + E y + F = 0 on centred data
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(x, y) in &pts {
        let (u, v) = (x - mx, y - my);
        let row = Vector3::new(u, v, 1.0);
        ata += row * row.transpose();
        atb -= row * (u * u + v * v);
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::DegenerateCircle("points are collinear".into()));
    }
    let sol = svd
        .solve(&atb, 0.0)
        .map_err(|e| Error::DegenerateCircle(e.to_string()))?;
    let (cu, cv) = (-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = cu * cu + cv * cv - sol[2];
    if !(r2 > 0.0) {
        return Err(Error::DegenerateCircle("negative squared radius".into()));
    }
    let (mut cx, mut cy, mut rad) = (cu + mx, cv + my, r2.sqrt());

    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for &(x, y) in &pts {
        let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        if d == 0.0 {
            continue;
        }
        let row = Vector3::new(-(x - cx) / d, -(y - cy) / d, -1.0);
        jtj += row * row.transpose();
        jtr += row * (d - rad);
    }
    if let Some(delta) = jtj.lu().solve(&(-jtr)) {
        cx += delta[0];
        cy += delta[1];
        rad += delta[2];
    }
    let rms = (pts
        .iter()
        .map(|&(x, y)| (((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - rad).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CircleFit {
        center: [cx, cy],
        radius: rad,
        rms,
    })
}

/// `‖P₁h‖` in full `H⁴`: the distance from `h` to the affine space
/// `mean(h) + V₀`.
pub fn projection_distance(h: &SpectralField) -> f64 {
    h.project_p1().sobolev_norm_unchecked(4, NormKind::Full)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceToM0 {
    pub distance: f64,
    /// `|c₂| ≥ c` for the nearest point of the affine span, so the open
    /// constraint of the circle family is active and `distance` is a lower bound.
    pub constraint_active: bool,
}

/// `H⁴` distance from `h` to the circle family `{c + c₂ sin(θ − θ₀), |c₂| < c}`.
pub fn dist_to_m0(h: &SpectralField, c: f64) -> Result<DistanceToM0> {
    if (h.mean() - c).abs() > 1e-10 {
        return Err(Error::MeanMismatch {
            expected: c,
            actual: h.mean(),
        });
    }
    let c2 = 2.0 * h.coeff(1).norm();
    Ok(DistanceToM0 {
        distance: projection_distance(h),
        constraint_active: c2 >= c,
    })
}

/// Constants entering the spiral prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralConstants {
    pub k: f64,
    pub ktilde: f64,
    pub c0: f64,
    /// virtual time origin in rescaled time
    pub t_shift: f64,
}

impl SpiralConstants {
    /// Constants of the reduced amplitude equation, with `C₀ = 0`, `t_s = 0`.
    pub fn reduced(c: f64) -> Self {
        Self {
            k: k_constant(c),
            ktilde: k_tilde(c),
            c0: 0.0,
            t_shift: 0.0,
        }
    }

    pub fn from_fit(fit: &AsymptoticFit) -> Self {
        Self {
            k: fit.k_hat,
            ktilde: fit.ktilde_hat,
            c0: fit.c0_hat,
            t_shift: fit.t_shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiralPrediction {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta_c: Vec<f64>,
    pub r0: f64,
}

/// Predicted centre `δ(t)(cos θ_c, sin θ_c)` and radius `r₀` of the
/// asymptotic interface circle, in unscaled time `t`.
///
/// With `t̄ = εAλt` the rescaled time, `δ = 2Kελ/√(t̄ − t_s)` and
/// `θ_c = drift·t − cεAλt + K̃ log(t̄ − t_s) + C₀` (plus `π` for the outer
/// layer). Requires `t̄ ≥ 10` on the whole grid.
pub fn predicted_spiral(
    phys: &PhysicalParams,
    c: f64,
    consts: &SpiralConstants,
    t_grid: &[f64],
) -> Result<SpiralPrediction> {
    let tr = canonical_transform(phys)?;
    let ts = tr.time_scale;
    let t_min = 10.0 / ts;
    if let Some(&t0) = t_grid.iter().min_by(|a, b| a.total_cmp(b)) {
        if t0 < t_min {
            return Err(Error::TooEarly { t: t0, t_min });
        }
    }
    let el = phys.eps * tr.lambda;
    let (r0, offset) = match phys.layer {
        Layer::Inner => (1.0 + el * c, 0.0),
        Layer::Outer => (phys.eta - el * c, PI),
    };
    let mut delta = Vec::with_capacity(t_grid.len());
    let mut theta_c = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let tb = ts * t - consts.t_shift;
        if tb <= 0.0 {
            return Err(Error::TooEarly {
                t,
                t_min: consts.t_shift / ts,
            });
        }
        delta.push(2.0 * consts.k * el / tb.sqrt());
        theta_c.push(tr.drift * t - c * ts * t + consts.ktilde * tb.ln() + consts.c0 + offset);
    }
    Ok(SpiralPrediction {
        t: t_grid.to_vec(),
        delta,
        theta_c,
        r0,
    })
}

/// Maps rescaled snapshots `(t̄, h̄)` back to the unscaled frame and fits a
/// circle to each interface. Returns `(t, fit)` pairs in unscaled time.
pub fn fit_frames(
    snapshots: &[(f64, SpectralField)],
    phys: &PhysicalParams,
    tr: &FrameTransform,
    samples: usize,
) -> Result<Vec<(f64, CircleFit)>> {
    snapshots
        .par_iter()
        .map(|(tb, hb)| {
            let (h, t) = tr.invert(hb, *tb);
            let curve = interface_curve(&h, phys, samples)?;
            Ok((t, fit_circle(&curve)?))
        })
        .collect()
}

/// Spiral comparison table with columns
/// `t, delta_pred, delta_fit, theta_pred, theta_fit, r0_pred, r_fit`.
///
/// `theta_fit` is the fitted centre angle shifted by a multiple of `2π` to
/// lie within `π` of `theta_pred`.
pub fn write_spiral_csv<W: Write>(
    mut w: W,
    pred: &SpiralPrediction,
    fits: &[CircleFit],
) -> Result<()> {
    writeln!(w, "t,delta_pred,delta_fit,theta_pred,theta_fit,r0_pred,r_fit")?;
    for (i, f) in fits.iter().enumerate().take(pred.t.len()) {
        let delta_fit = f.center[0].hypot(f.center[1]);
        let raw = f.center[1].atan2(f.center[0]);
        let theta_fit = pred.theta_c[i] + wrap_angle(raw - pred.theta_c[i]);
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            pred.t[i], pred.delta[i], delta_fit, pred.theta_c[i], theta_fit, pred.r0, f.radius
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use num_complex::Complex64;

    fn inner() -> PhysicalParams {
        PhysicalParams::with_b(0.03, 1.0, 1.0, 1.0, 2.0, Layer::Inner).unwrap()
    }

    fn circle(cx: f64, cy: f64, r: f64, n: usize) -> InterfaceCurve {
        // polar samples of an off-centre circle around the origin
        let theta: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let r = theta
            .iter()
            .map(|&t| {
                let b = cx * t.cos() + cy * t.sin();
                b + (b * b - (cx * cx + cy * cy - r * r)).sqrt()
            })
            .collect();
        InterfaceCurve { theta, r }
    }

    #[test]
    fn curvature_examples() {
        let one = SpectralField::constant(8, 1.0);
        let k = curvature(&one, 0.1).unwrap();
        assert!((k.mean() - 1.0 / 1.1).abs() < 1e-14);
        assert!(k.max_coeff_from(1) < 1e-15);
        let k0 = curvature(&SpectralField::zeros(8), 0.1).unwrap();
        assert!((k0.mean() - 1.0).abs() < 1e-15);
        assert!(curvature(&SpectralField::constant(8, -20.0), 0.1).is_err());
    }

    #[test]
    fn curvature_linearisation_is_second_order() {
        let h = SpectralField::from_modes(16, 1.0, &[(2, 0.4, 0.1), (3, 0.2, 1.0)]).unwrap();
        let lin = |eps: f64| {
            let approx = (&h + &h.derivative(2)).scale(-eps).add_constant(1.0);
            (&curvature(&h, eps).unwrap() - &approx).l2_norm()
        };
        let (e1, e2) = (lin(1e-2), lin(5e-3));
        let slope = (e1 / e2).log2();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn interface_curve_examples() {
        let one = SpectralField::constant(8, 1.0);
        let c = interface_curve(&one, &inner(), 16).unwrap();
        assert!(c.r.iter().all(|r| (r - 1.03).abs() < 1e-15));
        let outer = PhysicalParams {
            layer: Layer::Outer,
            ..inner()
        };
        let c = interface_curve(&one, &outer, 16).unwrap();
        assert!(c.r.iter().all(|r| (r - 1.97).abs() < 1e-15));
        let s = SpectralField::from_modes(8, 1.0, &[(1, 1.0, -PI / 2.0)]).unwrap();
        let p = PhysicalParams { eps: 0.1, ..inner() };
        let c = interface_curve(&s, &p, 16).unwrap();
        assert!((c.r[4] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn circle_fit_examples() {
        let f = fit_circle(&circle(0.0, 0.0, 1.03, 64)).unwrap();
        assert!(f.center[0].abs() < 1e-12 && f.center[1].abs() < 1e-12);
        assert!((f.radius - 1.03).abs() < 1e-12 && f.rms < 1e-12);
        let f = fit_circle(&circle(0.01, 0.0, 1.0, 64)).unwrap();
        assert!((f.center[0] - 0.01).abs() < 1e-10 && f.center[1].abs() < 1e-10);
        let line = InterfaceCurve {
            theta: vec![0.3; 10],
            r: (1..=10).map(|i| i as f64).collect(),
        };
        assert!(matches!(fit_circle(&line), Err(Error::DegenerateCircle(_))));
    }

    #[test]
    fn small_first_harmonic_offsets_the_circle() {
        let (rho, th0) = (0.05, 0.8);
        let h = SpectralField::from_modes(16, 1.0, &[(1, 2.0 * rho, -th0)]).unwrap();
        for eps in [1e-2, 1e-3] {
            let p = PhysicalParams { eps, ..inner() };
            let f = fit_circle(&interface_curve(&h, &p, 128).unwrap()).unwrap();
            let d = f.center[0].hypot(f.center[1]);
            assert!((d - 2.0 * eps * rho).abs() < 5.0 * (eps * rho).powi(2) + 1e-14);
            assert!(wrap_angle(f.center[1].atan2(f.center[0]) - th0).abs() < 1e-3);
        }
    }

    #[test]
    fn distance_to_circle_family() {
        let on = SpectralField::from_modes(8, 1.0, &[(1, 0.3, -PI / 2.0 - 1.0)]).unwrap();
        let d = dist_to_m0(&on, 1.0).unwrap();
        assert!(d.distance < 1e-15 && !d.constraint_active);
        let off = SpectralField::from_modes(8, 1.0, &[(2, 1.0, 0.0)]).unwrap();
        assert!((dist_to_m0(&off, 1.0).unwrap().distance - 25.0 * PI.sqrt()).abs() < 1e-11);
        assert!(matches!(
            dist_to_m0(&off, 2.0),
            Err(Error::MeanMismatch { .. })
        ));
    }

    #[test]
    fn spiral_examples() {
        let p = PhysicalParams::with_b(0.01, 1.0, 1.0, 1.0, 2.0, Layer::Inner).unwrap();
        assert!((p.time_factor_a() - 8.0 / 3.0).abs() < 1e-15);
        let ts = canonical_transform(&p).unwrap().time_scale;
        let t = [10.0 / ts, 40.0 / ts];
        let s = predicted_spiral(&p, 1.0, &SpiralConstants::reduced(1.0), &t).unwrap();
        assert!((s.r0 - (1.0 + 0.01 * 8f64.sqrt())).abs() < 1e-15);
        assert!((s.r0 - 1.02828).abs() < 1e-5);
        assert!((s.delta[0] / s.delta[1] - 2.0).abs() < 1e-12);
        assert!(matches!(
            predicted_spiral(&p, 1.0, &SpiralConstants::reduced(1.0), &[1.0]),
            Err(Error::TooEarly { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_matches_grid_search(a2 in -0.2f64..0.2, b3 in -0.2f64..0.2, c2 in 0.0f64..0.5, th in 0.0f64..6.28) {
            let h = SpectralField::from_modes(8, 1.0, &[(1, c2, th), (2, a2, 0.4), (3, b3, 1.0)]).unwrap();
            let d = dist_to_m0(&h, 1.0).unwrap().distance;
            // brute force over the circle family 1 + x cos θ + y sin θ, grid refined around the optimum
            let mut best = f64::INFINITY;
            let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (-0.99, 0.99, -0.99, 0.99);
            let mut arg = (0.0, 0.0);
            for _ in 0..6 {
                for i in 0..=40 {
                    for j in 0..=40 {
                        let x = lo_x + (hi_x - lo_x) * i as f64 / 40.0;
                        let y = lo_y + (hi_y - lo_y) * j as f64 / 40.0;
                        let mut m = SpectralField::constant(8, 1.0);
                        m.set_mode(1, Complex64::new(x / 2.0, -y / 2.0));
                        let dist = (&h - &m).sobolev_norm(crate::SobolevIndex(4), NormKind::Full).unwrap();
                        if dist < best { best = dist; arg = (x, y); }
                    }
                }
                let (wx, wy) = ((hi_x - lo_x) / 20.0, (hi_y - lo_y) / 20.0);
                lo_x = arg.0 - wx; hi_x = arg.0 + wx; lo_y = arg.1 - wy; hi_y = arg.1 + wy;
            }
            prop_assert!(best >= d - 1e-12);
            prop_assert!(best - d <= 1e-6 * (1.0 + d));
        }
    }
}
