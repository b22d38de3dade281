//! Steady states and travelling waves.
//!
//! A profile `h` is steady (or travels with speed `c`) exactly when the flux
//!
//! ```text
//! F(h) = −c h + s·h²/2 + h³(∂h + ∂³h)
//! ```
//!
//! is a constant `J`, with `s = 1` when the shear term is present and `s = 0`
//! for the surface-tension-only equation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::galerkin::{real_matrix, LinearisedFlux};
use crate::models::{flux_field, FluxCoeffs};
use crate::spectral::SpectralField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteadyVariant {
    WithShear,
    SurfaceTensionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    /// prescribed flux `J`
    GivenJ(f64),
    /// prescribed mean; `J` becomes an unknown
    GivenMean(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyProblem {
    pub variant: SteadyVariant,
    pub constraint: Constraint,
    pub wave_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Constant,
    CircularFamily,
    Nonconstant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub h: SpectralField,
    pub j: f64,
    pub wave_speed: f64,
    pub residual_norm: f64,
    pub classification: Classification,
    pub iterations: usize,
}

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_ITER: usize = 50;

fn coeffs_of(variant: SteadyVariant, c: f64) -> FluxCoeffs {
    FluxCoeffs {
        p: -c,
        q: match variant {
            SteadyVariant::WithShear => 1.0,
            SteadyVariant::SurfaceTensionOnly => 0.0,
        },
        kappa: 1.0,
    }
}

/// `F(h)` as a field; `h` is steady or travelling iff it is constant.
pub fn flux(variant: SteadyVariant, c: f64, h: &SpectralField) -> SpectralField {
    flux_field(&coeffs_of(variant, c), h)
}

pub fn classify(h: &SpectralField) -> Classification {
    if h.max_coeff_from(1) <= 1e-12 {
        Classification::Constant
    } else if h.max_coeff_from(2) <= 1e-10 {
        Classification::CircularFamily
    } else {
        Classification::Nonconstant
    }
}

fn residual_field(variant: SteadyVariant, c: f64, h: &SpectralField, j: f64) -> SpectralField {
    flux(variant, c, h).add_constant(-j)
}

/// The constant steady state `h ≡ √(2J)` of the sheared equation.
pub fn constant_branch(j: f64, order: usize) -> Result<SteadySolution> {
    if !(j > 0.0) {
        return Err(Error::NoPositiveSolution { j });
    }
    let h = SpectralField::constant(order, (2.0 * j).sqrt());
    let residual_norm = residual_field(SteadyVariant::WithShear, 0.0, &h, j).l2_norm();
    Ok(SteadySolution {
        h,
        j,
        wave_speed: 0.0,
        residual_norm,
        classification: Classification::Constant,
        iterations: 0,
    })
}

/// `c₁ + c₂ sin(θ − θ₀)`, steady for the surface-tension-only equation with `J = 0`.
pub fn circular_family(c1: f64, c2: f64, theta0: f64, order: usize) -> Result<SteadySolution> {
    if !(c1 > 0.0) || c2.abs() >= c1 {
        return Err(Error::NotPositive { c1, c2 });
    }
    let h = if c2 == 0.0 {
        SpectralField::constant(order, c1)
    } else {
        SpectralField::from_modes(order, c1, &[(1, c2, -theta0 - PI / 2.0)])?
    };
    let residual_norm = residual_field(SteadyVariant::SurfaceTensionOnly, 0.0, &h, 0.0).l2_norm();
    let classification = classify(&h);
    Ok(SteadySolution {
        h,
        j: 0.0,
        wave_speed: 0.0,
        residual_norm,
        classification,
        iterations: 0,
    })
}

/// `J(h*) = −c h* + h*²/2` and the other root `2c − h*` of `−c x + x²/2 = J`.
pub fn travelling_wave_j(h_star: f64, c: f64) -> (f64, f64) {
    (-c * h_star + 0.5 * h_star * h_star, 2.0 * c - h_star)
}

fn pack_full(h: &SpectralField) -> DVector<f64> {
    let n = h.order();
    let mut v = DVector::zeros(2 * n + 1);
    v[0] = h.mean();
    for k in 1..=n {
        let a = h.coeff(k as i64);
        v[k] = a.re;
        v[k + n] = a.im;
    }
    v
}

fn unpack_full(order: usize, v: &DVector<f64>) -> SpectralField {
    let mut h = SpectralField::constant(order, v[0]);
    for k in 1..=order {
        h.set_mode(k as i64, Complex64::new(v[k], v[k + order]));
    }
    h
}

/// Newton (Gauss–Newton with an SVD pseudo-inverse) on the Fourier
/// coefficients of `F(h) − J`, bordered by the mean constraint and, when
/// rotations are symmetries of the solution set, a phase condition
/// `Im(a₁ e^{−iφ_ref}) = 0` with `φ_ref` taken from the initial guess.
pub fn newton_solve(problem: &SteadyProblem, h_init: &SpectralField) -> Result<SteadySolution> {
    let n = h_init.order();
    if n == 0 {
        return Err(invalid("order", "need at least one Fourier mode"));
    }
    let fc = coeffs_of(problem.variant, problem.wave_speed);
    let (j_fixed, mean_target) = match problem.constraint {
        Constraint::GivenJ(j) => (Some(j), None),
        Constraint::GivenMean(m) => (None, Some(m)),
    };
    let a1 = h_init.coeff(1);
    let phase_ref = if a1.norm() > 1e-14 { a1.arg() } else { 0.0 };
    let pin_phase = problem.variant == SteadyVariant::SurfaceTensionOnly;

    let core = 2 * n + 1;
    let cols = core + usize::from(j_fixed.is_none());
    let rows = core + usize::from(mean_target.is_some()) + usize::from(pin_phase);

    let mut x = DVector::zeros(cols);
    x.rows_mut(0, core).copy_from(&pack_full(h_init));
    if j_fixed.is_none() {
        x[core] = flux(problem.variant, problem.wave_speed, h_init).mean();
    }

    let eval = |x: &DVector<f64>| -> (SpectralField, f64, DVector<f64>) {
        let h = unpack_full(n, &x.rows(0, core).into_owned());
        let j = j_fixed.unwrap_or_else(|| x[core]);
        let r = residual_field(problem.variant, problem.wave_speed, &h, j);
        let mut out = DVector::zeros(rows);
        out.rows_mut(0, core).copy_from(&pack_full(&r));
        let mut row = core;
        if let Some(m) = mean_target {
            out[row] = h.mean() - m;
            row += 1;
        }
        if pin_phase {
            let a = h.coeff(1);
            out[row] = a.im * phase_ref.cos() - a.re * phase_ref.sin();
        }
        (h, j, out)
    };
    // scaled so that |res| matches the L² norm of the residual field
    let norm_of = |res: &DVector<f64>| -> f64 {
        let mut s = res[0] * res[0];
        for i in 1..core {
            s += 2.0 * res[i] * res[i];
        }
        for i in core..rows {
            s += res[i] * res[i];
        }
        (2.0 * PI * s).sqrt()
    };

    let (mut h, _, mut res) = eval(&x);
    let mut rnorm = norm_of(&res);
    let mut polished = false;
    for iter in 1..=MAX_ITER {
        if !rnorm.is_finite() {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: rnorm,
            });
        }
        let lin = LinearisedFlux::new(&fc, &h);
        let jf = real_matrix(n, true, true, |a, b| lin.flux_entry(a, b));
        let mut jac = DMatrix::zeros(rows, cols);
        jac.view_mut((0, 0), (core, core)).copy_from(&jf);
        if j_fixed.is_none() {
            jac[(0, core)] = -1.0;
        }
        let mut row = core;
        if mean_target.is_some() {
            jac[(row, 0)] = 1.0;
            row += 1;
        }
        if pin_phase {
            jac[(row, 1)] = -phase_ref.sin();
            jac[(row, 1 + n)] = phase_ref.cos();
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::SingularJacobian { sigma: smax });
        }
        let step = svd
            .solve(&res, 1e-10 * smax)
            .map_err(|_| Error::SingularJacobian { sigma: 0.0 })?;
        x -= step;
        let j;
        (h, j, res) = eval(&x);
        rnorm = norm_of(&res);
        if rnorm <= RESIDUAL_TOL {
            if polished {
                let classification = classify(&h);
                return Ok(SteadySolution {
                    h,
                    j,
                    wave_speed: problem.wave_speed,
                    residual_norm: rnorm,
                    classification,
                    iterations: iter,
                });
            }
            polished = true;
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        residual: rnorm,
    })
}

/// Outcome of [`uniqueness_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub converged: usize,
    /// trials that ended at the outcome predicted near constants: the
    /// constant `h*` itself, or (without shear) any member of the circle family
    pub expected: usize,
    pub fraction_expected: f64,
    /// largest perturbation amplitude (over a bisection in `[amplitude, h*)`)
    /// for which every probe direction still gave the expected outcome
    pub max_basin_amplitude: f64,
}

fn perturbation(order: usize, seed: u64, trial: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut p = SpectralField::zeros(order);
    for k in 1..=order.min(4) {
        let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        p.set_mode(k as i64, z);
    }
    let sup = p
        .to_grid(64)
        .into_iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    p.scale(1.0 / sup)
}

fn expected_outcome(problem: &SteadyProblem, h_star: f64, sol: &SteadySolution) -> bool {
    let at_star = (sol.h.mean() - h_star).abs() <= 1e-8;
    match problem.variant {
        SteadyVariant::WithShear => sol.classification == Classification::Constant && at_star,
        SteadyVariant::SurfaceTensionOnly => {
            sol.classification != Classification::Nonconstant
                && sol.j.abs() <= 1e-10
                && sol.h.coeff(1).norm() * 2.0 < sol.h.mean()
        }
    }
}

/// Newton runs from random perturbations of the constant `h*`.
///
/// Trial `i` draws its perturbation from the ChaCha8 stream `i` of `seed`,
/// so results do not depend on scheduling. Trials run in parallel.
pub fn uniqueness_probe(
    problem: &SteadyProblem,
    h_star: f64,
    amplitude: f64,
    trials: usize,
    seed: u64,
    order: usize,
) -> Result<ProbeReport> {
    if !(amplitude > 0.0 && amplitude < h_star) {
        return Err(invalid("amplitude", "need 0 < amplitude < h_star"));
    }
    let run = |trial: usize, amp: f64| -> Option<SteadySolution> {
        let p = perturbation(order, seed, trial as u64);
        let h0 = p.scale(amp).add_constant(h_star);
        newton_solve(problem, &h0).ok()
    };
    let outcomes: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|i| run(i, amplitude).map(|s| expected_outcome(problem, h_star, &s)))
        .collect();
    let converged = outcomes.iter().filter(|o| o.is_some()).count();
    let expected = outcomes.iter().filter(|o| **o == Some(true)).count();

    let probes = trials.min(8);
    let all_ok = |amp: f64| {
        (0..probes)
            .into_par_iter()
            .all(|i| run(i, amp).is_some_and(|s| expected_outcome(problem, h_star, &s)))
    };
    let mut basin = 0.0;
    if probes > 0 && all_ok(amplitude) {
        let (mut lo, mut hi) = (amplitude, h_star);
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if all_ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        basin = lo;
    }
    Ok(ProbeReport {
        trials,
        converged,
        expected,
        fraction_expected: if trials == 0 {
            0.0
        } else {
            expected as f64 / trials as f64
        },
        max_basin_amplitude: basin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_examples() {
        let h = SpectralField::constant(8, 2.0);
        let f = flux(SteadyVariant::WithShear, 0.0, &h);
        assert!((f.mean() - 2.0).abs() < 1e-14 && f.max_coeff_from(1) < 1e-15);
        let s = SpectralField::from_modes(8, 1.0, &[(1, 0.5, -PI / 2.0)]).unwrap();
        assert!(flux(SteadyVariant::SurfaceTensionOnly, 0.0, &s).l2_norm() < 1e-14);
        let f = flux(SteadyVariant::WithShear, 1.0, &h);
        assert!(f.l2_norm() < 1e-14);
    }

    #[test]
    fn constant_branch_examples() {
        let s = constant_branch(2.0, 8).unwrap();
        assert!((s.h.mean() - 2.0).abs() < 1e-15 && s.residual_norm <= 1e-13);
        assert!((constant_branch(0.5, 8).unwrap().h.mean() - 1.0).abs() < 1e-15);
        assert!(matches!(
            constant_branch(-1.0, 8),
            Err(Error::NoPositiveSolution { .. })
        ));
        assert!(matches!(
            constant_branch(0.0, 8),
            Err(Error::NoPositiveSolution { .. })
        ));
    }

    #[test]
    fn circular_family_examples() {
        let s = circular_family(1.0, 0.5, 0.0, 16).unwrap();
        assert!(s.residual_norm <= 1e-13 && s.j == 0.0);
        assert_eq!(s.classification, Classification::CircularFamily);
        assert!((s.h.eval(PI / 2.0) - 1.5).abs() < 1e-14);
        let c = circular_family(1.0, 0.0, 3.0, 16).unwrap();
        assert_eq!(c.classification, Classification::Constant);
        assert!(matches!(
            circular_family(1.0, 1.2, 0.0, 16),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn travelling_wave_j_examples() {
        assert_eq!(travelling_wave_j(2.0, 1.0), (0.0, 0.0));
        let (j, other) = travelling_wave_j(0.8, 1.0);
        assert!((j + 0.48).abs() < 1e-15 && (other - 1.2).abs() < 1e-15);
        let (j, other) = travelling_wave_j(1.5, 1.5);
        assert!((j + 1.125).abs() < 1e-15 && (other - 1.5).abs() < 1e-15);
    }

    #[test]
    fn newton_examples() {
        let p = SteadyProblem {
            variant: SteadyVariant::WithShear,
            constraint: Constraint::GivenJ(2.0),
            wave_speed: 0.0,
        };
        let h0 = SpectralField::from_modes(16, 2.0, &[(2, 0.1, 0.0)]).unwrap();
        let s = newton_solve(&p, &h0).unwrap();
        assert_eq!(s.classification, Classification::Constant);
        assert!((s.h.mean() - 2.0).abs() < 1e-12 && s.residual_norm <= 1e-10);

        let p = SteadyProblem {
            variant: SteadyVariant::SurfaceTensionOnly,
            constraint: Constraint::GivenMean(1.0),
            wave_speed: 0.0,
        };
        let h0 = SpectralField::from_modes(16, 1.0, &[(1, 0.3, -0.7 - PI / 2.0), (2, 0.01, 0.0)])
            .unwrap();
        let s = newton_solve(&p, &h0).unwrap();
        assert_eq!(s.classification, Classification::CircularFamily);
        assert!((s.h.mean() - 1.0).abs() < 1e-12);
        assert!(s.h.max_coeff_from(2) <= 1e-10 && s.j.abs() <= 1e-12);

        let p = SteadyProblem {
            variant: SteadyVariant::WithShear,
            constraint: Constraint::GivenMean(2.0),
            wave_speed: 1.0,
        };
        let h0 = SpectralField::from_modes(16, 2.0, &[(1, 0.05, 0.0)]).unwrap();
        let s = newton_solve(&p, &h0).unwrap();
        assert_eq!(s.classification, Classification::Constant);
        assert!((s.h.mean() - 2.0).abs() < 1e-12 && s.j.abs() < 1e-12);
    }

    #[test]
    fn probe_is_reproducible() {
        let p = SteadyProblem {
            variant: SteadyVariant::WithShear,
            constraint: Constraint::GivenJ(1.0),
            wave_speed: 0.0,
        };
        let a = uniqueness_probe(&p, 2f64.sqrt(), 0.01, 20, 7, 16).unwrap();
        let b = uniqueness_probe(&p, 2f64.sqrt(), 0.01, 20, 7, 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.expected, 20);
        assert!(a.max_basin_amplitude >= 0.01);
    }
}
