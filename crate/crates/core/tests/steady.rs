use std::f64::consts::PI;

use proptest::prelude::*;

use tfilm_core::steady::{
    circular_family, classify, constant_branch, flux, newton_solve, travelling_wave_j,
    uniqueness_probe, Classification, Constraint, SteadyProblem, SteadyVariant,
};
use tfilm_core::SpectralField;

fn tension_only() -> SteadyProblem {
    SteadyProblem {
        variant: SteadyVariant::SurfaceTensionOnly,
        constraint: Constraint::GivenMean(1.0),
        wave_speed: 0.0,
    }
}

#[test]
fn newton_commutes_with_rotations() {
    let h0 =
        SpectralField::from_modes(16, 1.0, &[(1, 0.3, 0.4), (2, 0.02, 1.0), (3, 0.01, -0.5)])
            .unwrap();
    let base = newton_solve(&tension_only(), &h0).unwrap();
    assert_eq!(base.classification, Classification::CircularFamily);
    for phi in [0.3, 1.7, -2.9] {
        let rotated = newton_solve(&tension_only(), &h0.shift(phi)).unwrap();
        assert!((&rotated.h - &base.h.shift(phi)).l2_norm() <= 1e-10);
        assert!((rotated.j - base.j).abs() <= 1e-12);
    }
}

#[test]
fn newton_recovers_constant_and_travelling_states() {
    let shear = SteadyProblem {
        variant: SteadyVariant::WithShear,
        constraint: Constraint::GivenJ(2.0),
        wave_speed: 0.0,
    };
    let h0 = SpectralField::from_modes(16, 2.0, &[(1, 0.01, 0.0), (2, 0.005, 1.0)]).unwrap();
    let s = newton_solve(&shear, &h0).unwrap();
    assert_eq!(s.classification, Classification::Constant);
    assert!((s.h.mean() - 2.0).abs() <= 1e-10 && s.residual_norm <= 1e-10);

    let (j, other) = travelling_wave_j(1.5, 0.4);
    assert!((other - (0.8 - 1.5)).abs() < 1e-15);
    let travel = SteadyProblem {
        variant: SteadyVariant::WithShear,
        constraint: Constraint::GivenJ(j),
        wave_speed: 0.4,
    };
    let h0 = SpectralField::from_modes(16, 1.5, &[(1, 0.01, 0.3)]).unwrap();
    let s = newton_solve(&travel, &h0).unwrap();
    assert!((s.h.mean() - 1.5).abs() <= 1e-10);
    assert!(flux(SteadyVariant::WithShear, 0.4, &s.h).add_constant(-j).l2_norm() <= 1e-10);
}

#[test]
fn probe_is_reproducible() {
    let a = uniqueness_probe(&tension_only(), 1.0, 0.01, 12, 7, 12).unwrap();
    let b = uniqueness_probe(&tension_only(), 1.0, 0.01, 12, 7, 12).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.expected, 12);
    assert!(a.max_basin_amplitude >= 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_branch_solves(j in 1e-3f64..50.0) {
        let s = constant_branch(j, 16).unwrap();
        prop_assert!(s.residual_norm <= 1e-13 * (1.0 + j));
        prop_assert!((0.5 * s.h.mean() * s.h.mean() - j).abs() <= 1e-13 * (1.0 + j));
    }

    #[test]
    fn circle_family_solves(c1 in 0.1f64..5.0, frac in -0.99f64..0.99, th in -PI..PI) {
        let s = circular_family(c1, frac * c1, th, 16).unwrap();
        prop_assert!(s.residual_norm <= 1e-13 * (1.0 + c1.powi(4)));
        prop_assert!((s.h.eval(th + PI / 2.0) - c1 - frac * c1).abs() <= 1e-13 * c1);
    }

    #[test]
    fn rotated_circles_stay_in_the_family(c2 in 0.01f64..0.9, phi in 0.0f64..6.28) {
        let s = circular_family(1.0, c2, 0.0, 16).unwrap();
        let h = s.h.shift(phi);
        prop_assert_eq!(classify(&h), Classification::CircularFamily);
        prop_assert!(flux(SteadyVariant::SurfaceTensionOnly, 0.0, &h).l2_norm() <= 1e-13);
    }
}
