use num_complex::Complex64;
use proptest::prelude::*;

use tfilm_core::{NormKind, SobolevIndex, SpectralField};

fn field(order: usize, mean: f64, amps: &[(f64, f64)]) -> SpectralField {
    let mut h = SpectralField::constant(order, mean);
    for (k, &(re, im)) in amps.iter().enumerate().take(order) {
        h.set_mode(k as i64 + 1, Complex64::new(re, im));
    }
    h
}

fn amps() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..8)
}

proptest! {
    #[test]
    fn snapshots_round_trip(a in amps(), mean in -3.0f64..3.0) {
        let h = field(8, mean, &a);
        let mut buf = Vec::new();
        h.write_snapshot(&mut buf).unwrap();
        let back = SpectralField::read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn products_match_grid_products(a in amps(), b in amps()) {
        // both factors of order 4 fit in order 8 without truncation
        let f = field(4, 0.5, &a).with_order(8);
        let g = field(4, -0.2, &b).with_order(8);
        let fg = f.multiply(&g).unwrap();
        let m = 64;
        let (gf, gg, gp) = (f.to_grid(m), g.to_grid(m), fg.to_grid(m));
        for i in 0..m {
            prop_assert!((gf[i] * gg[i] - gp[i]).abs() <= 1e-13);
        }
        prop_assert!((&fg - &g.multiply(&f).unwrap()).l2_norm() <= 1e-15);
    }

    #[test]
    fn shifts_compose_and_commute_with_derivatives(a in amps(), p in -4.0f64..4.0, q in -4.0f64..4.0) {
        let h = field(8, 1.0, &a);
        prop_assert!((&h.shift(p).shift(q) - &h.shift(p + q)).l2_norm() <= 1e-13);
        prop_assert!((&h.shift(p).derivative(3) - &h.derivative(3).shift(p)).l2_norm() <= 1e-11);
        prop_assert!((h.shift(p).eval(0.7 + p) - h.eval(0.7)).abs() <= 1e-12);
    }

    #[test]
    fn parseval(a in amps(), mean in -2.0f64..2.0) {
        let h = field(8, mean, &a);
        let m = 64;
        let grid = h.to_grid(m);
        let quad = (2.0 * std::f64::consts::PI / m as f64 * grid.iter().map(|v| v * v).sum::<f64>()).sqrt();
        prop_assert!((quad - h.l2_norm()).abs() <= 1e-12 * (1.0 + quad));
        let h0 = h.sobolev_norm(SobolevIndex(0), NormKind::Full).unwrap();
        prop_assert!((h0 - h.l2_norm()).abs() <= 1e-12 * (1.0 + h0));
    }

    #[test]
    fn projections_split_fields(a in amps(), mean in -2.0f64..2.0) {
        let h = field(8, mean, &a);
        let sum = &(&h.project_p0() + &h.project_p1()) + &h.mean_field();
        prop_assert!((&sum - &h).l2_norm() <= 1e-15);
        prop_assert_eq!(h.project_p0().project_p1().l2_norm(), 0.0);
        prop_assert!(h.reality_defect() == 0.0);
    }
}
