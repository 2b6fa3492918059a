//! Property tests of the structural invariants: collision kinematics,
//! interpolation, the exponential-step factor, entropy conventions and the
//! deterministic output formats.

use proptest::prelude::*;
use rqboltz::collision::interpolate_offgrid;
use rqboltz::diagnostics::{decay_rate_fit, DiagnosticsRecord};
use rqboltz::equilibrium::StatisticsKind;
use rqboltz::grid::MomentumGrid;
use rqboltz::kinematics::{
    com_post_momenta, cross_section, minkowski_product, moller_velocity, relative_momentum,
    relative_quantities, CollisionGeometry, FourMomentum,
};
use rqboltz::snapshot::Snapshot;
use rqboltz::solver::phi_factor;

fn momentum_strategy(scale: f64) -> impl Strategy<Value = FourMomentum> {
    (-scale..scale, -scale..scale, -scale..scale)
        .prop_map(|(x, y, z)| FourMomentum::new([x, y, z]))
}

fn geometry_strategy() -> impl Strategy<Value = CollisionGeometry> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU)
        .prop_map(|(ct, phi)| CollisionGeometry::from_angles(ct.acos(), phi))
}

proptest! {
    #[test]
    fn com_map_conserves_and_satisfies_pair_identities(
        p in momentum_strategy(10.0),
        q in momentum_strategy(10.0),
        geom in geometry_strategy(),
    ) {
        let quad = com_post_momenta(&p, &q, &geom).unwrap();
        let scale = p.energy() + q.energy();
        for d in 0..3 {
            let lhs = p.spatial()[d] + q.spatial()[d];
            let rhs = quad.p_prime.spatial()[d] + quad.q_prime.spatial()[d];
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        }
        prop_assert!(
            (p.energy() + q.energy() - quad.p_prime.energy() - quad.q_prime.energy()).abs()
                <= 1e-10 * scale
        );
        let g = relative_momentum(&p, &q).unwrap();
        let g_post = relative_momentum(&quad.p_prime, &quad.q_prime).unwrap();
        prop_assert!((g - g_post).abs() <= 1e-10 * scale);
        let gbar = relative_momentum(&p, &quad.p_prime).unwrap();
        let gtilde = relative_momentum(&p, &quad.q_prime).unwrap();
        prop_assert!((g * g - gbar * gbar - gtilde * gtilde).abs() <= 1e-10 * scale * scale);
    }

    #[test]
    fn relative_quantities_identity(
        p in momentum_strategy(10.0),
        q in momentum_strategy(10.0),
    ) {
        let (s, g) = relative_quantities(&p, &q).unwrap();
        prop_assert!(s >= 4.0 - 1e-10);
        prop_assert!((s - g * g - 4.0).abs() <= 1e-10 * s);
        prop_assert_eq!(minkowski_product(&p, &q).to_bits(), minkowski_product(&q, &p).to_bits());
    }

    #[test]
    fn moller_velocity_bounded_and_symmetric(
        p in momentum_strategy(10.0),
        q in momentum_strategy(10.0),
    ) {
        let v = moller_velocity(&p, &q);
        // Bounded by the sum of sub-light speeds.
        prop_assert!((0.0..2.0).contains(&v));
        prop_assert!((v - moller_velocity(&q, &p)).abs() <= 1e-12);
    }

    #[test]
    fn cross_section_nonnegative_and_mirror_symmetric(
        g in 0.0f64..10.0,
        theta in 0.0f64..std::f64::consts::PI,
    ) {
        let a = cross_section(g, theta);
        prop_assert!(a >= -1e-15);
        let b = cross_section(g, std::f64::consts::PI - theta);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn interpolation_stays_within_bounds(
        values in proptest::collection::vec(0.0f64..1.0, 216),
        x in -5.0f64..5.0,
        y in -5.0f64..5.0,
        z in -5.0f64..5.0,
    ) {
        let grid = MomentumGrid::new(4.0, 6).unwrap();
        let v = interpolate_offgrid(&values, &grid, StatisticsKind::Fermion, &[x, y, z]);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn phi_factor_nonnegative_and_bounded(
        lambda in -50.0f64..500.0,
        dt in 1e-6f64..10.0,
    ) {
        let phi = phi_factor(lambda, dt);
        prop_assert!(phi >= 0.0);
        // For nonnegative rates the factor never exceeds the step.
        if lambda >= 0.0 {
            prop_assert!(phi <= dt * (1.0 + 1e-12));
        }
        // Exponential-step consistency: e^{-lambda dt} + lambda phi = 1.
        // The subtraction loses precision like e^{|lambda| dt}, so the
        // check is only meaningful at moderate exponents.
        if lambda * dt > -30.0 {
            let residual = (-lambda * dt).exp() + lambda * phi - 1.0;
            prop_assert!(residual.abs() <= 1e-9 * (1.0 + (lambda * dt).abs().exp()));
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact(
        raw in proptest::collection::vec(-1e3f64..1e3, 64),
        time in 0.0f64..100.0,
    ) {
        let snap = Snapshot {
            stats: StatisticsKind::Boson,
            a: 1.5,
            c: 0.25,
            dims: [4, 4, 4],
            pmax: 3.0,
            nx: 1,
            time,
            values: raw,
        };
        let mut bytes = Vec::new();
        snap.write_to(&mut bytes).unwrap();
        let back = Snapshot::read_from(bytes.as_slice()).unwrap();
        for (a, b) in back.values.iter().zip(snap.values.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.time.to_bits(), snap.time.to_bits());
    }

    #[test]
    fn csv_round_trip_is_bit_exact(
        mass in -1e6f64..1e6,
        l2 in 0.0f64..1e3,
        h in -1e3f64..0.0,
    ) {
        let rec = DiagnosticsRecord {
            t: 0.5,
            mass,
            momentum: [mass * 1e-7, -mass * 1e-9, 0.0],
            energy: mass * 3.17,
            h,
            l2_f: l2,
            nu_norm_f: l2 * 33.0,
            min_f: 0.0,
            max_f: 1.0,
        };
        let mut buf = Vec::new();
        rqboltz::csvio::write_diagnostics_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = rqboltz::csvio::parse_diagnostics_csv(&text).unwrap();
        prop_assert_eq!(back[0].mass.to_bits(), rec.mass.to_bits());
        prop_assert_eq!(back[0].energy.to_bits(), rec.energy.to_bits());
        prop_assert_eq!(back[0].h.to_bits(), rec.h.to_bits());
    }

    #[test]
    fn decay_fit_shift_and_scale_invariant(
        rate in 0.05f64..3.0,
        amp in 0.1f64..10.0,
        shift in 0.0f64..50.0,
    ) {
        let series: Vec<(f64, f64)> =
            (0..40).map(|k| (0.25 * k as f64, amp * (-rate * 0.25 * k as f64).exp())).collect();
        let fit = decay_rate_fit(&series, 0.1).unwrap();
        prop_assert!((fit.epsilon - rate).abs() <= 1e-9 * rate);
        let moved: Vec<(f64, f64)> =
            series.iter().map(|&(t, v)| (t + shift, 5.0 * v)).collect();
        let fit2 = decay_rate_fit(&moved, 0.1).unwrap();
        prop_assert!((fit2.epsilon - fit.epsilon).abs() <= 1e-9 * rate);
    }
}
