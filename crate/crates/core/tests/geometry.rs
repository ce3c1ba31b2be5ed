use kfl_core::duality::{dual_axes, rooftop_dual_residual};
use kfl_core::families::{potential, Family};
use kfl_core::grid::Domain;
use kfl_core::metric::{d1_l1, d1_with, DistanceOptions};
use kfl_core::potential::{
    geodesic, rooftop_envelope, torus_act, AffineFunction, SymplecticPotential,
};
use kfl_core::quotient::{d1_quotient, d1_quotient_normalized};
use kfl_core::{build_polytope, Error, Facet};
use proptest::prelude::*;

#[test]
fn non_unimodular_triangle_is_rejected() {
    let r = build_polytope(&[
        Facet::new(&[1, 0], 0.0),
        Facet::new(&[0, 1], 0.0),
        Facet::new(&[-1, -2], 2.0),
    ]);
    assert!(matches!(r, Err(Error::NotDelzant(_))));
}

#[test]
fn group_law_and_identity() {
    let d = Domain::named("dp3", 33).unwrap();
    let u = potential(&d, Family::Bumps, 2, false).unwrap();
    assert_eq!(
        torus_act(&u, &AffineFunction::identity()).values(),
        u.values()
    );
    let (g, h) = (
        AffineFunction::new([0.3, -0.2], 0.1),
        AffineFunction::new([-1.1, 0.4], -0.5),
    );
    let two = torus_act(&torus_act(&u, &h), &g);
    let one = torus_act(&u, &g.compose(&h));
    assert!(d1_l1(&one, &two).unwrap() <= 1e-14);
}

#[test]
fn geodesic_reparametrization_is_exact() {
    let d = Domain::named("dp3", 65).unwrap();
    let (u0, u1) = (
        potential(&d, Family::Bumps, 1, true).unwrap(),
        potential(&d, Family::Quadratic, 9, true).unwrap(),
    );
    let (a, b) = (0.25, 0.75);
    let (ua, ub) = (
        geodesic(&u0, &u1, a).unwrap(),
        geodesic(&u0, &u1, b).unwrap(),
    );
    for lambda in [0.0, 0.5, 1.0] {
        let direct = geodesic(&u0, &u1, (1.0 - lambda) * a + lambda * b).unwrap();
        let inner = geodesic(&ua, &ub, lambda).unwrap();
        let gap = direct
            .values()
            .iter()
            .zip(inner.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-14, "{gap}");
    }
}

#[test]
fn rooftop_duality_on_sampled_pairs() {
    let d = Domain::named("dp3", 33).unwrap();
    // wide enough to hold every discrete slope of the 33-node grid
    let axes = dual_axes(2, 12.0, 241);
    for seed in 0..4 {
        let u = potential(&d, Family::Quadratic, seed, false).unwrap();
        let v = potential(&d, Family::Quadratic, seed + 100, false).unwrap();
        let r = rooftop_dual_residual(&u, &v, &axes).unwrap();
        assert!(r <= 1e-5, "seed {seed}: {r}");
    }
}

#[test]
fn monotone_sequence_converges_in_d1() {
    let d = Domain::named("p2", 65).unwrap();
    let limit = SymplecticPotential::from_fn(&d, |y| 0.2 * (y[0] * y[0] + y[1] * y[1])).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=8 {
        let eps = 1.0 / (k * k) as f64;
        let uk = SymplecticPotential::from_fn(&d, |y| {
            0.2 * (y[0] * y[0] + y[1] * y[1]) + eps * (1.0 + 0.1 * y[0])
        })
        .unwrap();
        let dk = d1_l1(&uk, &limit).unwrap();
        assert!(dk < last);
        last = dk;
    }
    assert!(last < 0.02);
}

#[test]
fn pythagorean_route_through_the_rooftop() {
    let d = Domain::named("p1xp1", 129).unwrap();
    let u = potential(&d, Family::Bumps, 4, true).unwrap();
    let v = potential(&d, Family::Bumps, 5, true).unwrap();
    let r = d1_with(&u, &v, &DistanceOptions::default()).unwrap();
    let roof = rooftop_envelope(&u, &v).unwrap();
    // d(u, v) = d(u, P) + d(P, v) for the rooftop
    let split = d1_l1(&u, &roof).unwrap() + d1_l1(&roof, &v).unwrap();
    assert!((split - r.d1_l1).abs() <= 1e-12);
    assert!(r.agreement <= 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quotient_ignores_the_action_on_either_side(s in 0u64..1000, b in proptest::array::uniform3(-1.5f64..1.5)) {
        let d = Domain::named("dp3", 33).unwrap();
        let u = potential(&d, Family::Bumps, s, true).unwrap();
        let v = potential(&d, Family::Quadratic, s + 1, true).unwrap();
        let g = AffineFunction::new([b[0], b[1]], b[2]);
        let q = d1_quotient(&u, &v).unwrap().value;
        prop_assert!((d1_quotient(&torus_act(&u, &g), &v).unwrap().value - q).abs() <= 1e-8);
        prop_assert!((d1_quotient(&u, &torus_act(&v, &g)).unwrap().value - q).abs() <= 1e-8);
        let qn = d1_quotient_normalized(&u, &v).unwrap().value;
        prop_assert!(q <= qn + 1e-12 && qn <= d1_l1(&u, &v).unwrap() + 1e-12);
    }

    #[test]
    fn triangle_inequality_on_triples(s in 0u64..10_000) {
        let d = Domain::named("dp1", 33).unwrap();
        let p: Vec<_> = (0..3).map(|k| potential(&d, Family::Bumps, 3 * s + k, true).unwrap()).collect();
        let ab = d1_l1(&p[0], &p[1]).unwrap();
        prop_assert_eq!(ab, d1_l1(&p[1], &p[0]).unwrap());
        prop_assert!(ab <= d1_l1(&p[0], &p[2]).unwrap() + d1_l1(&p[2], &p[1]).unwrap() + 1e-8);
    }
}
