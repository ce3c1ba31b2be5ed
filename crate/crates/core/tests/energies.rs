use kfl_core::families::{potential, Family};
use kfl_core::functionals::{
    aubin_sandwich_holds, energy_report, k_energy_boundary, k_energy_with, ReportOptions,
};
use kfl_core::grid::Domain;
use kfl_core::io::{read_potential, write_potential};
use kfl_core::logspace::XOptions;
use kfl_core::metric::am_difference_kahler;
use kfl_core::potential::geodesic;

#[test]
fn am_difference_matches_the_kahler_route_on_p1() {
    let d = Domain::named("p1", 4097).unwrap();
    let x = XOptions::default_for(1);
    for seed in 0..20 {
        let u = potential(&d, Family::Bumps, seed, false).unwrap();
        let v = potential(&d, Family::Quadratic, seed + 50, false).unwrap();
        let sym = u.am() - v.am();
        let kah = am_difference_kahler(&u, &v, x).unwrap();
        assert!(
            (kah - sym).abs() <= 1e-4 * sym.abs().max(1e-2),
            "seed {seed}: {kah} vs {sym}"
        );
    }
}

#[test]
fn am_is_affine_along_geodesics() {
    let d = Domain::named("dp1", 65).unwrap();
    let (u0, u1) = (
        potential(&d, Family::Bumps, 3, false).unwrap(),
        potential(&d, Family::Bumps, 4, false).unwrap(),
    );
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let mid = geodesic(&u0, &u1, t).unwrap().am();
        assert!((mid - ((1.0 - t) * u0.am() + t * u1.am())).abs() <= 1e-10);
    }
}

#[test]
fn reports_satisfy_the_sandwich_and_a_uniform_green_gap() {
    let d = Domain::named("p1", 2049).unwrap();
    let mut worst_gap: f64 = 0.0;
    for f in [Family::Bumps, Family::Quadratic, Family::Symmetric] {
        for seed in 0..6 {
            let u = potential(&d, f, seed, true).unwrap();
            let r = energy_report(&u, &ReportOptions::default()).unwrap();
            assert!(r.j.unwrap() >= -1e-12);
            assert!(aubin_sandwich_holds(&r, 1, 1e-9));
            let gap = r.sup_phi - r.mean_phi;
            assert!(gap >= -1e-9);
            worst_gap = worst_gap.max(gap);
        }
    }
    assert!(worst_gap.is_finite() && worst_gap < 10.0);
}

#[test]
fn k_energy_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = Domain::named("dp3", 65).unwrap();
    let u = potential(&d, Family::Quadratic, 8, true).unwrap();
    let path = dir.path().join("u.json");
    write_potential(&path, &u).unwrap();
    let back = read_potential(&path).unwrap();
    let x = XOptions::coarse(2);
    assert_eq!(
        k_energy_with(&u, x).unwrap().to_bits(),
        k_energy_with(&back, x).unwrap().to_bits()
    );
    let oracle = k_energy_boundary(&back).unwrap();
    assert!((k_energy_with(&back, x).unwrap() - oracle).abs() <= 2e-2 * oracle.abs().max(1e-2));
}
