//! The d₁ metric on toric potentials by three routes: the L¹ distance of
//! symplectic potentials, the Pythagorean formula through the rooftop
//! envelope, and the length of the discretized geodesic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{LogSpace, XOptions};
use crate::potential::{geodesic, rooftop_envelope, SymplecticPotential};

/// Relative agreement required between the d₁ routes.
pub const ROUTE_TOL: f64 = 1e-3;

/// Segments used by the path-length route.
pub const PATH_SEGMENTS: usize = 32;

/// Distances below this are compared in absolute terms.
const AGREEMENT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub d1_l1: f64,
    pub d1_pythagorean: f64,
    pub d1_pathlength: Option<f64>,
    pub mixed_l1: Option<f64>,
    /// Largest pairwise relative deviation among the d₁ routes.
    pub agreement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceOptions {
    pub path_length: bool,
    pub mixed: Option<XOptions>,
    pub tol: f64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            path_length: true,
            mixed: None,
            tol: ROUTE_TOL,
        }
    }
}

/// `Vol(P)⁻¹ ∫_P |u - v| dy`.
pub fn d1_l1(u: &SymplecticPotential, v: &SymplecticPotential) -> Result<f64> {
    u.same_domain(v)?;
    let (a, b) = (u.values(), v.values());
    Ok(u.domain().mean(|k| (a[k] - b[k]).abs()))
}

/// `AM(u) + AM(v) - 2 AM(P(u, v))`.
pub fn d1_pythagorean(u: &SymplecticPotential, v: &SymplecticPotential) -> Result<f64> {
    let roof = rooftop_envelope(u, v)?;
    Ok(u.am() + v.am() - 2.0 * roof.am())
}

pub fn d1(u: &SymplecticPotential, v: &SymplecticPotential) -> Result<DistanceReport> {
    d1_with(u, v, &DistanceOptions::default())
}

pub fn d1_with(
    u: &SymplecticPotential,
    v: &SymplecticPotential,
    opts: &DistanceOptions,
) -> Result<DistanceReport> {
    let l1 = d1_l1(u, v)?;
    let py = d1_pythagorean(u, v)?;
    let path = if opts.path_length {
        let ts: Vec<f64> = (0..=PATH_SEGMENTS)
            .map(|k| k as f64 / PATH_SEGMENTS as f64)
            .collect();
        let curve = ts
            .iter()
            .map(|&t| geodesic(u, v, t))
            .collect::<Result<Vec<_>>>()?;
        Some(curve_length(&curve, &ts)?)
    } else {
        None
    };
    let mixed = match opts.mixed {
        Some(x) => Some(mixed_l1_with(u, v, x)?),
        None => None,
    };
    let routes: Vec<f64> = [Some(l1), Some(py), path].into_iter().flatten().collect();
    // relative, with an absolute floor so coincident potentials compare as equal
    let scale = routes.iter().copied().fold(AGREEMENT_FLOOR, f64::max);
    let mut agreement: f64 = 0.0;
    for a in &routes {
        for b in &routes {
            agreement = agreement.max((a - b).abs() / scale);
        }
    }
    if agreement > opts.tol {
        return Err(Error::RouteDisagreement(format!(
            "L1 {l1:e}, Pythagorean {py:e}, path {path:?}"
        )));
    }
    Ok(DistanceReport {
        d1_l1: l1,
        d1_pythagorean: py,
        d1_pathlength: path,
        mixed_l1: mixed,
        agreement,
    })
}

/// `V⁻¹ ∫ |φ_u - φ_v| ω_uⁿ + V⁻¹ ∫ |φ_u - φ_v| ω_vⁿ` in log coordinates.
pub fn mixed_l1(u: &SymplecticPotential, v: &SymplecticPotential) -> Result<f64> {
    mixed_l1_with(u, v, XOptions::default_for(u.domain().n()))
}

pub fn mixed_l1_with(
    u: &SymplecticPotential,
    v: &SymplecticPotential,
    opts: XOptions,
) -> Result<f64> {
    u.same_domain(v)?;
    if u == v {
        return Ok(0.0);
    }
    let ls = LogSpace::new(u.domain(), &[u, v], opts)?;
    Ok(ls.mixed_l1(0, 1))
}

/// Kähler-side `AM(φ_u) - AM(φ_v)` from the mixed-measure formula.
pub fn am_difference_kahler(
    u: &SymplecticPotential,
    v: &SymplecticPotential,
    opts: XOptions,
) -> Result<f64> {
    u.same_domain(v)?;
    let ls = LogSpace::new(u.domain(), &[u, v], opts)?;
    Ok(ls.am_difference(0, 1))
}

/// Trapezoid length `Σ_k V⁻¹ ∫ |u_{k+1} - u_k| dy`, exact for curves that are
/// affine in `t` between samples.
pub fn curve_length(curve: &[SymplecticPotential], timestamps: &[f64]) -> Result<f64> {
    if curve.len() < 2 || curve.len() != timestamps.len() {
        return Err(Error::InvalidInput(format!(
            "{} samples with {} timestamps",
            curve.len(),
            timestamps.len()
        )));
    }
    if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::UnsortedTimestamps);
    }
    let mut total = 0.0;
    for w in curve.windows(2) {
        total += d1_l1(&w[0], &w[1])?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::model::ToricModel;
    use crate::polytope::{build_polytope, Facet};
    use crate::potential::torus_act;
    use crate::potential::AffineFunction;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_interval() -> crate::grid::DomainRef {
        let p = build_polytope(&[Facet::new(&[1], 0.0), Facet::new(&[-1], 1.0)]).unwrap();
        Domain::new(ToricModel::new(p), 4097).unwrap()
    }

    #[test]
    fn coincident_potentials_are_at_distance_zero() {
        let d = Domain::named("dp3", 33).unwrap();
        let u = crate::families::potential(&d, crate::families::Family::Bumps, 1, true).unwrap();
        let r = d1(&u, &u).unwrap();
        assert_eq!(r.d1_l1, 0.0);
        assert!(r.agreement <= ROUTE_TOL);
    }

    #[test]
    fn affine_difference_on_the_unit_interval() {
        let d = unit_interval();
        let u = SymplecticPotential::reference(&d);
        let v = SymplecticPotential::from_fn(&d, |y| y[0] - 0.5).unwrap();
        let r = d1(&u, &v).unwrap();
        assert_abs_diff_eq!(r.d1_l1, 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(r.d1_pythagorean, 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(r.d1_pathlength.unwrap(), 0.25, epsilon = 1e-6);
        assert_eq!(d1(&u, &u).unwrap().d1_l1, 0.0);
    }

    #[test]
    fn constant_shift() {
        let d = Domain::named("dp3", 65).unwrap();
        let u = SymplecticPotential::from_fn(&d, |y| 0.2 * y[0] * y[0]).unwrap();
        let v = SymplecticPotential::from_fn(&d, |y| 0.2 * y[0] * y[0] - 0.7).unwrap();
        let r = d1(&u, &v).unwrap();
        assert_abs_diff_eq!(r.d1_l1, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(mixed_l1(&u, &v).unwrap(), 1.4, epsilon = 1e-7);
    }

    #[test]
    fn detour_is_longer_than_the_geodesic() {
        let d = unit_interval();
        let u = SymplecticPotential::reference(&d);
        let v = SymplecticPotential::from_fn(&d, |y| (y[0] - 0.3).powi(2)).unwrap();
        let ts: Vec<f64> = (0..=32).map(|k| k as f64 / 32.0).collect();
        let geo: Vec<_> = ts.iter().map(|&t| geodesic(&u, &v, t).unwrap()).collect();
        let direct = d1_l1(&u, &v).unwrap();
        assert_abs_diff_eq!(curve_length(&geo, &ts).unwrap(), direct, epsilon = 1e-12);
        let detour: Vec<_> = ts
            .iter()
            .map(|&t| {
                SymplecticPotential::from_fn(&d, |y| {
                    t * (y[0] - 0.3).powi(2) + t * (1.0 - t) * (y[0] - 0.5).powi(2)
                })
                .unwrap()
            })
            .collect();
        assert!(curve_length(&detour, &ts).unwrap() > direct + 1e-3);
        assert_eq!(
            curve_length(&geo[..1], &ts[..1]),
            Err(Error::InvalidInput("1 samples with 1 timestamps".into()))
        );
        let mut bad = ts.clone();
        bad.swap(3, 4);
        assert_eq!(curve_length(&geo, &bad), Err(Error::UnsortedTimestamps));
    }

    #[test]
    fn kahler_am_difference_matches_the_polytope() {
        let d = Domain::named("p1", 4097).unwrap();
        let u = SymplecticPotential::from_fn(&d, |y| 0.3 * y[0] * y[0]).unwrap();
        let v = SymplecticPotential::from_fn(&d, |y| 0.1 * y[0].powi(4) - 0.2 * y[0]).unwrap();
        let k = am_difference_kahler(&u, &v, XOptions::default_for(1)).unwrap();
        assert!((k - (u.am() - v.am())).abs() <= 1e-4 * (u.am() - v.am()).abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn metric_axioms(a in proptest::array::uniform3(0.0f64..1.0), b in proptest::array::uniform3(-1.0f64..1.0)) {
            let d = Domain::named("dp3", 33).unwrap();
            let p = |s: f64, t: f64| SymplecticPotential::from_fn(&d, move |y| s * (y[0] * y[0] + y[0] * y[1] + y[1] * y[1]) + t * y[0]).unwrap();
            let (u, v, w) = (p(a[0], b[0]), p(a[1], b[1]), p(a[2], b[2]));
            let uv = d1(&u, &v).unwrap();
            prop_assert!(uv.agreement <= 1e-10);
            prop_assert_eq!(uv.d1_l1, d1(&v, &u).unwrap().d1_l1);
            prop_assert!(uv.d1_l1 <= d1_l1(&u, &w).unwrap() + d1_l1(&w, &v).unwrap() + 1e-12);
            let g = AffineFunction::new([b[2], a[2]], 0.3);
            let moved = d1_l1(&torus_act(&u, &g), &torus_act(&v, &g)).unwrap();
            prop_assert!((moved - uv.d1_l1).abs() <= 1e-10);
        }
    }
}
