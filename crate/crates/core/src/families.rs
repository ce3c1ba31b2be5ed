//! Seeded families of convex deviations used by sweeps, property tests and
//! the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::DomainRef;
use crate::polytope::Point;
use crate::potential::{AffineFunction, SymplecticPotential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Random positive combinations of smoothed ridges plus a quadratic.
    Bumps,
    /// `½ yᵀ Q y` with a random positive semidefinite `Q`.
    Quadratic,
    /// Affine functions: the torus orbit of the reference.
    Orbit,
    /// Even convex deviations on a centered interval.
    Symmetric,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Bumps,
        Family::Quadratic,
        Family::Orbit,
        Family::Symmetric,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Bumps => "bumps",
            Family::Quadratic => "quadratic",
            Family::Orbit => "orbit",
            Family::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Closed-form convex deviation drawn from a family; `scale` multiplies the
/// whole function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub quadratic: [[f64; 2]; 2],
    /// `(weight, direction, offset, sharpness)` of `w softplus(κ(<c,y> - o)) / κ`.
    pub ridges: Vec<(f64, [f64; 2], f64, f64)>,
    pub even_powers: Vec<(f64, i32)>,
    pub affine: AffineFunction,
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

impl Deviation {
    pub fn eval(&self, y: Point) -> f64 {
        let q = &self.quadratic;
        let mut v =
            0.5 * (q[0][0] * y[0] * y[0] + 2.0 * q[0][1] * y[0] * y[1] + q[1][1] * y[1] * y[1]);
        for &(w, c, o, k) in &self.ridges {
            v += w * softplus(k * (c[0] * y[0] + c[1] * y[1] - o)) / k;
        }
        for &(a, p) in &self.even_powers {
            v += a * y[0].powi(p);
        }
        v + self.affine.eval(y)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut d = self.clone();
        d.quadratic.iter_mut().flatten().for_each(|v| *v *= s);
        d.ridges.iter_mut().for_each(|r| r.0 *= s);
        d.even_powers.iter_mut().for_each(|e| e.0 *= s);
        d.affine = AffineFunction::new([s * d.affine.b[0], s * d.affine.b[1]], s * d.affine.c);
        d
    }

    pub fn sample(&self, domain: &DomainRef) -> Result<SymplecticPotential> {
        SymplecticPotential::from_fn(domain, |y| self.eval(y))
    }
}

/// Draws a deviation of the family on an `n`-dimensional model.
pub fn draw(family: Family, n: usize, seed: u64) -> Deviation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim2 = n == 2;
    let dir = |rng: &mut ChaCha8Rng| -> [f64; 2] {
        if dim2 {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [a.cos(), a.sin()]
        } else if rng.random_bool(0.5) {
            [1.0, 0.0]
        } else {
            [-1.0, 0.0]
        }
    };
    let psd = |rng: &mut ChaCha8Rng, s: f64| -> [[f64; 2]; 2] {
        let l = [
            rng.random_range(0.0..s),
            rng.random_range(-s..s),
            rng.random_range(0.0..s),
        ];
        let (a, b, c) = (l[0], l[1], if dim2 { l[2] } else { 0.0 });
        let b = if dim2 { b } else { 0.0 };
        // L Lᵀ with L = [[a, 0], [b, c]]
        [[a * a, a * b], [a * b, b * b + c * c]]
    };
    let affine = |rng: &mut ChaCha8Rng, s: f64| {
        AffineFunction::new(
            [
                rng.random_range(-s..s),
                if dim2 { rng.random_range(-s..s) } else { 0.0 },
            ],
            rng.random_range(-s..s),
        )
    };
    let mut d = Deviation {
        quadratic: [[0.0; 2]; 2],
        ridges: Vec::new(),
        even_powers: Vec::new(),
        affine: AffineFunction::identity(),
    };
    match family {
        Family::Bumps => {
            d.quadratic = psd(&mut rng, 0.8);
            let count = rng.random_range(1..=4);
            for _ in 0..count {
                let w = rng.random_range(0.05..0.8);
                let c = dir(&mut rng);
                let o = rng.random_range(-0.6..0.6);
                let k = rng.random_range(1.0..8.0);
                d.ridges.push((w, c, o, k));
            }
            d.affine = affine(&mut rng, 0.5);
        }
        Family::Quadratic => {
            d.quadratic = psd(&mut rng, 1.0);
            d.affine = affine(&mut rng, 0.2);
        }
        Family::Orbit => {
            d.affine = affine(&mut rng, 2.0);
        }
        Family::Symmetric => {
            d.even_powers.push((rng.random_range(0.0..1.0), 2));
            d.even_powers.push((rng.random_range(0.0..1.0), 4));
            let k = rng.random_range(1.0..10.0);
            let w = rng.random_range(0.0..1.0);
            // symmetric pair of ridges keeps the deviation even
            d.ridges.push((w, [1.0, 0.0], 0.0, k));
            d.ridges.push((w, [-1.0, 0.0], 0.0, k));
            d.affine = AffineFunction::new([0.0, 0.0], rng.random_range(-0.5..0.5));
        }
    }
    d
}

/// A sampled potential of the family; normalized when requested.
pub fn potential(
    domain: &DomainRef,
    family: Family,
    seed: u64,
    normalize: bool,
) -> Result<SymplecticPotential> {
    let u = draw(family, domain.n(), seed).sample(domain)?;
    Ok(if normalize { u.normalized() } else { u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn families_are_convex_and_deterministic() {
        for name in ["p1", "dp3", "dp1"] {
            let d = Domain::named(name, if name == "p1" { 513 } else { 33 }).unwrap();
            for f in Family::ALL {
                for seed in 0..8 {
                    let a = potential(&d, f, seed, true).unwrap();
                    let b = potential(&d, f, seed, true).unwrap();
                    assert_eq!(a, b);
                    assert!(a.am().abs() < 1e-14);
                    assert!(a.check_convex().is_ok());
                }
            }
        }
    }

    #[test]
    fn symmetric_family_is_even() {
        let dev = draw(Family::Symmetric, 1, 3);
        for y in [0.1, 0.5, 0.9] {
            assert!((dev.eval([y, 0.0]) - dev.eval([-y, 0.0])).abs() < 1e-14);
        }
        assert_eq!(Family::parse("bumps"), Some(Family::Bumps));
        assert_eq!(Family::parse("nope"), None);
    }
}
