//! Symplectic potentials stored as deviations from the Guillemin reference,
//! and the torus-side operations on them: rooftop envelopes, geodesics,
//! initial tangents and the action of the complex torus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, DomainRef};
use crate::legendre::{self, TensorFn};
use crate::polytope::Point;

/// `<b, y> + c`; `b[1]` is ignored when `n = 1`. Torus elements act by
/// adding this function to symplectic potentials, so composition is addition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AffineFunction {
    pub b: [f64; 2],
    pub c: f64,
}

impl AffineFunction {
    pub fn new(b: [f64; 2], c: f64) -> Self {
        AffineFunction { b, c }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn linear(b: [f64; 2]) -> Self {
        AffineFunction { b, c: 0.0 }
    }

    #[inline]
    pub fn eval(&self, y: Point) -> f64 {
        self.b[0] * y[0] + self.b[1] * y[1] + self.c
    }

    /// Group law `g ∘ h`.
    pub fn compose(&self, other: &AffineFunction) -> Self {
        AffineFunction {
            b: [self.b[0] + other.b[0], self.b[1] + other.b[1]],
            c: self.c + other.c,
        }
    }

    pub fn inverse(&self) -> Self {
        AffineFunction {
            b: [-self.b[0], -self.b[1]],
            c: -self.c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.b.iter().all(|v| v.is_finite()) && self.c.is_finite()
    }
}

/// What to do with input that fails the discrete convexity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvexPolicy {
    Strict,
    Convexify,
}

#[derive(Debug, Clone)]
pub struct SymplecticPotential {
    domain: DomainRef,
    values: Vec<f64>,
    normalized: bool,
    convexified: bool,
}

impl SymplecticPotential {
    /// The Guillemin reference itself (zero deviation).
    pub fn reference(domain: &DomainRef) -> Self {
        SymplecticPotential {
            domain: domain.clone(),
            values: vec![0.0; domain.len()],
            normalized: true,
            convexified: false,
        }
    }

    /// Deviation sampled from a closure; rejects non-convex results.
    pub fn from_fn(domain: &DomainRef, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = domain.nodes().iter().map(|&y| f(y)).collect();
        Self::from_values(domain, values, ConvexPolicy::Strict)
    }

    pub fn from_values(domain: &DomainRef, values: Vec<f64>, policy: ConvexPolicy) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {k}")));
        }
        let mut u = SymplecticPotential {
            domain: domain.clone(),
            values,
            normalized: false,
            convexified: false,
        };
        if let Err(e) = u.check_convex() {
            match policy {
                ConvexPolicy::Strict => return Err(e),
                ConvexPolicy::Convexify => {
                    log::warn!("replacing non-convex input by its convex envelope: {e}");
                    u = u.convexify();
                }
            }
        }
        Ok(u)
    }

    /// Trusted constructor for values produced by operations that preserve convexity.
    pub(crate) fn raw(domain: &DomainRef, values: Vec<f64>, normalized: bool) -> Self {
        SymplecticPotential {
            domain: domain.clone(),
            values,
            normalized,
            convexified: false,
        }
    }

    pub fn domain(&self) -> &DomainRef {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_convexified(&self) -> bool {
        self.convexified
    }

    pub(crate) fn set_flags(mut self, normalized: bool, convexified: bool) -> Self {
        self.normalized = normalized;
        self.convexified = convexified;
        self
    }

    /// Full potential `u = u_G + values` at inside node `k`.
    pub fn full(&self, k: usize) -> f64 {
        self.domain.u_ref()[k] + self.values[k]
    }

    pub fn same_domain(&self, other: &SymplecticPotential) -> Result<()> {
        if self.domain.compatible(&other.domain) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Aubin–Mabuchi energy of the dual Kähler potential,
    /// `AM = -Vol⁻¹ ∫_P (u - u_G) dy`.
    pub fn am(&self) -> f64 {
        -self.domain.mean(|k| self.values[k])
    }

    /// Shifted so that `am() = 0`.
    pub fn normalized(&self) -> Self {
        let a = self.am();
        let mut u = self.clone();
        u.values.iter_mut().for_each(|v| *v += a);
        u.normalized = true;
        u
    }

    /// `sup_M φ_u = -min_P (u - u_G)`.
    pub fn sup_phi(&self) -> f64 {
        -self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `inf_M φ_u = -max_P (u - u_G)`.
    pub fn inf_phi(&self) -> f64 {
        -self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Discrete midpoint convexity of `u` along the grid axes and diagonals.
    pub fn check_convex(&self) -> Result<()> {
        let d = &self.domain;
        let scale = 1.0
            + (0..d.len())
                .map(|k| self.full(k).abs())
                .fold(0.0f64, f64::max);
        let tol = 1e-9 * scale;
        let dirs: &[(isize, isize)] = if d.n() == 1 {
            &[(1, 0)]
        } else {
            &[(1, 0), (0, 1), (1, 1), (1, -1)]
        };
        for k in 0..d.len() {
            let [i, j] = d.ij(k);
            let (i, j) = (i as isize, j as isize);
            for &(a, b) in dirs {
                if let (Some(p), Some(q)) = (d.at(i - a, j - b), d.at(i + a, j + b)) {
                    let s = self.full(p) + self.full(q) - 2.0 * self.full(k);
                    if s < -tol {
                        let y = d.nodes()[k];
                        return Err(Error::NonConvexInput(format!(
                            "second difference {s:e} at ({:.6}, {:.6})",
                            y[0], y[1]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces `u` by its convex envelope over the inside nodes.
    pub fn convexify(&self) -> Self {
        let d = &self.domain;
        let g = d.grid();
        let full: Vec<f64> = (0..d.len()).map(|k| self.full(k)).collect();
        let env: Vec<f64> = if d.n() == 1 {
            let y: Vec<f64> = d.nodes().iter().map(|p| p[0]).collect();
            legendre::convex_envelope_1d(&y, &full)
        } else {
            let axes = [
                (0..g.shape[0]).map(|i| g.node(i, 0)[0]).collect::<Vec<_>>(),
                (0..g.shape[1]).map(|j| g.node(0, j)[1]).collect::<Vec<_>>(),
            ];
            let mut vals = vec![f64::INFINITY; g.len()];
            for k in 0..d.len() {
                let [i, j] = d.ij(k);
                vals[g.index(i, j)] = full[k];
            }
            let t = TensorFn { axes, values: vals };
            let dual = legendre::slope_axes(&t, 4 * g.shape[0].max(g.shape[1]));
            let back = legendre::biconjugate(&t, &dual);
            (0..d.len())
                .map(|k| {
                    let [i, j] = d.ij(k);
                    back.values[g.index(i, j)].min(full[k])
                })
                .collect()
        };
        let values = env.iter().zip(d.u_ref()).map(|(e, r)| e - r).collect();
        SymplecticPotential {
            domain: d.clone(),
            values,
            normalized: false,
            convexified: true,
        }
    }
}

/// Node-wise maximum `P(u, v)`; the Kähler-side rooftop envelope.
pub fn rooftop_envelope(
    u: &SymplecticPotential,
    v: &SymplecticPotential,
) -> Result<SymplecticPotential> {
    u.same_domain(v)?;
    let values = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(a, b)| a.max(*b))
        .collect();
    Ok(SymplecticPotential::raw(&u.domain, values, false))
}

/// `(1 - t) u0 + t u1`, the toric d₁ (and Mabuchi) geodesic.
pub fn geodesic(
    u0: &SymplecticPotential,
    u1: &SymplecticPotential,
    t: f64,
) -> Result<SymplecticPotential> {
    u0.same_domain(u1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::ParameterOutOfRange(format!("t = {t}")));
    }
    let values = if t == 0.0 {
        u0.values.clone()
    } else if t == 1.0 {
        u1.values.clone()
    } else {
        u0.values
            .iter()
            .zip(&u1.values)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect()
    };
    let normalized = u0.normalized && u1.normalized;
    Ok(SymplecticPotential::raw(&u0.domain, values, normalized))
}

/// Kähler-side initial velocity of the geodesic, pulled back to the polytope.
pub fn initial_tangent(u0: &SymplecticPotential, u1: &SymplecticPotential) -> Result<Vec<f64>> {
    u0.same_domain(u1)?;
    Ok(u0
        .values
        .iter()
        .zip(&u1.values)
        .map(|(a, b)| -(b - a))
        .collect())
}

/// `u + <b, y> + c`; when `u` is normalized the offset is replaced by the
/// constant restoring `am = 0`.
pub fn torus_act(u: &SymplecticPotential, g: &AffineFunction) -> SymplecticPotential {
    let d = &u.domain;
    let mut values: Vec<f64> = u
        .values
        .iter()
        .zip(d.nodes())
        .map(|(v, &y)| v + g.eval(y))
        .collect();
    if u.normalized {
        let shift = d.mean(|k| values[k]);
        values.iter_mut().for_each(|v| *v -= shift);
    }
    SymplecticPotential::raw(d, values, u.normalized)
}

/// Convenience: a potential from an explicit deviation on a named model.
pub fn sample(domain: &DomainRef, f: impl Fn(Point) -> f64) -> Result<SymplecticPotential> {
    SymplecticPotential::from_fn(domain, f)
}

impl PartialEq for SymplecticPotential {
    fn eq(&self, other: &Self) -> bool {
        self.domain.compatible(&other.domain)
            && self.values == other.values
            && self.normalized == other.normalized
    }
}

/// Checks that two domains agree, for operations taking several potentials.
pub fn ensure_same(domains: &[&Domain]) -> Result<()> {
    match domains.split_first() {
        Some((a, rest)) if rest.iter().all(|b| a.compatible(b)) => Ok(()),
        Some(_) => Err(Error::GridMismatch),
        None => Ok(()),
    }
}
