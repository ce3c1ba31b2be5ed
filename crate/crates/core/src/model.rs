//! The toric model: a Delzant polytope together with its Guillemin reference
//! potential `u_G = Σ ℓ_i log ℓ_i` and everything derived from it.
//!
//! Matrices are `2×2` for both dimensions; for `n = 1` the second slot is
//! padded with the identity so determinants and inverses reduce correctly.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::polytope::{Point, Polytope};
use crate::quad;

pub type Mat = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone)]
pub struct ToricModel {
    polytope: Polytope,
    /// Squared determinants of facet-normal pairs, for Cauchy–Binet.
    pair_det2: Vec<(usize, usize, f64)>,
}

impl ToricModel {
    pub fn new(polytope: Polytope) -> Self {
        let m = polytope.num_facets();
        let mut pair_det2 = Vec::new();
        if polytope.n() == 2 {
            for i in 0..m {
                for j in (i + 1)..m {
                    let (a, b) = (polytope.normal(i), polytope.normal(j));
                    let d = a[0] * b[1] - a[1] * b[0];
                    if d != 0.0 {
                        pair_det2.push((i, j, d * d));
                    }
                }
            }
        }
        ToricModel {
            polytope,
            pair_det2,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        Ok(Self::new(Polytope::named(name)?))
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn n(&self) -> usize {
        self.polytope.n()
    }

    /// Total volume `V = Vol(P)`.
    pub fn volume(&self) -> f64 {
        self.polytope.volume()
    }

    /// All offsets equal one (anticanonical polytope).
    pub fn is_fano(&self) -> bool {
        self.polytope.all_offsets_equal(1.0)
    }

    /// Checks the offsets for the Ricci-potential constructions with cone angle `beta`.
    pub fn require_fano(&self, beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::ParameterOutOfRange(format!("beta = {beta}")));
        }
        if beta < 1.0 && self.n() != 1 {
            return Err(Error::EdgeDimensionUnsupported);
        }
        if !self.polytope.all_offsets_equal(beta) {
            return Err(Error::NotFano {
                expected: beta,
                detail: format!(
                    "offsets {:?}",
                    self.polytope
                        .facets()
                        .iter()
                        .map(|f| f.c)
                        .collect::<Vec<_>>()
                ),
            });
        }
        Ok(())
    }

    #[inline]
    fn normal(&self, i: usize) -> Vec2 {
        let l = self.polytope.normal(i);
        Vec2::new(l[0], l[1])
    }

    #[inline]
    pub fn ell(&self, i: usize, y: Point) -> f64 {
        self.polytope.ell(i, y)
    }

    pub fn num_facets(&self) -> usize {
        self.polytope.num_facets()
    }

    /// `u_G(y) = Σ ℓ_i log ℓ_i`, finite on the closed polytope.
    pub fn u_ref(&self, y: Point) -> f64 {
        (0..self.num_facets())
            .map(|i| xlogx(self.ell(i, y).max(0.0)))
            .sum()
    }

    /// `∇u_G(y) = Σ l_i (log ℓ_i + 1)`; interior points only.
    pub fn grad_ref(&self, y: Point) -> Vec2 {
        let mut g = Vec2::zeros();
        for i in 0..self.num_facets() {
            g += self.normal(i) * (self.ell(i, y).ln() + 1.0);
        }
        g
    }

    /// `G = D²u_G = Σ l_i l_iᵀ / ℓ_i`, padded for `n = 1`.
    pub fn hess_ref(&self, y: Point) -> Mat {
        let mut g = Mat::zeros();
        for i in 0..self.num_facets() {
            let l = self.normal(i);
            g += l * l.transpose() / self.ell(i, y);
        }
        if self.n() == 1 {
            g[(1, 1)] = 1.0;
        }
        g
    }

    /// `log det G` via Cauchy–Binet, a sum of positive terms.
    pub fn log_det_ref(&self, y: Point) -> f64 {
        self.log_det_ref_from_ells(&self.ells(y))
    }

    pub fn ells(&self, y: Point) -> Vec<f64> {
        (0..self.num_facets()).map(|i| self.ell(i, y)).collect()
    }

    pub fn log_det_ref_from_ells(&self, ells: &[f64]) -> f64 {
        if self.n() == 1 {
            let s: f64 = (0..ells.len())
                .map(|i| {
                    let l = self.polytope.normal(i)[0];
                    l * l / ells[i]
                })
                .sum();
            return s.ln();
        }
        let s: f64 = self
            .pair_det2
            .iter()
            .map(|&(i, j, d2)| d2 / (ells[i] * ells[j]))
            .sum();
        s.ln()
    }

    /// `∂_e G` for `e = 0, 1`.
    pub fn d_hess_ref(&self, y: Point) -> [Mat; 2] {
        let mut out = [Mat::zeros(), Mat::zeros()];
        for i in 0..self.num_facets() {
            let l = self.normal(i);
            let li = self.ell(i, y);
            let llt = l * l.transpose() / (li * li);
            for (e, o) in out.iter_mut().enumerate() {
                *o -= llt * l[e];
            }
        }
        out
    }

    /// `∂_e ∂_f G`, indexed `[e][f]`.
    pub fn dd_hess_ref(&self, y: Point) -> [[Mat; 2]; 2] {
        let mut out = [[Mat::zeros(); 2]; 2];
        for i in 0..self.num_facets() {
            let l = self.normal(i);
            let li = self.ell(i, y);
            let llt = l * l.transpose() * (2.0 / (li * li * li));
            for e in 0..2 {
                for f in 0..2 {
                    out[e][f] += llt * (l[e] * l[f]);
                }
            }
        }
        out
    }

    /// Bregman divergence of `u_G`: `u_G(y) - u_G(z) - <∇u_G(z), y - z>`,
    /// written as a sum of generalized Kullback–Leibler terms.
    pub fn bregman(&self, y: Point, z: Point) -> f64 {
        (0..self.num_facets())
            .map(|i| {
                let (a, b) = (self.ell(i, y).max(0.0), self.ell(i, z));
                let t = if a > 0.0 { a * (a / b).ln() } else { 0.0 };
                t - a + b
            })
            .sum()
    }

    /// Solves `∇u_G(z) = x` by damped Newton on the convex function
    /// `u_G(z) - <x, z>`, starting from `start` (or the barycenter).
    pub fn inverse_gradient(&self, x: Vec2, start: Option<Point>) -> Result<Point> {
        let mut z = start.unwrap_or_else(|| self.polytope.barycenter());
        if self.polytope.min_ell(z) <= 0.0 {
            z = self.polytope.barycenter();
        }
        if self.n() == 1 {
            return Ok(self.inverse_gradient_1d(x[0]));
        }
        let objective = |z: Point| -> f64 { self.u_ref(z) - x[0] * z[0] - x[1] * z[1] };
        let mut f = objective(z);
        for it in 0..200 {
            let r = self.grad_ref(z) - x;
            let g = self.hess_ref(z);
            let step = g
                .try_inverse()
                .ok_or_else(|| Error::SolverFailure("singular reference Hessian".into()))?
                * r;
            let dec = r.dot(&step);
            if dec < 1e-26 || (it > 0 && r.norm() <= 1e-13 * (1.0 + x.norm())) {
                return Ok(z);
            }
            // keep every ℓ positive
            let mut alpha: f64 = 1.0;
            for i in 0..self.num_facets() {
                let rate = self.normal(i).dot(&step);
                if rate > 0.0 {
                    alpha = alpha.min(0.95 * self.ell(i, z) / rate);
                }
            }
            let mut accepted = false;
            for _ in 0..60 {
                let zn = [z[0] - alpha * step[0], z[1] - alpha * step[1]];
                if self.polytope.min_ell(zn) > 0.0 {
                    let fn_ = objective(zn);
                    if fn_ <= f - 0.25 * alpha * dec || alpha * step.norm() < 1e-15 {
                        z = zn;
                        f = fn_;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // no further decrease representable; accept if the residual is small
                if r.norm() <= 1e-8 * (1.0 + x.norm()) {
                    return Ok(z);
                }
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: r.norm(),
                });
            }
        }
        let r = (self.grad_ref(z) - x).norm();
        if r <= 1e-8 * (1.0 + x.norm()) {
            Ok(z)
        } else {
            Err(Error::NonConvergence {
                iterations: 200,
                residual: r,
            })
        }
    }

    /// Closed form on an interval: `ℓ_+ / ℓ_- = e^x` with `ℓ_+ + ℓ_- = L`.
    fn inverse_gradient_1d(&self, x: f64) -> Point {
        let v = self.polytope.vertices();
        let (a, b) = (v[0][0], v[1][0]);
        let len = b - a;
        // ℓ_- = L / (1 + e^x) measured from the right endpoint
        let right = if x > 0.0 {
            len * (-x).exp() / (1.0 + (-x).exp())
        } else {
            len / (1.0 + x.exp())
        };
        let left = len - right;
        if left < right {
            [a + left, 0.0]
        } else {
            [b - right, 0.0]
        }
    }

    /// Distances to the two endpoints for `n = 1` at log-coordinate `x`,
    /// exact even when they underflow relative to the coordinates.
    pub fn interval_ells_at(&self, x: f64) -> (f64, f64) {
        let v = self.polytope.vertices();
        let len = v[1][0] - v[0][0];
        let (left, right) = if x > 0.0 {
            let e = (-x).exp();
            (len / (1.0 + e), len * e / (1.0 + e))
        } else {
            let e = x.exp();
            (len * e / (1.0 + e), len / (1.0 + e))
        };
        (left, right)
    }

    /// Ricci form of the reference metric in log coordinates at
    /// `x = ∇u_G(z)`: the real Hessian `D²_x log det G(z(x))`.
    pub fn ricci_form(&self, z: Point) -> Mat {
        let g = self.hess_ref(z);
        let k = g
            .try_inverse()
            .expect("reference Hessian is positive definite");
        let dg = self.d_hess_ref(z);
        let ddg = self.dd_hess_ref(z);
        let kd = [k * dg[0], k * dg[1]];
        let grad = Vec2::new(kd[0].trace(), kd[1].trace());
        let mut hess = Mat::zeros();
        for e in 0..2 {
            for f in 0..2 {
                hess[(e, f)] = (k * ddg[e][f]).trace() - (kd[e] * kd[f]).trace();
            }
        }
        let v = k * grad;
        let mut r = k * hess * k;
        for f in 0..2 {
            let w = k * dg[f] * v;
            for a in 0..2 {
                for c in 0..2 {
                    r[(a, c)] -= k[(c, f)] * w[a];
                }
            }
        }
        if self.n() == 1 {
            r[(0, 1)] = 0.0;
            r[(1, 0)] = 0.0;
            r[(1, 1)] = 0.0;
        }
        r
    }

    /// Ricci potential of the reference metric for cone angle `beta`,
    /// up to its normalizing constant:
    /// `log det G + β Σ log ℓ_i - Σ (ℓ_i - β)`, which is bounded for `β = 1`
    /// and carries the divisor weights `ℓ_i^{β-1}` after exponentiation.
    pub fn ricci_potential_raw(&self, beta: f64, ells: &[f64]) -> f64 {
        // log det G + Σ log ℓ = log Σ_pairs det² Π_{others} ℓ, finite on ∂P
        let prod_except = |skip: &[usize]| -> f64 {
            ells.iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, &l)| l)
                .product()
        };
        let mut s = if self.n() == 1 {
            (0..ells.len())
                .map(|i| {
                    let l = self.polytope.normal(i)[0];
                    l * l * prod_except(&[i])
                })
                .sum::<f64>()
                .ln()
        } else {
            self.pair_det2
                .iter()
                .map(|&(i, j, d2)| d2 * prod_except(&[i, j]))
                .sum::<f64>()
                .ln()
        };
        for &l in ells {
            s -= l - beta;
            if beta != 1.0 {
                s += (beta - 1.0) * l.ln();
            }
        }
        s
    }

    /// Normalizing constant `c_f` with `Vol⁻¹ ∫_P e^{f} dy = 1`.
    pub fn ricci_constant(&self, beta: f64) -> Result<f64> {
        self.require_fano(beta)?;
        let vol = self.volume();
        let integral = if self.n() == 1 {
            let v = self.polytope.vertices();
            let (a, b) = (v[0][0], v[1][0]);
            // both normals are ±1 so ℓ_left = y - a and ℓ_right = b - y
            quad::tanh_sinh(a, b, |_, da, db| {
                let ells = self.ordered_interval_ells(da, db);
                self.ricci_potential_raw(beta, &ells).exp()
            })
        } else {
            quad::integrate_polytope(&self.polytope, 24, |y| {
                self.ricci_potential_raw(beta, &self.ells(y)).exp()
            })
        };
        Ok(-(integral / vol).ln())
    }

    /// Facet values on an interval from the two endpoint distances.
    pub fn ordered_interval_ells(&self, left: f64, right: f64) -> Vec<f64> {
        (0..self.num_facets())
            .map(|i| {
                if self.polytope.normal(i)[0] > 0.0 {
                    left
                } else {
                    right
                }
            })
            .collect()
    }
}

#[inline]
pub fn xlogx(a: f64) -> f64 {
    if a > 0.0 {
        a * a.ln()
    } else {
        0.0
    }
}

/// Mixed discriminant for symmetric `2×2` matrices, `M(A, A) = det A`.
#[inline]
pub fn mixed(a: &Mat, b: &Mat) -> f64 {
    0.5 * (a[(0, 0)] * b[(1, 1)] + a[(1, 1)] * b[(0, 0)] - 2.0 * a[(0, 1)] * b[(0, 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn guillemin_derivatives_match_finite_differences() {
        let m = ToricModel::named("dp1").unwrap();
        let y = [0.2, -0.3];
        let h = 1e-5;
        let g = m.grad_ref(y);
        for e in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[e] += h;
            ym[e] -= h;
            let fd = (m.u_ref(yp) - m.u_ref(ym)) / (2.0 * h);
            assert_relative_eq!(fd, g[e], epsilon = 1e-8);
            let dg = (m.hess_ref(yp) - m.hess_ref(ym)) / (2.0 * h);
            assert!((dg - m.d_hess_ref(y)[e]).norm() < 1e-6);
            let ddg = (m.d_hess_ref(yp)[e] - m.d_hess_ref(ym)[e]) / (2.0 * h);
            assert!((ddg - m.dd_hess_ref(y)[e][e]).norm() < 1e-5);
        }
        assert_relative_eq!(
            m.log_det_ref(y),
            m.hess_ref(y).determinant().ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn inverse_gradient_round_trip() {
        let m = ToricModel::named("dp3").unwrap();
        for y in [[0.1, 0.2], [0.99, -0.5], [-0.999999, 0.9999], [0.0, 0.0]] {
            let x = m.grad_ref(y);
            let z = m.inverse_gradient(x, None).unwrap();
            assert!(
                (z[0] - y[0]).abs() < 1e-9 && (z[1] - y[1]).abs() < 1e-9,
                "{y:?} {z:?}"
            );
        }
        let p1 = ToricModel::named("p1").unwrap();
        let z = p1.inverse_gradient(Vec2::new(0.7, 0.0), None).unwrap();
        assert_relative_eq!(p1.grad_ref(z)[0], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn ricci_form_matches_finite_difference_in_log_coordinates() {
        let m = ToricModel::named("dp1").unwrap();
        let z0 = [0.1, 0.3];
        let x0 = m.grad_ref(z0);
        let h = 1e-4;
        let f = |x: Vec2| m.log_det_ref(m.inverse_gradient(x, Some(z0)).unwrap());
        let r = m.ricci_form(z0);
        for a in 0..2 {
            for c in 0..2 {
                let mut ea = Vec2::zeros();
                let mut ec = Vec2::zeros();
                ea[a] = h;
                ec[c] = h;
                let fd = (f(x0 + ea + ec) - f(x0 + ea - ec) - f(x0 - ea + ec) + f(x0 - ea - ec))
                    / (4.0 * h * h);
                assert!(
                    (fd - r[(a, c)]).abs() < 1e-5,
                    "{a}{c}: {fd} vs {}",
                    r[(a, c)]
                );
            }
        }
    }

    #[test]
    fn fubini_study_is_kahler_einstein() {
        let m = ToricModel::named("p1").unwrap();
        let c = m.ricci_constant(1.0).unwrap();
        for y in [-0.9, -0.3, 0.0, 0.5, 0.99] {
            let f = m.ricci_potential_raw(1.0, &m.ells([y, 0.0])) + c;
            assert!(f.abs() < 1e-12, "{y}: {f}");
        }
    }

    #[test]
    fn fano_checks() {
        let m = ToricModel::named("dp1-trapezoid").unwrap();
        assert!(matches!(m.ricci_constant(1.0), Err(Error::NotFano { .. })));
        let m = ToricModel::named("dp3").unwrap();
        assert!(matches!(
            m.ricci_constant(0.5),
            Err(Error::EdgeDimensionUnsupported)
        ));
    }
}
