//! Smooth reconstruction of a grid function on the polytope: nodal
//! derivatives (centered differences in the interior, local cubic
//! least-squares fits near the boundary and on a ghost ring just outside)
//! and piecewise cubic Hermite evaluation anywhere in the polytope.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::grid::DomainRef;
use crate::model::{Mat, Vec2};
use crate::polytope::Point;

/// Nodal data `[f, f_x, f_y, f_xx, f_xy, f_yy]`.
pub type Jet = [f64; 6];

#[derive(Debug, Clone)]
pub struct Smooth {
    domain: DomainRef,
    /// One jet per grid node of the bounding box; NaN where not needed.
    jets: Vec<Jet>,
}

const FIT_RADIUS: isize = 3;

/// Fourth-order centered stencils for the first and second derivative.
const D1: [(isize, f64); 4] = [
    (-2, 1.0 / 12.0),
    (-1, -8.0 / 12.0),
    (1, 8.0 / 12.0),
    (2, -1.0 / 12.0),
];
const D2: [(isize, f64); 5] = [
    (-2, -1.0 / 12.0),
    (-1, 16.0 / 12.0),
    (0, -30.0 / 12.0),
    (1, 16.0 / 12.0),
    (2, -1.0 / 12.0),
];

impl Smooth {
    pub fn new(domain: DomainRef, values: &[f64]) -> Self {
        assert_eq!(values.len(), domain.len());
        let grid = *domain.grid();
        let (nx, ny) = (grid.shape[0] as isize, grid.shape[1] as isize);
        let s = grid.step;
        let d = &domain;
        let val = |i: isize, j: isize| d.at(i, j).map(|k| values[k]);
        let jets: Vec<Jet> = (0..ny)
            .into_par_iter()
            .flat_map_iter(|j| {
                (0..nx).map(move |i| {
                    if grid.n == 1 {
                        jet_1d(d, values, i, s)
                    } else {
                        let inside = d.at(i, j).is_some();
                        if !inside && !near_inside(d, i, j, 2) {
                            return [f64::NAN; 6];
                        }
                        let full = inside
                            && (-2..=2).all(|a| (-2..=2).all(|b| d.at(i + a, j + b).is_some()));
                        if full {
                            let f = |a, b| val(i + a, j + b).unwrap();
                            let dx = |b| D1.iter().map(|&(o, w)| w * f(o, b)).sum::<f64>() / s;
                            let dy = |a| D1.iter().map(|&(o, w)| w * f(a, o)).sum::<f64>() / s;
                            [
                                f(0, 0),
                                dx(0),
                                dy(0),
                                D2.iter().map(|&(o, w)| w * f(o, 0)).sum::<f64>() / (s * s),
                                D1.iter().map(|&(o, w)| w * dx(o)).sum::<f64>() / s,
                                D2.iter().map(|&(o, w)| w * f(0, o)).sum::<f64>() / (s * s),
                            ]
                        } else {
                            fit_2d(d, values, i, j, s)
                        }
                    }
                })
            })
            .collect();
        Smooth { domain, jets }
    }

    pub fn domain(&self) -> &DomainRef {
        &self.domain
    }

    /// Jet at inside node `k` (compact index).
    pub fn node_jet(&self, k: usize) -> Jet {
        let [i, j] = self.domain.ij(k);
        self.jets[self.domain.grid().index(i, j)]
    }

    pub fn node_gradient(&self, k: usize) -> Vec2 {
        let t = self.node_jet(k);
        Vec2::new(t[1], t[2])
    }

    pub fn node_hessian(&self, k: usize) -> Mat {
        let t = self.node_jet(k);
        if self.domain.n() == 1 {
            Mat::new(t[3], 0.0, 0.0, 0.0)
        } else {
            Mat::new(t[3], t[4], t[4], t[5])
        }
    }

    /// Componentwise range of the nodal gradient.
    pub fn gradient_range(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for k in 0..self.domain.len() {
            let g = self.node_gradient(k);
            for a in 0..self.domain.n() {
                lo[a] = lo[a].min(g[a]);
                hi[a] = hi[a].max(g[a]);
            }
        }
        if self.domain.n() == 1 {
            lo[1] = 0.0;
            hi[1] = 0.0;
        }
        (lo, hi)
    }

    /// Value, gradient and Hessian of the Hermite reconstruction at `y`.
    pub fn eval(&self, y: Point) -> (f64, Vec2, Mat) {
        let grid = self.domain.grid();
        let s = grid.step;
        let locate = |c: f64, lo: f64, n: usize| -> (usize, f64) {
            let t = (c - lo) / s;
            let i = (t.floor().max(0.0) as usize).min(n.saturating_sub(2));
            (i, t - i as f64)
        };
        if grid.n == 1 {
            let (i, t) = locate(y[0], grid.lo[0], grid.shape[0]);
            let (a, b) = (self.jets[i], self.jets[i + 1]);
            let h = hermite_basis(t);
            let v = a[0] * h[0][0] + s * a[1] * h[1][0] + b[0] * h[2][0] + s * b[1] * h[3][0];
            let d1 =
                (a[0] * h[0][1] + s * a[1] * h[1][1] + b[0] * h[2][1] + s * b[1] * h[3][1]) / s;
            let d2 = (a[0] * h[0][2] + s * a[1] * h[1][2] + b[0] * h[2][2] + s * b[1] * h[3][2])
                / (s * s);
            return (v, Vec2::new(d1, 0.0), Mat::new(d2, 0.0, 0.0, 0.0));
        }
        let (i, tx) = locate(y[0], grid.lo[0], grid.shape[0]);
        let (j, ty) = locate(y[1], grid.lo[1], grid.shape[1]);
        let hx = hermite_basis(tx);
        let hy = hermite_basis(ty);
        // corner (a, b) in {0,1}^2; value basis index 0/2, slope basis 1/3
        let mut out = [0.0f64; 6]; // f, fx, fy, fxx, fxy, fyy
        for (a, b) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
            let jet = self.jets[grid.index(i + a, j + b)];
            let (vx, sx) = (hx[2 * a], hx[2 * a + 1]);
            let (vy, sy) = (hy[2 * b], hy[2 * b + 1]);
            let coef = [jet[0], s * jet[1], s * jet[2], s * s * jet[4]];
            // each term: coef * X[d] * Y[e]
            let terms = [
                (coef[0], vx, vy),
                (coef[1], sx, vy),
                (coef[2], vx, sy),
                (coef[3], sx, sy),
            ];
            for (c, x, yb) in terms {
                if c == 0.0 {
                    continue;
                }
                out[0] += c * x[0] * yb[0];
                out[1] += c * x[1] * yb[0];
                out[2] += c * x[0] * yb[1];
                out[3] += c * x[2] * yb[0];
                out[4] += c * x[1] * yb[1];
                out[5] += c * x[0] * yb[2];
            }
        }
        (
            out[0],
            Vec2::new(out[1] / s, out[2] / s),
            Mat::new(
                out[3] / (s * s),
                out[4] / (s * s),
                out[4] / (s * s),
                out[5] / (s * s),
            ),
        )
    }
}

/// Cubic Hermite basis on `[0, 1]` with first and second derivatives:
/// `[h00, h10, h01, h11]`, each as `[value, d/dt, d²/dt²]`.
fn hermite_basis(t: f64) -> [[f64; 3]; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        [
            2.0 * t3 - 3.0 * t2 + 1.0,
            6.0 * t2 - 6.0 * t,
            12.0 * t - 6.0,
        ],
        [t3 - 2.0 * t2 + t, 3.0 * t2 - 4.0 * t + 1.0, 6.0 * t - 4.0],
        [-2.0 * t3 + 3.0 * t2, -6.0 * t2 + 6.0 * t, -12.0 * t + 6.0],
        [t3 - t2, 3.0 * t2 - 2.0 * t, 6.0 * t - 2.0],
    ]
}

fn near_inside(d: &DomainRef, i: isize, j: isize, r: isize) -> bool {
    (-r..=r).any(|a| (-r..=r).any(|b| d.at(i + a, j + b).is_some()))
}

fn jet_1d(d: &DomainRef, values: &[f64], i: isize, s: f64) -> Jet {
    let n = d.grid().shape[0] as isize;
    let f = |a: isize| values[d.at(a, 0).unwrap()];
    if i >= 2 && i + 2 < n {
        return [
            f(i),
            D1.iter().map(|&(o, w)| w * f(i + o)).sum::<f64>() / s,
            0.0,
            D2.iter().map(|&(o, w)| w * f(i + o)).sum::<f64>() / (s * s),
            0.0,
            0.0,
        ];
    }
    // quartic through the five nodes nearest the end
    let lo = if i < 2 { 0 } else { n - 5 };
    let xs: Vec<f64> = (0..5).map(|m| (lo + m - i) as f64).collect();
    let a = DMatrix::from_fn(5, 5, |r, c| xs[r].powi(c as i32));
    let b = DVector::from_iterator(5, (0..5).map(|m| f(lo + m)));
    let c = a.lu().solve(&b).expect("distinct nodes");
    [c[0], c[1] / s, 0.0, 2.0 * c[2] / (s * s), 0.0, 0.0]
}

fn fit_2d(d: &DomainRef, values: &[f64], i: isize, j: isize, s: f64) -> Jet {
    let mut r = FIT_RADIUS;
    loop {
        let mut pts = Vec::new();
        for b in -r..=r {
            for a in -r..=r {
                if let Some(k) = d.at(i + a, j + b) {
                    pts.push((a as f64, b as f64, values[k]));
                }
            }
        }
        if pts.len() >= 16 || r >= 6 {
            let m = pts.len();
            let a = DMatrix::from_fn(m, 10, |row, col| {
                let (x, y, _) = pts[row];
                match col {
                    0 => 1.0,
                    1 => x,
                    2 => y,
                    3 => x * x,
                    4 => x * y,
                    5 => y * y,
                    6 => x * x * x,
                    7 => x * x * y,
                    8 => x * y * y,
                    _ => y * y * y,
                }
            });
            let rhs = DVector::from_iterator(m, pts.iter().map(|p| p.2));
            let svd = a.svd(true, true);
            let c = svd.solve(&rhs, 1e-12).expect("svd solve");
            return [
                c[0],
                c[1] / s,
                c[2] / s,
                2.0 * c[3] / (s * s),
                c[4] / (s * s),
                2.0 * c[5] / (s * s),
            ];
        }
        r += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn reproduces_cubics_everywhere() {
        for name in ["dp1", "dp3"] {
            let d = Domain::named(name, 41).unwrap();
            let f = |y: Point| 0.3 * y[0] * y[0] * y[1] - y[1].powi(3) + 2.0 * y[0] - 0.5;
            let vals: Vec<f64> = d.nodes().iter().map(|&y| f(y)).collect();
            let s = Smooth::new(d.clone(), &vals);
            for y in [[0.1, 0.2], [-0.95, -0.02], [0.9, 0.05], [-0.49, 0.48]] {
                if !d.polytope().contains(y, 0.0) {
                    continue;
                }
                let (v, g, h) = s.eval(y);
                let e = 1e-9;
                assert!((v - f(y)).abs() < 1e-3, "{name} {y:?}");
                let gx = (f([y[0] + e, y[1]]) - f([y[0] - e, y[1]])) / (2.0 * e);
                assert!((g[0] - gx).abs() < 1e-2, "{name} {y:?} {} {gx}", g[0]);
                assert!((h[(1, 1)] + 6.0 * y[1]).abs() < 0.1);
            }
        }
    }

    #[test]
    fn affine_data_is_exact() {
        let d = Domain::named("dp3", 33).unwrap();
        let vals: Vec<f64> = d
            .nodes()
            .iter()
            .map(|y| 1.5 * y[0] - 0.25 * y[1] + 3.0)
            .collect();
        let s = Smooth::new(d.clone(), &vals);
        for y in [[0.0, 0.0], [0.99, -0.99], [-0.3, 0.77], [0.999, 0.0]] {
            let (v, g, h) = s.eval(y);
            assert!((v - (1.5 * y[0] - 0.25 * y[1] + 3.0)).abs() < 1e-12);
            assert!((g[0] - 1.5).abs() < 1e-10 && (g[1] + 0.25).abs() < 1e-10);
            assert!(h.norm() < 1e-8);
        }
        let p1 = Domain::named("p1", 101).unwrap();
        let vals: Vec<f64> = p1.nodes().iter().map(|y| 2.0 * y[0] * y[0]).collect();
        let s = Smooth::new(p1, &vals);
        let (v, g, h) = s.eval([0.9999, 0.0]);
        assert!((v - 2.0 * 0.9999f64.powi(2)).abs() < 1e-8);
        assert!((g[0] - 4.0 * 0.9999).abs() < 1e-8);
        assert!((h[(0, 0)] - 4.0).abs() < 1e-6);
    }
}
