//! Tensor grids over the polytope bounding box and lumped quadrature
//! weights for the polytope.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ToricModel;
use crate::polytope::{tri_area, Point, Polytope};

/// Default nodes along the longest axis.
pub const DEFAULT_NODES_2D: usize = 513;
pub const DEFAULT_NODES_1D: usize = 65537;

/// Uniform tensor grid with equal spacing along both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    /// Node counts along each axis (`shape[1] = 1` for `n = 1`).
    pub shape: [usize; 2],
    pub lo: Point,
    pub step: f64,
}

impl Grid {
    /// Grid whose longest bounding-box side carries `nodes` nodes.
    pub fn for_polytope(p: &Polytope, nodes: usize) -> Result<Self> {
        if nodes < 5 {
            return Err(Error::GridTooCoarse(format!("{nodes} nodes per axis")));
        }
        let (lo, hi) = p.bbox();
        let ext = [hi[0] - lo[0], hi[1] - lo[1]];
        if p.n() == 1 {
            return Ok(Grid {
                n: 1,
                shape: [nodes, 1],
                lo,
                step: ext[0] / (nodes - 1) as f64,
            });
        }
        let long = ext[0].max(ext[1]);
        let step = long / (nodes - 1) as f64;
        let count = |e: f64| ((e / step - 1e-9).ceil() as usize + 1).max(2);
        Ok(Grid {
            n: 2,
            shape: [count(ext[0]), count(ext[1])],
            lo,
            step,
        })
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index with the first axis fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.shape[0] + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        [
            self.lo[0] + i as f64 * self.step,
            if self.n == 2 {
                self.lo[1] + j as f64 * self.step
            } else {
                0.0
            },
        ]
    }
}

/// A toric model together with a grid, inside mask and quadrature weights.
/// Potentials store one value per inside node, in grid order.
#[derive(Debug)]
pub struct Domain {
    model: ToricModel,
    grid: Grid,
    /// Compact index of each grid node, or `u32::MAX` when outside.
    compact: Vec<u32>,
    nodes: Vec<Point>,
    ij: Vec<[u32; 2]>,
    weights: Vec<f64>,
    u_ref: Vec<f64>,
    tol: f64,
}

pub type DomainRef = Arc<Domain>;

pub const OUTSIDE: u32 = u32::MAX;

impl Domain {
    pub fn new(model: ToricModel, nodes: usize) -> Result<DomainRef> {
        let grid = Grid::for_polytope(model.polytope(), nodes)?;
        Self::with_grid(model, grid)
    }

    pub fn with_grid(model: ToricModel, grid: Grid) -> Result<DomainRef> {
        if grid.n != model.n() {
            return Err(Error::GridMismatch);
        }
        let p = model.polytope();
        let scale = {
            let (lo, hi) = p.bbox();
            1.0 + lo[0]
                .abs()
                .max(hi[0].abs())
                .max(lo[1].abs())
                .max(hi[1].abs())
        };
        let tol = 1e-11 * scale;
        let mut compact = vec![OUTSIDE; grid.len()];
        let mut nodes = Vec::new();
        let mut ij = Vec::new();
        for j in 0..grid.shape[1] {
            for i in 0..grid.shape[0] {
                let y = grid.node(i, j);
                if p.min_ell(y) >= -tol {
                    compact[grid.index(i, j)] = nodes.len() as u32;
                    nodes.push(y);
                    ij.push([i as u32, j as u32]);
                }
            }
        }
        if nodes.len() < 3 {
            return Err(Error::GridTooCoarse("fewer than three inside nodes".into()));
        }
        let weights = if grid.n == 1 {
            interval_weights(&grid, &compact, nodes.len())
        } else {
            polygon_weights(p, &grid, &compact, nodes.len(), tol)
        };
        let u_ref = nodes.iter().map(|&y| model.u_ref(y)).collect();
        Ok(Arc::new(Domain {
            model,
            grid,
            compact,
            nodes,
            ij,
            weights,
            u_ref,
            tol,
        }))
    }

    pub fn named(name: &str, nodes: usize) -> Result<DomainRef> {
        Self::new(ToricModel::named(name)?, nodes)
    }

    pub fn model(&self) -> &ToricModel {
        &self.model
    }

    pub fn polytope(&self) -> &Polytope {
        self.model.polytope()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn ij(&self, k: usize) -> [usize; 2] {
        [self.ij[k][0] as usize, self.ij[k][1] as usize]
    }

    /// Compact index of grid node `(i, j)` if inside.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.grid.shape[0] || j as usize >= self.grid.shape[1] {
            return None;
        }
        let c = self.compact[self.grid.index(i as usize, j as usize)];
        (c != OUTSIDE).then_some(c as usize)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `u_G` at the inside nodes.
    pub fn u_ref(&self) -> &[f64] {
        &self.u_ref
    }

    pub fn volume(&self) -> f64 {
        self.model.volume()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Same polytope and same grid.
    pub fn compatible(&self, other: &Domain) -> bool {
        std::ptr::eq(self, other)
            || (self.grid == other.grid && self.polytope().hash() == other.polytope().hash())
    }

    /// `Vol⁻¹ Σ w_k f_k`, summed row by row for a fixed reduction order.
    pub fn mean(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        self.integrate(f) / self.volume()
    }

    /// `Σ w_k f_k` with deterministic blocked summation.
    pub fn integrate(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        use rayon::prelude::*;
        const BLOCK: usize = 4096;
        let blocks: Vec<f64> = (0..self.len().div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(self.len());
                (lo..hi).map(|k| self.weights[k] * f(k)).sum::<f64>()
            })
            .collect();
        blocks.iter().sum()
    }
}

fn interval_weights(grid: &Grid, compact: &[u32], len: usize) -> Vec<f64> {
    let mut w = vec![0.0; len];
    let h = grid.step;
    for i in 0..grid.shape[0] - 1 {
        let (a, b) = (compact[i], compact[i + 1]);
        if a != OUTSIDE && b != OUTSIDE {
            w[a as usize] += 0.5 * h;
            w[b as usize] += 0.5 * h;
        }
    }
    w
}

/// Lumped weights: each grid cell is split into two triangles, each triangle
/// is clipped to the polytope and the clipped area is distributed to the
/// triangle vertices by the barycentric coordinates of the clipped centroid,
/// which integrates the piecewise-linear interpolant exactly. Weight that
/// would land on a node outside the polytope moves to the nearest inside
/// vertex of the same triangle.
fn polygon_weights(p: &Polytope, grid: &Grid, compact: &[u32], len: usize, tol: f64) -> Vec<f64> {
    let mut w = vec![0.0; len];
    for j in 0..grid.shape[1] - 1 {
        for i in 0..grid.shape[0] - 1 {
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let inside = c.map(|(a, b)| compact[grid.index(a, b)] != OUTSIDE);
            if inside.iter().all(|&b| !b) {
                // the cell may still meet the polytope if P is thinner than a cell
                let pts = c.map(|(a, b)| grid.node(a, b));
                if clip(p, &pts, tol).len() < 3 {
                    continue;
                }
            }
            let pts = c.map(|(a, b)| grid.node(a, b));
            let splits = [[[0, 1, 2], [0, 2, 3]], [[0, 1, 3], [1, 2, 3]]];
            let mut best: Option<(usize, Vec<(usize, f64)>)> = None;
            for split in splits {
                let mut partial = 0;
                let mut contrib = Vec::new();
                for tri in split {
                    let t = tri.map(|k| pts[k]);
                    let full = tri_area(t[0], t[1], t[2]).abs();
                    let poly = clip(p, &t, tol);
                    if poly.len() < 3 {
                        continue;
                    }
                    let (area, cen) = area_centroid(&poly);
                    if area <= 1e-15 * full {
                        continue;
                    }
                    if (area - full).abs() > 1e-9 * full {
                        partial += 1;
                    }
                    let lam = barycentric(t, cen);
                    for (m, &k) in tri.iter().enumerate() {
                        contrib.push((k, area * lam[m]));
                    }
                }
                let better = match &best {
                    None => true,
                    Some((b, _)) => partial < *b,
                };
                if better {
                    best = Some((partial, contrib));
                }
                if partial == 0 {
                    break;
                }
            }
            let Some((_, contrib)) = best else { continue };
            for (k, a) in contrib {
                let target = if inside[k] {
                    k
                } else {
                    // nearest inside corner of the cell
                    let y = pts[k];
                    (0..4)
                        .filter(|&m| inside[m])
                        .min_by(|&m1, &m2| {
                            let d1 = (pts[m1][0] - y[0]).powi(2) + (pts[m1][1] - y[1]).powi(2);
                            let d2 = (pts[m2][0] - y[0]).powi(2) + (pts[m2][1] - y[1]).powi(2);
                            d1.total_cmp(&d2)
                        })
                        .unwrap_or(k)
                };
                if inside[target] {
                    let (a0, b0) = c[target];
                    w[compact[grid.index(a0, b0)] as usize] += a;
                }
            }
        }
    }
    w
}

/// Sutherland–Hodgman clipping of a convex polygon against every facet.
fn clip(p: &Polytope, poly: &[Point], tol: f64) -> Vec<Point> {
    let mut cur: Vec<Point> = poly.to_vec();
    for i in 0..p.num_facets() {
        if cur.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(cur.len() + 2);
        for k in 0..cur.len() {
            let a = cur[k];
            let b = cur[(k + 1) % cur.len()];
            let (fa, fb) = (p.ell(i, a), p.ell(i, b));
            let ina = fa >= -tol;
            let inb = fb >= -tol;
            if ina {
                next.push(a);
            }
            if ina != inb {
                let t = fa / (fa - fb);
                next.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        cur = next;
    }
    cur
}

fn area_centroid(poly: &[Point]) -> (f64, Point) {
    let o = poly[0];
    let mut area = 0.0;
    let mut c = [0.0; 2];
    for w in poly[1..].windows(2) {
        let a = tri_area(o, w[0], w[1]);
        area += a;
        for k in 0..2 {
            c[k] += a * (o[k] + w[0][k] + w[1][k]) / 3.0;
        }
    }
    if area.abs() < 1e-300 {
        return (0.0, o);
    }
    (area.abs(), [c[0] / area, c[1] / area])
}

fn barycentric(t: [Point; 3], y: Point) -> [f64; 3] {
    let d = tri_area(t[0], t[1], t[2]);
    let l0 = tri_area(y, t[1], t[2]) / d;
    let l1 = tri_area(t[0], y, t[2]) / d;
    [l0, l1, 1.0 - l0 - l1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_volume() {
        for (name, n) in [
            ("dp3", 65),
            ("dp1", 65),
            ("dp1-trapezoid", 33),
            ("p2", 40),
            ("p1", 101),
        ] {
            let d = Domain::named(name, n).unwrap();
            let s: f64 = d.weights().iter().sum();
            assert!((s - d.volume()).abs() < 1e-12, "{name}: {s}");
            assert!(d.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn aligned_grid_integrates_affine_exactly() {
        let d = Domain::named("dp3", 33).unwrap();
        let v = d.integrate(|k| {
            let y = d.nodes()[k];
            2.0 * y[0] - y[1] + 0.5
        });
        assert!((v - d.polytope().integrate_affine([2.0, -1.0], 0.5)).abs() < 1e-12);
    }

    #[test]
    fn misaligned_grid_is_second_order() {
        let exact = |d: &Domain| d.polytope().integrate_affine([1.0, 0.0], 0.0);
        let err = |n| {
            let d = Domain::named("dp1", n).unwrap();
            let v = d.integrate(|k| d.nodes()[k][0]);
            (v - exact(&d)).abs()
        };
        let (e1, e2) = (err(65), err(129));
        assert!(
            e2 < 1e-3 && e2 < 0.5 * e1.max(1e-14) || e2 < 1e-12,
            "{e1} {e2}"
        );
    }
}
