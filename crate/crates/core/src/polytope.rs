//! Delzant polytopes in dimension one and two.
//!
//! Points are stored as `[f64; 2]` throughout the crate; for `n = 1` the
//! second coordinate is ignored and kept at zero.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const GEOM_TOL: f64 = 1e-10;

/// One facet inequality `<l, y> + c >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub l: Vec<i64>,
    pub c: f64,
}

impl Facet {
    pub fn new(l: &[i64], c: f64) -> Self {
        Facet { l: l.to_vec(), c }
    }
}

/// On-disk description of a polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeSpec {
    pub n: usize,
    pub facets: Vec<Facet>,
}

#[derive(Debug, Clone)]
pub struct Polytope {
    n: usize,
    facets: Vec<Facet>,
    normals: Vec<Point>,
    offsets: Vec<f64>,
    vertices: Vec<Point>,
    /// Endpoints of each facet (for n = 1 both entries are the same point).
    facet_ends: Vec<(Point, Point)>,
    facet_measure: Vec<f64>,
    volume: f64,
    hash: String,
}

/// Builds and validates a polytope from facet data.
pub fn build_polytope(facets: &[Facet]) -> Result<Polytope> {
    let n = facets
        .first()
        .map(|f| f.l.len())
        .ok_or_else(|| Error::DegeneratePolytope("no facets".into()))?;
    if n == 0 || n > 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if let Some(f) = facets.iter().find(|f| f.l.len() != n) {
        return Err(Error::InvalidInput(format!(
            "facet normal {:?} has wrong dimension (expected {n})",
            f.l
        )));
    }
    if facets.len() < n + 1 {
        return Err(Error::DegeneratePolytope(format!(
            "{} facets, need at least {}",
            facets.len(),
            n + 1
        )));
    }
    for f in facets {
        if f.l.iter().all(|&a| a == 0) {
            return Err(Error::DegeneratePolytope("zero facet normal".into()));
        }
        if !f.c.is_finite() {
            return Err(Error::InvalidInput("non-finite facet offset".into()));
        }
    }
    let normals: Vec<Point> = facets
        .iter()
        .map(|f| [f.l[0] as f64, if n == 2 { f.l[1] as f64 } else { 0.0 }])
        .collect();
    let offsets: Vec<f64> = facets.iter().map(|f| f.c).collect();
    let mut p = Polytope {
        n,
        facets: facets.to_vec(),
        normals,
        offsets,
        vertices: Vec::new(),
        facet_ends: Vec::new(),
        facet_measure: Vec::new(),
        volume: 0.0,
        hash: String::new(),
    };
    if n == 1 {
        p.finish_interval()?;
    } else {
        p.finish_polygon()?;
    }
    p.hash = spec_hash(&p.spec());
    Ok(p)
}

fn spec_hash(spec: &PolytopeSpec) -> String {
    let bytes = serde_json::to_vec(spec).expect("polytope spec serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl Polytope {
    pub fn from_spec(spec: &PolytopeSpec) -> Result<Self> {
        let p = build_polytope(&spec.facets)?;
        if p.n != spec.n {
            return Err(Error::InvalidInput(format!(
                "declared n = {} but normals have dimension {}",
                spec.n, p.n
            )));
        }
        Ok(p)
    }

    fn finish_interval(&mut self) -> Result<()> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (l, &c) in self.normals.iter().zip(&self.offsets) {
            let a = l[0];
            if a > 0.0 {
                lo = lo.max(-c / a);
            } else {
                hi = hi.min(c / -a);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::UnboundedPolytope(
                "need normals of both signs in dimension one".into(),
            ));
        }
        if hi - lo <= GEOM_TOL {
            return Err(Error::DegeneratePolytope(format!(
                "empty interior: [{lo}, {hi}]"
            )));
        }
        for (i, (l, &c)) in self.normals.iter().zip(&self.offsets).enumerate() {
            let end = if l[0] > 0.0 { lo } else { hi };
            if (l[0] * end + c).abs() > GEOM_TOL * (1.0 + c.abs()) {
                return Err(Error::DegeneratePolytope(format!(
                    "facet {i} does not support a vertex"
                )));
            }
            if l[0].abs() != 1.0 {
                return Err(Error::NotDelzant(format!(
                    "facet {i} normal {} is not primitive",
                    l[0]
                )));
            }
            self.facet_ends.push(([end, 0.0], [end, 0.0]));
            self.facet_measure.push(1.0);
        }
        self.vertices = vec![[lo, 0.0], [hi, 0.0]];
        self.volume = hi - lo;
        Ok(())
    }

    fn finish_polygon(&mut self) -> Result<()> {
        let m = self.normals.len();
        // Unbounded iff some direction d != 0 has <l_i, d> >= 0 for all i;
        // extreme rays of that cone lie on the lines <l_i, d> = 0.
        for l in &self.normals {
            for d in [[-l[1], l[0]], [l[1], -l[0]]] {
                if self
                    .normals
                    .iter()
                    .all(|k| k[0] * d[0] + k[1] * d[1] >= 0.0)
                {
                    return Err(Error::UnboundedPolytope(format!(
                        "recession direction ({}, {})",
                        d[0], d[1]
                    )));
                }
            }
        }
        let scale = 1.0 + self.offsets.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let tol = GEOM_TOL * scale;
        let mut verts: Vec<Point> = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (self.normals[i], self.normals[j]);
                let det = a[0] * b[1] - a[1] * b[0];
                if det == 0.0 {
                    continue;
                }
                let (ci, cj) = (self.offsets[i], self.offsets[j]);
                let y = [
                    (-ci * b[1] + cj * a[1]) / det,
                    (-cj * a[0] + ci * b[0]) / det,
                ];
                if self.min_ell(y) >= -tol
                    && !verts
                        .iter()
                        .any(|v| (v[0] - y[0]).abs() < tol && (v[1] - y[1]).abs() < tol)
                {
                    verts.push(y);
                }
            }
        }
        if verts.len() < 3 {
            return Err(Error::DegeneratePolytope("empty interior".into()));
        }
        let cx = verts.iter().map(|v| v[0]).sum::<f64>() / verts.len() as f64;
        let cy = verts.iter().map(|v| v[1]).sum::<f64>() / verts.len() as f64;
        verts.sort_by(|a, b| {
            let ta = (a[1] - cy).atan2(a[0] - cx);
            let tb = (b[1] - cy).atan2(b[0] - cx);
            ta.total_cmp(&tb)
        });
        let area = shoelace(&verts);
        if area <= tol {
            return Err(Error::DegeneratePolytope(format!("area {area}")));
        }
        for (k, v) in verts.iter().enumerate() {
            let active: Vec<usize> = (0..m).filter(|&i| self.ell(i, *v).abs() <= tol).collect();
            if active.len() != 2 {
                return Err(Error::NotDelzant(format!(
                    "vertex {k} ({}, {}) lies on {} facets",
                    v[0],
                    v[1],
                    active.len()
                )));
            }
            let (a, b) = (self.normals[active[0]], self.normals[active[1]]);
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() != 1.0 {
                return Err(Error::NotDelzant(format!(
                    "vertex ({}, {}) has cone determinant {det}",
                    v[0], v[1]
                )));
            }
        }
        for i in 0..m {
            let on: Vec<Point> = verts
                .iter()
                .copied()
                .filter(|v| self.ell(i, *v).abs() <= tol)
                .collect();
            if on.len() != 2 {
                return Err(Error::DegeneratePolytope(format!(
                    "facet {i} does not support an edge"
                )));
            }
            let len = ((on[1][0] - on[0][0]).powi(2) + (on[1][1] - on[0][1]).powi(2)).sqrt();
            let l = self.normals[i];
            self.facet_ends.push((on[0], on[1]));
            self.facet_measure
                .push(len / (l[0] * l[0] + l[1] * l[1]).sqrt());
        }
        self.vertices = verts;
        self.volume = area;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn num_facets(&self) -> usize {
        self.normals.len()
    }

    pub fn normal(&self, i: usize) -> Point {
        self.normals[i]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    /// Vertices, counter-clockwise for `n = 2`.
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Lattice boundary measure of facet `i`: Euclidean length over |l_i|.
    pub fn facet_measure(&self, i: usize) -> f64 {
        self.facet_measure[i]
    }

    pub fn facet_ends(&self, i: usize) -> (Point, Point) {
        self.facet_ends[i]
    }

    pub fn boundary_measure(&self) -> f64 {
        self.facet_measure.iter().sum()
    }

    /// Total boundary measure over volume; equals `n` for reflexive polytopes with `c_i = 1`.
    pub fn mean_boundary_ratio(&self) -> f64 {
        self.boundary_measure() / self.volume
    }

    /// Hex SHA-256 of the canonical JSON form of the facet data.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn spec(&self) -> PolytopeSpec {
        PolytopeSpec {
            n: self.n,
            facets: self.facets.clone(),
        }
    }

    #[inline]
    pub fn ell(&self, i: usize, y: Point) -> f64 {
        let l = self.normals[i];
        l[0] * y[0] + l[1] * y[1] + self.offsets[i]
    }

    pub fn min_ell(&self, y: Point) -> f64 {
        (0..self.normals.len())
            .map(|i| self.ell(i, y))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, y: Point, tol: f64) -> bool {
        self.min_ell(y) >= -tol
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Lebesgue barycenter.
    pub fn barycenter(&self) -> Point {
        if self.n == 1 {
            return [0.5 * (self.vertices[0][0] + self.vertices[1][0]), 0.0];
        }
        let v0 = self.vertices[0];
        let mut acc = [0.0; 2];
        for w in self.vertices[1..].windows(2) {
            let a = tri_area(v0, w[0], w[1]);
            for k in 0..2 {
                acc[k] += a * (v0[k] + w[0][k] + w[1][k]) / 3.0;
            }
        }
        [acc[0] / self.volume, acc[1] / self.volume]
    }

    /// Exact `∫_P (<b, y> + c) dy`.
    pub fn integrate_affine(&self, b: Point, c: f64) -> f64 {
        let g = self.barycenter();
        self.volume * (b[0] * g[0] + b[1] * g[1] + c)
    }

    /// Exact `∫_{∂P} (<b, y> + c) dσ` for the lattice boundary measure.
    pub fn boundary_integrate_affine(&self, b: Point, c: f64) -> f64 {
        (0..self.num_facets())
            .map(|i| {
                let (p, q) = self.facet_ends[i];
                let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
                self.facet_measure[i] * (b[0] * mid[0] + b[1] * mid[1] + c)
            })
            .sum()
    }

    /// True when every offset equals `beta`.
    pub fn all_offsets_equal(&self, beta: f64) -> bool {
        self.offsets.iter().all(|&c| (c - beta).abs() <= 1e-12)
    }

    /// Named polytopes used by the experiments and tests.
    pub fn named(name: &str) -> Result<Self> {
        let f = |l: &[i64], c: f64| Facet::new(l, c);
        let facets = match name {
            "p1" => vec![f(&[1], 1.0), f(&[-1], 1.0)],
            "unit-interval" => vec![f(&[1], 0.0), f(&[-1], 1.0)],
            "dp3" => vec![
                f(&[1, 0], 1.0),
                f(&[0, 1], 1.0),
                f(&[-1, 0], 1.0),
                f(&[0, -1], 1.0),
                f(&[1, 1], 1.0),
                f(&[-1, -1], 1.0),
            ],
            "dp1" => vec![
                f(&[1, 0], 1.0),
                f(&[0, 1], 1.0),
                f(&[-1, -1], 1.0),
                f(&[1, 1], 1.0),
            ],
            "dp1-trapezoid" => vec![
                f(&[1, 0], 0.0),
                f(&[0, 1], 0.0),
                f(&[-1, -1], 2.0),
                f(&[0, -1], 1.0),
            ],
            "p1xp1" => vec![
                f(&[1, 0], 1.0),
                f(&[0, 1], 1.0),
                f(&[-1, 0], 1.0),
                f(&[0, -1], 1.0),
            ],
            "p2" => vec![f(&[1, 0], 1.0), f(&[0, 1], 1.0), f(&[-1, -1], 1.0)],
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown polytope '{name}' (known: {})",
                    NAMED.join(", ")
                )))
            }
        };
        build_polytope(&facets)
    }

    /// Interval `[-beta, beta]` with both offsets equal to `beta`.
    pub fn football(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::ParameterOutOfRange(format!("beta = {beta}")));
        }
        build_polytope(&[Facet::new(&[1], beta), Facet::new(&[-1], beta)])
    }
}

pub const NAMED: &[&str] = &[
    "p1",
    "unit-interval",
    "dp3",
    "dp1",
    "dp1-trapezoid",
    "p1xp1",
    "p2",
];

pub(crate) fn tri_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn shoelace(v: &[Point]) -> f64 {
    let m = v.len();
    0.5 * (0..m)
        .map(|k| {
            let (p, q) = (v[k], v[(k + 1) % m]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}
