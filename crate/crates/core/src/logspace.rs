//! Kähler-side integrals evaluated in logarithmic coordinates.
//!
//! A torus-invariant potential is a function of `x ∈ ℝⁿ`. For the symplectic
//! potential `u = u_G + h` the Kähler potential relative to the reference is
//! `φ(x) = -h(y) - B(y, z)`, where `∇u(y) = x`, `∇u_G(z) = x` and `B` is the
//! Bregman divergence of `u_G`. All measures `ω_φⁿ` have densities
//! `1 / det D²u(y(x))` in `x`, decaying exponentially at infinity, so the
//! trapezoid rule on a uniform lattice converges very quickly for smooth
//! integrands. The lattice is anchored at the origin so reference data can be
//! shared between evaluations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Smooth;
use crate::grid::DomainRef;
use crate::model::{mixed, Mat, ToricModel, Vec2};
use crate::polytope::Point;
use crate::potential::SymplecticPotential;

/// Lattice spacing and the margin added beyond the gradient range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XOptions {
    pub step: f64,
    pub margin: f64,
}

impl XOptions {
    pub fn default_for(n: usize) -> Self {
        if n == 1 {
            XOptions {
                step: 1.0 / 64.0,
                margin: 40.0,
            }
        } else {
            XOptions {
                step: 0.125,
                margin: 24.0,
            }
        }
    }

    /// Cheaper settings for sweeps; about five digits on smooth data.
    pub fn coarse(n: usize) -> Self {
        if n == 1 {
            XOptions {
                step: 1.0 / 32.0,
                margin: 36.0,
            }
        } else {
            XOptions {
                step: 0.2,
                margin: 18.0,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Lattice {
    i0: i64,
    j0: i64,
    nx: usize,
    ny: usize,
}

impl Lattice {
    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn contains(&self, o: &Lattice) -> bool {
        o.i0 >= self.i0
            && o.j0 >= self.j0
            && o.i0 + o.nx as i64 <= self.i0 + self.nx as i64
            && o.j0 + o.ny as i64 <= self.j0 + self.ny as i64
    }

    fn union(&self, o: &Lattice) -> Lattice {
        let i0 = self.i0.min(o.i0);
        let j0 = self.j0.min(o.j0);
        let i1 = (self.i0 + self.nx as i64).max(o.i0 + o.nx as i64);
        let j1 = (self.j0 + self.ny as i64).max(o.j0 + o.ny as i64);
        Lattice {
            i0,
            j0,
            nx: (i1 - i0) as usize,
            ny: (j1 - j0) as usize,
        }
    }
}

/// Reference data at every lattice node.
#[derive(Debug)]
struct Reference {
    lattice: Lattice,
    step: f64,
    z: Vec<Point>,
    /// `1 / det G(z)`, the density of `ωⁿ`.
    w: Vec<f64>,
    /// `D²ψ_G = G(z)⁻¹`.
    a: Vec<Mat>,
    log_det: Vec<f64>,
    ricci: Vec<Mat>,
    /// Facet values at `z`, `num_facets` per node (2D only).
    ells: Vec<f64>,
}

type CacheKey = (String, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Reference>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Reference>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn reference_for(model: &ToricModel, step: f64, want: Lattice) -> Result<Arc<Reference>> {
    let key = (model.polytope().hash().to_string(), step.to_bits());
    let lattice = {
        let guard = cache().lock().expect("reference cache");
        match guard.get(&key) {
            Some(r) if r.lattice.contains(&want) => return Ok(r.clone()),
            Some(r) => r.lattice.union(&want),
            None => want,
        }
    };
    let r = Arc::new(build_reference(model, step, lattice)?);
    cache()
        .lock()
        .expect("reference cache")
        .insert(key, r.clone());
    Ok(r)
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)`.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `log(σ(x) σ(-x))` without underflow for large `|x|`.
#[inline]
fn log_sigmoid_pair(x: f64) -> f64 {
    -(softplus(x) + softplus(-x))
}

/// Interval geometry for `n = 1`: `ℓ_left = L σ(t)`, `ℓ_right = L σ(-t)`,
/// which parametrizes the interior by `t = u_G'(y)` without cancellation.
#[derive(Debug, Clone, Copy)]
struct Interval {
    a: f64,
    b: f64,
    len: f64,
}

impl Interval {
    fn of(model: &ToricModel) -> Self {
        let v = model.polytope().vertices();
        Interval {
            a: v[0][0],
            b: v[1][0],
            len: v[1][0] - v[0][0],
        }
    }

    fn ells(&self, t: f64) -> (f64, f64) {
        (self.len * sigmoid(t), self.len * sigmoid(-t))
    }

    fn point(&self, t: f64) -> Point {
        let (l, r) = self.ells(t);
        if l < r {
            [self.a + l, 0.0]
        } else {
            [self.b - r, 0.0]
        }
    }
}

fn build_reference(model: &ToricModel, step: f64, lat: Lattice) -> Result<Reference> {
    let n = model.n();
    let len = lat.len();
    let mut z = vec![[0.0; 2]; len];
    let mut w = vec![0.0; len];
    let mut a = vec![Mat::zeros(); len];
    let mut log_det = vec![0.0; len];
    let mut ricci = vec![Mat::zeros(); len];
    let mut ells_all = Vec::new();
    if n == 1 {
        let iv = Interval::of(model);
        for k in 0..len {
            let x = (lat.i0 + k as i64) as f64 * step;
            let (l, r) = iv.ells(x);
            z[k] = iv.point(x);
            // G = L / (ℓ_l ℓ_r)
            let g_inv = l * r / iv.len;
            w[k] = g_inv;
            a[k] = Mat::new(g_inv, 0.0, 0.0, 1.0);
            log_det[k] = -(iv.len.ln() + log_sigmoid_pair(x));
            let s = sigmoid(x) * sigmoid(-x);
            ricci[k] = Mat::new(2.0 * s, 0.0, 0.0, 0.0);
        }
    } else {
        // first column sequentially, then rows in parallel with warm starts
        let mut col: Vec<Solved> = Vec::with_capacity(lat.ny);
        let mut start = model.ells(model.polytope().barycenter());
        for j in 0..lat.ny {
            let x = Vec2::new(lat.i0 as f64 * step, (lat.j0 + j as i64) as f64 * step);
            let s = solve_2d(model, None, x, &start)?;
            start = s.ells.clone();
            col.push(s);
        }
        type Node = (Point, f64, Mat, f64, Mat, Vec<f64>);
        let rows: Vec<Vec<Node>> = (0..lat.ny)
            .into_par_iter()
            .map(|j| {
                let mut out = Vec::with_capacity(lat.nx);
                let mut prev = col[j].ells.clone();
                for i in 0..lat.nx {
                    let x = Vec2::new(
                        (lat.i0 + i as i64) as f64 * step,
                        (lat.j0 + j as i64) as f64 * step,
                    );
                    let s = if i == 0 {
                        col[j].clone()
                    } else {
                        solve_2d(model, None, x, &prev)?
                    };
                    prev.copy_from_slice(&s.ells);
                    let geo = geometry(model, &s.ells, true);
                    out.push((
                        s.y,
                        (-geo.log_det).exp(),
                        geo.k,
                        geo.log_det,
                        geo.ricci,
                        s.ells,
                    ));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        ells_all = Vec::with_capacity(len * model.num_facets());
        for (j, row) in rows.into_iter().enumerate() {
            for (i, (zz, ww, aa, ld, rr, ee)) in row.into_iter().enumerate() {
                ells_all.extend(ee);
                let k = j * lat.nx + i;
                z[k] = zz;
                w[k] = ww;
                a[k] = aa;
                log_det[k] = ld;
                ricci[k] = rr;
            }
        }
    }
    Ok(Reference {
        lattice: lat,
        step,
        z,
        w,
        a,
        log_det,
        ricci,
        ells: ells_all,
    })
}

/// Reference quantities at a point with facet values `ells`, arranged so
/// that no step subtracts quantities of size `1/ℓ`.
pub(crate) struct Geometry {
    pub log_det: f64,
    /// `G⁻¹`.
    pub k: Mat,
    /// `D²_x log det G` in log coordinates (zero unless requested).
    pub ricci: Mat,
}

#[inline]
fn perp(v: Point) -> Vec2 {
    Vec2::new(v[1], -v[0])
}

#[inline]
fn det2(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Two-dimensional case. With `c_j = 1/ℓ_j`, Cauchy–Binet gives
/// `det G = Σ_{j<k} det(l_j,l_k)² c_j c_k`, `adj G = Σ_j c_j l_j^⊥ l_j^⊥ᵀ`, and
/// `m_i = G⁻¹ l_i / ℓ_i` is a ratio of sums whose terms share one sign
/// pattern. The Ricci form follows from `∂_x ℓ_i = ℓ_i m_i`:
/// `∇L = -Σ τ_i m_i` with `τ_i = <l_i, m_i>`, and
/// `∂_e m_i = Σ_j C_ij m_je m_j - m_ie m_i` with `C_ij = <m_i, l_j>`.
pub(crate) fn geometry(model: &ToricModel, ells: &[f64], with_ricci: bool) -> Geometry {
    let p = model.polytope();
    let m = ells.len();
    let l: Vec<Point> = (0..m).map(|i| p.normal(i)).collect();
    let mut det = 0.0;
    for j in 0..m {
        for k in (j + 1)..m {
            let d = det2(l[j], l[k]);
            det += d * d / (ells[j] * ells[k]);
        }
    }
    let mut adj = Mat::zeros();
    for j in 0..m {
        let v = perp(l[j]);
        adj += v * v.transpose() / ells[j];
    }
    let k = adj / det;
    let mut ricci = Mat::zeros();
    if with_ricci {
        let mut mv = vec![Vec2::zeros(); m];
        for i in 0..m {
            let mut num = Vec2::zeros();
            for j in 0..m {
                if j != i {
                    num += perp(l[j]) * (det2(l[i], l[j]) / ells[j]);
                }
            }
            let mut den = 0.0;
            for j in 0..m {
                for q in (j + 1)..m {
                    let d = det2(l[j], l[q]);
                    if d == 0.0 {
                        continue;
                    }
                    den += d
                        * d
                        * if j == i {
                            1.0 / ells[q]
                        } else if q == i {
                            1.0 / ells[j]
                        } else {
                            ells[i] / (ells[j] * ells[q])
                        };
                }
            }
            mv[i] = num / den;
        }
        let c = |i: usize, j: usize| mv[i][0] * l[j][0] + mv[i][1] * l[j][1];
        let tau: Vec<f64> = (0..m).map(|i| c(i, i)).collect();
        for e in 0..2 {
            for i in 0..m {
                let mut dm = -mv[i] * mv[i][e];
                let mut dtau = -tau[i] * mv[i][e];
                for j in 0..m {
                    dm += mv[j] * (c(i, j) * mv[j][e]);
                    dtau += c(i, j) * c(j, i) * mv[j][e];
                }
                for a in 0..2 {
                    ricci[(a, e)] -= dtau * mv[i][a] + tau[i] * dm[a];
                }
            }
        }
        ricci = 0.5 * (ricci + ricci.transpose());
    }
    Geometry {
        log_det: det.ln(),
        k,
        ricci,
    }
}

/// Coordinates `w = (ℓ_j, ℓ_k)` for two facets meeting at a vertex `a`:
/// `y = a + M⁻¹w` with `M` the matrix of their normals, and every facet
/// value is `ℓ_i = base_i + <c_i, w>`, `c_i = M⁻ᵀl_i`. The two nearest
/// facets are then unknowns themselves and keep full relative precision.
struct Frame {
    jk: (usize, usize),
    a: Point,
    minv: Mat,
    coef: Vec<Vec2>,
    base: Vec<f64>,
}

impl Frame {
    /// Frames at an end of the facet nearest the point with facet values
    /// `ells`, the one whose other facet is nearer.
    fn near(p: &crate::polytope::Polytope, ells: &[f64]) -> Self {
        let m = p.num_facets();
        let j = (0..m)
            .min_by(|&a, &b| ells[a].total_cmp(&ells[b]))
            .expect("facets");
        let (e0, e1) = p.facet_ends(j);
        let other = |v: Point| {
            (0..m)
                .filter(|&i| i != j && p.ell(i, v).abs() <= 1e-9)
                .min_by(|&a, &b| ells[a].total_cmp(&ells[b]))
                .expect("vertex on two facets")
        };
        let (k0, k1) = (other(e0), other(e1));
        let (a, k) = if ells[k0] <= ells[k1] {
            (e0, k0)
        } else {
            (e1, k1)
        };
        let (lj, lk) = (p.normal(j), p.normal(k));
        let mm = Mat::new(lj[0], lj[1], lk[0], lk[1]);
        let minv = mm.try_inverse().expect("adjacent facets are independent");
        let coef = (0..m)
            .map(|i| {
                let l = p.normal(i);
                minv.transpose() * Vec2::new(l[0], l[1])
            })
            .collect();
        let base = (0..m)
            .map(|i| if i == j || i == k { 0.0 } else { p.ell(i, a) })
            .collect();
        Frame {
            jk: (j, k),
            a,
            minv,
            coef,
            base,
        }
    }

    /// Coordinates of the point with facet values `ells`, read off exactly.
    fn coords(&self, ells: &[f64]) -> Vec2 {
        Vec2::new(ells[self.jk.0], ells[self.jk.1])
    }

    fn ells(&self, w: Vec2, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.base[i] + self.coef[i].dot(&w);
        }
    }

    fn point(&self, w: Vec2) -> Point {
        let d = self.minv * w;
        [self.a[0] + d[0], self.a[1] + d[1]]
    }
}

/// Solution of [`solve_2d`]: the point and its facet values, the latter
/// accurate relative to their size.
#[derive(Debug, Clone)]
struct Solved {
    y: Point,
    ells: Vec<f64>,
}

/// Minimizes `u_G(y) + h(y) - <x, y>` over the polytope interior, starting
/// from the point with facet values `start`.
fn solve_2d(model: &ToricModel, h: Option<&Smooth>, x: Vec2, start: &[f64]) -> Result<Solved> {
    let p = model.polytope();
    let m = p.num_facets();
    let bary;
    let start = if start.iter().all(|&l| l > 0.0) {
        start
    } else {
        bary = model.ells(p.barycenter());
        &bary
    };
    let mut frame = Frame::near(p, start);
    let mut w = frame.coords(start);
    let mut ells = start.to_vec();
    let mut trial = vec![0.0; m];
    // objective in frame coordinates, up to the constant -<x, a>
    let eval = |frame: &Frame, w: Vec2, ells: &[f64]| -> (f64, Vec2, Mat) {
        let xt = frame.minv.transpose() * x;
        let mut f = -xt.dot(&w);
        let mut g = -xt;
        let mut hm = Mat::zeros();
        for (c, &l) in frame.coef.iter().zip(ells) {
            f += l * l.ln();
            g += c * (l.ln() + 1.0);
            hm += c * c.transpose() / l;
        }
        if let Some(s) = h {
            let (hv, hg, hh) = s.eval(frame.point(w));
            f += hv;
            g += frame.minv.transpose() * hg;
            hm += frame.minv.transpose() * hh * frame.minv;
        }
        (f, g, hm)
    };
    let (mut f, mut g, mut hm) = eval(&frame, w, &ells);
    let mut prev_rel = f64::INFINITY;
    for it in 0..100 {
        let Some(inv) = hm.try_inverse() else {
            return Err(Error::DegenerateHessian(format!(
                "singular Hessian at {:?}",
                frame.point(w)
            )));
        };
        let step = inv * g;
        let dec = g.dot(&step);
        if dec < 0.0 {
            return Err(Error::DegenerateHessian(format!(
                "indefinite Hessian at {:?}",
                frame.point(w)
            )));
        }
        // the decrement is tiny near a facet even far from the solution, so
        // convergence is judged by the relative change of every facet value
        let mut alpha: f64 = 1.0;
        let mut rel: f64 = 0.0;
        for (c, &l) in frame.coef.iter().zip(&ells) {
            let rate = c.dot(&step);
            rel = rel.max(rate.abs() / l);
            if rate > 0.0 {
                alpha = alpha.min(0.95 * l / rate);
            }
        }
        // converged, stalled at the rounding floor of the gradient, or left
        // with a relative error only on facets of weight below dec / rel²
        if rel < 1e-13 || (rel < 1e-9 && rel >= 0.5 * prev_rel) || (dec < 1e-24 && rel < 1e-3) {
            return Ok(Solved {
                y: frame.point(w),
                ells,
            });
        }
        prev_rel = rel;
        let mut accepted = false;
        for _ in 0..50 {
            let wn = w - alpha * step;
            frame.ells(wn, &mut trial);
            if trial.iter().all(|&l| l > 0.0) {
                let (fn_, gn, hn) = eval(&frame, wn, &trial);
                // quadratic regime: full step. Decreases below the rounding
                // of `f` cannot be resolved, so the test allows for it.
                let noise = 8.0 * f64::EPSILON * f.abs().max(fn_.abs());
                if rel < 1e-4 || fn_ <= f - 1e-4 * alpha * dec + noise || gn.dot(&step) >= 0.0 {
                    if wn == w {
                        return Ok(Solved {
                            y: frame.point(w),
                            ells,
                        });
                    }
                    w = wn;
                    std::mem::swap(&mut ells, &mut trial);
                    (f, g, hm) = (fn_, gn, hn);
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: dec.sqrt(),
            });
        }
        // change frame while far from converged
        if rel > 1e-3 {
            let next = Frame::near(p, &ells);
            if next.jk != frame.jk {
                frame = next;
                w = frame.coords(&ells);
                (f, g, hm) = eval(&frame, w, &ells);
            }
        }
    }
    let rel = hm.try_inverse().map_or(f64::INFINITY, |inv| {
        let step = inv * g;
        frame
            .coef
            .iter()
            .zip(&ells)
            .map(|(c, &l)| c.dot(&step).abs() / l)
            .fold(0.0, f64::max)
    });
    if rel < 1e-8 {
        return Ok(Solved {
            y: frame.point(w),
            ells,
        });
    }
    Err(Error::NonConvergence {
        iterations: 100,
        residual: g.norm(),
    })
}

/// Solves `t + h'(y(t)) = x` for the interval parametrization `t`.
fn solve_1d(iv: &Interval, h: &Smooth, x: f64, lo: f64, hi: f64, start: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let res = |t: f64| -> (f64, f64) {
        let (l, r) = iv.ells(t);
        let (_, hg, hh) = h.eval(iv.point(t));
        (t + hg[0] - x, 1.0 + hh[(0, 0)] * l * r / iv.len)
    };
    let mut t = start.clamp(a, b);
    for _ in 0..200 {
        let (r, d) = res(t);
        if r == 0.0 {
            return Ok(t);
        }
        if r > 0.0 {
            b = t;
        } else {
            a = t;
        }
        if d <= 0.0 {
            return Err(Error::DegenerateHessian(format!(
                "non-positive second derivative near y = {}",
                iv.point(t)[0]
            )));
        }
        let mut tn = t - r / d;
        if !(tn > a && tn < b) {
            tn = 0.5 * (a + b);
        }
        if (tn - t).abs() <= 1e-15 * (1.0 + t.abs()) || b - a <= 1e-15 * (1.0 + t.abs()) {
            return Ok(tn);
        }
        t = tn;
    }
    Ok(t)
}

/// Pushforward data of one potential at every lattice node of a view.
#[derive(Debug, Clone)]
struct Pushforward {
    y: Vec<Point>,
    /// `1 / det D²u(y)`, the density of `ω_φⁿ`.
    w: Vec<f64>,
    /// `D²ψ_u = (D²u(y))⁻¹`.
    b: Vec<Mat>,
    /// `log det G(z) - log det D²u(y)`.
    log_ratio: Vec<f64>,
    phi: Vec<f64>,
}

/// A set of potentials pushed to a common lattice.
#[derive(Debug, Clone)]
pub struct LogSpace {
    domain: DomainRef,
    reference: Arc<Reference>,
    lattice: Lattice,
    cell: f64,
    push: Vec<Pushforward>,
}

impl LogSpace {
    pub fn new(
        domain: &DomainRef,
        potentials: &[&SymplecticPotential],
        opts: XOptions,
    ) -> Result<Self> {
        for u in potentials {
            if !u.domain().compatible(domain) {
                return Err(Error::GridMismatch);
            }
        }
        let smooth: Vec<Smooth> = potentials
            .iter()
            .map(|u| Smooth::new(domain.clone(), u.values()))
            .collect();
        Self::from_smooth(domain, &smooth, opts)
    }

    pub fn from_smooth(domain: &DomainRef, smooth: &[Smooth], opts: XOptions) -> Result<Self> {
        let n = domain.n();
        let mut lo = Vec2::zeros();
        let mut hi = Vec2::zeros();
        for s in smooth {
            let (a, b) = s.gradient_range();
            for c in 0..n {
                lo[c] = lo[c].min(a[c]);
                hi[c] = hi[c].max(b[c]);
            }
        }
        let idx = |v: f64, up: bool| -> i64 {
            let q = v / opts.step;
            (if up { q.ceil() } else { q.floor() }) as i64
        };
        let i0 = idx(lo[0] - opts.margin, false);
        let i1 = idx(hi[0] + opts.margin, true);
        let (j0, j1) = if n == 1 {
            (0, 0)
        } else {
            (
                idx(lo[1] - opts.margin, false),
                idx(hi[1] + opts.margin, true),
            )
        };
        let lattice = Lattice {
            i0,
            j0,
            nx: (i1 - i0 + 1) as usize,
            ny: (j1 - j0 + 1) as usize,
        };
        if lattice.len() > 40_000_000 {
            return Err(Error::GridTooCoarse(format!(
                "log-coordinate lattice of {} nodes; gradient range too large for step {}",
                lattice.len(),
                opts.step
            )));
        }
        let reference = reference_for(domain.model(), opts.step, lattice)?;
        let mut out = LogSpace {
            domain: domain.clone(),
            reference,
            lattice,
            cell: opts.step.powi(n as i32),
            push: Vec::new(),
        };
        for s in smooth {
            let p = out.pushforward(s)?;
            out.push.push(p);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.push.len()
    }

    pub fn is_empty(&self) -> bool {
        self.push.is_empty()
    }

    /// Number of lattice nodes.
    pub fn nodes(&self) -> usize {
        self.lattice.len()
    }

    #[inline]
    fn ref_index(&self, i: usize, j: usize) -> usize {
        let r = &self.reference.lattice;
        let ri = (self.lattice.i0 - r.i0) as usize + i;
        let rj = (self.lattice.j0 - r.j0) as usize + j;
        rj * r.nx + ri
    }

    fn x_at(&self, i: usize, j: usize) -> Vec2 {
        let s = self.reference.step;
        Vec2::new(
            (self.lattice.i0 + i as i64) as f64 * s,
            (self.lattice.j0 + j as i64) as f64 * s,
        )
    }

    fn pushforward(&self, s: &Smooth) -> Result<Pushforward> {
        let model = self.domain.model();
        let lat = self.lattice;
        let rf = &self.reference;
        let rows: Vec<Vec<(Point, f64, Mat, f64, f64)>> = if model.n() == 1 {
            let iv = Interval::of(model);
            let (glo, ghi) = s.gradient_range();
            let pad = 1.0 + 0.1 * (ghi[0] - glo[0]);
            let (glo, ghi) = (glo[0] - pad, ghi[0] + pad);
            let chunk = 1024;
            let parts: Vec<Vec<(Point, f64, Mat, f64, f64)>> = (0..lat.nx.div_ceil(chunk))
                .into_par_iter()
                .map(|c| {
                    let mut out = Vec::new();
                    let mut prev: Option<f64> = None;
                    for i in (c * chunk)..((c + 1) * chunk).min(lat.nx) {
                        let x = self.x_at(i, 0)[0];
                        let start = prev.unwrap_or(x - 0.5 * (glo + ghi));
                        let t = solve_1d(&iv, s, x, x - ghi, x - glo, start)?;
                        prev = Some(t);
                        out.push(self.node_1d(&iv, s, x, t)?);
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?;
            vec![parts.into_iter().flatten().collect()]
        } else {
            (0..lat.ny)
                .into_par_iter()
                .map(|j| {
                    let mut out = Vec::with_capacity(lat.nx);
                    let mut prev = self.ref_ells(self.ref_index(0, j)).to_vec();
                    for i in 0..lat.nx {
                        let x = self.x_at(i, j);
                        let own = solve_2d(model, Some(s), x, &prev)?;
                        prev.copy_from_slice(&own.ells);
                        let r = self.ref_index(i, j);
                        out.push(self.node_2d(s, &own, self.ref_ells(r), rf.log_det[r])?);
                    }
                    Ok(out)
                })
                .collect::<Result<_>>()?
        };
        let mut p = Pushforward {
            y: Vec::with_capacity(lat.len()),
            w: Vec::with_capacity(lat.len()),
            b: Vec::with_capacity(lat.len()),
            log_ratio: Vec::with_capacity(lat.len()),
            phi: Vec::with_capacity(lat.len()),
        };
        for (y, w, b, lr, phi) in rows.into_iter().flatten() {
            p.y.push(y);
            p.w.push(w);
            p.b.push(b);
            p.log_ratio.push(lr);
            p.phi.push(phi);
        }
        Ok(p)
    }

    fn node_1d(
        &self,
        iv: &Interval,
        s: &Smooth,
        x: f64,
        t: f64,
    ) -> Result<(Point, f64, Mat, f64, f64)> {
        let (l, r) = iv.ells(t);
        let y = iv.point(t);
        let (hv, _, hh) = s.eval(y);
        let g = iv.len / (l * r);
        let q = 1.0 + hh[(0, 0)] / g;
        if q <= 1e-12 {
            return Err(Error::DegenerateHessian(format!(
                "u'' / u_G'' = {q:e} at y = {}",
                y[0]
            )));
        }
        let log_det_u = g.ln() + q.ln();
        let log_det_g = -(iv.len.ln() + log_sigmoid_pair(x));
        let w = 1.0 / (g * q);
        // Bregman divergence: ℓ_l + ℓ_r is constant, so only the log terms remain
        let breg = l * (softplus(-x) - softplus(-t)) + r * (softplus(x) - softplus(t));
        Ok((
            y,
            w,
            Mat::new(w, 0.0, 0.0, 1.0),
            log_det_g - log_det_u,
            -hv - breg,
        ))
    }

    fn ref_ells(&self, r: usize) -> &[f64] {
        let m = self.domain.model().num_facets();
        &self.reference.ells[r * m..(r + 1) * m]
    }

    fn node_2d(
        &self,
        s: &Smooth,
        own: &Solved,
        ref_ells: &[f64],
        log_det_g: f64,
    ) -> Result<(Point, f64, Mat, f64, f64)> {
        let model = self.domain.model();
        let (y, ells) = (own.y, &own.ells);
        let (hv, _, hh) = s.eval(y);
        let geo = geometry(model, ells, false);
        let (ld_y, ginv) = (geo.log_det, geo.k);
        let m = Mat::identity() + ginv * hh;
        let q = m.determinant();
        if q <= 1e-12 {
            return Err(Error::DegenerateHessian(format!(
                "det D²u / det D²u_G = {q:e} at ({:.6}, {:.6})",
                y[0], y[1]
            )));
        }
        let b = m.try_inverse().expect("q > 0") * ginv;
        let b = 0.5 * (b + b.transpose());
        let log_det_u = ld_y + q.ln();
        let mut breg = 0.0;
        for (&a, &c) in ells.iter().zip(ref_ells) {
            breg += a * (a / c).ln() - a + c;
        }
        Ok((y, (-log_det_u).exp(), b, log_det_g - log_det_u, -hv - breg))
    }

    /// Discrete `V⁻¹ ∫ f dx` with `f` given per lattice node.
    fn mean(&self, f: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
        let lat = self.lattice;
        let rows: Vec<f64> = (0..lat.ny)
            .into_par_iter()
            .map(|j| (0..lat.nx).map(|i| f(i, j)).sum::<f64>())
            .collect();
        rows.iter().sum::<f64>() * self.cell / self.domain.volume()
    }

    /// Kähler-side integrals of potential `p`.
    pub fn integrals(&self, p: usize) -> KahlerIntegrals {
        let pf = &self.push[p];
        let rf = &self.reference;
        let n = self.domain.n();
        let nx = self.lattice.nx;
        let k = |i: usize, j: usize| j * nx + i;
        let fano = self.domain.model().is_fano();
        let fc = if fano {
            self.domain.model().ricci_constant(1.0).ok()
        } else {
            None
        };
        let rows: Vec<[f64; 10]> = (0..self.lattice.ny)
            .into_par_iter()
            .map(|j| {
                let mut acc = [0.0f64; 10];
                for i in 0..nx {
                    let q = k(i, j);
                    let r = self.ref_index(i, j);
                    let phi = pf.phi[q];
                    let (wg, wu) = (rf.w[r], pf.w[q]);
                    let (a, b) = (&rf.a[r], &pf.b[q]);
                    let (mix, t0, t1) = if n == 1 {
                        (0.0, phi * rf.ricci[r][(0, 0)], 0.0)
                    } else {
                        (
                            mixed(a, b),
                            phi * mixed(&rf.ricci[r], a),
                            phi * mixed(&rf.ricci[r], b),
                        )
                    };
                    acc[0] += phi * wg;
                    acc[1] += phi * wu;
                    acc[2] += if n == 1 {
                        0.5 * phi * (wg + wu)
                    } else {
                        phi * (wg + mix + wu) / 3.0
                    };
                    acc[3] += wu * pf.log_ratio[q];
                    acc[4] += t0;
                    acc[5] += t1;
                    acc[6] += wu;
                    acc[7] += wg;
                    if let Some(c) = fc {
                        let f = self.ricci_at(r, 1.0) + c;
                        acc[8] += f * wg;
                        acc[9] += phi.abs() * wg;
                    }
                }
                acc
            })
            .collect();
        let scale = self.cell / self.domain.volume();
        let mut s = [0.0f64; 10];
        for r in rows {
            for (a, b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        for v in s.iter_mut() {
            *v *= scale;
        }
        KahlerIntegrals {
            phi_ref: s[0],
            phi_own: s[1],
            am: s[2],
            entropy: s[3],
            ricci_ref: s[4],
            ricci_own: s[5],
            mass_own: s[6],
            mass_ref: s[7],
            f_ref: fc.map(|_| s[8]),
            sup_phi: pf.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Unnormalized Ricci potential of the reference at reference node `r`.
    fn ricci_at(&self, r: usize, beta: f64) -> f64 {
        let model = self.domain.model();
        if model.n() == 1 {
            let x = {
                let lat = self.reference.lattice;
                (lat.i0 + (r % lat.nx) as i64) as f64 * self.reference.step
            };
            let (l, rr) = Interval::of(model).ells(x);
            model.ricci_potential_raw(beta, &model.ordered_interval_ells(l, rr))
        } else {
            model.ricci_potential_raw(beta, self.ref_ells(r))
        }
    }

    /// Ding-type integrals of potential `p` for cone angle `beta`, with the
    /// Ricci potential normalized by `V⁻¹ ∫ e^f ωⁿ = 1`. If `b` is given,
    /// the moment-map weights `e^{<b,·>}` enter the soliton terms.
    pub fn ding_terms(&self, p: usize, beta: f64, b: Option<[f64; 2]>) -> Result<DingTerms> {
        let model = self.domain.model();
        model.require_fano(beta)?;
        let c = model.ricci_constant(beta)?;
        let pf = &self.push[p];
        let rf = &self.reference;
        let nx = self.lattice.nx;
        let lv = (self.cell / self.domain.volume()).ln();
        let bb = b.unwrap_or([0.0, 0.0]);
        let lin = |y: Point| bb[0] * y[0] + bb[1] * y[1];
        struct Row {
            ding: crate::lse::LogSumExp,
            mass: f64,
            mass_ref: crate::lse::LogSumExp,
            mass_own: crate::lse::LogSumExp,
        }
        // pass 1: normalizers
        let rows: Vec<Row> = (0..self.lattice.ny)
            .into_par_iter()
            .map(|j| {
                let mut row = Row {
                    ding: Default::default(),
                    mass: 0.0,
                    mass_ref: Default::default(),
                    mass_own: Default::default(),
                };
                for i in 0..nx {
                    let q = j * nx + i;
                    let r = self.ref_index(i, j);
                    let f = self.ricci_at(r, beta) + c;
                    row.ding.add(f - pf.phi[q], rf.w[r]);
                    row.mass += pf.w[q];
                    row.mass_ref.add(lin(rf.z[r]), rf.w[r]);
                    row.mass_own.add(lin(pf.y[q]), pf.w[q]);
                }
                row
            })
            .collect();
        let mut ding = crate::lse::LogSumExp::new();
        let mut mref = crate::lse::LogSumExp::new();
        let mut mown = crate::lse::LogSumExp::new();
        let mut mass = 0.0;
        for r in &rows {
            ding.merge(&r.ding);
            mref.merge(&r.mass_ref);
            mown.merge(&r.mass_own);
            mass += r.mass;
        }
        let log_ding = ding.value() + lv;
        let log_mass = mass.ln();
        // probability weights p_q = w_u / mass; f_φ = f - φ - log(w_u / w_g) + c_φ
        // with c_φ = -log Σ p e^{f - φ - log ρ} = -log(Σ e^{f-φ} w_g / mass)
        let c_phi = -(ding.value() - log_mass);
        let c_own = -(mown.value() - log_mass);
        let mass_ref: f64 = {
            let v: Vec<f64> = (0..self.lattice.ny)
                .into_par_iter()
                .map(|j| (0..nx).map(|i| rf.w[self.ref_index(i, j)]).sum::<f64>())
                .collect();
            v.iter().sum()
        };
        let c_ref = -(mref.value() - mass_ref.ln());
        let sums: Vec<[f64; 3]> = (0..self.lattice.ny)
            .into_par_iter()
            .map(|j| {
                let mut acc = [0.0f64; 3];
                for i in 0..nx {
                    let q = j * nx + i;
                    let r = self.ref_index(i, j);
                    let f = self.ricci_at(r, beta) + c;
                    let f_phi = f - pf.phi[q] - pf.log_ratio[q] + c_phi;
                    let p_own = pf.w[q] / mass;
                    acc[0] += p_own * f_phi;
                    if b.is_some() {
                        let psi_ref = lin(rf.z[r]) + c_ref;
                        let psi_own = lin(pf.y[q]) + c_own;
                        acc[1] += rf.w[r] * (f - psi_ref) * psi_ref.exp();
                        acc[2] += p_own * (f_phi - psi_own) * psi_own.exp();
                    }
                }
                acc
            })
            .collect();
        let mut s = [0.0f64; 3];
        for r in sums {
            for (a, v) in s.iter_mut().zip(r) {
                *a += v;
            }
        }
        Ok(DingTerms {
            log_integral: log_ding,
            mean_f_phi: s[0],
            soliton_ref: s[1] / mass_ref,
            soliton_own: s[2],
        })
    }

    /// `V⁻¹ ∫ |φ_p - φ_q| (ω_pⁿ + ω_qⁿ)`.
    pub fn mixed_l1(&self, p: usize, q: usize) -> f64 {
        let (a, b) = (&self.push[p], &self.push[q]);
        let nx = self.lattice.nx;
        self.mean(|i, j| {
            let k = j * nx + i;
            (a.phi[k] - b.phi[k]).abs() * (a.w[k] + b.w[k])
        })
    }

    /// Kähler-side `AM(φ_p) - AM(φ_q)` from the mixed-measure formula
    /// `(n+1)⁻¹ Σ_j V⁻¹ ∫ (φ_p - φ_q) ω_p^j ∧ ω_q^{n-j}`.
    pub fn am_difference(&self, p: usize, q: usize) -> f64 {
        let (a, b) = (&self.push[p], &self.push[q]);
        let nx = self.lattice.nx;
        let n = self.domain.n();
        self.mean(|i, j| {
            let k = j * nx + i;
            let d = a.phi[k] - b.phi[k];
            if n == 1 {
                0.5 * d * (a.w[k] + b.w[k])
            } else {
                d * (a.w[k] + mixed(&a.b[k], &b.b[k]) + b.w[k]) / 3.0
            }
        })
    }

    /// `φ_p` at every lattice node, row-major, with the lattice coordinates.
    pub fn phi_samples(&self, p: usize) -> Vec<(Vec2, f64)> {
        let nx = self.lattice.nx;
        (0..self.lattice.len())
            .map(|k| (self.x_at(k % nx, k / nx), self.push[p].phi[k]))
            .collect()
    }
}

/// Kähler-side integrals of one potential, all divided by `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KahlerIntegrals {
    /// `V⁻¹ ∫ φ ωⁿ`.
    pub phi_ref: f64,
    /// `V⁻¹ ∫ φ ω_φⁿ`.
    pub phi_own: f64,
    /// Aubin–Mabuchi energy from the mixed-measure formula.
    pub am: f64,
    /// `Ent(ωⁿ, ω_φⁿ)`.
    pub entropy: f64,
    /// `V⁻¹ ∫ φ Ric ω ∧ ω^{n-1}`.
    pub ricci_ref: f64,
    /// `V⁻¹ ∫ φ Ric ω ∧ ω_φ^{n-1}` (zero for `n = 1`).
    pub ricci_own: f64,
    /// Total masses, both one up to quadrature error.
    pub mass_own: f64,
    pub mass_ref: f64,
    /// `V⁻¹ ∫ f ωⁿ` for the normalized Ricci potential (Fano models).
    pub f_ref: Option<f64>,
    pub sup_phi: f64,
}

/// Ingredients of the Ding functional and its modified variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DingTerms {
    /// `log V⁻¹ ∫ e^{f - φ} ωⁿ`.
    pub log_integral: f64,
    /// `V⁻¹ ∫ f_{ω_φ} ω_φⁿ`, with `f_{ω_φ}` normalized against the discrete measure.
    pub mean_f_phi: f64,
    /// `V⁻¹ ∫ (f - ψ) e^{ψ} ωⁿ` and the same for `ω_φ`.
    pub soliton_ref: f64,
    pub soliton_own: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::potential::{torus_act, AffineFunction};

    #[test]
    fn stable_ricci_form_matches_direct_formula() {
        for name in ["dp3", "dp1", "p2", "dp1-trapezoid"] {
            let m = ToricModel::named(name).unwrap();
            let p = m.polytope().clone();
            let c = p.barycenter();
            for (s, t) in [(0.0, 0.0), (0.3, -0.2), (-0.45, 0.1), (0.2, 0.5)] {
                let y = [c[0] + s, c[1] + t];
                if p.min_ell(y) <= 0.05 {
                    continue;
                }
                let g = geometry(&m, &m.ells(y), true);
                let direct = m.ricci_form(y);
                assert!(
                    (g.ricci - direct).norm() < 1e-10,
                    "{name} {y:?}: {} vs {}",
                    g.ricci,
                    direct
                );
                let kk = m.hess_ref(y).try_inverse().unwrap();
                assert!((g.k - kk).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn reference_has_zero_integrals() {
        let d = Domain::named("p1", 257).unwrap();
        let u = SymplecticPotential::reference(&d);
        let ls = LogSpace::new(&d, &[&u], XOptions::default_for(1)).unwrap();
        let k = ls.integrals(0);
        assert!((k.mass_ref - 1.0).abs() < 1e-12);
        assert!((k.mass_own - 1.0).abs() < 1e-12);
        assert!(k.phi_ref.abs() < 1e-14 && k.entropy.abs() < 1e-14);
    }

    #[test]
    fn ricci_integral_of_constant_matches_total_curvature() {
        // V⁻¹ ∫ Ric ω ∧ ω^{n-1} = σ(∂P) / (n Vol)
        for name in ["dp3", "dp1", "p2"] {
            let d = Domain::named(name, 65).unwrap();
            let u = SymplecticPotential::from_fn(&d, |_| -1.0).unwrap();
            let ls = LogSpace::new(&d, &[&u], XOptions::default_for(2)).unwrap();
            let k = ls.integrals(0);
            let p = d.polytope();
            let expect = p.boundary_measure() / (2.0 * p.volume());
            assert!(
                (k.ricci_ref - expect).abs() < 1e-6,
                "{name}: {} vs {expect}",
                k.ricci_ref
            );
            assert!((k.mass_ref - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn affine_shift_moves_the_pushforward() {
        let d = Domain::named("dp3", 65).unwrap();
        let u = torus_act(
            &SymplecticPotential::reference(&d),
            &AffineFunction::new([0.7, -0.4], 0.0),
        );
        let ls = LogSpace::new(&d, &[&u], XOptions::default_for(2)).unwrap();
        let k = ls.integrals(0);
        assert!((k.mass_own - 1.0).abs() < 1e-8, "{}", k.mass_own);
        assert!(k.entropy > 0.0);
        assert!((k.am + u.am()).abs() < 1e-9, "{} vs {}", k.am, u.am());
    }
}
