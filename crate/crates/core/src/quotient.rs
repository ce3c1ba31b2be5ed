//! Quotients by the complex torus: the pseudometric `d_{1,G}`, the descended
//! `J_G`, the polar split of torus elements, and linear properness fits.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{j_energy_with, JEnergy};
use crate::grid::DomainRef;
use crate::logspace::XOptions;
use crate::potential::{torus_act, AffineFunction, SymplecticPotential};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotientResult {
    pub value: f64,
    pub minimizer: AffineFunction,
    pub iterations: usize,
    /// Optimality violation of the affine fit (zero when certified); simplex
    /// value spread for `J_G`.
    pub residual: f64,
}

/// Residual above which the affine L¹ fit is reported as a failure.
pub const FIT_TOL: f64 = 1e-8;

/// `inf_{f, g} d₁(f.u, g.v) = min_ℓ Vol⁻¹ ∫_P |u - v - ℓ| dy` over affine `ℓ`.
pub fn d1_quotient(u: &SymplecticPotential, v: &SymplecticPotential) -> Result<QuotientResult> {
    u.same_domain(v)?;
    let r: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b)
        .collect();
    l1_affine_fit(u.domain(), &r)
}

/// The quotient inside `H₀`: `min_b d₁(u, b.v)` where `b.v` adds `<b, y>` and
/// restores `am = 0`. The minimizer is the linear part `b` (zero constant),
/// ready for [`torus_act`] on a normalized `v`.
pub fn d1_quotient_normalized(
    u: &SymplecticPotential,
    v: &SymplecticPotential,
) -> Result<QuotientResult> {
    u.same_domain(v)?;
    let r: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b + v.am() - u.am())
        .collect();
    let fit = Fit::centered(u.domain(), &r);
    let mut q = fit.run()?;
    q.minimizer = AffineFunction::linear(q.minimizer.b);
    Ok(q)
}

/// Weighted least absolute deviations `min_ℓ Σ_k w_k |r_k - ℓ(y_k)|`, with
/// the grid quadrature weights normalized to a probability.
pub fn l1_affine_fit(domain: &DomainRef, r: &[f64]) -> Result<QuotientResult> {
    Fit::new(domain, r).run()
}

struct Fit<'a> {
    r: &'a [f64],
    a: Vec<[f64; 3]>,
    w: Vec<f64>,
    m: usize,
    scale: f64,
    /// Features are `y - ȳ` without a constant column.
    center: Option<[f64; 2]>,
}

impl<'a> Fit<'a> {
    fn new(domain: &DomainRef, r: &'a [f64]) -> Self {
        let n = domain.n();
        let total: f64 = domain.weights().iter().sum();
        let w = domain.weights().iter().map(|x| x / total).collect();
        let a = domain
            .nodes()
            .iter()
            .map(|y| {
                if n == 1 {
                    [y[0], 1.0, 0.0]
                } else {
                    [y[0], y[1], 1.0]
                }
            })
            .collect();
        let scale = 1.0 + r.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        Fit {
            r,
            a,
            w,
            m: n + 1,
            scale,
            center: None,
        }
    }

    fn centered(domain: &DomainRef, r: &'a [f64]) -> Self {
        let mut fit = Fit::new(domain, r);
        let c = [
            domain.mean(|k| domain.nodes()[k][0]),
            domain.mean(|k| domain.nodes()[k][1]),
        ];
        fit.a = domain
            .nodes()
            .iter()
            .map(|y| [y[0] - c[0], y[1] - c[1], 0.0])
            .collect();
        fit.m = domain.n();
        fit.center = Some(c);
        fit
    }

    fn run(&self) -> Result<QuotientResult> {
        let fit = self;
        let starts = [vec![0.0; fit.m], fit.least_squares()];
        let mut runs: Vec<(f64, Vec<f64>, usize, f64)> =
            starts.into_par_iter().map(|s| fit.solve(s)).collect();
        runs.sort_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| {
                a.1.iter()
                    .zip(&b.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        let (value, theta, iterations, residual) = runs.swap_remove(0);
        if residual > FIT_TOL {
            return Err(Error::SolverFailure(format!(
                "L1 fit stopped with optimality violation {residual:e} (value {value:e})"
            )));
        }
        Ok(QuotientResult {
            value,
            minimizer: fit.affine(&theta),
            iterations,
            residual,
        })
    }

    fn affine(&self, t: &[f64]) -> AffineFunction {
        if let Some(c) = self.center {
            let b = if self.m == 1 {
                [t[0], 0.0]
            } else {
                [t[0], t[1]]
            };
            return AffineFunction::new(b, -(b[0] * c[0] + b[1] * c[1]));
        }
        if self.m == 2 {
            AffineFunction::new([t[0], 0.0], t[1])
        } else {
            AffineFunction::new([t[0], t[1]], t[2])
        }
    }

    fn resid(&self, k: usize, t: &[f64]) -> f64 {
        let a = &self.a[k];
        self.r[k] - (0..self.m).map(|i| a[i] * t[i]).sum::<f64>()
    }

    fn value(&self, t: &[f64]) -> f64 {
        (0..self.r.len())
            .map(|k| self.w[k] * self.resid(k, t).abs())
            .sum()
    }

    fn least_squares(&self) -> Vec<f64> {
        let m = self.m;
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut g = DVector::<f64>::zeros(m);
        for k in 0..self.r.len() {
            let a = &self.a[k];
            for i in 0..m {
                g[i] += self.w[k] * a[i] * self.r[k];
                for j in 0..m {
                    h[(i, j)] += self.w[k] * a[i] * a[j];
                }
            }
        }
        h.lu()
            .solve(&g)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; m])
    }

    /// `Σ w √(r² + δ²)` with gradient and Hessian in `θ`.
    fn smoothed(&self, t: &[f64], delta: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = self.m;
        let d2 = delta * delta;
        let mut f = 0.0;
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        for k in 0..self.r.len() {
            let res = self.resid(k, t);
            let s = (res * res + d2).sqrt();
            let w = self.w[k];
            f += w * s;
            let a = &self.a[k];
            let c = w * d2 / (s * s * s);
            for i in 0..m {
                g[i] -= w * res / s * a[i];
                for j in 0..m {
                    h[(i, j)] += c * a[i] * a[j];
                }
            }
        }
        (f, g, h)
    }

    /// δ-continuation Newton on the smoothed objective as a warm start, then
    /// exact descent over vertices (`m` zero residuals) with weighted-median
    /// line searches along the edges. Returns `(value, θ, iterations,
    /// optimality violation)`; the violation is the largest
    /// `(|G·d_j| - w_j)⁺` over edges, zero at a certified optimum.
    fn solve(&self, mut t: Vec<f64>) -> (f64, Vec<f64>, usize, f64) {
        let mut iterations = 0;
        let mut delta = 1e-2 * self.scale;
        while delta >= 1e-6 * self.scale {
            for _ in 0..30 {
                iterations += 1;
                let (f, g, h) = self.smoothed(&t, delta);
                let reg = 1e-14 * h.diagonal().max().max(1e-300);
                let hh = &h + DMatrix::identity(self.m, self.m) * reg;
                let Some(step) = hh.cholesky().map(|c| c.solve(&g)) else {
                    break;
                };
                let dec = g.dot(&step);
                if dec <= 1e-24 * self.scale * self.scale {
                    break;
                }
                let mut alpha = 1.0;
                while alpha > 1e-12 {
                    let tn: Vec<f64> = t
                        .iter()
                        .zip(step.iter())
                        .map(|(a, s)| a - alpha * s)
                        .collect();
                    if self.smoothed(&tn, delta).0 <= f - 1e-4 * alpha * dec {
                        t = tn;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            delta *= 0.1;
        }
        let Some(mut act) = self.basis(&t) else {
            let v = self.value(&t);
            return (v, t, iterations, f64::INFINITY);
        };
        let mut violation = f64::INFINITY;
        for _ in 0..1000 {
            iterations += 1;
            let Some((theta, inv)) = self.vertex(&act) else {
                break;
            };
            t = theta;
            let zero_tol = 1e-13 * self.scale;
            let mut gsum = [0.0; 3];
            let mut zeros = Vec::new();
            for k in 0..self.r.len() {
                if act.contains(&k) {
                    continue;
                }
                let res = self.resid(k, &t);
                if res.abs() <= zero_tol {
                    zeros.push(k);
                    continue;
                }
                for i in 0..self.m {
                    gsum[i] += self.w[k] * res.signum() * self.a[k][i];
                }
            }
            // edge j releases act[j]: a_{act[i]}·d_j = δ_ij
            let mut best: Option<(f64, usize, f64)> = None;
            violation = 0.0;
            for j in 0..self.m {
                let d: Vec<f64> = (0..self.m).map(|i| inv[(i, j)]).collect();
                let gd: f64 = (0..self.m).map(|i| gsum[i] * d[i]).sum();
                let extra: f64 = zeros
                    .iter()
                    .map(|&k| {
                        self.w[k] * (0..self.m).map(|i| self.a[k][i] * d[i]).sum::<f64>().abs()
                    })
                    .sum();
                let wj = self.w[act[j]];
                violation = f64::max(violation, gd.abs() - wj - extra);
                for sgn in [1.0, -1.0] {
                    let slope = -sgn * gd + wj + extra;
                    if slope < -1e-15 && best.is_none_or(|b| slope < b.0) {
                        best = Some((slope, j, sgn));
                    }
                }
            }
            let Some((slope0, j, sgn)) = best else {
                violation = violation.max(0.0);
                break;
            };
            let d: Vec<f64> = (0..self.m).map(|i| sgn * inv[(i, j)]).collect();
            // f(s) = Σ w |res_k - s c_k|, s ≥ 0
            let mut bps: Vec<(f64, f64, usize)> = (0..self.r.len())
                .filter(|&k| k != act[j])
                .filter_map(|k| {
                    let c: f64 = (0..self.m).map(|i| self.a[k][i] * d[i]).sum();
                    if c.abs() < 1e-300 {
                        return None;
                    }
                    let s = self.resid(k, &t) / c;
                    (s > 0.0).then(|| (s, 2.0 * self.w[k] * c.abs(), k))
                })
                .collect();
            bps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
            let mut slope = slope0;
            let mut entering = None;
            for &(_, jump, k) in &bps {
                slope += jump;
                if slope >= 0.0 {
                    entering = Some(k);
                    break;
                }
            }
            let Some(k) = entering else {
                break;
            };
            act[j] = k;
        }
        let v = self.value(&t);
        (v, t, iterations, violation)
    }

    /// `m` nodes with small residuals and independent features.
    fn basis(&self, t: &[f64]) -> Option<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.r.len()).collect();
        idx.sort_by(|&i, &j| {
            self.resid(i, t)
                .abs()
                .total_cmp(&self.resid(j, t).abs())
                .then(i.cmp(&j))
        });
        let mut act: Vec<usize> = Vec::with_capacity(self.m);
        for k in idx {
            let mut trial = act.clone();
            trial.push(k);
            let a = DMatrix::from_fn(trial.len(), self.m, |i, j| self.a[trial[i]][j]);
            if a.rank(1e-9) == trial.len() {
                act = trial;
                if act.len() == self.m {
                    return Some(act);
                }
            }
        }
        None
    }

    /// Affine function interpolating `r` on the active nodes, and the inverse
    /// of the active feature matrix (its columns are the edge directions).
    fn vertex(&self, act: &[usize]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let a = DMatrix::from_fn(self.m, self.m, |i, j| self.a[act[i]][j]);
        let inv = a.try_inverse()?;
        let b = DVector::from_iterator(self.m, act.iter().map(|&k| self.r[k]));
        let theta = &inv * b;
        Some((theta.iter().copied().collect(), inv))
    }
}

/// `J_G(Gu) = inf_g J(g.u)`; `J` ignores the constant, so the search runs over
/// slopes only. Multi-start Nelder–Mead on the (normalized) orbit.
pub fn j_quotient(u: &SymplecticPotential) -> Result<QuotientResult> {
    j_quotient_with(u, XOptions::coarse(u.domain().n()))
}

pub fn j_quotient_with(u: &SymplecticPotential, opts: XOptions) -> Result<QuotientResult> {
    let u = u.normalized();
    let n = u.domain().n();
    let eval = |b: &[f64]| -> Result<JEnergy> {
        let g = AffineFunction::linear([b[0], if n == 2 { b[1] } else { 0.0 }]);
        j_energy_with(&torus_act(&u, &g), opts)
    };
    let ls = Fit::new(u.domain(), u.values()).least_squares();
    let starts = vec![vec![0.0; n], ls[..n].iter().map(|v| -v).collect::<Vec<_>>()];
    let runs: Vec<Result<(f64, Vec<f64>, usize, f64)>> = starts
        .into_par_iter()
        .map(|s| nelder_mead(|b| eval(b).map(|j| j.j), s, 0.25, 1e-7, 200))
        .collect();
    let mut best: Option<(f64, Vec<f64>, usize, f64)> = None;
    let mut total = 0;
    for r in runs {
        let r = r?;
        total += r.2;
        let better = match &best {
            None => true,
            Some(b) => r.0 < b.0 || (r.0 == b.0 && r.1 < b.1),
        };
        if better {
            best = Some(r);
        }
    }
    let (value, b, _, spread) = best.expect("two starts");
    let g = AffineFunction::linear([b[0], if n == 2 { b[1] } else { 0.0 }]);
    let moved = torus_act(&u, &g);
    Ok(QuotientResult {
        value,
        minimizer: AffineFunction::new(
            g.b,
            moved.values()[0] - u.values()[0] - g.eval(u.domain().nodes()[0]),
        ),
        iterations: total,
        residual: spread,
    })
}

/// Nelder–Mead on `R^d` (d ≤ 2 here); returns `(value, point, evaluations,
/// final simplex value spread)`.
fn nelder_mead(
    f: impl Fn(&[f64]) -> Result<f64>,
    x0: Vec<f64>,
    size: f64,
    ftol: f64,
    budget: usize,
) -> Result<(f64, Vec<f64>, usize, f64)> {
    let d = x0.len();
    let mut simplex = vec![x0.clone()];
    for i in 0..d {
        let mut p = x0.clone();
        p[i] += size;
        simplex.push(p);
    }
    let mut vals = simplex.iter().map(|p| f(p)).collect::<Result<Vec<_>>>()?;
    let mut evals = d + 1;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[d] - vals[0];
        if spread <= ftol || evals >= budget {
            return Ok((vals[0], simplex[0].clone(), evals, spread));
        }
        let centroid: Vec<f64> = (0..d)
            .map(|i| simplex[..d].iter().map(|p| p[i]).sum::<f64>() / d as f64)
            .collect();
        let along = |s: f64| -> Vec<f64> {
            (0..d)
                .map(|i| centroid[i] + s * (simplex[d][i] - centroid[i]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr)?;
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe)?;
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let xc = if fr < vals[d] {
                along(-0.5)
            } else {
                along(0.5)
            };
            let fc = f(&xc)?;
            evals += 1;
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for k in 1..=d {
                    simplex[k] = (0..d)
                        .map(|i| 0.5 * (simplex[0][i] + simplex[k][i]))
                        .collect();
                    vals[k] = f(&simplex[k])?;
                    evals += 1;
                }
            }
        }
    }
}

/// Polar split `g = k · exp(J X)` of `g ∈ (ℂ*)ⁿ` written as angles and radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    /// Angles in `[0, 2π)`.
    pub k: [f64; 2],
    pub x: [f64; 2],
}

pub fn torus_polar(theta: [f64; 2], r: [f64; 2]) -> Polar {
    let tau = std::f64::consts::TAU;
    Polar {
        k: theta.map(|t| t.rem_euclid(tau)),
        x: r,
    }
}

impl Polar {
    /// Back to `(θ, r)`, reproducing the input up to the angle reduction.
    pub fn compose(&self) -> ([f64; 2], [f64; 2]) {
        (self.k, self.x)
    }

    /// Only the radial part acts on torus-invariant potentials.
    pub fn action(&self) -> AffineFunction {
        AffineFunction::linear(self.x)
    }
}

/// Speed `Vol⁻¹ ∫_P |<b, y> - c(b)| dy` of the normalized ray
/// `t ↦ exp(t J X).u`, with `c(b)` the mean of `<b, y>`.
pub fn ray_speed(domain: &DomainRef, b: [f64; 2]) -> f64 {
    let c = domain.mean(|k| {
        let y = domain.nodes()[k];
        b[0] * y[0] + b[1] * y[1]
    });
    domain.mean(|k| {
        let y = domain.nodes()[k];
        (b[0] * y[0] + b[1] * y[1] - c).abs()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropernessReport {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub n_samples: usize,
    pub min_margin: f64,
    pub family_descriptor: String,
    pub proper: bool,
    /// Abscissa beyond which the fitted line may not be supported.
    pub d_star: f64,
}

/// Threshold on `C` for a "proper" verdict.
pub const PROPER_C_MIN: f64 = 1e-3;

/// Fit `f ≥ C d - D`. Any finite sample admits every `C` with a large `D`, so
/// `C` is the largest slope (to `1e-4`) whose supporting line touches the
/// lower hull of the samples at some `d ≤ d*`, `d* = d_min + 0.9 (d_max - d_min)`:
/// the growth rate carried by the sample bulk, not by its last points.
pub fn properness_fit(samples: &[(f64, f64)], family: &str) -> Result<PropernessReport> {
    if samples.len() < 10 {
        return Err(Error::InsufficientSpread(format!(
            "{} samples, need 10",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(d, f)| !d.is_finite() || !f.is_finite() || *d < 0.0)
    {
        return Err(Error::InvalidInput(
            "samples must be finite with d ≥ 0".into(),
        ));
    }
    let d_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let d_max = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let pos_min = samples
        .iter()
        .map(|s| s.0)
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(d_max > 0.0) || d_max < 10.0 * pos_min.min(d_max) || (d_min > 0.0 && d_max < 10.0 * d_min)
    {
        return Err(Error::InsufficientSpread(format!(
            "d spans [{d_min:e}, {d_max:e}], need a ratio of at least 10"
        )));
    }
    let d_star = d_min + 0.9 * (d_max - d_min);
    // touching abscissa of the supporting line with slope c (smallest d on ties)
    let touch = |c: f64| -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, f64::INFINITY);
        for &(d, f) in samples {
            let v = c * d - f;
            if v > best.0 || (v == best.0 && d < best.1) {
                best = (v, d);
            }
        }
        best
    };
    let ok = |c: f64| touch(c).1 <= d_star;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    if ok(lo) {
        while hi - lo > 1e-4 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let c = lo;
    let d = touch(c).0.max(0.0);
    let min_margin = samples
        .iter()
        .map(|&(x, f)| f - (c * x - d))
        .fold(f64::INFINITY, f64::min);
    Ok(PropernessReport {
        c,
        d,
        n_samples: samples.len(),
        min_margin,
        family_descriptor: family.to_string(),
        proper: c >= PROPER_C_MIN,
        d_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn orbit_collapses() {
        let d = Domain::named("dp3", 65).unwrap();
        let u = SymplecticPotential::from_fn(&d, |y| {
            0.4 * (y[0] * y[0] + y[1] * y[1]) + 0.1 * y[0].powi(3)
        })
        .unwrap();
        let g = AffineFunction::new([0.7, -1.3], 0.4);
        let v = torus_act(&u, &g);
        let q = d1_quotient(&u, &v).unwrap();
        assert!(q.value <= 1e-8, "{q:?}");
        assert_abs_diff_eq!(q.minimizer.b[0], -0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(q.minimizer.b[1], 1.3, epsilon = 1e-6);
        let z = d1_quotient(&u, &u).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn fit_is_optimal_against_perturbations() {
        let d = Domain::named("dp3", 65).unwrap();
        let u = SymplecticPotential::reference(&d);
        let v = SymplecticPotential::from_fn(&d, |y| {
            0.5 * (y[0] * y[0] + y[1] * y[1]) + 0.2 * y[0] * y[1] * y[1]
        })
        .unwrap();
        let q = d1_quotient(&u, &v).unwrap();
        let r: Vec<f64> = u
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a - b)
            .collect();
        let at = |g: AffineFunction| d.mean(|k| (r[k] - g.eval(d.nodes()[k])).abs());
        assert_abs_diff_eq!(at(q.minimizer), q.value, epsilon = 1e-14);
        for e in [
            [1e-3, 0.0, 0.0],
            [0.0, 1e-3, 0.0],
            [0.0, 0.0, 1e-3],
            [-1e-3, 1e-3, -1e-3],
        ] {
            let g = AffineFunction::new(
                [q.minimizer.b[0] + e[0], q.minimizer.b[1] + e[1]],
                q.minimizer.c + e[2],
            );
            assert!(at(g) >= q.value - 1e-12);
        }
        assert!(q.value <= crate::metric::d1_l1(&u, &v).unwrap());
    }

    #[test]
    fn normalized_quotient_is_attained_by_the_action() {
        let d = Domain::named("dp3", 33).unwrap();
        let u = SymplecticPotential::from_fn(&d, |y| 0.3 * y[0] * y[0] + 0.2 * y[1].powi(4))
            .unwrap()
            .normalized();
        let v = SymplecticPotential::from_fn(&d, |y| 0.1 * (y[0] + y[1]).powi(2) - 0.4 * y[1])
            .unwrap()
            .normalized();
        let q = d1_quotient_normalized(&u, &v).unwrap();
        assert_eq!(q.minimizer.c, 0.0);
        let moved = torus_act(&v, &q.minimizer);
        assert!((crate::metric::d1_l1(&u, &moved).unwrap() - q.value).abs() < 1e-12);
        assert!(q.value >= d1_quotient(&u, &v).unwrap().value - 1e-12);
        for b in [[0.01, 0.0], [0.0, -0.01], [0.02, 0.02]] {
            let other = torus_act(&moved, &AffineFunction::linear(b));
            assert!(crate::metric::d1_l1(&u, &other).unwrap() >= q.value - 1e-12);
        }
    }

    #[test]
    fn one_dimensional_fit() {
        let d = Domain::named("p1", 2049).unwrap();
        let r: Vec<f64> = d.nodes().iter().map(|y| y[0].abs() + 0.3 * y[0]).collect();
        let q = l1_affine_fit(&d, &r).unwrap();
        // median-type optimum: |y| against constants on [-1, 1] is flat at slope 0
        assert_abs_diff_eq!(q.minimizer.b[0], 0.3, epsilon = 1e-6);
        assert!(q.value < 0.5);
    }

    #[test]
    fn polar_split() {
        let p = torus_polar([0.0, 0.0], [0.0, 0.0]);
        assert_eq!(p.compose(), ([0.0, 0.0], [0.0, 0.0]));
        let p = torus_polar([7.0, -1.0], [0.5, -2.0]);
        assert_abs_diff_eq!(p.k[0], 7.0 - std::f64::consts::TAU, epsilon = 1e-15);
        assert_eq!(p.x, [0.5, -2.0]);
        assert_eq!(
            torus_polar([1.0, 2.0], [0.0, 0.0]).action(),
            AffineFunction::identity()
        );
    }

    #[test]
    fn ray_speed_is_homogeneous_and_matches_the_interval_formula() {
        let d = Domain::named("p1", 4097).unwrap();
        // [-1, 1]: mean |b y| = |b| / 2
        assert_abs_diff_eq!(ray_speed(&d, [3.0, 0.0]), 1.5, epsilon = 1e-6);
        let h = Domain::named("dp3", 129).unwrap();
        let s1 = ray_speed(&h, [0.6, 0.8]);
        assert_abs_diff_eq!(ray_speed(&h, [1.2, 1.6]), 2.0 * s1, epsilon = 1e-12);
        let s2 = ray_speed(&h, [0.6 + 1e-4, 0.8]);
        assert!((s2 - s1).abs() < 1e-3);
    }

    #[test]
    fn j_quotient_of_symmetric_potential_sits_at_the_identity() {
        let d = Domain::named("dp3", 33).unwrap();
        let u =
            SymplecticPotential::from_fn(&d, |y| 0.3 * (y[0] * y[0] + y[0] * y[1] + y[1] * y[1]))
                .unwrap();
        let q = j_quotient(&u).unwrap();
        assert!(q.minimizer.b[0].hypot(q.minimizer.b[1]) < 1e-2, "{q:?}");
        let moved = torus_act(&u.normalized(), &AffineFunction::linear([0.8, -0.5]));
        let qm = j_quotient(&moved).unwrap();
        assert_abs_diff_eq!(qm.value, q.value, epsilon = 1e-6);
        assert!(
            q.value
                <= j_energy_with(&u.normalized(), XOptions::coarse(2))
                    .unwrap()
                    .j
                    + 1e-12
        );
    }

    #[test]
    fn properness_on_exact_line() {
        let s: Vec<(f64, f64)> = (1..=20).map(|k| (k as f64, 2.0 * k as f64 - 1.0)).collect();
        let r = properness_fit(&s, "line").unwrap();
        assert_abs_diff_eq!(r.c, 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.d, 1.0, epsilon = 2e-3);
        assert!(r.min_margin >= 0.0 && r.proper);
    }

    #[test]
    fn bounded_functional_is_not_proper() {
        let s: Vec<(f64, f64)> = (1..=30).map(|k| (k as f64, (k as f64).sin())).collect();
        let r = properness_fit(&s, "bounded").unwrap();
        assert!(!r.proper, "{r:?}");
        assert!(r.min_margin >= 0.0);
        assert!(matches!(
            properness_fit(&s[..5], "x"),
            Err(Error::InsufficientSpread(_))
        ));
        let narrow: Vec<(f64, f64)> = (10..=20).map(|k| (k as f64, 0.0)).collect();
        assert!(matches!(
            properness_fit(&narrow, "x"),
            Err(Error::InsufficientSpread(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn quotient_is_a_pseudometric(p in proptest::array::uniform4(-1.0f64..1.0), g in proptest::array::uniform3(-2.0f64..2.0)) {
            let d = Domain::named("dp3", 33).unwrap();
            let mk = |a: f64, b: f64| SymplecticPotential::from_fn(&d, move |y| (1.2 + a) * y[0] * y[0] + (1.2 + b) * y[1] * y[1] + 0.3 * a * y[0] * y[1]).unwrap();
            let (u, v, w) = (mk(p[0], p[1]), mk(p[2], p[3]), mk(p[1], p[2]));
            let uv = d1_quotient(&u, &v).unwrap().value;
            let vu = d1_quotient(&v, &u).unwrap().value;
            prop_assert!((uv - vu).abs() < 1e-9);
            let uw = d1_quotient(&u, &w).unwrap().value;
            let wv = d1_quotient(&w, &v).unwrap().value;
            prop_assert!(uv <= uw + wv + 1e-9);
            let act = AffineFunction::new([g[0], g[1]], g[2]);
            let moved = d1_quotient(&torus_act(&u, &act), &v).unwrap().value;
            prop_assert!((moved - uv).abs() < 1e-8);
        }
    }
}
