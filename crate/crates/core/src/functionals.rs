//! Energy functionals on symplectic potentials.
//!
//! Conventions: `V = Vol(P)`, every Kähler-side average is `V⁻¹ ∫ · ωⁿ` with
//! `ωⁿ` pushing forward to Lebesgue measure on `P`, and
//! `AM(φ_u) = -V⁻¹ ∫_P (u - u_G) dy`. The K-energy and the Ding functional
//! vanish at the reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Smooth;
use crate::grid::DomainRef;
use crate::logspace::{geometry, LogSpace, XOptions};
use crate::lse::LogSumExp;
use crate::model::{Mat, ToricModel};
use crate::polytope::{Point, Polytope};
use crate::potential::{AffineFunction, SymplecticPotential};
use crate::quad;

/// `AM(φ_u) = -V⁻¹ ∫_P (u - u_G) dy`.
pub fn am(u: &SymplecticPotential) -> f64 {
    u.am()
}

/// Aubin's `J`, `I` and `I - J`, with the pieces used to cross-check them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JEnergy {
    pub j: f64,
    pub i: f64,
    pub i_minus_j: f64,
    /// `V⁻¹ ∫ φ ωⁿ - AM` with `AM` from the polytope; equals `V⁻¹ ∫ φ ωⁿ` on
    /// normalized potentials.
    pub j_from_polytope_am: f64,
    /// `AM` from the mixed-measure formula in log coordinates.
    pub am_kahler: f64,
    /// `V⁻¹ ∫ φ ω_φⁿ`.
    pub phi_own: f64,
    /// `V⁻¹ ∫ φ ωⁿ`.
    pub phi_ref: f64,
}

pub fn j_energy(u: &SymplecticPotential) -> Result<JEnergy> {
    j_energy_with(u, XOptions::default_for(u.domain().n()))
}

pub fn j_energy_with(u: &SymplecticPotential, opts: XOptions) -> Result<JEnergy> {
    let ls = LogSpace::new(u.domain(), &[u], opts)?;
    let k = ls.integrals(0);
    Ok(j_from(&k, u.am()))
}

fn j_from(k: &crate::logspace::KahlerIntegrals, am_p: f64) -> JEnergy {
    let j = k.phi_ref - k.am;
    let i = k.phi_ref - k.phi_own;
    JEnergy {
        j,
        i,
        i_minus_j: i - j,
        j_from_polytope_am: k.phi_ref - am_p,
        am_kahler: k.am,
        phi_own: k.phi_own,
        phi_ref: k.phi_ref,
    }
}

/// `Ent(ωⁿ, ω_φⁿ)`.
pub fn entropy(u: &SymplecticPotential) -> Result<f64> {
    let ls = LogSpace::new(u.domain(), &[u], XOptions::default_for(u.domain().n()))?;
    Ok(ls.integrals(0).entropy)
}

/// Mabuchi K-energy
/// `Ent + S̄·AM - V⁻¹ Σ_j ∫ φ Ric ω ∧ ω_φ^j ∧ ω^{n-1-j}`,
/// with `S̄ = σ(∂P) / Vol(P)` the mean scalar curvature.
pub fn k_energy(u: &SymplecticPotential) -> Result<f64> {
    k_energy_with(u, XOptions::default_for(u.domain().n()))
}

pub fn k_energy_with(u: &SymplecticPotential, opts: XOptions) -> Result<f64> {
    let ls = LogSpace::new(u.domain(), &[u], opts)?;
    Ok(k_from(u.domain(), &ls.integrals(0), u.am()))
}

fn k_from(d: &DomainRef, k: &crate::logspace::KahlerIntegrals, am_p: f64) -> f64 {
    let s_bar = d.polytope().mean_boundary_ratio();
    k.entropy + s_bar * am_p - (k.ricci_ref + k.ricci_own)
}

/// K-energy along a batch of potentials sharing one log-coordinate lattice.
pub fn k_energy_batch(us: &[&SymplecticPotential], opts: XOptions) -> Result<Vec<f64>> {
    let Some(first) = us.first() else {
        return Ok(Vec::new());
    };
    let d = first.domain().clone();
    let ls = LogSpace::new(&d, us, opts)?;
    Ok(us
        .iter()
        .enumerate()
        .map(|(p, u)| k_from(&d, &ls.integrals(p), u.am()))
        .collect())
}

/// Independent evaluation of the K-energy on the polytope,
/// `V⁻¹ [ -∫_P log det(I + G⁻¹ D²h) dy + ∫_{∂P} h dσ - S̄ ∫_P h dy ]`,
/// which is bounded node by node since `G⁻¹` vanishes on `∂P`.
pub fn k_energy_boundary(u: &SymplecticPotential) -> Result<f64> {
    let d = u.domain();
    let model = d.model();
    let s = Smooth::new(d.clone(), u.values());
    let mut bad = None;
    let interior: Vec<f64> = (0..d.len())
        .map(|k| {
            let y = d.nodes()[k];
            let hh = s.node_hessian(k);
            let ells = model.ells(y);
            let kmat = if model.n() == 1 {
                let g: f64 = ells.iter().map(|l| 1.0 / l).sum();
                Mat::new(if g.is_finite() { 1.0 / g } else { 0.0 }, 0.0, 0.0, 0.0)
            } else if ells.iter().all(|&l| l > 0.0) {
                geometry(model, &ells, false).k
            } else {
                boundary_inverse(model, &ells)
            };
            let q = (Mat::identity() + kmat * hh).determinant();
            if q <= 1e-12 {
                bad = Some(y);
            }
            q.ln()
        })
        .collect();
    if let Some(y) = bad {
        return Err(Error::DegenerateHessian(format!(
            "det D²u / det D²u_G <= 1e-12 near ({:.6}, {:.6})",
            y[0], y[1]
        )));
    }
    let vol = d.volume();
    let a = d.integrate(|k| interior[k]);
    let hint = d.integrate(|k| u.values()[k]);
    let hb = boundary_integral(d.polytope(), |y| s.eval(y).0);
    Ok((-a + hb - d.polytope().mean_boundary_ratio() * hint) / vol)
}

/// `G⁻¹` on the boundary, where it is the limit of `adj G / det G`.
fn boundary_inverse(model: &ToricModel, ells: &[f64]) -> Mat {
    let eps: Vec<f64> = ells.iter().map(|&l| l.max(1e-300)).collect();
    geometry(model, &eps, false).k
}

/// `∫_{∂P} f dσ` with the lattice boundary measure.
pub fn boundary_integral(p: &Polytope, f: impl Fn(Point) -> f64) -> f64 {
    if p.n() == 1 {
        return p.vertices().iter().map(|&v| f(v)).sum();
    }
    let (x, w) = quad::gauss_legendre(16);
    (0..p.num_facets())
        .map(|i| {
            let (a, b) = p.facet_ends(i);
            let mut acc = 0.0;
            // composite rule so facet-crossing grid cells are resolved
            let pieces = 32;
            for k in 0..pieces {
                let (s0, s1) = (k as f64 / pieces as f64, (k + 1) as f64 / pieces as f64);
                for (&xi, &wi) in x.iter().zip(&w) {
                    let t = s0 + 0.5 * (xi + 1.0) * (s1 - s0);
                    let y = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    acc += 0.5 * wi * (s1 - s0) * f(y);
                }
            }
            acc * p.facet_measure(i)
        })
        .sum()
}

/// Futaki invariant of the affine direction `<b, y>`: the derivative of the
/// K-energy along `u + t<b, y>`, `V⁻¹ [∫_{∂P} ℓ dσ - S̄ ∫_P ℓ dy]`.
pub fn futaki(p: &Polytope, b: [f64; 2]) -> f64 {
    (p.boundary_integrate_affine(b, 0.0) - p.mean_boundary_ratio() * p.integrate_affine(b, 0.0))
        / p.volume()
}

/// Ricci potential of the reference metric on the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicciPotential {
    pub beta: f64,
    /// Added constant fixing `V⁻¹ ∫ e^f ωⁿ = 1`.
    pub constant: f64,
    /// `f` at the inside nodes; `+∞` on cone points when `beta < 1`.
    pub values: Vec<f64>,
    /// `V⁻¹ ∫ e^f ωⁿ - 1` by an independent rule (grid weights).
    pub normalization_residual: f64,
}

pub fn ricci_potential(domain: &DomainRef, beta: f64) -> Result<RicciPotential> {
    let model = domain.model();
    let constant = model.ricci_constant(beta)?;
    let values: Vec<f64> = domain
        .nodes()
        .iter()
        .map(|&y| {
            model.ricci_potential_raw(
                beta,
                &model.ells(y).iter().map(|l| l.max(0.0)).collect::<Vec<_>>(),
            ) + constant
        })
        .collect();
    let residual = if beta == 1.0 {
        domain.mean(|k| values[k].exp()) - 1.0
    } else {
        f64::NAN
    };
    Ok(RicciPotential {
        beta,
        constant,
        values,
        normalization_residual: residual,
    })
}

/// Ding functional `F^β = -AM - log V⁻¹ ∫ e^{f_β - φ} ωⁿ`.
pub fn ding(u: &SymplecticPotential, beta: f64) -> Result<f64> {
    let d = u.domain();
    d.model().require_fano(beta)?;
    let ls = LogSpace::new(d, &[u], XOptions::default_for(d.n()))?;
    Ok(-u.am() - ls.ding_terms(0, beta, None)?.log_integral)
}

/// Normalized moment-map potential `ψ^X = <b, y> + c` with
/// `V⁻¹ ∫_P e^{ψ^X} dy = 1`.
pub fn psi_x(model: &ToricModel, b: [f64; 2]) -> AffineFunction {
    let p = model.polytope();
    let shift = p
        .vertices()
        .iter()
        .map(|v| b[0] * v[0] + b[1] * v[1])
        .fold(f64::NEG_INFINITY, f64::max);
    let integral = quad::integrate_polytope(p, 24, |y| (b[0] * y[0] + b[1] * y[1] - shift).exp());
    AffineFunction::new(b, -(shift + (integral / p.volume()).ln()))
}

/// Uniform bound `max_P |ψ^X|`, attained at a vertex.
pub fn psi_x_bound(model: &ToricModel, psi: &AffineFunction) -> f64 {
    model
        .polytope()
        .vertices()
        .iter()
        .map(|&v| psi.eval(v).abs())
        .fold(0.0, f64::max)
}

/// `AM_X(φ_u) = -V⁻¹ ∫_P (u - u_G) e^{ψ^X} dy`.
pub fn am_x(u: &SymplecticPotential, b: [f64; 2]) -> f64 {
    let d = u.domain();
    let psi = psi_x(d.model(), b);
    -d.mean(|k| u.values()[k] * psi.eval(d.nodes()[k]).exp())
}

/// Modified Ding functional, modified K-energy, and the constant `C` in
/// `E^X ≥ F^X - C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonValues {
    pub f_x: f64,
    pub e_x: f64,
    pub c: f64,
}

pub fn soliton_functionals(u: &SymplecticPotential, b: [f64; 2]) -> Result<SolitonValues> {
    soliton_functionals_with(u, b, XOptions::default_for(u.domain().n()))
}

pub fn soliton_functionals_with(
    u: &SymplecticPotential,
    b: [f64; 2],
    opts: XOptions,
) -> Result<SolitonValues> {
    let d = u.domain();
    d.model().require_fano(1.0)?;
    let ls = LogSpace::new(d, &[u], opts)?;
    let t = ls.ding_terms(0, 1.0, Some(b))?;
    let f_x = -am_x(u, b) - t.log_integral;
    Ok(SolitonValues {
        f_x,
        e_x: f_x + t.soliton_ref - t.soliton_own,
        c: -t.soliton_ref,
    })
}

/// Vector field of the Kähler–Ricci soliton: the minimizer of
/// `b ↦ log ∫_P e^{<b, y>} dy`, whose gradient is the weighted barycenter.
pub fn soliton_field(model: &ToricModel) -> Result<[f64; 2]> {
    let p = model.polytope();
    let n = model.n();
    let moments = |b: [f64; 2]| -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let shift = p
            .vertices()
            .iter()
            .map(|v| b[0] * v[0] + b[1] * v[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let w = |y: Point| (b[0] * y[0] + b[1] * y[1] - shift).exp();
        let z = quad::integrate_polytope(p, 24, w);
        let m1 = [
            quad::integrate_polytope(p, 24, |y| y[0] * w(y)) / z,
            quad::integrate_polytope(p, 24, |y| y[1] * w(y)) / z,
        ];
        let mut m2 = [[0.0; 2]; 2];
        for a in 0..2 {
            for c in 0..2 {
                m2[a][c] =
                    quad::integrate_polytope(p, 24, |y| (y[a] - m1[a]) * (y[c] - m1[c]) * w(y)) / z;
            }
        }
        (z.ln() + shift, m1, m2)
    };
    let mut b = [0.0; 2];
    let (mut val, mut g, mut h) = moments(b);
    for it in 0..100 {
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gn <= 1e-10 {
            return Ok(b);
        }
        let step = if n == 1 {
            [g[0] / h[0][0], 0.0]
        } else {
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            [
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ]
        };
        let dec = g[0] * step[0] + g[1] * step[1];
        let mut alpha = 1.0;
        loop {
            let bn = [b[0] - alpha * step[0], b[1] - alpha * step[1]];
            let (vn, gn2, hn) = moments(bn);
            if vn <= val - 1e-4 * alpha * dec || alpha < 1e-12 {
                b = bn;
                val = vn;
                g = gn2;
                h = hn;
                break;
            }
            alpha *= 0.5;
        }
        if it == 99 {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: 100,
        residual: (g[0] * g[0] + g[1] * g[1]).sqrt(),
    })
}

/// All functionals of one potential, with the consistency residuals that
/// the identities between them predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub am: Option<f64>,
    pub j: Option<f64>,
    pub i: Option<f64>,
    pub i_minus_j: Option<f64>,
    pub entropy: Option<f64>,
    pub k_energy: Option<f64>,
    pub ding: Option<f64>,
    pub modified_ding: Option<f64>,
    pub modified_k_energy: Option<f64>,
    /// `E^β` in the gauge `E^β(0) = -V⁻¹ ∫ f ωⁿ`, computed from the Ding side.
    pub e_beta: Option<f64>,
    pub beta: f64,
    pub soliton_b: Option<[f64; 2]>,
    pub grid_resolution: Vec<usize>,
    pub log_step: f64,
    pub extrapolated: bool,
    pub sup_phi: f64,
    /// `V⁻¹ ∫ φ ωⁿ`.
    pub mean_phi: f64,
    /// `|AM(polytope) - AM(log coordinates)|`.
    pub am_residual: f64,
    /// `|(F - V⁻¹∫ f_φ ω_φⁿ) - (K-energy - V⁻¹∫ f ωⁿ)|`.
    pub ding_tian_residual: Option<f64>,
    pub gauge: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub beta: f64,
    pub soliton_b: Option<[f64; 2]>,
    pub x: Option<XOptions>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            beta: 1.0,
            soliton_b: None,
            x: None,
        }
    }
}

pub fn energy_report(u: &SymplecticPotential, opts: &ReportOptions) -> Result<EnergyReport> {
    let d = u.domain();
    let xo = opts.x.unwrap_or_else(|| XOptions::default_for(d.n()));
    let ls = LogSpace::new(d, &[u], xo)?;
    let k = ls.integrals(0);
    let am_p = u.am();
    let je = j_from(&k, am_p);
    let fano = d.model().require_fano(opts.beta).is_ok();
    let smooth_k = if d.model().n() == 2 || opts.beta == 1.0 {
        Some(k_from(d, &k, am_p))
    } else {
        None
    };
    let (mut ding, mut e_beta, mut dt) = (None, None, None);
    let (mut mf, mut me) = (None, None);
    if fano {
        let t = ls.ding_terms(0, opts.beta, None)?;
        let f = -am_p - t.log_integral;
        let e = f - t.mean_f_phi;
        ding = Some(f);
        e_beta = Some(e);
        if opts.beta == 1.0 {
            if let (Some(kk), Some(fr)) = (smooth_k, k.f_ref) {
                dt = Some((e - (kk - fr)).abs());
            }
            if let Some(b) = opts.soliton_b {
                let t = ls.ding_terms(0, 1.0, Some(b))?;
                let fx = -am_x(u, b) - t.log_integral;
                mf = Some(fx);
                me = Some(fx + t.soliton_ref - t.soliton_own);
            }
        }
    }
    Ok(EnergyReport {
        am: Some(am_p),
        j: Some(je.j),
        i: Some(je.i),
        i_minus_j: Some(je.i_minus_j),
        entropy: Some(k.entropy),
        k_energy: smooth_k,
        ding,
        modified_ding: mf,
        modified_k_energy: me,
        e_beta,
        beta: opts.beta,
        soliton_b: opts.soliton_b,
        grid_resolution: d.grid().shape[..d.n()].to_vec(),
        log_step: xo.step,
        extrapolated: false,
        sup_phi: u.sup_phi(),
        mean_phi: k.phi_ref,
        am_residual: (am_p - k.am).abs(),
        ding_tian_residual: dt,
        gauge: "k_energy and ding vanish at the reference potential".into(),
    })
}

/// Aubin's inequality `0 ≤ I - J ≤ n/(n+1) I` up to `tol`.
pub fn aubin_sandwich_holds(r: &EnergyReport, n: usize, tol: f64) -> bool {
    match (r.i, r.i_minus_j) {
        (Some(i), Some(ij)) => ij >= -tol && ij <= n as f64 / (n as f64 + 1.0) * i + tol,
        _ => true,
    }
}

/// Log-sum-exp of `a_k` with weights, exposed for callers assembling their own sums.
pub fn weighted_log_mean_exp(terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut acc = LogSumExp::new();
    let mut total = 0.0;
    for (a, w) in terms {
        acc.add(a, w);
        total += w;
    }
    acc.value() - total.ln()
}
