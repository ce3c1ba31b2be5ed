//! Legendre duality between symplectic potentials on the polytope and
//! Kähler potentials in log coordinates, computed by discrete conjugation.

use crate::error::{Error, Result};
use crate::grid::{DomainRef, OUTSIDE};
use crate::legendre::{conjugate, linspace, TensorFn};
use crate::potential::{ConvexPolicy, SymplecticPotential};

/// Square box `[-w, w]^n` in log coordinates with `m` nodes per axis.
pub fn dual_axes(n: usize, half_width: f64, m: usize) -> [Vec<f64>; 2] {
    let a = linspace(-half_width, half_width, m);
    if n == 1 {
        [a, vec![0.0]]
    } else {
        [a.clone(), a]
    }
}

/// The full potential `u = u_G + h` on the bounding-box grid, `+∞` outside
/// the polytope.
pub fn primal_tensor(u: &SymplecticPotential) -> TensorFn {
    let d = u.domain();
    let g = d.grid();
    let axes = [
        (0..g.shape[0]).map(|i| g.node(i, 0)[0]).collect(),
        if g.n == 1 {
            vec![0.0]
        } else {
            (0..g.shape[1]).map(|j| g.node(0, j)[1]).collect()
        },
    ];
    let mut values = vec![f64::INFINITY; g.len()];
    for k in 0..d.len() {
        let [i, j] = d.ij(k);
        values[g.index(i, j)] = u.full(k);
    }
    TensorFn { axes, values }
}

/// `ψ(x) = sup_{y ∈ P} <x, y> - u(y)` on the given log-coordinate axes.
pub fn to_dual(u: &SymplecticPotential, x_axes: &[Vec<f64>; 2]) -> TensorFn {
    conjugate(&primal_tensor(u), x_axes)
}

/// `u(y) = sup_x <x, y> - ψ(x)` at the inside nodes, returned as a deviation
/// from `u_G`. Nodes whose supremum is attained on the edge of the dual box
/// have their gradient clipped; that is accepted only within `collar` of
/// `∂P` (in the facet functions), otherwise the box is too small.
pub fn to_primal(psi: &TensorFn, domain: &DomainRef, collar: f64) -> Result<SymplecticPotential> {
    let g = domain.grid();
    let n = g.n;
    let y_axes = [
        (0..g.shape[0]).map(|i| g.node(i, 0)[0]).collect::<Vec<_>>(),
        if n == 1 {
            vec![0.0]
        } else {
            (0..g.shape[1]).map(|j| g.node(0, j)[1]).collect()
        },
    ];
    let full = conjugate(psi, &y_axes);
    let (mx, my) = (psi.axes[0].len(), psi.axes[1].len());
    let mut edge = psi.clone();
    for j in 0..my {
        for i in 0..mx {
            let on_edge = i == 0 || i + 1 == mx || (n == 2 && (j == 0 || j + 1 == my));
            if !on_edge {
                edge.values[j * mx + i] = f64::INFINITY;
            }
        }
    }
    let edge_sup = conjugate(&edge, &y_axes);
    let model = domain.model();
    let mut values = vec![0.0; domain.len()];
    for (idx, &c) in domain_compact(domain).iter().enumerate() {
        if c == OUTSIDE {
            continue;
        }
        let k = c as usize;
        let y = domain.nodes()[k];
        let total = full.values[idx];
        let tol = 1e-12 * (1.0 + total.abs());
        if edge_sup.values[idx] >= total - tol && model.polytope().min_ell(y) >= collar {
            return Err(Error::GridTooCoarse(format!(
                "gradient at ({:.6}, {:.6}) lies outside the dual box",
                y[0], y[1]
            )));
        }
        values[k] = total - domain.u_ref()[k];
    }
    SymplecticPotential::from_values(domain, values, ConvexPolicy::Convexify)
}

fn domain_compact(domain: &DomainRef) -> Vec<u32> {
    let g = domain.grid();
    let mut out = vec![OUTSIDE; g.len()];
    for k in 0..domain.len() {
        let [i, j] = domain.ij(k);
        out[g.index(i, j)] = k as u32;
    }
    out
}

/// Largest node-wise gap between the dual of the rooftop envelope
/// `max(u, v)` and the convex envelope of `min(ψ_u, ψ_v)`, the latter
/// computed by biconjugation through the polytope grid.
pub fn rooftop_dual_residual(
    u: &SymplecticPotential,
    v: &SymplecticPotential,
    x_axes: &[Vec<f64>; 2],
) -> Result<f64> {
    let roof = crate::potential::rooftop_envelope(u, v)?;
    let lhs = to_dual(&roof, x_axes);
    let (pu, pv) = (to_dual(u, x_axes), to_dual(v, x_axes));
    let min = TensorFn {
        axes: x_axes.clone(),
        values: pu
            .values
            .iter()
            .zip(&pv.values)
            .map(|(a, b)| a.min(*b))
            .collect(),
    };
    let mut mid = conjugate(&min, &primal_tensor(u).axes);
    let mask = primal_tensor(u);
    for (m, f) in mid.values.iter_mut().zip(&mask.values) {
        if !f.is_finite() {
            *m = f64::INFINITY;
        }
    }
    let env = conjugate(&mid, x_axes);
    Ok(lhs
        .values
        .iter()
        .zip(&env.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
