//! Reference quadrature rules: Gauss–Legendre on intervals and polygons,
//! and tanh–sinh for endpoint-singular integrands.

use crate::polytope::{Point, Polytope};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, t);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[m - 1 - i] = t;
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(m: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// `∫_a^b f` with an `m`-point Gauss rule on each of `pieces` equal subintervals.
pub fn integrate_interval(a: f64, b: f64, m: usize, pieces: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_legendre(m);
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let lo = a + k as f64 * h;
        let s: f64 = x
            .iter()
            .zip(&w)
            .map(|(&t, &wt)| wt * f(lo + 0.5 * h * (t + 1.0)))
            .sum();
        total += 0.5 * h * s;
    }
    total
}

/// Collapsed-square Gauss rule on each triangle of a fan triangulation of
/// the polygon (or a composite Gauss rule on the interval for `n = 1`).
pub fn integrate_polytope(p: &Polytope, m: usize, f: impl Fn(Point) -> f64) -> f64 {
    if p.n() == 1 {
        let v = p.vertices();
        return integrate_interval(v[0][0], v[1][0], m, 4, |y| f([y, 0.0]));
    }
    let (x, w) = gauss_legendre(m);
    let v = p.vertices();
    let c = p.barycenter();
    let mut total = 0.0;
    for k in 0..v.len() {
        let (a, b) = (v[k], v[(k + 1) % v.len()]);
        total += integrate_triangle(c, a, b, &x, &w, &f);
    }
    total
}

fn integrate_triangle(
    a: Point,
    b: Point,
    c: Point,
    x: &[f64],
    w: &[f64],
    f: &impl Fn(Point) -> f64,
) -> f64 {
    let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    let mut total = 0.0;
    for (&si, &wi) in x.iter().zip(w) {
        let s = 0.5 * (si + 1.0);
        for (&ti, &wj) in x.iter().zip(w) {
            let t = 0.5 * (ti + 1.0);
            let p = [
                a[0] + s * ((b[0] - a[0]) + t * (c[0] - b[0])),
                a[1] + s * ((b[1] - a[1]) + t * (c[1] - b[1])),
            ];
            total += 0.25 * wi * wj * s * f(p);
        }
    }
    total * area2
}

/// Tanh–sinh quadrature of `∫_a^b f`. The integrand receives
/// `(x, x - a, b - x)` so that endpoint distances are exact even when
/// `x` itself rounds onto an endpoint.
pub fn tanh_sinh(a: f64, b: f64, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let step = 1.0 / 64.0;
    let mut total = 0.0;
    let mut k: i64 = 0;
    loop {
        let t = k as f64 * step;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        // distance of the node to the nearer endpoint, in units of half
        let edge = 1.0 / (u.exp() * cu);
        let weight = std::f64::consts::FRAC_PI_2 * t.cosh() / (cu * cu);
        if edge * half < f64::MIN_POSITIVE * 1e4 || weight < 1e-300 {
            break;
        }
        let d = half * edge;
        let right = (b - d, b - a - d, d);
        let left = (a + d, d, b - a - d);
        let contrib = if k == 0 {
            f(mid, half, half)
        } else {
            f(right.0, right.1, right.2) + f(left.0, left.1, left.2)
        };
        total += weight * contrib;
        k += 1;
        if k > 64 * 8 {
            break;
        }
    }
    total * half * step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn polygon_moments() {
        let p = Polytope::named("dp3").unwrap();
        let area = integrate_polytope(&p, 6, |_| 1.0);
        assert!((area - 3.0).abs() < 1e-13);
        // slices in y1 have length 2 - |y1|, so ∫ y1^2 = 2 ∫_0^1 y^2 (2 - y) dy = 5/6
        let m2 = integrate_polytope(&p, 6, |y| y[0] * y[0]);
        assert!((m2 - 5.0 / 6.0).abs() < 1e-13, "{m2}");
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(0.0, 1.0, |_, da, _| da.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        let v = tanh_sinh(-1.0, 1.0, |_, da, db| (da * db).ln());
        // ∫_{-1}^{1} ln(1-x^2) dx = 4 ln 2 - 4
        assert!((v - (4.0 * 2f64.ln() - 4.0)).abs() < 1e-10, "{v}");
    }
}
