//! Discrete Legendre–Fenchel conjugates on tensor grids.
//!
//! The one-dimensional kernel is the linear-time transform: take the lower
//! convex hull of the samples, then sweep the sorted dual abscissae along
//! the hull slopes. Two-dimensional conjugates factor through rows and
//! columns, `f*(x1, x2) = max_{y2} [x2 y2 + max_{y1} (x1 y1 - f(y1, y2))]`.
//! Samples equal to `+∞` are excluded from the supremum.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A function sampled on a tensor grid, first axis fastest. For one
/// variable the second axis is `[0.0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFn {
    pub axes: [Vec<f64>; 2],
    pub values: Vec<f64>,
}

impl TensorFn {
    pub fn new(axes: [Vec<f64>; 2], values: Vec<f64>) -> Result<Self> {
        if axes[0].len() * axes[1].len() != values.len() {
            return Err(Error::InvalidInput("tensor shape mismatch".into()));
        }
        for a in &axes {
            if a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(
                    "axes must be strictly increasing".into(),
                ));
            }
        }
        Ok(TensorFn { axes, values })
    }

    pub fn from_fn(axes: [Vec<f64>; 2], f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(axes[0].len() * axes[1].len());
        for &b in &axes[1] {
            for &a in &axes[0] {
                values.push(f(a, b));
            }
        }
        TensorFn { axes, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.axes[0].len() + i]
    }

    pub fn is_1d(&self) -> bool {
        self.axes[1].len() == 1
    }
}

/// Evenly spaced axis with `m` nodes on `[a, b]`.
pub fn linspace(a: f64, b: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![a];
    }
    (0..m)
        .map(|k| a + (b - a) * k as f64 / (m - 1) as f64)
        .collect()
}

/// Indices of the lower convex hull of `(y_k, f_k)`, `y` increasing;
/// infinite samples are skipped.
pub fn lower_hull(y: &[f64], f: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(y.len());
    for k in 0..y.len() {
        if !f[k].is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b when it lies on or above the chord a-k
            let cross = (y[b] - y[a]) * (f[k] - f[a]) - (f[b] - f[a]) * (y[k] - y[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

/// `f*(x_j) = max_k (x_j y_k - f_k)` for increasing `y` and `x`.
/// Returns `-∞` everywhere when every sample is infinite.
pub fn conjugate_1d(y: &[f64], f: &[f64], x: &[f64]) -> Vec<f64> {
    let hull = lower_hull(y, f);
    if hull.is_empty() {
        return vec![f64::NEG_INFINITY; x.len()];
    }
    let mut out = Vec::with_capacity(x.len());
    let mut m = 0;
    for &xj in x {
        while m + 1 < hull.len() {
            let (a, b) = (hull[m], hull[m + 1]);
            let slope = (f[b] - f[a]) / (y[b] - y[a]);
            if slope < xj {
                m += 1;
            } else {
                break;
            }
        }
        let k = hull[m];
        out.push(xj * y[k] - f[k]);
    }
    out
}

/// Discrete conjugate of a tensor-sampled function onto new axes.
pub fn conjugate(input: &TensorFn, out_axes: &[Vec<f64>; 2]) -> TensorFn {
    let [y0, y1] = &input.axes;
    let [x0, x1] = out_axes;
    if input.is_1d() {
        let values = conjugate_1d(y0, &input.values, x0);
        let values = if x1.len() == 1 {
            values
        } else {
            // constant in the dummy direction; keep the tensor layout
            let mut v = Vec::with_capacity(x0.len() * x1.len());
            for &b in x1 {
                v.extend(values.iter().map(|a| a + b * input.axes[1][0]));
            }
            v
        };
        return TensorFn {
            axes: out_axes.clone(),
            values,
        };
    }
    let n0 = y0.len();
    // rows: g_j(x0) = max_{y0} (x0 y0 - f(y0, y1_j)); stored as -g for the column pass
    let rows: Vec<Vec<f64>> = (0..y1.len())
        .into_par_iter()
        .map(|j| {
            let row = &input.values[j * n0..(j + 1) * n0];
            conjugate_1d(y0, row, x0)
                .into_iter()
                .map(|g| {
                    if g == f64::NEG_INFINITY {
                        f64::INFINITY
                    } else {
                        -g
                    }
                })
                .collect()
        })
        .collect();
    let cols: Vec<Vec<f64>> = (0..x0.len())
        .into_par_iter()
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            conjugate_1d(y1, &col, x1)
        })
        .collect();
    let mut values = vec![0.0; x0.len() * x1.len()];
    for (i, c) in cols.iter().enumerate() {
        for (j, v) in c.iter().enumerate() {
            values[j * x0.len() + i] = *v;
        }
    }
    TensorFn {
        axes: out_axes.clone(),
        values,
    }
}

/// Brute-force conjugate, `O(N M)`; reference implementation for tests and
/// for scattered dual points.
pub fn conjugate_brute(input: &TensorFn, x: [f64; 2]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (j, &b) in input.axes[1].iter().enumerate() {
        for (i, &a) in input.axes[0].iter().enumerate() {
            let f = input.at(i, j);
            if f.is_finite() {
                best = best.max(x[0] * a + x[1] * b - f);
            }
        }
    }
    best
}

/// Convex envelope of samples on an interval (exact: the lower hull,
/// linearly interpolated back to every abscissa).
pub fn convex_envelope_1d(y: &[f64], f: &[f64]) -> Vec<f64> {
    let hull = lower_hull(y, f);
    let mut out = Vec::with_capacity(y.len());
    let mut m = 0;
    for k in 0..y.len() {
        while m + 1 < hull.len() && y[hull[m + 1]] < y[k] {
            m += 1;
        }
        if m + 1 >= hull.len() || y[hull[m]] >= y[k] {
            let a = hull[m.min(hull.len() - 1)];
            if y[a] == y[k] {
                out.push(f[a]);
                continue;
            }
        }
        let (a, b) = (hull[m], hull[(m + 1).min(hull.len() - 1)]);
        if a == b {
            out.push(f[a]);
        } else {
            let t = (y[k] - y[a]) / (y[b] - y[a]);
            out.push(f[a] + t * (f[b] - f[a]));
        }
    }
    out
}

/// Biconjugate through an intermediate dual grid: the convex envelope up to
/// the resolution of `dual_axes`.
pub fn biconjugate(input: &TensorFn, dual_axes: &[Vec<f64>; 2]) -> TensorFn {
    let star = conjugate(input, dual_axes);
    let mut back = conjugate(&star, &input.axes);
    // keep excluded samples excluded
    for (v, f) in back.values.iter_mut().zip(&input.values) {
        if !f.is_finite() {
            *v = f64::INFINITY;
        }
    }
    back
}

/// Dual axes wide enough to contain every difference quotient of the
/// samples along the grid axes, with `m` nodes per axis.
pub fn slope_axes(input: &TensorFn, m: usize) -> [Vec<f64>; 2] {
    let mut out: [Vec<f64>; 2] = [vec![0.0], vec![0.0]];
    let dims = if input.is_1d() { 1 } else { 2 };
    for axis in 0..dims {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (n0, n1) = (input.axes[0].len(), input.axes[1].len());
        for j in 0..n1 {
            for i in 0..n0 {
                let (i2, j2) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
                if i2 >= n0 || j2 >= n1 {
                    continue;
                }
                let (a, b) = (input.at(i, j), input.at(i2, j2));
                if a.is_finite() && b.is_finite() {
                    let d = input.axes[axis][if axis == 0 { i2 } else { j2 }]
                        - input.axes[axis][if axis == 0 { i } else { j }];
                    let s = (b - a) / d;
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
            }
        }
        if !lo.is_finite() {
            lo = -1.0;
            hi = 1.0;
        }
        let pad = 1e-9 * (1.0 + hi.abs().max(lo.abs()));
        out[axis] = linspace(lo - pad, hi + pad, m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_is_self_dual() {
        let y = linspace(-20.0, 20.0, 4001);
        let f: Vec<f64> = y.iter().map(|v| 0.5 * v * v).collect();
        let x = linspace(-5.0, 5.0, 101);
        let g = conjugate_1d(&y, &f, &x);
        for (a, b) in x.iter().zip(&g) {
            assert!((b - 0.5 * a * a).abs() < 1e-4, "{a}: {b}");
        }
    }

    #[test]
    fn biconjugation_reproduces_convex_data() {
        let y = linspace(-1.0, 1.0, 4096);
        let f: Vec<f64> = y.iter().map(|v| (1.0 + v.exp()).ln() + v * v).collect();
        let input = TensorFn::new([y.clone(), vec![0.0]], f.clone()).unwrap();
        let axes = slope_axes(&input, 8192);
        let back = biconjugate(&input, &axes);
        let err = back
            .values
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn two_dimensional_matches_brute_force() {
        let ax = [linspace(-1.0, 1.0, 21), linspace(-1.0, 1.0, 17)];
        let f = TensorFn::from_fn(ax.clone(), |a, b| {
            if a + b > 1.2 {
                f64::INFINITY
            } else {
                a * a + 0.3 * a * b + b * b + (a - b).abs()
            }
        });
        let out_axes = [linspace(-3.0, 3.0, 13), linspace(-2.0, 4.0, 11)];
        let g = conjugate(&f, &out_axes);
        for (j, &b) in out_axes[1].iter().enumerate() {
            for (i, &a) in out_axes[0].iter().enumerate() {
                let brute = conjugate_brute(&f, [a, b]);
                assert!((g.at(i, j) - brute).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn envelope_of_double_well() {
        let y = linspace(-2.0, 2.0, 401);
        let f: Vec<f64> = y.iter().map(|v| (v * v - 1.0).powi(2)).collect();
        let e = convex_envelope_1d(&y, &f);
        for (k, v) in y.iter().enumerate() {
            if v.abs() <= 1.0 {
                assert!(e[k].abs() < 1e-12);
            } else {
                assert!((e[k] - f[k]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn conjugate_1d_matches_brute(vals in prop::collection::vec(-5.0f64..5.0, 2..40), xs in prop::collection::vec(-20.0f64..20.0, 1..20)) {
            let y = linspace(0.0, 1.0, vals.len());
            let mut x = xs.clone();
            x.sort_by(f64::total_cmp);
            x.dedup();
            let g = conjugate_1d(&y, &vals, &x);
            let input = TensorFn::new([y.clone(), vec![0.0]], vals.clone()).unwrap();
            for (a, v) in x.iter().zip(&g) {
                let b = conjugate_brute(&input, [*a, 0.0]);
                prop_assert!((v - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn envelope_is_below_and_convex(vals in prop::collection::vec(-5.0f64..5.0, 3..40)) {
            let y = linspace(0.0, 1.0, vals.len());
            let e = convex_envelope_1d(&y, &vals);
            for k in 0..y.len() {
                prop_assert!(e[k] <= vals[k] + 1e-12);
            }
            for k in 1..y.len() - 1 {
                prop_assert!(e[k - 1] + e[k + 1] - 2.0 * e[k] >= -1e-9);
            }
        }
    }
}
