//! The five desk experiments. Each builds its own models, returns a summary
//! with pass/fail per check, a CSV of the raw sweep and an SVG plot.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use kfl_core::duality::{dual_axes, to_dual};
use kfl_core::families::{draw, Family};
use kfl_core::functionals::{
    futaki, j_energy_with, k_energy_batch, soliton_field, soliton_functionals,
};
use kfl_core::grid::{Domain, DomainRef};
use kfl_core::logspace::XOptions;
use kfl_core::metric::d1_l1;
use kfl_core::potential::{rooftop_envelope, torus_act, AffineFunction, SymplecticPotential};
use kfl_core::quotient::{d1_quotient, j_quotient, properness_fit, PropernessReport};
use kfl_core::ToricModel;

use crate::output::{json, num, OutDir, Table};
use crate::plot::{Plot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Dp3Counterexample,
    Dp1Futaki,
    MoserTrudinger,
    JSandwich,
    SolitonStationarity,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::Dp3Counterexample,
        ExperimentName::Dp1Futaki,
        ExperimentName::MoserTrudinger,
        ExperimentName::JSandwich,
        ExperimentName::SolitonStationarity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::Dp3Counterexample => "dp3-counterexample",
            ExperimentName::Dp1Futaki => "dp1-futaki",
            ExperimentName::MoserTrudinger => "moser-trudinger",
            ExperimentName::JSandwich => "j-sandwich",
            ExperimentName::SolitonStationarity => "soliton-stationarity",
        }
    }
}

pub const DEFAULT_GRID_2D: usize = 257;
pub const DEFAULT_GRID_1D: usize = 65537;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    /// Nodes per axis on two-dimensional models.
    pub grid: usize,
    /// Nodes on the interval.
    pub grid_1d: usize,
    pub seed: u64,
    /// Threshold overrides keyed by check name.
    pub tol: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn new(name: ExperimentName) -> Self {
        ExperimentConfig {
            name,
            grid: DEFAULT_GRID_2D,
            grid_1d: DEFAULT_GRID_1D,
            seed: 0,
            tol: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, g) in [("grid", self.grid), ("grid-1d", self.grid_1d)] {
            if g < 5 || !(g - 1).is_power_of_two() {
                bail!("{what} = {g} is not a power of two plus one");
            }
        }
        Ok(())
    }

    fn tol(&self, key: &str, default: f64) -> f64 {
        self.tol.get(key).copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            comparison: Comparison::AtMost,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            comparison: Comparison::AtLeast,
            threshold,
            pass: value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentName,
    pub pass: bool,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    /// Experiment-specific results.
    pub results: serde_json::Value,
}

impl Summary {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub table: Table,
    pub plot: Plot,
}

impl Outcome {
    /// Writes `<name>.json`, `<name>.csv` and `<name>.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let out = OutDir::create(dir)?;
        let stem = self.summary.experiment.as_str();
        out.write(&format!("{stem}.json"), &json(&self.summary)?)?;
        out.write(&format!("{stem}.csv"), &self.table.to_csv())?;
        out.write(&format!("{stem}.svg"), &self.plot.to_svg())?;
        Ok(())
    }
}

fn finish(
    cfg: &ExperimentConfig,
    checks: Vec<Check>,
    results: serde_json::Value,
    table: Table,
    plot: Plot,
) -> Outcome {
    Outcome {
        summary: Summary {
            experiment: cfg.name,
            pass: checks.iter().all(|c| c.pass),
            config: cfg.clone(),
            checks,
            results,
        },
        table,
        plot,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let name = cfg.name.as_str();
    let r = match cfg.name {
        ExperimentName::Dp3Counterexample => dp3_counterexample(cfg),
        ExperimentName::Dp1Futaki => dp1_futaki(cfg),
        ExperimentName::MoserTrudinger => moser_trudinger(cfg),
        ExperimentName::JSandwich => j_sandwich(cfg),
        ExperimentName::SolitonStationarity => soliton_stationarity(cfg),
    };
    r.with_context(|| format!("experiment {name}"))
}

/// `torus_act(reference, <b, y>)` on the normalized slice.
pub fn orbit_point(domain: &DomainRef, b: [f64; 2]) -> SymplecticPotential {
    torus_act(
        &SymplecticPotential::reference(domain),
        &AffineFunction::linear(b),
    )
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn drift(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|v| (v - values[0]).abs())
        .fold(0.0, f64::max)
}

fn dp3_counterexample(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = Domain::named("dp3", cfg.grid)?;
    let x = XOptions::default_for(2);
    let ts: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let us: Vec<SymplecticPotential> = ts.iter().map(|&t| orbit_point(&d, [t, 0.0])).collect();
    let e = k_energy_batch(&us.iter().collect::<Vec<_>>(), x)?;
    let reference = SymplecticPotential::reference(&d);
    let rows: Vec<(f64, f64, f64)> = us
        .par_iter()
        .map(|u| -> kfl_core::Result<(f64, f64, f64)> {
            let j = j_energy_with(u, x)?.j;
            Ok((j, d1_quotient(&reference, u)?.value, d1_l1(&reference, u)?))
        })
        .collect::<kfl_core::Result<Vec<_>>>()?;
    let j: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let dg: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let dist: Vec<f64> = rows.iter().map(|r| r.2).collect();
    // J_G at the ends and the middle of the sweep
    let jg_at = [0usize, 6, 12];
    let jg: Vec<f64> = jg_at
        .par_iter()
        .map(|&k| j_quotient(&us[k]).map(|q| q.value))
        .collect::<kfl_core::Result<Vec<_>>>()?;

    let late: Vec<usize> = (0..ts.len()).filter(|&k| ts[k] >= 1.0).collect();
    let slope = fitted_slope(
        &late.iter().map(|&k| ts[k]).collect::<Vec<_>>(),
        &late.iter().map(|&k| j[k]).collect::<Vec<_>>(),
    );
    let monotone = late.windows(2).all(|w| j[w[1]] > j[w[0]]);
    let checks = vec![
        Check::at_most("e_drift", drift(&e), cfg.tol("e_drift", 1e-3)),
        Check::at_least("j_slope", slope, cfg.tol("j_slope", 0.2)),
        Check::at_least("j_monotone", if monotone { 1.0 } else { 0.0 }, 1.0),
        Check::at_most("d1g_drift", drift(&dg), cfg.tol("d1g_drift", 1e-3)),
        Check::at_most("jg_drift", drift(&jg), cfg.tol("jg_drift", 1e-3)),
    ];
    let mut table = Table::new(&["t", "k_energy", "j", "d1", "d1g"]);
    for k in 0..ts.len() {
        table.push_nums(None, &[ts[k], e[k], j[k], dist[k], dg[k]]);
    }
    let zip = |v: &[f64]| {
        ts.iter()
            .copied()
            .zip(v.iter().copied())
            .collect::<Vec<_>>()
    };
    let plot = Plot::new("dP3 torus orbit b = (1, 0)", "t", "value")
        .with(Series::line("K-energy", zip(&e)))
        .with(Series::line("J", zip(&j)))
        .with(Series::line("d1", zip(&dist)))
        .with(Series::line("d1,G", zip(&dg)));
    let results = serde_json::json!({
        "b": [1.0, 0.0],
        "t": ts,
        "k_energy": e,
        "j": j,
        "d1_quotient": dg,
        "j_quotient": jg,
        "j_quotient_t": jg_at.iter().map(|&k| ts[k]).collect::<Vec<_>>(),
        "j_slope_t_ge_1": slope,
    });
    Ok(finish(cfg, checks, results, table, plot))
}

/// Five-point central difference of the K-energy along `t ↦ reference + t<b, y>`.
pub fn orbit_derivative(domain: &DomainRef, b: [f64; 2], h: f64, x: XOptions) -> Result<f64> {
    let pts: Vec<SymplecticPotential> = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|s| orbit_point(domain, [s * h * b[0], s * h * b[1]]))
        .collect();
    let e = k_energy_batch(&pts.iter().collect::<Vec<_>>(), x)?;
    Ok((e[0] - 8.0 * e[1] + 8.0 * e[2] - e[3]) / (12.0 * h))
}

fn dp1_futaki(cfg: &ExperimentConfig) -> Result<Outcome> {
    let b = [1.0, 1.0];
    let h = cfg.tol("fd_step", 0.05);
    let x = XOptions::default_for(2);
    let grids = [(cfg.grid - 1) / 4 + 1, (cfg.grid - 1) / 2 + 1, cfg.grid];
    let mut derivs = Vec::new();
    for &g in &grids {
        let d = Domain::named("dp1", g)?;
        derivs.push(orbit_derivative(&d, b, h, x)?);
    }
    let fine = *derivs.last().expect("three grids");
    let uncertainty = (derivs[2] - derivs[1]).abs();
    let oracle = futaki(ToricModel::named("dp1")?.polytope(), b);
    let rel = (fine - oracle).abs() / oracle.abs();
    let ratio = fine.abs() / uncertainty.max(f64::MIN_POSITIVE);
    let checks = vec![
        Check::at_least(
            "signal_to_refinement",
            ratio,
            cfg.tol("signal_to_refinement", 10.0),
        ),
        Check::at_most(
            "oracle_relative_error",
            rel,
            cfg.tol("oracle_relative_error", 1e-3),
        ),
    ];
    // K-energy along the orbit on the finest grid
    let d = Domain::named("dp1", cfg.grid)?;
    let ts: Vec<f64> = (0..=8).map(|k| -1.0 + 0.25 * k as f64).collect();
    let us: Vec<SymplecticPotential> = ts
        .iter()
        .map(|&t| orbit_point(&d, [t * b[0], t * b[1]]))
        .collect();
    let e = k_energy_batch(&us.iter().collect::<Vec<_>>(), x)?;
    let mut table = Table::new(&["t", "k_energy"]);
    for (t, v) in ts.iter().zip(&e) {
        table.push_nums(None, &[*t, *v]);
    }
    let plot = Plot::new("dP1 K-energy along the diagonal orbit", "t", "K-energy")
        .with(Series::line(
            "K-energy",
            ts.iter().copied().zip(e.iter().copied()).collect(),
        ))
        .with(Series::line(
            "Futaki tangent",
            ts.iter().map(|&t| (t, e[4] + oracle * t)).collect(),
        ));
    let results = serde_json::json!({
        "b": b,
        "fd_step": h,
        "grids": grids,
        "derivatives": derivs,
        "refinement_uncertainty": uncertainty,
        "oracle": oracle,
        "t": ts,
        "k_energy": e,
    });
    Ok(finish(cfg, checks, results, table, plot))
}

/// Scale factor `s` with `J(s·dev) ≈ target`, by secant steps in log–log.
fn scale_for_j(
    d: &DomainRef,
    dev: &kfl_core::families::Deviation,
    target: f64,
    x: XOptions,
) -> Result<(f64, SymplecticPotential, f64)> {
    let eval = |s: f64| -> Result<(SymplecticPotential, f64)> {
        let u = dev.scaled(s).sample(d)?.normalized();
        let j = j_energy_with(&u, x)?.j;
        Ok((u, j))
    };
    let (mut s0, mut s1) = (1.0f64, 4.0f64);
    let (_, mut j0) = eval(s0)?;
    let (mut u1, mut j1) = eval(s1)?;
    for _ in 0..10 {
        if (j1 - target).abs() <= 1e-3 * target || j1 <= 0.0 || j0 <= 0.0 {
            break;
        }
        let slope = (j1.ln() - j0.ln()) / (s1.ln() - s0.ln());
        let next = (s1.ln() + (target.ln() - j1.ln()) / slope.max(0.2)).exp();
        (s0, j0) = (s1, j1);
        s1 = next.clamp(1e-4, 1e5);
        (u1, j1) = eval(s1)?;
    }
    Ok((s1, u1, j1))
}

/// `V⁻¹ ∫ φ_u · y ωⁿ` with the first eigenfunction `y ∘ μ` of the reference;
/// `φ_u(x) = ψ_u(x) - ψ_G(x)` at `x = ∇u_G(y)`.
pub fn constraint_residual(u: &SymplecticPotential, axes: &[Vec<f64>; 2], psi_ref: &[f64]) -> f64 {
    let d = u.domain();
    let psi = to_dual(u, axes).values;
    let xa = &axes[0];
    let (lo, hi, step) = (xa[0], xa[xa.len() - 1], xa[1] - xa[0]);
    let model = d.model();
    d.mean(|k| {
        let y = d.nodes()[k];
        let xk = model.grad_ref(y)[0];
        if !(xk > lo && xk < hi) {
            return 0.0;
        }
        let f = (xk - lo) / step;
        let i = (f.floor() as usize).min(xa.len() - 2);
        let w = f - i as f64;
        let phi = (1.0 - w) * (psi[i] - psi_ref[i]) + w * (psi[i + 1] - psi_ref[i + 1]);
        phi * y[0]
    })
}

fn moser_trudinger(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = Domain::named("p1", cfg.grid_1d)?;
    let x = XOptions::coarse(1);
    let count = 300usize;
    let j_max = cfg.tol("j_max", 50.0);
    let axes = dual_axes(1, 30.0, 6001);
    let psi_ref = to_dual(&SymplecticPotential::reference(&d), &axes).values;
    struct Row {
        seed: u64,
        scale: f64,
        j: f64,
        e: f64,
        constraint: f64,
    }
    let rows: Vec<Row> = (0..count)
        .into_par_iter()
        .map(|k| -> Result<Row> {
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            let dev = draw(Family::Symmetric, 1, seed);
            let target = j_max * (k as f64 + 0.5) / count as f64;
            let (scale, u, j) = scale_for_j(&d, &dev, target, x)?;
            let e = k_energy_batch(&[&u], x)?[0];
            Ok(Row {
                seed,
                scale,
                j,
                e,
                constraint: constraint_residual(&u, &axes, &psi_ref),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let admitted: Vec<&Row> = rows.iter().filter(|r| r.j >= 0.0 && r.j <= j_max).collect();
    let samples: Vec<(f64, f64)> = admitted.iter().map(|r| (r.j, r.e)).collect();
    let fit: PropernessReport = properness_fit(&samples, "p1-symmetric")?;
    let span = admitted.iter().map(|r| r.j).fold(0.0, f64::max);
    let worst_constraint = rows.iter().map(|r| r.constraint.abs()).fold(0.0, f64::max);
    let checks = vec![
        Check::at_least(
            "admitted",
            admitted.len() as f64,
            cfg.tol("admitted", 0.9 * count as f64),
        ),
        Check::at_least("j_span", span, cfg.tol("j_span", 0.9 * j_max)),
        Check::at_most(
            "constraint_residual",
            worst_constraint,
            cfg.tol("constraint_residual", 1e-10),
        ),
        Check::at_least("c", fit.c, cfg.tol("c", kfl_core::quotient::PROPER_C_MIN)),
        Check::at_least("min_margin", fit.min_margin, cfg.tol("min_margin", 0.0)),
    ];
    let mut table = Table::new(&["seed", "scale", "j", "k_energy", "constraint"]);
    for r in &rows {
        table.push(vec![
            r.seed.to_string(),
            num(r.scale),
            num(r.j),
            num(r.e),
            num(r.constraint),
        ]);
    }
    let line = vec![(0.0, -fit.d), (span, fit.c * span - fit.d)];
    let plot = Plot::new(
        "K-energy against J, symmetric potentials on P1",
        "J",
        "K-energy",
    )
    .with(Series::points("samples", samples.clone()))
    .with(Series::line("C J - D", line));
    let results = serde_json::json!({
        "samples": rows.len(),
        "admitted": admitted.len(),
        "j_span": span,
        "constraint_residual": worst_constraint,
        "properness": fit,
    });
    Ok(finish(cfg, checks, results, table, plot))
}

/// The two proof identities behind the J-sandwich for one normalized sample:
/// `d₁(0, u) + 2 AM(P(0, u))` and the slack `2 sup φ_u - d₁(0, u)`.
pub fn sandwich_terms(u: &SymplecticPotential) -> Result<(f64, f64, f64)> {
    let zero = SymplecticPotential::reference(u.domain());
    let d = d1_l1(&zero, u)?;
    let roof = rooftop_envelope(&zero, u)?;
    Ok((d, d + 2.0 * roof.am(), 2.0 * u.sup_phi() - d))
}

fn j_sandwich(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = Domain::named("p1", cfg.grid_1d)?;
    let x = XOptions::coarse(1);
    let families = [Family::Bumps, Family::Quadratic, Family::Symmetric];
    let rows: Vec<(u64, f64, f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|k| -> Result<(u64, f64, f64, f64, f64)> {
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
            let scale = 10f64.powf(rng.random_range(-1.0..1.5));
            let u = draw(families[k as usize % 3], 1, seed)
                .scaled(scale)
                .sample(&d)?
                .normalized();
            let (dist, identity, slack) = sandwich_terms(&u)?;
            Ok((seed, dist, identity, slack, j_energy_with(&u, x)?.j))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_identity = rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
    let min_slack = rows.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    // smallest C with J/C - C ≤ d₁ ≤ C J + C on the samples
    let c = rows
        .iter()
        .map(|r| {
            let (dd, j) = (r.1, r.4);
            let upper = dd / (j + 1.0);
            let lower = {
                // J/C - C ≤ d ⟺ C² + dC - J ≥ 0
                (-dd + (dd * dd + 4.0 * j).sqrt()) / 2.0
            };
            upper.max(lower)
        })
        .fold(0.0, f64::max);
    let checks = vec![
        Check::at_most(
            "identity_residual",
            worst_identity,
            cfg.tol("identity_residual", 1e-3),
        ),
        Check::at_least("sup_slack", min_slack, cfg.tol("sup_slack", 0.0)),
    ];
    let mut table = Table::new(&["seed", "d1", "identity_residual", "sup_slack", "j"]);
    for r in &rows {
        table.push(vec![
            r.0.to_string(),
            num(r.1),
            num(r.2),
            num(r.3),
            num(r.4),
        ]);
    }
    let plot = Plot::new("d1(0, u) against J on P1", "J", "d1(0, u)").with(Series::points(
        "samples",
        rows.iter().map(|r| (r.4, r.1)).collect(),
    ));
    let results = serde_json::json!({
        "samples": rows.len(),
        "identity_residual": worst_identity,
        "min_sup_slack": min_slack,
        "sandwich_constant": c,
    });
    Ok(finish(cfg, checks, results, table, plot))
}

/// Five-point derivative of `F^X` along the torus direction `a` at the reference.
pub fn modified_ding_derivative(
    d: &DomainRef,
    b: [f64; 2],
    a: &AffineFunction,
    h: f64,
) -> Result<f64> {
    let f = [-2.0, -1.0, 1.0, 2.0]
        .par_iter()
        .map(|s| {
            let g = AffineFunction::new([s * h * a.b[0], s * h * a.b[1]], s * h * a.c);
            let u = torus_act(&SymplecticPotential::reference(d), &g);
            soliton_functionals(&u, b).map(|v| v.f_x)
        })
        .collect::<kfl_core::Result<Vec<_>>>()?;
    Ok((f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h))
}

fn soliton_stationarity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let symmetric = ["p1", "p1xp1", "p2", "dp3"];
    let mut table = Table::new(&["model", "direction", "b0", "b1", "value"]);
    let mut worst_b: f64 = 0.0;
    let mut fields = serde_json::Map::new();
    for m in symmetric {
        let b = soliton_field(&ToricModel::named(m)?)?;
        worst_b = worst_b.max(b[0].hypot(b[1]));
        table.push(vec![
            m.into(),
            "field".into(),
            num(b[0]),
            num(b[1]),
            num(b[0].hypot(b[1])),
        ]);
        fields.insert(m.into(), serde_json::json!(b));
    }
    let d = Domain::named("dp1", cfg.grid)?;
    let b = soliton_field(d.model())?;
    fields.insert("dp1".into(), serde_json::json!(b));
    table.push(vec![
        "dp1".into(),
        "field".into(),
        num(b[0]),
        num(b[1]),
        num(b[0].hypot(b[1])),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.tol("fd_step", 0.05);
    let mut derivs = Vec::new();
    let mut plain = Vec::new();
    for k in 0..5 {
        let a = AffineFunction::new(
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            rng.random_range(-1.0..1.0),
        );
        let dv = modified_ding_derivative(&d, b, &a, h)?;
        let d0 = modified_ding_derivative(&d, [0.0, 0.0], &a, h)?;
        table.push(vec![
            "dp1".into(),
            format!("direction-{k}"),
            num(a.b[0]),
            num(a.b[1]),
            num(dv),
        ]);
        derivs.push(dv);
        plain.push(d0);
    }
    let worst = derivs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let checks = vec![
        Check::at_most(
            "symmetric_field_norm",
            worst_b,
            cfg.tol("symmetric_field_norm", 1e-8),
        ),
        Check::at_most(
            "modified_ding_derivative",
            worst,
            cfg.tol("modified_ding_derivative", 1e-3),
        ),
    ];
    let plot = Plot::new(
        "dP1 directional derivatives at the reference",
        "direction",
        "derivative",
    )
    .with(Series::points(
        "modified Ding",
        derivs
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64, *v))
            .collect(),
    ))
    .with(Series::points(
        "Ding (b = 0)",
        plain
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64, *v))
            .collect(),
    ));
    let results = serde_json::json!({
        "fields": fields,
        "dp1_modified_ding_derivatives": derivs,
        "dp1_ding_derivatives": plain,
        "fd_step": h,
    });
    Ok(finish(cfg, checks, results, table, plot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes_are_validated() {
        let mut cfg = ExperimentConfig::new(ExperimentName::JSandwich);
        assert!(cfg.validate().is_ok());
        cfg.grid = 100;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn slope_of_a_line() {
        assert!((fitted_slope(&[1.0, 2.0, 3.0], &[2.0, 4.5, 7.0]) - 2.5).abs() < 1e-14);
    }
}
