//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the summary is always printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Deserialize;

use kfl_cli::experiments::{run_experiment, ExperimentConfig, ExperimentName, Summary};
use kfl_core::families::{draw, potential, Family};
use kfl_core::functionals::{energy_report, k_energy_batch, ReportOptions};
use kfl_core::grid::{Domain, DomainRef};
use kfl_core::logspace::XOptions;
use kfl_core::metric::d1;
use kfl_core::potential::{geodesic, torus_act, AffineFunction, SymplecticPotential};
use kfl_core::principle::{check_hypotheses, Status, ToricVariational, Toy};
use kfl_core::quotient::d1_quotient;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sample(d: &DomainRef, k: u64) -> SymplecticPotential {
    let fam = [Family::Bumps, Family::Quadratic, Family::Symmetric][k as usize % 3];
    let fam = if d.n() == 2 && fam == Family::Symmetric {
        Family::Bumps
    } else {
        fam
    };
    potential(d, fam, k, true).expect("family sample")
}

fn experiment(name: ExperimentName) -> Result<(Summary, Duration), String> {
    let t = Instant::now();
    let o = run_experiment(&ExperimentConfig::new(name)).map_err(|e| format!("{e:#}"))?;
    Ok((o.summary, t.elapsed()))
}

fn checks_line(s: &Summary) -> String {
    s.checks
        .iter()
        .map(|c| format!("{}={:.3e}", c.name, c.value))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Routes of d₁ on 100 P¹ and 50 dP₃ pairs at the default grids.
fn metric_consistency() -> Outcome {
    let t = Instant::now();
    let p1 = Domain::named("p1", 65537).unwrap();
    let dp3 = Domain::named("dp3", 513).unwrap();
    let pairs: Vec<(DomainRef, u64)> = (0..100)
        .map(|k| (p1.clone(), k))
        .chain((0..50).map(|k| (dp3.clone(), k)))
        .collect();
    let worst = pairs
        .par_iter()
        .map(|(d, k)| {
            let r = d1(&sample(d, 2 * k), &sample(d, 2 * k + 1)).map_err(|e| e.to_string())?;
            Ok(r.agreement)
        })
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let el = t.elapsed();
    ensure(
        worst <= 1e-3 && el <= Duration::from_secs(300),
        format!("worst relative disagreement {worst:.2e} over 150 pairs in {el:.1?}"),
    )
}

/// AM along 100 geodesics, 11 points each.
fn am_linearity() -> Outcome {
    let p1 = Domain::named("p1", 8193).unwrap();
    let dp3 = Domain::named("dp3", 65).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let d = if k % 2 == 0 { &p1 } else { &dp3 };
        // unnormalized endpoints, so AM varies along the path
        let u = potential(d, Family::Bumps, 3 * k, false).unwrap();
        let v = potential(d, Family::Quadratic, 3 * k + 1, false).unwrap();
        let (a0, a1) = (u.am(), v.am());
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let g = geodesic(&u, &v, t).unwrap();
            worst = worst.max((g.am() - ((1.0 - t) * a0 + t * a1)).abs());
        }
    }
    ensure(
        worst <= 1e-10,
        format!("worst residual {worst:.2e} on 100 geodesics"),
    )
}

/// Discrete second differences of the K-energy along 50 geodesics.
fn k_energy_convexity() -> Outcome {
    let p1 = Domain::named("p1", 8193).unwrap();
    let dp3 = Domain::named("dp3", 65).unwrap();
    let mut worst = f64::INFINITY;
    for k in 0..50u64 {
        let d = if k < 40 { &p1 } else { &dp3 };
        let (u, v) = (sample(d, 5 * k + 1), sample(d, 5 * k + 2));
        let path: Vec<SymplecticPotential> = (0..=10)
            .map(|i| geodesic(&u, &v, i as f64 / 10.0).unwrap())
            .collect();
        let refs: Vec<&SymplecticPotential> = path.iter().collect();
        let e = k_energy_batch(&refs, XOptions::default_for(d.n())).map_err(|e| e.to_string())?;
        let scale = e.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for w in e.windows(3) {
            worst = worst.min((w[0] - 2.0 * w[1] + w[2]) / scale);
        }
    }
    ensure(
        worst >= -1e-4,
        format!("smallest scaled second difference {worst:.2e} on 50 pairs"),
    )
}

/// Ding–Tian identity and Jensen's inequality on 100 P¹ samples.
fn ding_tian_jensen() -> Outcome {
    let p1 = Domain::named("p1", 65537).unwrap();
    let rows = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let u = draw(Family::ALL[k as usize % 4], 1, k)
                .scaled(0.5 + (k % 7) as f64)
                .sample(&p1);
            let r = energy_report(
                &u.map_err(|e| e.to_string())?.normalized(),
                &ReportOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            let dt = r.ding_tian_residual.ok_or("no Ding-Tian residual")?;
            let jensen = r.ding.unwrap() - r.e_beta.unwrap();
            Ok((dt, jensen))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let dt = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let viol = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    ensure(
        dt <= 1e-3 && viol <= 1e-8,
        format!("Ding-Tian residual {dt:.2e}, largest F - E {viol:.2e}"),
    )
}

fn dp3_orbit() -> Outcome {
    let (s, el) = experiment(ExperimentName::Dp3Counterexample)?;
    ensure(
        s.pass && el <= Duration::from_secs(600),
        format!("{} in {el:.1?}", checks_line(&s)),
    )
}

fn dp1_futaki() -> Outcome {
    let (s, _) = experiment(ExperimentName::Dp1Futaki)?;
    ensure(s.pass, checks_line(&s))
}

/// `min_{b,c} Σ w |r - <b,y> - c| / Σ w` by coarse-to-fine grid search.
fn brute_force_fit(d: &DomainRef, r: &[f64]) -> f64 {
    let (nodes, w) = (d.nodes(), d.weights());
    let total: f64 = w.iter().sum();
    let obj = |p: [f64; 3]| -> f64 {
        r.iter()
            .zip(nodes)
            .zip(w)
            .map(|((ri, y), wi)| wi * (ri - p[0] * y[0] - p[1] * y[1] - p[2]).abs())
            .sum::<f64>()
            / total
    };
    let m = 10;
    let mut center = [0.0; 3];
    let mut half = 6.0;
    let mut best = obj(center);
    for _ in 0..40 {
        let cands: Vec<[f64; 3]> = (0..=m)
            .flat_map(|i| (0..=m).flat_map(move |j| (0..=m).map(move |k| [i, j, k])))
            .map(|[i, j, k]| {
                let at = |c: f64, s: usize| c + half * (2.0 * s as f64 / m as f64 - 1.0);
                [at(center[0], i), at(center[1], j), at(center[2], k)]
            })
            .collect();
        let (v, p) = cands
            .par_iter()
            .map(|&p| (obj(p), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        if v < best {
            best = v;
            center = p;
        }
        half *= 0.6;
    }
    best
}

/// Quotient solver against brute force, and collapse of affine orbits.
fn quotient_solver() -> Outcome {
    let d = Domain::named("dp3", 65).unwrap();
    let mut gap: f64 = 0.0;
    let mut collapse: f64 = 0.0;
    for k in 0..20u64 {
        let (u, v) = (sample(&d, 7 * k), sample(&d, 7 * k + 3));
        let q = d1_quotient(&u, &v).map_err(|e| e.to_string())?;
        let r: Vec<f64> = u
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a - b)
            .collect();
        gap = gap.max((q.value - brute_force_fit(&d, &r)).abs());
        let b = [0.4 * (k as f64 % 5.0) - 0.8, 0.9 - 0.3 * (k as f64 % 7.0)];
        let moved = torus_act(&u, &AffineFunction::new(b, 0.5));
        collapse = collapse.max(d1_quotient(&u, &moved).map_err(|e| e.to_string())?.value);
    }
    ensure(
        gap <= 1e-2 && collapse <= 1e-8,
        format!("largest gap to brute force {gap:.2e}, orbit collapse {collapse:.2e} on 20 pairs"),
    )
}

fn j_sandwich() -> Outcome {
    let (s, _) = experiment(ExperimentName::JSandwich)?;
    ensure(s.pass, checks_line(&s))
}

#[derive(Deserialize)]
struct MoserFixture {
    #[serde(rename = "C")]
    c: f64,
    #[serde(rename = "D")]
    d: f64,
    c_tol: f64,
    d_tol: f64,
}

fn moser_trudinger() -> Outcome {
    let (s, _) = experiment(ExperimentName::MoserTrudinger)?;
    let fx: MoserFixture = serde_json::from_str(include_str!("fixtures/moser_trudinger.json"))
        .map_err(|e| e.to_string())?;
    let p = &s.results["properness"];
    let (c, d) = (p["C"].as_f64().unwrap(), p["D"].as_f64().unwrap());
    let margin = p["min_margin"].as_f64().unwrap();
    let regress = (c - fx.c).abs() <= fx.c_tol && (d - fx.d).abs() <= fx.d_tol;
    ensure(
        s.pass && c > 0.0 && margin >= 0.0 && regress,
        format!(
            "C = {c:.6}, D = {d:.6}, min_margin = {margin:.1e}; fixture ({}, {})",
            fx.c, fx.d
        ),
    )
}

/// Broken toys fail their property with a witness; the Euclidean toy and
/// the P¹ model pass P1, P4, P6, P7 and skip P2, P3.
fn principle_harness() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (toy, p) in [(Toy::ScaledMetric, 4), (Toy::Plateau, 5), (Toy::Tilted, 7)] {
        let r = check_hypotheses(&toy, 0, 200).map_err(|e| e.to_string())?;
        let pr = &r.properties[p - 1];
        let detected = pr.status == Status::Fail && pr.witness.is_some();
        ok &= detected;
        notes.push(format!(
            "{} P{p} {}",
            toy.name(),
            if detected { "caught" } else { "missed" }
        ));
    }
    let toric = ToricVariational::new("p1", 1025).map_err(|e| e.to_string())?;
    let reports = [
        check_hypotheses(&Toy::Euclidean, 0, 200).map_err(|e| e.to_string())?,
        check_hypotheses(&toric, 0, 100).map_err(|e| e.to_string())?,
    ];
    for r in &reports {
        let pass = [1, 4, 6, 7].iter().all(|&p| r.status(p) == Status::Pass);
        let skipped = [2, 3].iter().all(|&p| r.status(p) == Status::Skipped);
        ok &= pass && skipped;
        notes.push(format!(
            "{} {}",
            r.model,
            if pass && skipped { "passes" } else { "FAILS" }
        ));
    }
    ensure(ok, notes.join(", "))
}

fn soliton() -> Outcome {
    let (s, _) = experiment(ExperimentName::SolitonStationarity)?;
    ensure(s.pass, checks_line(&s))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("metric consistency", metric_consistency),
        ("AM linearity", am_linearity),
        ("K-energy convexity", k_energy_convexity),
        ("Ding-Tian and Jensen", ding_tian_jensen),
        ("dP3 orbit", dp3_orbit),
        ("dP1 Futaki", dp1_futaki),
        ("quotient solver", quotient_solver),
        ("J sandwich", j_sandwich),
        ("Moser-Trudinger probe", moser_trudinger),
        ("principle harness", principle_harness),
        ("soliton stationarity", soliton),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str())) {
            continue;
        }
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {tag} {name}: {detail} [{:.1?}]",
            i + 1,
            t.elapsed()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
