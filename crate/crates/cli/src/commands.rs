//! Subcommands and their argument types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use kfl_core::families::{draw, Family};
use kfl_core::functionals::{
    energy_report, j_energy_with, k_energy_batch, soliton_field, ReportOptions,
};
use kfl_core::grid::{Domain, DomainRef};
use kfl_core::io::{self, ManifestEntry};
use kfl_core::logspace::XOptions;
use kfl_core::metric::{d1, d1_l1};
use kfl_core::potential::SymplecticPotential;
use kfl_core::principle::{
    check_hypotheses, existence_properness_test, ExistenceReport, HypothesisReport,
    ToricVariational, Toy, VariationalModel,
};
use kfl_core::quotient::{d1_quotient, d1_quotient_normalized, properness_fit};
use kfl_core::{build_polytope, Facet, Polytope, PolytopeSpec, ToricModel};

use crate::experiments::{
    run_experiment, ExperimentConfig, ExperimentName, DEFAULT_GRID_1D, DEFAULT_GRID_2D,
};
use crate::output::{emit, json, num, OutDir, Table};
use crate::plot::{Plot, Series};

/// Exit code of a failed experiment.
pub const EXIT_EXPERIMENT_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kfl",
    version,
    about = "Toric Kähler functionals, d₁ geometry and quotient properness"
)]
pub struct Cli {
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a polytope and write its description.
    BuildPolytope(BuildPolytopeArgs),
    /// Sample potentials from a family and write them with a manifest.
    Potential(PotentialArgs),
    /// Functionals of one or more potential files.
    Report(ReportArgs),
    /// d₁ between two potentials, or the distance matrix of a manifest.
    Dist(DistArgs),
    /// Quotient distance d₁,G between two potentials.
    Quotient(QuotientArgs),
    /// Fit F ≥ C·d − D over the samples of a manifest.
    Properness(PropernessArgs),
    /// Check the variational hypotheses on a model.
    Principle(PrincipleArgs),
    /// Run a desk experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct PolytopeSource {
    /// Named model: p1, unit-interval, p1xp1, p2, dp1, dp1-trapezoid, dp3.
    #[arg(long, conflicts_with = "polytope")]
    pub model: Option<String>,
    /// Polytope description file.
    #[arg(long)]
    pub polytope: Option<PathBuf>,
}

impl PolytopeSource {
    fn load(&self) -> Result<Polytope> {
        match (&self.model, &self.polytope) {
            (Some(m), _) => Ok(Polytope::named(m)?),
            (None, Some(p)) => {
                io::read_polytope(p).with_context(|| format!("reading {}", p.display()))
            }
            (None, None) => bail!("one of --model or --polytope is required"),
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildPolytopeArgs {
    #[arg(long, conflicts_with = "facets")]
    pub model: Option<String>,
    /// Facets as `l1,l2:c` (or `l:c` on the line), separated by `;`.
    #[arg(long)]
    pub facets: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PotentialArgs {
    #[command(flatten)]
    pub source: PolytopeSource,
    #[arg(long, value_parser = parse_family, default_value = "bumps")]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Nodes per axis (default 513 on polygons, 65537 on intervals).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Multiplier of the sampled deviation.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Keep the sampled constant instead of normalizing AM to zero.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Potential files.
    #[arg(required_unless_present = "manifest")]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Cone angle for the Ding-type functionals.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Also compute the modified functionals at the soliton field.
    #[arg(long)]
    pub soliton: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(num_args = 0..=2)]
    pub files: Vec<PathBuf>,
    #[arg(long, conflicts_with = "files")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QuotientArgs {
    pub u: PathBuf,
    pub v: PathBuf,
    /// Restrict to zero-mean affine functions (the action on the normalized slice).
    #[arg(long)]
    pub normalized: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FunctionalName {
    KEnergy,
    J,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceName {
    /// d₁ to the reference.
    D1,
    /// Quotient distance d₁,G to the reference orbit.
    Quotient,
}

#[derive(Debug, Args)]
pub struct PropernessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = FunctionalName::KEnergy)]
    pub functional: FunctionalName,
    #[arg(long, value_enum, default_value_t = DistanceName::D1)]
    pub distance: DistanceName,
    /// Directory for `properness.json` and `properness.svg`; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrincipleArgs {
    /// `toy:<euclidean|scaled-metric|plateau|tilted>` or `toric:<model>`.
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    /// Nodes per axis of toric models (default 1025 on intervals, 33 on polygons).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Also run the existence/properness test.
    #[arg(long)]
    pub existence: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    #[arg(long, default_value_t = DEFAULT_GRID_2D)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_1D)]
    pub grid_1d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Threshold override `key=value`; also accepted as `--tol.key value`.
    #[arg(long = "tol", value_parser = parse_tol)]
    pub tol: Vec<(String, f64)>,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    Family::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
        format!("unknown family '{s}' (known: {})", names.join(", "))
    })
}

fn parse_tol(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|e| format!("tolerance {k}: {e}"))?;
    Ok((k.to_string(), v))
}

/// Rewrites `--tol.key value` and `--tol.key=value` into `--tol key=value`.
pub fn normalize_args<I: IntoIterator<Item = String>>(args: I) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.strip_prefix("--tol.") {
            Some(rest) => {
                out.push("--tol".into());
                match rest.split_once('=') {
                    Some(_) => out.push(rest.to_string()),
                    None => out.push(format!("{rest}={}", it.next().unwrap_or_default())),
                }
            }
            None => out.push(a),
        }
    }
    out
}

/// Parses `l1,l2:c;...`.
pub fn parse_facets(s: &str) -> Result<Vec<Facet>> {
    s.split(';')
        .filter(|f| !f.trim().is_empty())
        .map(|f| {
            let (l, c) = f
                .split_once(':')
                .ok_or_else(|| anyhow!("facet '{f}' lacks ':c'"))?;
            let l = l
                .split(',')
                .map(|x| x.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("normal of facet '{f}'"))?;
            let c: f64 = c
                .trim()
                .parse()
                .with_context(|| format!("offset of facet '{f}'"))?;
            Ok(Facet::new(&l, c))
        })
        .collect()
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let format = cli.format;
    match cli.command {
        Command::BuildPolytope(a) => build_polytope_cmd(a),
        Command::Potential(a) => potential_cmd(a),
        Command::Report(a) => report_cmd(a, format),
        Command::Dist(a) => dist_cmd(a, format),
        Command::Quotient(a) => quotient_cmd(a, format),
        Command::Properness(a) => properness_cmd(a),
        Command::Principle(a) => principle_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    }
}

fn build_polytope_cmd(a: BuildPolytopeArgs) -> Result<i32> {
    let p = match (&a.model, &a.facets) {
        (Some(m), _) => Polytope::named(m)?,
        (None, Some(f)) => build_polytope(&parse_facets(f)?)?,
        (None, None) => bail!("one of --model or --facets is required"),
    };
    #[derive(Serialize)]
    struct Summary {
        #[serde(flatten)]
        spec: PolytopeSpec,
        hash: String,
        vertices: Vec<[f64; 2]>,
        volume: f64,
        boundary_measure: f64,
        fano: bool,
    }
    let model = ToricModel::new(p.clone());
    let s = Summary {
        spec: p.spec(),
        hash: p.hash().to_string(),
        vertices: p.vertices().to_vec(),
        volume: p.volume(),
        boundary_measure: p.boundary_measure(),
        fano: model.is_fano(),
    };
    match &a.out {
        Some(path) => {
            io::write_polytope(path, &p)?;
            print!("{}", json(&s)?);
        }
        None => print!("{}", json(&s)?),
    }
    Ok(0)
}

fn potential_cmd(a: PotentialArgs) -> Result<i32> {
    let p = a.source.load()?;
    let nodes = a
        .grid
        .unwrap_or(if p.n() == 1 { DEFAULT_GRID_1D } else { 513 });
    let domain = Domain::new(ToricModel::new(p), nodes)?;
    let out = OutDir::create(&a.out)?;
    let mut manifest = Vec::with_capacity(a.count);
    for k in 0..a.count as u64 {
        let seed = a.seed + k;
        let u = draw(a.family, domain.n(), seed)
            .scaled(a.scale)
            .sample(&domain)?;
        let u = if a.raw { u } else { u.normalized() };
        let label = format!("{}-{seed}", a.family.name());
        let file = format!("{label}.json");
        io::write_potential(&out.root.join(&file), &u)?;
        manifest.push(ManifestEntry {
            label,
            path: PathBuf::from(file),
        });
    }
    out.write("manifest.json", &json(&manifest)?)?;
    Ok(0)
}

/// Potentials from positional files or a manifest, on one shared domain.
fn load_many(
    files: &[PathBuf],
    manifest: Option<&Path>,
) -> Result<Vec<(String, SymplecticPotential)>> {
    if let Some(m) = manifest {
        return io::load_manifest(m).with_context(|| format!("reading manifest {}", m.display()));
    }
    let mut domain: Option<DomainRef> = None;
    files
        .iter()
        .map(|f| {
            let h = io::read_header(f).with_context(|| format!("reading {}", f.display()))?;
            let d = match &domain {
                Some(d) => d.clone(),
                None => domain.insert(io::header_domain(&h)?).clone(),
            };
            let u = io::read_potential_on(f, &h, &d)
                .with_context(|| format!("reading {}", f.display()))?;
            Ok((f.display().to_string(), u))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn report_cmd(a: ReportArgs, format: Format) -> Result<i32> {
    let items = load_many(&a.files, a.manifest.as_deref())?;
    let domain = items[0].1.domain().clone();
    let soliton_b = if a.soliton {
        Some(soliton_field(domain.model())?)
    } else {
        None
    };
    let opts = ReportOptions {
        beta: a.beta,
        soliton_b,
        x: None,
    };
    let reports = items
        .iter()
        .map(|(label, u)| {
            Ok((
                label.clone(),
                energy_report(u, &opts).with_context(|| format!("report for {label}"))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let content = match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                label: &'a str,
                #[serde(flatten)]
                report: &'a kfl_core::functionals::EnergyReport,
            }
            let rows: Vec<Row> = reports
                .iter()
                .map(|(l, r)| Row {
                    label: l,
                    report: r,
                })
                .collect();
            json(&rows)?
        }
        Format::Csv => {
            let mut t = Table::new(&[
                "label",
                "am",
                "j",
                "i",
                "entropy",
                "k_energy",
                "ding",
                "e_beta",
                "modified_ding",
                "modified_k_energy",
                "sup_phi",
                "am_residual",
                "ding_tian_residual",
            ]);
            for (l, r) in &reports {
                t.push(vec![
                    l.clone(),
                    opt(r.am),
                    opt(r.j),
                    opt(r.i),
                    opt(r.entropy),
                    opt(r.k_energy),
                    opt(r.ding),
                    opt(r.e_beta),
                    opt(r.modified_ding),
                    opt(r.modified_k_energy),
                    num(r.sup_phi),
                    num(r.am_residual),
                    opt(r.ding_tian_residual),
                ]);
            }
            t.to_csv()
        }
    };
    emit(a.out.as_deref(), &content)?;
    Ok(0)
}

fn dist_cmd(a: DistArgs, format: Format) -> Result<i32> {
    if let Some(m) = &a.manifest {
        let items = load_many(&[], Some(m))?;
        let n = items.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| d1_l1(&items[i].1, &items[j].1))
            .collect::<kfl_core::Result<Vec<f64>>>()?;
        let mut matrix = vec![vec![0.0; n]; n];
        for (&(i, j), v) in pairs.iter().zip(values) {
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
        let labels: Vec<&str> = items.iter().map(|(l, _)| l.as_str()).collect();
        let content = match format {
            Format::Csv => {
                let mut header = vec![""];
                header.extend(&labels);
                let mut t = Table::new(&header);
                for (l, row) in labels.iter().zip(&matrix) {
                    t.push_nums(Some(l), row);
                }
                t.to_csv()
            }
            Format::Json => {
                #[derive(Serialize)]
                struct Matrix<'a> {
                    labels: Vec<&'a str>,
                    d1: Vec<Vec<f64>>,
                }
                json(&Matrix { labels, d1: matrix })?
            }
        };
        emit(a.out.as_deref(), &content)?;
        return Ok(0);
    }
    if a.files.len() != 2 {
        bail!("dist takes two potential files or --manifest");
    }
    let items = load_many(&a.files, None)?;
    let r = d1(&items[0].1, &items[1].1)?;
    let content = match format {
        Format::Json => json(&r)?,
        Format::Csv => {
            let mut t = Table::new(&["d1_l1", "d1_pythagorean", "d1_pathlength", "agreement"]);
            t.push(vec![
                num(r.d1_l1),
                num(r.d1_pythagorean),
                opt(r.d1_pathlength),
                num(r.agreement),
            ]);
            t.to_csv()
        }
    };
    emit(a.out.as_deref(), &content)?;
    Ok(0)
}

fn quotient_cmd(a: QuotientArgs, format: Format) -> Result<i32> {
    let items = load_many(&[a.u.clone(), a.v.clone()], None)?;
    let (u, v) = (&items[0].1, &items[1].1);
    let r = if a.normalized {
        d1_quotient_normalized(u, v)?
    } else {
        d1_quotient(u, v)?
    };
    let content = match format {
        Format::Json => json(&r)?,
        Format::Csv => {
            let mut t = Table::new(&["value", "b1", "b2", "c", "iterations", "residual"]);
            let m = &r.minimizer;
            t.push(vec![
                num(r.value),
                num(m.b[0]),
                num(m.b[1]),
                num(m.c),
                r.iterations.to_string(),
                num(r.residual),
            ]);
            t.to_csv()
        }
    };
    emit(a.out.as_deref(), &content)?;
    Ok(0)
}

fn properness_cmd(a: PropernessArgs) -> Result<i32> {
    let items = load_many(&[], Some(&a.manifest))?;
    let domain = items[0].1.domain().clone();
    let base = SymplecticPotential::reference(&domain);
    let us: Vec<&SymplecticPotential> = items.iter().map(|(_, u)| u).collect();
    let opts = XOptions::default_for(domain.n());
    let f = match a.functional {
        FunctionalName::KEnergy => k_energy_batch(&us, opts)?,
        FunctionalName::J => us
            .par_iter()
            .map(|u| j_energy_with(u, opts).map(|j| j.j))
            .collect::<kfl_core::Result<Vec<f64>>>()?,
    };
    let d = us
        .par_iter()
        .map(|u| match a.distance {
            DistanceName::D1 => d1_l1(&base, u),
            DistanceName::Quotient => d1_quotient(&base, u).map(|q| q.value),
        })
        .collect::<kfl_core::Result<Vec<f64>>>()?;
    let samples: Vec<(f64, f64)> = d.iter().copied().zip(f.iter().copied()).collect();
    let family = a
        .manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "manifest".into());
    let report = properness_fit(&samples, &family)?;
    let d_label = match a.distance {
        DistanceName::D1 => "d1(0, u)",
        DistanceName::Quotient => "d1,G(G0, Gu)",
    };
    let f_label = match a.functional {
        FunctionalName::KEnergy => "K-energy",
        FunctionalName::J => "J",
    };
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let plot = Plot::new("properness fit", d_label, f_label)
        .with(Series::points("samples", samples.clone()))
        .with(Series::line(
            &format!("C d - D, C = {:.4}", report.c),
            vec![
                (lo, report.c * lo - report.d),
                (hi, report.c * hi - report.d),
            ],
        ));
    match &a.out {
        Some(dir) => {
            let out = OutDir::create(dir)?;
            out.write("properness.json", &json(&report)?)?;
            out.write("properness.svg", &plot.to_svg())?;
        }
        None => print!("{}", json(&report)?),
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct PrincipleOutput {
    hypotheses: HypothesisReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    existence: Option<ExistenceReport>,
}

fn principle_on<M: VariationalModel>(m: &M, a: &PrincipleArgs) -> Result<PrincipleOutput> {
    Ok(PrincipleOutput {
        hypotheses: check_hypotheses(m, a.seed, a.budget)?,
        existence: if a.existence {
            Some(existence_properness_test(m, a.seed, a.budget)?)
        } else {
            None
        },
    })
}

fn principle_cmd(a: PrincipleArgs) -> Result<i32> {
    let (kind, name) = a.model.split_once(':').ok_or_else(|| {
        anyhow!(
            "model must be toy:<name> or toric:<name>, got '{}'",
            a.model
        )
    })?;
    let out = match kind {
        "toy" => {
            let toy = Toy::parse(name).ok_or_else(|| {
                let names: Vec<&str> = Toy::ALL.iter().map(|t| t.name()).collect();
                anyhow!("unknown toy '{name}' (known: {})", names.join(", "))
            })?;
            principle_on(&toy, &a)?
        }
        "toric" => {
            let n = Polytope::named(name)?.n();
            let nodes = a.grid.unwrap_or(if n == 1 { 1025 } else { 33 });
            principle_on(&ToricVariational::new(name, nodes)?, &a)?
        }
        _ => bail!("model kind must be toy or toric, got '{kind}'"),
    };
    emit(a.out.as_deref(), &json(&out)?)?;
    Ok(0)
}

fn experiment_cmd(a: ExperimentArgs) -> Result<i32> {
    let cfg = ExperimentConfig {
        name: a.name,
        grid: a.grid,
        grid_1d: a.grid_1d,
        seed: a.seed,
        tol: a.tol.into_iter().collect::<BTreeMap<_, _>>(),
    };
    let outcome = run_experiment(&cfg)?;
    outcome.write(&a.out)?;
    for c in &outcome.summary.checks {
        let cmp = match c.comparison {
            crate::experiments::Comparison::AtMost => "<=",
            crate::experiments::Comparison::AtLeast => ">=",
        };
        eprintln!(
            "{} {} = {} {cmp} {}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            num(c.value),
            num(c.threshold)
        );
    }
    Ok(if outcome.summary.pass {
        0
    } else {
        EXIT_EXPERIMENT_FAILED
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tol_flags_are_rewritten() {
        let args = [
            "kfl",
            "experiment",
            "j-sandwich",
            "--tol.identity_residual",
            "1e-2",
            "--tol.sup_slack=0",
        ];
        let v = normalize_args(args.iter().map(|s| s.to_string()));
        assert_eq!(
            v,
            [
                "kfl",
                "experiment",
                "j-sandwich",
                "--tol",
                "identity_residual=1e-2",
                "--tol",
                "sup_slack=0"
            ]
        );
        let cli = Cli::try_parse_from(v).unwrap();
        let Command::Experiment(e) = cli.command else {
            panic!("not an experiment")
        };
        assert_eq!(
            e.tol,
            [
                ("identity_residual".to_string(), 1e-2),
                ("sup_slack".to_string(), 0.0)
            ]
        );
    }

    #[test]
    fn facets_parse() {
        let f = parse_facets("1,0:1; 0,1:1; -1,-1:1").unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f[2], Facet::new(&[-1, -1], 1.0));
        assert!(parse_facets("1,0").is_err());
        assert!(build_polytope(&parse_facets("1:0;-1:1").unwrap()).is_ok());
    }
}
