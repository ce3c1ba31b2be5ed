//! Property-test harness for the existence/properness principle: a model is
//! a metric space with a functional and a group action, and the seven
//! hypotheses are checked on seeded samples.

use std::fmt::Debug;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{self, Family};
use crate::functionals::{k_energy_batch, k_energy_with};
use crate::grid::{Domain, DomainRef};
use crate::logspace::XOptions;
use crate::metric::d1_l1;
use crate::potential::{geodesic, torus_act, AffineFunction, SymplecticPotential};
use crate::quotient::{d1_quotient_normalized, properness_fit, PropernessReport};

/// The data `(R, d, F, G)` with the capabilities the harness needs.
pub trait VariationalModel: Sync {
    type Point: Clone + Debug + Send + Sync;
    type Group: Clone + Debug + Send + Sync;

    fn name(&self) -> String;
    fn sample(&self, seed: u64) -> Result<Self::Point>;
    fn distance(&self, p: &Self::Point, q: &Self::Point) -> Result<f64>;
    fn geodesic(&self, p: &Self::Point, q: &Self::Point, t: f64) -> Result<Self::Point>;
    fn act(&self, g: &Self::Group, p: &Self::Point) -> Result<Self::Point>;
    fn group_sample(&self, seed: u64) -> Self::Group;
    fn compose(&self, g: &Self::Group, h: &Self::Group) -> Self::Group;
    fn functional(&self, p: &Self::Point) -> Result<f64>;
    fn basepoint(&self) -> Self::Point;

    /// `F` along a geodesic; override to share work across the samples.
    fn functional_along(&self, p: &Self::Point, q: &Self::Point, ts: &[f64]) -> Result<Vec<f64>> {
        ts.iter()
            .map(|&t| self.functional(&self.geodesic(p, q, t)?))
            .collect()
    }

    /// `d_G(Gp, Gq)` with a group element `g` attaining `d(p, g.q)`.
    fn quotient_distance(
        &self,
        _p: &Self::Point,
        _q: &Self::Point,
    ) -> Option<Result<(f64, Self::Group)>> {
        None
    }

    /// Numerical tolerances matching the accuracy of the model's evaluators.
    fn tolerances(&self) -> Tolerances {
        Tolerances::default()
    }

    /// Known minimizers of `F`, when the model exposes them.
    fn minimizers(&self) -> Option<Vec<Self::Point>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Seeds reproducing the failing draw.
    pub seeds: Vec<u64>,
    pub detail: String,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub property: String,
    pub status: Status,
    /// Sampled evidence only: a pass holds on these many draws.
    pub samples: usize,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub model: String,
    pub seed: u64,
    pub budget: usize,
    pub properties: Vec<PropertyResult>,
}

impl HypothesisReport {
    pub fn status(&self, p: usize) -> Status {
        self.properties[p - 1].status
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative floor for discrete second differences of `F`.
    pub convexity: f64,
    pub isometry: f64,
    pub attainment: f64,
    pub cocycle: f64,
    pub transitivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            convexity: 1e-4,
            isometry: 1e-8,
            attainment: 1e-6,
            cocycle: 1e-6,
            transitivity: 1e-6,
        }
    }
}

/// Points per geodesic in the convexity check.
pub const CONVEXITY_POINTS: usize = 11;
pub const MIN_BUDGET: usize = 100;

fn stream(seed: u64, property: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(property);
    rng
}

struct Tally {
    samples: usize,
    worst: Option<Witness>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            samples: 0,
            worst: None,
        }
    }

    /// Records one draw whose violation is `excess` (> 0 means failure).
    fn record(&mut self, excess: f64, seeds: Vec<u64>, detail: impl FnOnce() -> String) {
        self.samples += 1;
        if excess > 0.0 && self.worst.as_ref().is_none_or(|w| excess > w.excess) {
            self.worst = Some(Witness {
                seeds,
                detail: detail(),
                excess,
            });
        }
    }

    fn finish(self, property: &str, tolerance: f64, note: &str) -> PropertyResult {
        PropertyResult {
            property: property.into(),
            status: if self.worst.is_some() {
                Status::Fail
            } else {
                Status::Pass
            },
            samples: self.samples,
            tolerance,
            witness: self.worst,
            note: note.into(),
        }
    }
}

fn skipped(property: &str, note: &str) -> PropertyResult {
    PropertyResult {
        property: property.into(),
        status: Status::Skipped,
        samples: 0,
        tolerance: 0.0,
        witness: None,
        note: note.into(),
    }
}

/// Checks P1–P7 on `budget` seeded draws. P2 and P3 are always skipped.
pub fn check_hypotheses<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
) -> Result<HypothesisReport> {
    check_hypotheses_with(model, seed, budget, &model.tolerances())
}

pub fn check_hypotheses_with<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
    tol: &Tolerances,
) -> Result<HypothesisReport> {
    if budget < MIN_BUDGET {
        return Err(Error::InvalidInput(format!(
            "budget {budget} < {MIN_BUDGET}"
        )));
    }
    let (p1, (p4, (p5, (p6, p7)))) = rayon::join(
        || check_p1(model, seed, budget, tol),
        || {
            rayon::join(
                || check_p4(model, seed, budget, tol),
                || {
                    rayon::join(
                        || check_p5(model, seed, budget, tol),
                        || {
                            rayon::join(
                                || check_p6(model, seed, budget, tol),
                                || check_p7(model, seed, budget, tol),
                            )
                        },
                    )
                },
            )
        },
    );
    Ok(HypothesisReport {
        model: model.name(),
        seed,
        budget,
        properties: vec![
            p1?,
            skipped(
                "P2",
                "compactness of minimizing sequences has no finite surrogate",
            ),
            skipped("P3", "regularity of minimizers is assumed, not computed"),
            p4?,
            p5?,
            p6?,
            p7?,
        ],
    })
}

/// Pairs drawn per geodesic-based check; each costs `CONVEXITY_POINTS`
/// functional evaluations.
fn pair_count(budget: usize) -> usize {
    (budget / 10).max(1)
}

fn check_p1<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
    tol: &Tolerances,
) -> Result<PropertyResult> {
    let mut rng = stream(seed, 1);
    let mut tally = Tally::new();
    let ts: Vec<f64> = (0..CONVEXITY_POINTS)
        .map(|k| k as f64 / (CONVEXITY_POINTS - 1) as f64)
        .collect();
    for _ in 0..pair_count(budget) {
        let (s0, s1) = (rng.next_u64(), rng.next_u64());
        let (p, q) = (model.sample(s0)?, model.sample(s1)?);
        let f = model.functional_along(&p, &q, &ts)?;
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let worst = f
            .windows(3)
            .map(|w| w[0] - 2.0 * w[1] + w[2])
            .fold(f64::INFINITY, f64::min);
        tally.record(-worst - tol.convexity * scale, vec![s0, s1], || {
            format!("second difference {worst:e} along the geodesic (scale {scale:e})")
        });
    }
    Ok(tally.finish("P1", tol.convexity, "convexity of F along model geodesics"))
}

fn check_p4<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
    tol: &Tolerances,
) -> Result<PropertyResult> {
    let mut rng = stream(seed, 4);
    let mut tally = Tally::new();
    for _ in 0..budget {
        let s = [
            rng.next_u64(),
            rng.next_u64(),
            rng.next_u64(),
            rng.next_u64(),
        ];
        let (p, q) = (model.sample(s[0])?, model.sample(s[1])?);
        let (g, h) = (model.group_sample(s[2]), model.group_sample(s[3]));
        let d = model.distance(&p, &q)?;
        let dg = model.distance(&model.act(&g, &p)?, &model.act(&g, &q)?)?;
        let scale = 1.0 + d;
        tally.record((dg - d).abs() - tol.isometry * scale, s.to_vec(), || {
            format!("d(p,q) = {d:e} but d(g.p,g.q) = {dg:e}")
        });
        // the action must be a group action for the isometry statement to mean anything
        let two = model.act(&g, &model.act(&h, &p)?)?;
        let one = model.act(&model.compose(&g, &h), &p)?;
        let gap = model.distance(&one, &two)?;
        tally.record(gap - tol.isometry * scale, s.to_vec(), || {
            format!("action not associative: gap {gap:e}")
        });
    }
    Ok(tally.finish(
        "P4",
        tol.isometry,
        "G acts by isometries (and as a group action)",
    ))
}

fn check_p5<M: VariationalModel>(
    model: &M,
    _seed: u64,
    _budget: usize,
    tol: &Tolerances,
) -> Result<PropertyResult> {
    let Some(mins) = model.minimizers() else {
        return Ok(skipped("P5", "model exposes no minimizers"));
    };
    let mut tally = Tally::new();
    for (i, a) in mins.iter().enumerate() {
        for (j, b) in mins.iter().enumerate().skip(i + 1) {
            let Some(q) = model.quotient_distance(a, b) else {
                return Ok(skipped("P5", "model exposes no quotient distance"));
            };
            let (dq, _) = q?;
            tally.record(dq - tol.transitivity, vec![i as u64, j as u64], || {
                format!("minimizers {i} and {j} lie on different orbits (d_G = {dq:e})")
            });
        }
    }
    Ok(tally.finish(
        "P5",
        tol.transitivity,
        "G acts transitively on the exposed minimizers",
    ))
}

fn check_p6<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
    tol: &Tolerances,
) -> Result<PropertyResult> {
    let mut rng = stream(seed, 6);
    let mut tally = Tally::new();
    for _ in 0..pair_count(budget) {
        let s = [rng.next_u64(), rng.next_u64()];
        let (p, q) = (model.sample(s[0])?, model.sample(s[1])?);
        let Some(r) = model.quotient_distance(&p, &q) else {
            return Ok(skipped("P6", "model exposes no quotient distance"));
        };
        let (dq, g) = r?;
        let attained = model.distance(&p, &model.act(&g, &q)?)?;
        let d = model.distance(&p, &q)?;
        let scale = 1.0 + d;
        tally.record(
            (attained - dq).abs() - tol.attainment * scale,
            s.to_vec(),
            || format!("d_G = {dq:e} but d(p, g.q) = {attained:e}"),
        );
        tally.record(dq - d - tol.attainment * scale, s.to_vec(), || {
            format!("d_G = {dq:e} exceeds d = {d:e}")
        });
    }
    Ok(tally.finish("P6", tol.attainment, "the quotient distance is attained"))
}

fn check_p7<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
    tol: &Tolerances,
) -> Result<PropertyResult> {
    let mut rng = stream(seed, 7);
    let mut tally = Tally::new();
    for _ in 0..pair_count(budget) {
        let s = [rng.next_u64(), rng.next_u64(), rng.next_u64()];
        let (p, q) = (model.sample(s[0])?, model.sample(s[1])?);
        let g = model.group_sample(s[2]);
        let (fp, fq) = (model.functional(&p)?, model.functional(&q)?);
        let (gp, gq) = (
            model.functional(&model.act(&g, &p)?)?,
            model.functional(&model.act(&g, &q)?)?,
        );
        let scale = 1.0 + fp.abs().max(fq.abs());
        let gap = ((gq - gp) - (fq - fp)).abs();
        tally.record(gap - tol.cocycle * scale, s.to_vec(), || {
            format!(
                "F(q) - F(p) = {:e} but F(g.q) - F(g.p) = {:e}",
                fq - fp,
                gq - gp
            )
        });
    }
    Ok(tally.finish(
        "P7",
        tol.cocycle,
        "the cocycle F(p, q) = F(q) - F(p) is G-invariant",
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Proper,
    NotProper,
    NotGInvariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub model: String,
    pub verdict: Verdict,
    /// Largest `|F(g.p) - F(p)|` seen on sampled points and group elements.
    pub invariance_defect: f64,
    pub invariance_witness: Option<Witness>,
    pub properness: Option<PropernessReport>,
    /// Whether the model declares minimizers; `None` when it does not say.
    pub minimizers_declared: Option<bool>,
    /// Declared minimizers should come with a proper verdict and vice versa.
    pub consistent: Option<bool>,
}

/// Runs the G-invariance check, then fits `F ≥ C d_G(G0, Gu) - D` on sampled
/// points and compares the verdict with the model's declared minimizers.
pub fn existence_properness_test<M: VariationalModel>(
    model: &M,
    seed: u64,
    budget: usize,
) -> Result<ExistenceReport> {
    if budget < MIN_BUDGET {
        return Err(Error::InvalidInput(format!(
            "budget {budget} < {MIN_BUDGET}"
        )));
    }
    let mut rng = stream(seed, 8);
    let base = model.basepoint();
    let f0 = model.functional(&base)?;
    let mut defect: f64 = 0.0;
    let mut witness = None;
    for _ in 0..pair_count(budget) {
        let s = [rng.next_u64(), rng.next_u64()];
        let p = model.sample(s[0])?;
        let g = model.group_sample(s[1]);
        let fp = model.functional(&p)?;
        let e = (model.functional(&model.act(&g, &p)?)? - fp).abs();
        let tol = model.tolerances().cocycle * (1.0 + fp.abs().max(f0.abs()));
        if e > tol && e > defect {
            witness = Some(Witness {
                seeds: s.to_vec(),
                detail: format!("|F(g.p) - F(p)| = {e:e}"),
                excess: e - tol,
            });
        }
        defect = defect.max(e);
    }
    let declared = model.minimizers().map(|m| !m.is_empty());
    if witness.is_some() {
        return Ok(ExistenceReport {
            model: model.name(),
            verdict: Verdict::NotGInvariant,
            invariance_defect: defect,
            invariance_witness: witness,
            properness: None,
            minimizers_declared: declared,
            consistent: declared.map(|d| !d),
        });
    }
    let mut samples = Vec::with_capacity(budget);
    for _ in 0..budget {
        let s = rng.next_u64();
        let p = model.sample(s)?;
        let d = match model.quotient_distance(&base, &p) {
            Some(r) => r?.0,
            None => return Err(Error::MissingCapability("quotient_distance".into())),
        };
        samples.push((d, model.functional(&p)? - f0));
    }
    let fit = properness_fit(&samples, &model.name())?;
    let verdict = if fit.proper {
        Verdict::Proper
    } else {
        Verdict::NotProper
    };
    Ok(ExistenceReport {
        model: model.name(),
        verdict,
        invariance_defect: defect,
        invariance_witness: None,
        consistent: declared.map(|d| d == fit.proper),
        properness: Some(fit),
        minimizers_declared: declared,
    })
}

/// Along the geodesic from `u` to `v`, quotient distances between the points
/// at `a, b ∈ {0, ¼, ½, ¾, 1}` equal `|b - a| d(u, v)`; requires
/// `d_G(u, v) = d(u, v)` within `tol`.
pub fn geodesic_descent_check<M: VariationalModel>(
    model: &M,
    u: &M::Point,
    v: &M::Point,
    tol: f64,
) -> Result<bool> {
    let quotient = |p: &M::Point, q: &M::Point| -> Result<f64> {
        match model.quotient_distance(p, q) {
            Some(r) => Ok(r?.0),
            None => Err(Error::MissingCapability("quotient_distance".into())),
        }
    };
    let d = model.distance(u, v)?;
    let dq = quotient(u, v)?;
    if (d - dq).abs() > tol * (1.0 + d) {
        return Err(Error::PreconditionNotMet(format!(
            "d_G = {dq:e} differs from d = {d:e}"
        )));
    }
    let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
    let pts = ts
        .iter()
        .map(|&t| model.geodesic(u, v, t))
        .collect::<Result<Vec<_>>>()?;
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            let q = quotient(&pts[i], &pts[j])?;
            if (q - (ts[j] - ts[i]) * d).abs() > tol * (1.0 + d) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Toy models on `R²` with `G = R` translating the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toy {
    /// Euclidean metric, `F = x₂²`; every property holds.
    Euclidean,
    /// Metric pulled back by `(x₁, x₂) ↦ (e^{x₁}, x₂)`; translations are not isometries.
    ScaledMetric,
    /// `F = max(|x₂| - 1, 0)²`, minimized on a strip of many orbits.
    Plateau,
    /// `F = x₂² + x₁²/10`; translations change the cocycle.
    Tilted,
}

impl Toy {
    pub const ALL: [Toy; 4] = [Toy::Euclidean, Toy::ScaledMetric, Toy::Plateau, Toy::Tilted];

    pub fn name(&self) -> &'static str {
        match self {
            Toy::Euclidean => "euclidean",
            Toy::ScaledMetric => "scaled-metric",
            Toy::Plateau => "plateau",
            Toy::Tilted => "tilted",
        }
    }

    pub fn parse(s: &str) -> Option<Toy> {
        Toy::ALL.into_iter().find(|t| t.name() == s)
    }

    fn chart(&self, p: &[f64; 2]) -> [f64; 2] {
        match self {
            Toy::ScaledMetric => [p[0].exp(), p[1]],
            _ => *p,
        }
    }
}

fn uniform(seed: u64, lo: f64, hi: f64) -> [f64; 2] {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

impl VariationalModel for Toy {
    type Point = [f64; 2];
    type Group = f64;

    fn name(&self) -> String {
        format!("toy:{}", Toy::name(self))
    }

    fn sample(&self, seed: u64) -> Result<[f64; 2]> {
        Ok(uniform(seed, -3.0, 3.0))
    }

    fn distance(&self, p: &[f64; 2], q: &[f64; 2]) -> Result<f64> {
        let (a, b) = (self.chart(p), self.chart(q));
        Ok((a[0] - b[0]).hypot(a[1] - b[1]))
    }

    fn geodesic(&self, p: &[f64; 2], q: &[f64; 2], t: f64) -> Result<[f64; 2]> {
        let (a, b) = (self.chart(p), self.chart(q));
        let m = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
        Ok(match self {
            Toy::ScaledMetric => [m[0].ln(), m[1]],
            _ => m,
        })
    }

    fn act(&self, g: &f64, p: &[f64; 2]) -> Result<[f64; 2]> {
        Ok([p[0] + g, p[1]])
    }

    fn group_sample(&self, seed: u64) -> f64 {
        uniform(seed, -2.0, 2.0)[0]
    }

    fn compose(&self, g: &f64, h: &f64) -> f64 {
        g + h
    }

    fn functional(&self, p: &[f64; 2]) -> Result<f64> {
        Ok(match self {
            Toy::Euclidean | Toy::ScaledMetric => p[1] * p[1],
            Toy::Plateau => (p[1].abs() - 1.0).max(0.0).powi(2),
            Toy::Tilted => p[1] * p[1] + 0.1 * p[0] * p[0],
        })
    }

    fn basepoint(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn quotient_distance(&self, p: &[f64; 2], q: &[f64; 2]) -> Option<Result<(f64, f64)>> {
        match self {
            // in the scaled chart |e^{p₁} - e^{q₁ + g}| still vanishes at g = p₁ - q₁
            _ => Some(Ok(((p[1] - q[1]).abs(), p[0] - q[0]))),
        }
    }

    fn minimizers(&self) -> Option<Vec<[f64; 2]>> {
        match self {
            Toy::Plateau => Some(vec![[0.0, -1.0], [2.0, 0.5], [-1.0, 1.0]]),
            Toy::Tilted => Some(vec![[0.0, 0.0]]),
            _ => Some(vec![[0.0, 0.0], [1.5, 0.0], [-2.0, 0.0]]),
        }
    }
}

/// Which functional the toric model exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToricFunctional {
    KEnergy,
}

/// Normalized potentials on a toric model: `d = d₁`, linear geodesics,
/// the torus acting by affine functions, `F` the K-energy.
#[derive(Debug, Clone)]
pub struct ToricVariational {
    pub label: String,
    pub domain: DomainRef,
    pub x: XOptions,
    pub family: Family,
    pub functional: ToricFunctional,
    /// Exposed minimizers: the torus orbit of the reference when the model
    /// carries a Kähler–Einstein metric (zero Futaki invariant).
    pub kahler_einstein: bool,
}

impl ToricVariational {
    pub fn new(model: &str, nodes: usize) -> Result<Self> {
        let domain = Domain::named(model, nodes)?;
        let b = domain.polytope().barycenter();
        Ok(ToricVariational {
            label: model.to_string(),
            x: XOptions::coarse(domain.n()),
            family: Family::Bumps,
            functional: ToricFunctional::KEnergy,
            kahler_einstein: domain.model().is_fano() && b[0].abs() < 1e-12 && b[1].abs() < 1e-12,
            domain,
        })
    }
}

impl VariationalModel for ToricVariational {
    type Point = SymplecticPotential;
    type Group = AffineFunction;

    fn name(&self) -> String {
        format!("toric:{}", self.label)
    }

    fn sample(&self, seed: u64) -> Result<SymplecticPotential> {
        families::potential(&self.domain, self.family, seed, true)
    }

    fn distance(&self, p: &SymplecticPotential, q: &SymplecticPotential) -> Result<f64> {
        d1_l1(p, q)
    }

    fn geodesic(
        &self,
        p: &SymplecticPotential,
        q: &SymplecticPotential,
        t: f64,
    ) -> Result<SymplecticPotential> {
        geodesic(p, q, t)
    }

    fn act(&self, g: &AffineFunction, p: &SymplecticPotential) -> Result<SymplecticPotential> {
        Ok(torus_act(p, g))
    }

    fn group_sample(&self, seed: u64) -> AffineFunction {
        let b = uniform(seed, -1.5, 1.5);
        AffineFunction::linear(if self.domain.n() == 1 { [b[0], 0.0] } else { b })
    }

    fn compose(&self, g: &AffineFunction, h: &AffineFunction) -> AffineFunction {
        g.compose(h)
    }

    fn functional(&self, p: &SymplecticPotential) -> Result<f64> {
        match self.functional {
            ToricFunctional::KEnergy => k_energy_with(p, self.x),
        }
    }

    fn functional_along(
        &self,
        p: &SymplecticPotential,
        q: &SymplecticPotential,
        ts: &[f64],
    ) -> Result<Vec<f64>> {
        let pts = ts
            .iter()
            .map(|&t| geodesic(p, q, t))
            .collect::<Result<Vec<_>>>()?;
        k_energy_batch(&pts.iter().collect::<Vec<_>>(), self.x)
    }

    fn tolerances(&self) -> Tolerances {
        // the coarse 2D lattice carries about five digits of the K-energy
        let cocycle = if self.domain.n() == 1 { 1e-6 } else { 5e-4 };
        Tolerances {
            cocycle,
            ..Tolerances::default()
        }
    }

    fn basepoint(&self) -> SymplecticPotential {
        SymplecticPotential::reference(&self.domain)
    }

    fn quotient_distance(
        &self,
        p: &SymplecticPotential,
        q: &SymplecticPotential,
    ) -> Option<Result<(f64, AffineFunction)>> {
        Some(d1_quotient_normalized(p, q).map(|r| (r.value, r.minimizer)))
    }

    fn minimizers(&self) -> Option<Vec<SymplecticPotential>> {
        if !self.kahler_einstein {
            return Some(Vec::new());
        }
        let base = self.basepoint();
        let n = self.domain.n();
        let moves = [[0.7, -0.4], [-1.1, 0.3]];
        let mut out = vec![base.clone()];
        for b in moves {
            out.push(torus_act(
                &base,
                &AffineFunction::linear(if n == 1 { [b[0], 0.0] } else { b }),
            ));
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_toy_passes() {
        let r = check_hypotheses(&Toy::Euclidean, 7, 200).unwrap();
        for p in [1, 4, 5, 6, 7] {
            assert_eq!(r.status(p), Status::Pass, "{:?}", r.properties[p - 1]);
        }
        assert_eq!(r.status(2), Status::Skipped);
        assert_eq!(r.status(3), Status::Skipped);
        let again = check_hypotheses(&Toy::Euclidean, 7, 200).unwrap();
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn broken_toys_are_detected() {
        for (toy, p) in [(Toy::ScaledMetric, 4), (Toy::Plateau, 5), (Toy::Tilted, 7)] {
            let r = check_hypotheses(&toy, 1, 100).unwrap();
            assert_eq!(r.status(p), Status::Fail, "{toy:?}");
            let w = r.properties[p - 1].witness.as_ref().unwrap();
            assert!(!w.seeds.is_empty() && w.excess > 0.0);
            // a larger budget never clears the failure
            assert_eq!(
                check_hypotheses(&toy, 1, 400).unwrap().status(p),
                Status::Fail
            );
        }
        assert_eq!(
            check_hypotheses(&Toy::ScaledMetric, 1, 100)
                .unwrap()
                .status(7),
            Status::Pass
        );
        assert_eq!(
            check_hypotheses(&Toy::Plateau, 1, 100).unwrap().status(1),
            Status::Pass
        );
        assert_eq!(
            check_hypotheses(&Toy::Tilted, 1, 100).unwrap().status(1),
            Status::Pass
        );
        assert!(matches!(
            check_hypotheses(&Toy::Euclidean, 1, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn euclidean_toy_is_proper() {
        let r = existence_properness_test(&Toy::Euclidean, 3, 200).unwrap();
        assert_eq!(r.verdict, Verdict::Proper);
        assert_eq!(r.consistent, Some(true));
        let fit = r.properness.unwrap();
        assert!(fit.c > 0.0 && fit.min_margin >= 0.0);
        assert_eq!(
            existence_properness_test(&Toy::Tilted, 3, 200)
                .unwrap()
                .verdict,
            Verdict::NotGInvariant
        );
    }

    #[test]
    fn descent_along_the_axis() {
        assert!(geodesic_descent_check(&Toy::Euclidean, &[0.0, -1.0], &[0.0, 2.0], 1e-9).unwrap());
        assert!(matches!(
            geodesic_descent_check(&Toy::Euclidean, &[0.0, 1.0], &[3.0, 1.0], 1e-9),
            Err(Error::PreconditionNotMet(_))
        ));
    }

    #[test]
    fn toric_p1_descent() {
        let m = ToricVariational::new("p1", 1025).unwrap();
        let u = m.basepoint();
        let v = SymplecticPotential::from_fn(&m.domain, |y| y[0] * y[0])
            .unwrap()
            .normalized();
        assert!(geodesic_descent_check(&m, &u, &v, 1e-3).unwrap());
    }
}
