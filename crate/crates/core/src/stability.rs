//! Empirical behaviour of the solution map `p -> Sol(K, P + p)`: sweeps,
//! semicontinuity and boundedness probes, Hölder fits and genericity runs.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, CopositivityBudget, CopositivityStatus, R0Status};
use crate::error::{Error, Result};
use crate::kkt::{self, derive_seed, SolutionSet, SolveConfig, SolveStatus, VIProblem};
use crate::linalg::{dist, norm};
use crate::polyhedra::{Licq, PolyhedralSet};
use crate::polymap::PolynomialMap;

/// Traces farther than this from the origin count as unbounded.
pub const UNBOUNDED_NORM: f64 = 100.0;

const TRACE_STEP: f64 = 1.0;
const TRACE_STEPS: usize = 200;

/// Outcome of following every component of a solution set.
#[derive(Debug, Clone, PartialEq)]
pub struct Traced {
    pub samples: Vec<Vec<f64>>,
    pub escaped: bool,
}

/// Points and densified component samples of `sol`; `escaped` when some
/// component leaves the ball of radius `max_norm`.
pub fn densify(
    prob: &VIProblem,
    sol: &SolutionSet,
    step: f64,
    max_norm: f64,
    max_steps: usize,
    cfg: &SolveConfig,
) -> Result<Traced> {
    let mut samples: Vec<Vec<f64>> = sol.points.iter().map(|p| p.x.clone()).collect();
    let mut escaped = false;
    for c in &sol.components {
        let (s, e) = kkt::trace_component(prob, c, step, max_norm, max_steps, cfg)?;
        escaped |= e;
        samples.extend(s);
        samples.extend(c.samples.iter().cloned());
    }
    Ok(Traced { samples, escaped })
}

fn boundedness(prob: &VIProblem, sol: &SolutionSet, cfg: &SolveConfig) -> Option<bool> {
    if sol.components.is_empty() {
        return Some(true);
    }
    densify(prob, sol, TRACE_STEP, UNBOUNDED_NORM, TRACE_STEPS, cfg)
        .ok()
        .map(|t| !t.escaped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub p: Vec<f64>,
    pub cardinality: usize,
    pub nonisolated: bool,
    /// `None` when a component could not be traced.
    pub bounded: Option<bool>,
    pub status: Option<SolveStatus>,
    pub points: Vec<Vec<f64>>,
    pub label: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

fn region_label(sol: &SolutionSet, bounded: Option<bool>) -> String {
    if sol.nonisolated() {
        let b = match bounded {
            Some(true) => "bounded",
            Some(false) => "unbounded",
            None => "unknown",
        };
        return format!("nonisolated+{}:{}", sol.points.len(), b);
    }
    match sol.points.len() {
        0 => "empty".into(),
        1 => "unique".into(),
        k => format!("finite:{k}"),
    }
}

/// Solves `VI(K, P + p)` for every `p` of the grid. Cell failures are
/// recorded in the cell and never abort the sweep.
pub fn solution_map_sweep(k: &PolyhedralSet, p: &PolynomialMap, grid: &[Vec<f64>], cfg: &SolveConfig) -> SweepResult {
    let cells = grid
        .par_iter()
        .map(|q| {
            let run = || -> Result<(SolutionSet, Option<bool>)> {
                let prob = VIProblem::new(k.clone(), p.clone(), q.clone())?;
                let sol = kkt::solve(&prob, cfg)?;
                let b = boundedness(&prob, &sol, cfg);
                Ok((sol, b))
            };
            match run() {
                Ok((sol, bounded)) => SweepCell {
                    p: q.clone(),
                    cardinality: sol.points.len(),
                    nonisolated: sol.nonisolated(),
                    bounded,
                    status: Some(sol.status),
                    points: sol.all_points(),
                    label: region_label(&sol, bounded),
                    error: None,
                },
                Err(e) => SweepCell {
                    p: q.clone(),
                    cardinality: 0,
                    nonisolated: false,
                    bounded: None,
                    status: None,
                    points: Vec::new(),
                    label: "error".into(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    SweepResult { seed: cfg.seed, cells }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic unit directions in `R^n`: equally spaced angles with a
/// seeded offset for `n = 2`, shifted Halton points otherwise.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD1));
    use rand::Rng;
    if n == 1 {
        return (0..count).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
    }
    if n == 2 {
        let offset: f64 = rng.random_range(0.0..1.0);
        return (0..count)
            .map(|i| {
                let t = std::f64::consts::TAU * (i as f64 + offset) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
    }
    let shift: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let v: Vec<f64> = (0..n)
            .map(|j| 2.0 * ((radical_inverse(i, PRIMES[j % PRIMES.len()]) + shift[j]) % 1.0) - 1.0)
            .collect();
        i += 1;
        let s = norm(&v);
        if s > 1e-3 {
            out.push(v.into_iter().map(|x| x / s).collect());
        }
    }
    out
}

/// `sup_{a in A} inf_{b in B} |a - b|`; zero for empty `A`, infinite for empty `B`.
pub fn excess_points(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

pub fn hausdorff_points(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    excess_points(a, b).max(excess_points(b, a))
}

/// Excess of `sq` over `sp`; undefined when either set has components.
pub fn hausdorff_excess(sq: &SolutionSet, sp: &SolutionSet) -> Result<f64> {
    if sq.nonisolated() || sp.nonisolated() {
        return Err(Error::Undefined("excess of a set with nonisolated components".into()));
    }
    let a: Vec<Vec<f64>> = sq.points.iter().map(|p| p.x.clone()).collect();
    let b: Vec<Vec<f64>> = sp.points.iter().map(|p| p.x.clone()).collect();
    Ok(excess_points(&a, &b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum UscOutcome {
    NoViolation { checked: usize, excluded: usize },
    Violation { q: Vec<f64>, point: Vec<f64>, distance: f64 },
    AnchorUnbounded,
    AnchorNotComplete,
}

/// Looks for solutions of nearby problems outside the `eps`-neighbourhood of
/// the anchor solution set.
pub fn usc_probe(
    prob: &VIProblem,
    eps: f64,
    radii: &[f64],
    directions: usize,
    cfg: &SolveConfig,
) -> Result<UscOutcome> {
    let anchor = kkt::solve(prob, cfg)?;
    if !anchor.is_complete() {
        return Ok(UscOutcome::AnchorNotComplete);
    }
    if boundedness(prob, &anchor, cfg) != Some(true) {
        return Ok(UscOutcome::AnchorUnbounded);
    }
    let step = (eps / 4.0).min(TRACE_STEP);
    let traced = densify(prob, &anchor, step, UNBOUNDED_NORM, (2.0 * UNBOUNDED_NORM / step).ceil() as usize, cfg)?;
    let dirs = sphere_directions(prob.dim(), directions, cfg.seed);
    let mut checked = 0;
    let mut excluded = 0;
    for &r in radii {
        for u in &dirs {
            let q: Vec<f64> = prob.perturbation().iter().zip(u).map(|(a, b)| a + r * b).collect();
            let near = prob.with_perturbation(q.clone())?;
            let sol = kkt::solve(&near, cfg)?;
            if !sol.is_complete() {
                excluded += 1;
                continue;
            }
            checked += 1;
            let pts = densify(&near, &sol, TRACE_STEP, UNBOUNDED_NORM, TRACE_STEPS, cfg)?;
            for x in &pts.samples {
                let d = excess_points(std::slice::from_ref(x), &traced.samples);
                if d > eps {
                    return Ok(UscOutcome::Violation {
                        q,
                        point: x.clone(),
                        distance: d,
                    });
                }
            }
        }
    }
    Ok(UscOutcome::NoViolation { checked, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessLevel {
    pub eps: f64,
    /// Largest solution norm over all perturbations (infinite when a
    /// component escaped).
    pub sup_norm: f64,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub levels: Vec<BoundednessLevel>,
    pub perturbations: usize,
    /// Sup norms do not grow as `eps` shrinks.
    pub monotone_nonincreasing: bool,
    pub unbounded: bool,
}

/// How perturbations `Q` of the coefficient matrix are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationMode {
    /// `Q` uniform in direction on the Frobenius sphere of radius `0.99 eps`.
    Random,
    /// Only the constant column moves, along the given direction.
    Directed { direction: Vec<f64> },
}

/// Perturbs `P` by `Q` with `|Q|_F < eps` and reports solution norms.
pub fn local_boundedness_probe(
    prob: &VIProblem,
    eps_list: &[f64],
    perturbations: usize,
    mode: &PerturbationMode,
    cfg: &SolveConfig,
) -> Result<BoundednessReport> {
    let base = prob.map();
    let (rows, cols) = base.coeffs().shape();
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    let mut levels = Vec::new();
    for (li, &eps) in eps_sorted.iter().enumerate() {
        let trials: Vec<Result<(f64, bool)>> = (0..perturbations)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, ((li as u64) << 32) | t as u64));
                let q = match mode {
                    PerturbationMode::Random => {
                        let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
                        let s: f64 = g.norm();
                        g * (0.99 * eps / s)
                    }
                    PerturbationMode::Directed { direction } => {
                        let s = norm(direction);
                        let mut g = DMatrix::zeros(rows, cols);
                        let scale = 0.99 * eps * (t as f64 + 1.0) / perturbations as f64;
                        for (i, v) in direction.iter().enumerate() {
                            g[(i, 0)] = v / s * scale;
                        }
                        g
                    }
                };
                let pert = PolynomialMap::from_matrix(base.n(), base.basis().d(), base.coeffs() + q)?;
                let near = VIProblem::new(prob.set().clone(), pert, prob.perturbation().to_vec())?;
                let sol = kkt::solve(&near, cfg)?;
                let traced = densify(&near, &sol, TRACE_STEP, UNBOUNDED_NORM, TRACE_STEPS, cfg)?;
                let sup = if traced.escaped {
                    f64::INFINITY
                } else {
                    traced.samples.iter().map(|x| norm(x)).fold(0.0, f64::max)
                };
                Ok((sup, sol.is_complete()))
            })
            .collect();
        let mut sup: f64 = 0.0;
        let mut inconclusive = 0;
        for t in trials {
            let (s, complete) = t?;
            sup = sup.max(s);
            if !complete {
                inconclusive += 1;
            }
        }
        levels.push(BoundednessLevel {
            eps,
            sup_norm: sup,
            inconclusive,
        });
    }
    let monotone_nonincreasing = levels.windows(2).all(|w| w[1].sup_norm <= w[0].sup_norm * (1.0 + 1e-9));
    let unbounded = levels.iter().any(|l| l.sup_norm.is_infinite()) || !monotone_nonincreasing;
    Ok(BoundednessReport {
        levels,
        perturbations,
        monotone_nonincreasing,
        unbounded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoelderFit {
    pub anchor: Vec<f64>,
    pub radii: Vec<f64>,
    /// Excess per sampled `q`, grouped by radius.
    pub excesses: Vec<Vec<f64>>,
    /// Largest excess per radius (`None` when no sample was usable).
    pub max_excess: Vec<Option<f64>>,
    pub log_l: Option<f64>,
    pub l: Option<f64>,
    pub c: Option<f64>,
    /// RMS residual of the log-log fit.
    pub fit_residual: Option<f64>,
    pub dropped_zero: usize,
    pub skipped_incomplete: usize,
}

impl HoelderFit {
    /// Fewer than two positive excesses: no exponent can be fitted.
    pub fn is_degenerate(&self) -> bool {
        self.c.is_none()
    }
}

/// Least-squares fit of `log y = a + c log x`; returns `(a, c, rms)`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c = sxy / sxx;
    let a = my - c * mx;
    let rms = (lx.iter().zip(&ly).map(|(u, v)| (v - a - c * u).powi(2)).sum::<f64>() / m).sqrt();
    Some((a, c, rms))
}

/// Fits `e(Sol(q), Sol(p)) <= L |q - p|^c` from sampled spheres around `p`.
pub fn hoelder_fit(prob: &VIProblem, radii: &[f64], samples_per_radius: usize, cfg: &SolveConfig) -> Result<HoelderFit> {
    let anchor = kkt::solve(prob, cfg)?;
    if !anchor.is_complete() || anchor.nonisolated() || anchor.points.is_empty() {
        return Err(Error::Premise(
            "anchor solution set must be nonempty, finite and complete".into(),
        ));
    }
    let dirs = sphere_directions(prob.dim(), samples_per_radius, cfg.seed);
    let mut excesses = Vec::new();
    let mut max_excess = Vec::new();
    let mut skipped = 0;
    for &r in radii {
        let row: Vec<Result<Option<f64>>> = dirs
            .par_iter()
            .map(|u| {
                let q: Vec<f64> = prob.perturbation().iter().zip(u).map(|(a, b)| a + r * b).collect();
                let sol = kkt::solve(&prob.with_perturbation(q)?, cfg)?;
                if !sol.is_complete() || sol.nonisolated() {
                    return Ok(None);
                }
                hausdorff_excess(&sol, &anchor).map(Some)
            })
            .collect();
        let mut vals = Vec::new();
        for v in row {
            match v? {
                Some(e) => vals.push(e),
                None => skipped += 1,
            }
        }
        max_excess.push(vals.iter().copied().reduce(f64::max));
        excesses.push(vals);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for (&r, m) in radii.iter().zip(&max_excess) {
        match m {
            Some(e) if *e > 0.0 && e.is_finite() => {
                xs.push(r);
                ys.push(*e);
            }
            Some(_) => dropped += 1,
            None => {}
        }
    }
    let fit = loglog_fit(&xs, &ys);
    Ok(HoelderFit {
        anchor: prob.perturbation().to_vec(),
        radii: radii.to_vec(),
        excesses,
        max_excess,
        log_l: fit.map(|f| f.0),
        l: fit.map(|f| f.0.exp()),
        c: fit.map(|f| f.1),
        fit_residual: fit.map(|f| f.2),
        dropped_zero: dropped,
        skipped_incomplete: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedHoelderReport {
    pub excess: f64,
    /// `2 L (|Q - P| + |q - p|)^c`, or `None` for a degenerate fit.
    pub bound: Option<f64>,
    pub consistent: bool,
}

/// Checks `Sol(K, Q + q) ⊆ Sol(K, P + p) + 2L(|Q - P| + |q - p|)^c B` with
/// `(L, c)` from `fit`. A degenerate fit requires a zero excess.
pub fn perturbed_hoelder_check(
    prob: &VIProblem,
    q_map: &PolynomialMap,
    q: &[f64],
    fit: &HoelderFit,
    cfg: &SolveConfig,
    budget: &CopositivityBudget,
) -> Result<PerturbedHoelderReport> {
    let cert = analysis::existence_certificate(prob, cfg, budget)?;
    if !cert.zero_in_k {
        return Err(Error::Premise("0 is not in K".into()));
    }
    if cert.copositivity.status != CopositivityStatus::CopositiveNumeric {
        return Err(Error::Premise("P is not copositive on K".into()));
    }
    if cert.p_in_int_sc_dual != Some(true) {
        return Err(Error::Premise("p is not in the interior of the dual of Sc".into()));
    }
    let qcop = analysis::copositivity_check(q_map, prob.set(), budget)?;
    if qcop.status != CopositivityStatus::CopositiveNumeric {
        return Err(Error::Premise("Q is not copositive on K".into()));
    }
    let base = kkt::solve(prob, cfg)?;
    let near = kkt::solve(&VIProblem::new(prob.set().clone(), q_map.clone(), q.to_vec())?, cfg)?;
    let excess = hausdorff_excess(&near, &base)?;
    let gap = q_map.sub(prob.map())?.frobenius_norm() + dist(q, prob.perturbation());
    let bound = match (fit.l, fit.c) {
        (Some(l), Some(c)) => Some(2.0 * l * gap.powf(c)),
        _ => None,
    };
    let consistent = match bound {
        Some(b) => excess <= b,
        None => excess <= 1e-8,
    };
    if !consistent {
        log::warn!("inclusion failed: excess {excess} exceeds bound {bound:?}");
    }
    Ok(PerturbedHoelderReport {
        excess,
        bound,
        consistent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenericityMode {
    FiniteValued,
    R0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub outcome: String,
    pub retried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericityStats {
    pub n: usize,
    pub d: usize,
    pub mode: GenericityMode,
    pub trials: usize,
    pub seed: u64,
    pub distribution: String,
    /// Trials with the tested property (finite-valued or R0).
    pub count_positive: usize,
    pub retried: usize,
    /// Trials without the property, re-runnable from their seeds.
    pub exceptional: Vec<TrialRecord>,
}

/// Random map with iid standard normal coefficients; `homogeneous` keeps
/// only the degree-`d` block.
pub fn random_map(n: usize, d: usize, homogeneous: bool, seed: u64) -> Result<PolynomialMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = PolynomialMap::zeros(n, d)?;
    let basis = zero.basis().clone();
    let coeffs = DMatrix::from_fn(n, basis.len(), |_, j| {
        let v: f64 = StandardNormal.sample(&mut rng);
        if homogeneous && basis.degree_of(j) != d {
            0.0
        } else {
            v
        }
    });
    PolynomialMap::from_matrix(n, d, coeffs)
}

fn genericity_trial(
    k: &PolyhedralSet,
    n: usize,
    d: usize,
    mode: GenericityMode,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<(bool, Option<String>)> {
    match mode {
        GenericityMode::FiniteValued => {
            let map = random_map(n, d, false, seed)?;
            let prob = VIProblem::new(k.clone(), map, vec![0.0; n])?;
            let sol = kkt::solve(&prob, cfg)?;
            let outcome = match (sol.status, sol.nonisolated()) {
                (_, true) => Some("nonisolated".to_string()),
                (SolveStatus::Inconclusive, _) => None,
                (SolveStatus::Capped, _) => Some("capped".to_string()),
                (SolveStatus::Complete, false) => return Ok((true, None)),
            };
            Ok((false, outcome))
        }
        GenericityMode::R0 => {
            let map = random_map(n, d, true, seed)?;
            match analysis::is_r0_pair(k, &map, cfg)?.status {
                R0Status::R0 => Ok((true, None)),
                R0Status::NotR0 { .. } => Ok((false, Some("not_r0".into()))),
                R0Status::Inconclusive => Ok((false, None)),
            }
        }
    }
}

/// Counts random instances with the tested property. Inconclusive trials are
/// rerun once with a doubled multistart budget.
pub fn genericity_experiment(
    n: usize,
    d: usize,
    k: &PolyhedralSet,
    trials: usize,
    seed: u64,
    mode: GenericityMode,
    cfg: &SolveConfig,
) -> Result<GenericityStats> {
    let licq_set = match mode {
        GenericityMode::FiniteValued => k.clone(),
        GenericityMode::R0 => k.recession_cone().into_set(),
    };
    if let Licq::Fails { face, .. } = licq_set.licq_check()? {
        return Err(Error::Licq { face });
    }
    let results: Vec<Result<TrialRecord>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(seed, t as u64);
            let trial_cfg = SolveConfig {
                seed: s,
                ..cfg.clone()
            };
            let (mut ok, mut outcome) = genericity_trial(k, n, d, mode, s, &trial_cfg)?;
            let mut retried = false;
            if !ok && outcome.is_none() {
                retried = true;
                (ok, outcome) = genericity_trial(k, n, d, mode, s, &trial_cfg.doubled())?;
            }
            Ok(TrialRecord {
                trial: t,
                seed: s,
                outcome: if ok {
                    "positive".into()
                } else {
                    outcome.unwrap_or_else(|| "inconclusive".into())
                },
                retried,
            })
        })
        .collect();
    let mut count = 0;
    let mut retried = 0;
    let mut exceptional = Vec::new();
    for r in results {
        let r = r?;
        retried += r.retried as usize;
        if r.outcome == "positive" {
            count += 1;
        } else {
            exceptional.push(r);
        }
    }
    Ok(GenericityStats {
        n,
        d,
        mode,
        trials,
        seed,
        distribution: "iid standard normal coefficients".into(),
        count_positive: count,
        retried,
        exceptional,
    })
}
