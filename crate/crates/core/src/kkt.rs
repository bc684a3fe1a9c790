//! Solution sets of `VI(K, P + p)` by KKT enumeration over pseudo-faces.
//!
//! On the pseudo-face `K_alpha` a point solves the VI iff (under LICQ) there
//! are multipliers with
//!
//! ```text
//! F(x) + C_alpha^T lambda + E^T mu = 0,  C_alpha x = b_alpha,  E x = d,  lambda >= 0
//! ```
//!
//! and the remaining inequalities strict. Each face system is square and is
//! solved by damped Newton from seeded multistart points. Every surviving
//! candidate is then checked against the VI itself through the LP oracle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dist, dot, norm};
use crate::polyhedra::{Licq, LpOutcome, PolyhedralCone, PolyhedralSet, PseudoFace};
use crate::polymap::PolynomialMap;

/// Singular values below this fraction of the largest mark a rank-deficient Jacobian.
pub const RANK_DEFICIENCY_TOL: f64 = 1e-7;
/// Cone-CP merit below which a unit vector is accepted as a nontrivial solution.
pub const MERIT_SOLVED: f64 = 1e-12;
/// Cone-CP merit above which every face minimum must lie for a trivial verdict.
pub const MERIT_TRIVIAL: f64 = 1e-6;

const CURVE_STEP: f64 = 1e-2;
const POLISH_FACTOR: usize = 3;

/// `VI(K, P + p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VIProblem {
    k: PolyhedralSet,
    map: PolynomialMap,
    p: Vec<f64>,
    field: PolynomialMap,
}

impl VIProblem {
    pub fn new(k: PolyhedralSet, map: PolynomialMap, p: Vec<f64>) -> Result<Self> {
        let n = map.n();
        if k.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: k.dim(),
            });
        }
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.len(),
            });
        }
        if map.degree() < 1 {
            log::warn!("constant map: the field does not depend on x");
        }
        let field = map.shift(&p)?;
        Ok(Self { k, map, p, field })
    }

    pub fn set(&self) -> &PolyhedralSet {
        &self.k
    }

    pub fn map(&self) -> &PolynomialMap {
        &self.map
    }

    pub fn perturbation(&self) -> &[f64] {
        &self.p
    }

    /// `F = P + p`.
    pub fn field(&self) -> &PolynomialMap {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.map.n()
    }

    /// The same `K` and `P` with another constant term.
    pub fn with_perturbation(&self, p: Vec<f64>) -> Result<Self> {
        Self::new(self.k.clone(), self.map.clone(), p)
    }

    fn scale(&self) -> f64 {
        self.field.coeffs().amax().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub newton_tol: f64,
    pub max_iter: usize,
    pub multistart: usize,
    pub seed_radius: f64,
    pub cluster_radius: f64,
    pub verify_tol: f64,
    pub seed: u64,
    pub face_cap: usize,
    pub max_solutions: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_iter: 50,
            multistart: 64,
            seed_radius: 10.0,
            cluster_radius: 1e-6,
            verify_tol: 1e-8,
            seed: 0,
            face_cap: crate::polyhedra::DEFAULT_FACE_CAP,
            max_solutions: 1000,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("seed_radius", self.seed_radius),
            ("cluster_radius", self.cluster_radius),
            ("verify_tol", self.verify_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.max_iter == 0 || self.multistart == 0 || self.max_solutions == 0 {
            return Err(Error::Invalid("iteration and multistart budgets must be positive".into()));
        }
        Ok(())
    }

    /// Same settings with a doubled multistart budget.
    pub fn doubled(&self) -> Self {
        Self {
            multistart: self.multistart * 2,
            ..self.clone()
        }
    }
}

/// Deterministic seed derivation (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The square KKT residual of one pseudo-face, in unknowns `z = (x, lambda, mu)`.
#[derive(Debug, Clone)]
pub struct KKTSystem {
    face: PseudoFace,
    field: PolynomialMap,
    c_alpha: DMatrix<f64>,
    b_alpha: DVector<f64>,
    c_rest: DMatrix<f64>,
    b_rest: DVector<f64>,
    e: DMatrix<f64>,
    d: DVector<f64>,
    scale: f64,
}

/// Builds the KKT system of `prob` on `face`; refuses faces where LICQ fails.
pub fn assemble_kkt(prob: &VIProblem, face: &PseudoFace) -> Result<KKTSystem> {
    let k = prob.set();
    let rows = k.face_rows(&face.alpha);
    if rows.nrows() > 0 && linalg::rank(&rows, crate::polyhedra::LICQ_RANK_TOL) < rows.nrows() {
        return Err(Error::Licq {
            face: face.alpha.clone(),
        });
    }
    let rest: Vec<usize> = (0..k.num_inequalities())
        .filter(|i| !face.alpha.contains(i))
        .collect();
    Ok(KKTSystem {
        face: face.clone(),
        field: prob.field().clone(),
        c_alpha: linalg::select_rows(k.c(), &face.alpha),
        b_alpha: DVector::from_iterator(face.alpha.len(), face.alpha.iter().map(|&i| k.b()[i])),
        c_rest: linalg::select_rows(k.c(), &rest),
        b_rest: DVector::from_iterator(rest.len(), rest.iter().map(|&i| k.b()[i])),
        e: k.e().clone(),
        d: k.d().clone(),
        scale: prob.scale(),
    })
}

impl KKTSystem {
    pub fn face(&self) -> &PseudoFace {
        &self.face
    }

    pub fn n(&self) -> usize {
        self.field.n()
    }

    pub fn num_active(&self) -> usize {
        self.c_alpha.nrows()
    }

    /// Number of equations and unknowns, `n + |alpha| + t`.
    pub fn dim(&self) -> usize {
        self.n() + self.c_alpha.nrows() + self.e.nrows()
    }

    pub fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let n = self.n();
        let a = self.num_active();
        (&z[..n], &z[n..n + a], &z[n + a..])
    }

    fn constraint_rows(&self) -> DMatrix<f64> {
        linalg::vstack(&self.c_alpha, &self.e, self.n())
    }

    pub fn residual(&self, z: &[f64]) -> DVector<f64> {
        let n = self.n();
        let (x, lam, mu) = self.split(z);
        let xv = DVector::from_column_slice(x);
        let mut r = DVector::zeros(self.dim());
        let fx = self.field.eval(x).expect("dimension checked at assembly");
        let stat = fx
            + self.c_alpha.transpose() * DVector::from_column_slice(lam)
            + self.e.transpose() * DVector::from_column_slice(mu);
        r.rows_mut(0, n).copy_from(&stat);
        let a = self.num_active();
        if a > 0 {
            r.rows_mut(n, a).copy_from(&(&self.c_alpha * &xv - &self.b_alpha));
        }
        let t = self.e.nrows();
        if t > 0 {
            r.rows_mut(n + a, t).copy_from(&(&self.e * &xv - &self.d));
        }
        r
    }

    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let a = self.num_active();
        let t = self.e.nrows();
        let (x, _, _) = self.split(z);
        let mut j = DMatrix::zeros(self.dim(), self.dim());
        j.view_mut((0, 0), (n, n))
            .copy_from(&self.field.jacobian(x).expect("dimension checked at assembly"));
        if a > 0 {
            j.view_mut((0, n), (n, a)).copy_from(&self.c_alpha.transpose());
            j.view_mut((n, 0), (a, n)).copy_from(&self.c_alpha);
        }
        if t > 0 {
            j.view_mut((0, n + a), (n, t)).copy_from(&self.e.transpose());
            j.view_mut((n + a, 0), (t, n)).copy_from(&self.e);
        }
        j
    }

    /// Least-squares multipliers for a given `x`, stacked as `(lambda, mu)`.
    pub fn multipliers_for(&self, x: &[f64]) -> DVector<f64> {
        let rows = self.constraint_rows();
        if rows.nrows() == 0 {
            return DVector::zeros(0);
        }
        let fx = self.field.eval(x).expect("dimension checked at assembly");
        linalg::lstsq(&rows.transpose(), &(-fx), 1e-12)
    }

    /// Stationarity residual after choosing least-squares multipliers.
    fn stationarity_residual(&self, x: &[f64]) -> f64 {
        let nu = self.multipliers_for(x);
        let fx = self.field.eval(x).expect("dimension checked at assembly");
        let r = if nu.is_empty() {
            fx
        } else {
            fx + self.constraint_rows().transpose() * nu
        };
        r.amax()
    }

    fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        z.extend(self.multipliers_for(x).iter());
        z
    }

    fn project_to_face(&self, x: &[f64]) -> Vec<f64> {
        let rows = self.constraint_rows();
        if rows.nrows() == 0 {
            return x.to_vec();
        }
        let xv = DVector::from_column_slice(x);
        let rhs = DVector::from_iterator(
            rows.nrows(),
            self.b_alpha.iter().chain(self.d.iter()).copied(),
        );
        let corr = linalg::lstsq(&rows, &(rhs - &rows * &xv), 1e-12);
        (xv + corr).iter().copied().collect()
    }

    fn tol(&self, cfg: &SolveConfig) -> f64 {
        cfg.newton_tol * self.scale
    }

    /// Largest violation of the inactive inequalities.
    fn strict_violation(&self, x: &[f64]) -> f64 {
        if self.c_rest.nrows() == 0 {
            return f64::NEG_INFINITY;
        }
        let r = &self.c_rest * DVector::from_column_slice(x) - &self.b_rest;
        r.max()
    }

    fn admissible(&self, z: &[f64], cfg: &SolveConfig) -> bool {
        let (x, lam, _) = self.split(z);
        lam.iter().all(|&l| l >= -cfg.verify_tol)
            && self.strict_violation(x) <= cfg.verify_tol * (1.0 + norm(x))
            && z.iter().all(|v| v.is_finite())
    }
}

fn newton_step(j: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    if let Some(s) = j.clone().lu().solve(r) {
        if s.iter().all(|v| v.is_finite()) && (j * &s - r).amax() <= 1e-8 * r.amax().max(1e-300) {
            return -s;
        }
    }
    -linalg::lstsq(j, r, 1e-13)
}

/// Damped Newton with a polishing phase for slowly converging (singular) roots.
fn newton(sys: &KKTSystem, z0: Vec<f64>, cfg: &SolveConfig) -> Option<(Vec<f64>, f64)> {
    let tol = sys.tol(cfg);
    let mut z = DVector::from_vec(z0);
    let mut r = sys.residual(z.as_slice());
    let total = cfg.max_iter * (1 + POLISH_FACTOR);
    for it in 0..total {
        let rn = r.amax();
        if it >= cfg.max_iter && rn > tol {
            break;
        }
        if rn == 0.0 {
            break;
        }
        let j = sys.jacobian(z.as_slice());
        let s = newton_step(&j, &r);
        let base = r.norm();
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let zt = &z + &s * t;
            let rt = sys.residual(zt.as_slice());
            if rt.iter().all(|v| v.is_finite()) && rt.norm() <= (1.0 - 1e-4 * t) * base {
                accepted = Some((zt, rt));
                break;
            }
            t *= 0.5;
        }
        let Some((zn, rn_vec)) = accepted else {
            break;
        };
        let step = (&zn - &z).norm();
        z = zn;
        r = rn_vec;
        if r.amax() <= tol && step <= 1e-13 * (1.0 + z.norm()) {
            break;
        }
    }
    let res = r.amax();
    (res <= tol && z.iter().all(|v| v.is_finite())).then(|| (z.iter().copied().collect(), res))
}

/// A candidate or verified solution on one pseudo-face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint {
    pub x: Vec<f64>,
    pub face: Vec<usize>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub residual: f64,
}

/// A suspected positive-dimensional piece of the solution set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub face: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub tangent: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Complete,
    Capped,
    Inconclusive,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub faces: usize,
    pub starts: usize,
    pub converged: usize,
    pub rejected_by_verification: usize,
    pub suspect_faces: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub points: Vec<SolutionPoint>,
    pub components: Vec<Component>,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl SolutionSet {
    /// No positive-dimensional pieces were detected.
    pub fn is_finite(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.status == SolveStatus::Complete
    }

    pub fn nonisolated(&self) -> bool {
        !self.components.is_empty()
    }

    /// Isolated points followed by every component sample.
    pub fn all_points(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| p.x.clone())
            .chain(self.components.iter().flat_map(|c| c.samples.iter().cloned()))
            .collect()
    }
}

/// Per-face output of the multistart search.
#[derive(Debug, Clone)]
pub struct FaceSolve {
    pub candidates: Vec<SolutionPoint>,
    pub converged: usize,
    pub starts: usize,
}

/// Multistart Newton on one face; returns clustered admissible candidates.
pub fn solve_face(sys: &KKTSystem, cfg: &SolveConfig, seed: u64) -> FaceSolve {
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = if sys.face.dim == 0 { 1 } else { cfg.multistart };
    let mut found: Vec<SolutionPoint> = Vec::new();
    let mut converged = 0;
    for s in 0..starts {
        let x0: Vec<f64> = if s == 0 {
            sys.face.interior_point.clone()
        } else {
            (0..n)
                .map(|_| rng.random_range(-cfg.seed_radius..cfg.seed_radius))
                .collect()
        };
        let x0 = sys.project_to_face(&x0);
        let Some((z, res)) = newton(sys, sys.lift(&x0), cfg) else {
            continue;
        };
        if !sys.admissible(&z, cfg) {
            continue;
        }
        converged += 1;
        let (x, lam, mu) = sys.split(&z);
        let cand = SolutionPoint {
            x: x.to_vec(),
            face: sys.face.alpha.clone(),
            lambda: lam.to_vec(),
            mu: mu.to_vec(),
            residual: res,
        };
        match found
            .iter_mut()
            .find(|c| dist(&c.x, &cand.x) <= cfg.cluster_radius)
        {
            Some(existing) => {
                if cand.residual < existing.residual {
                    *existing = cand;
                }
            }
            None => found.push(cand),
        }
    }
    FaceSolve {
        candidates: found,
        converged,
        starts,
    }
}

/// Nonisolation test at a converged point of one face.
///
/// A rank-deficient Jacobian alone is not enough (isolated multiple roots are
/// singular too), so each null direction is followed for a short step and the
/// point is flagged only if a corrector lands back on the solution set there.
/// Returns the off-point found on the curve when the flag is raised.
pub fn detect_nonisolated(sys: &KKTSystem, point: &SolutionPoint, cfg: &SolveConfig) -> Option<Vec<f64>> {
    let z = point_to_z(point);
    let j = sys.jacobian(&z);
    let svd = j.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let v_t = svd.v_t.expect("requested V^T");
    let dirs: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| smax == 0.0 || svd.singular_values[i] < RANK_DEFICIENCY_TOL * smax)
        .map(|i| v_t.row(i).transpose())
        .collect();
    let step = CURVE_STEP * (1.0 + norm(&point.x));
    for t in dirs {
        let xt = t.rows(0, sys.n()).norm();
        if xt < 1e-6 {
            continue;
        }
        for sign in [1.0, -1.0] {
            if let Some(zc) = curve_corrector(sys, &z, &t, sign * step, cfg) {
                return Some(sys.split(&zc).0.to_vec());
            }
        }
    }
    None
}

fn point_to_z(p: &SolutionPoint) -> Vec<f64> {
    let mut z = p.x.clone();
    z.extend(&p.lambda);
    z.extend(&p.mu);
    z
}

// Gauss-Newton on [R(z); <t, z - z0> - step] from z0 + step * t.
fn curve_corrector(
    sys: &KKTSystem,
    z0: &[f64],
    t: &DVector<f64>,
    step: f64,
    cfg: &SolveConfig,
) -> Option<Vec<f64>> {
    let m = sys.dim();
    let base = DVector::from_column_slice(z0);
    let mut z = &base + t * step;
    let tol = sys.tol(cfg);
    for _ in 0..2 * cfg.max_iter {
        let r = sys.residual(z.as_slice());
        let h = t.dot(&(&z - &base)) - step;
        if r.amax() <= tol && h.abs() <= 1e-12 * (1.0 + step.abs()) {
            break;
        }
        let j = sys.jacobian(z.as_slice());
        let mut ja = DMatrix::zeros(m + 1, m);
        ja.view_mut((0, 0), (m, m)).copy_from(&j);
        ja.row_mut(m).copy_from(&t.transpose());
        let mut ra = DVector::zeros(m + 1);
        ra.rows_mut(0, m).copy_from(&r);
        ra[m] = h;
        let s = linalg::lstsq(&ja, &ra, 1e-13);
        z -= s;
        if !z.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let r = sys.residual(z.as_slice());
    let zs: Vec<f64> = z.iter().copied().collect();
    let moved = dist(sys.split(&zs).0, sys.split(z0).0);
    (r.amax() <= tol && sys.admissible(&zs, cfg) && moved > 0.1 * step.abs()).then_some(zs)
}

fn connected_on_line(sys: &KKTSystem, a: &[f64], b: &[f64], cfg: &SolveConfig) -> bool {
    let tol = 1e-6 * sys.scale.max(1.0) + 1e4 * sys.tol(cfg);
    [0.25, 0.5, 0.75].iter().all(|&w| {
        let x: Vec<f64> = a.iter().zip(b).map(|(u, v)| (1.0 - w) * u + w * v).collect();
        sys.stationarity_residual(&x) <= tol
    })
}

fn canonical_tangent(sys: &KKTSystem, x: &[f64]) -> Vec<f64> {
    let z = sys.lift(x);
    let j = sys.jacobian(&z);
    let svd = j.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let last = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut t: Vec<f64> = v_t.row(last).iter().take(sys.n()).copied().collect();
    let s = norm(&t);
    if s > 0.0 {
        t.iter_mut().for_each(|v| *v /= s);
    }
    if let Some(first) = t.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            t.iter_mut().for_each(|v| *v = -*v);
        }
    }
    t
}

/// Follows a component from `start` along its tangent in both directions.
///
/// Returns the samples (including `start`) and whether the trace left the
/// ball of radius `max_norm`, which is taken as evidence of unboundedness.
pub fn trace_component(
    prob: &VIProblem,
    component: &Component,
    step: f64,
    max_norm: f64,
    max_steps: usize,
    cfg: &SolveConfig,
) -> Result<(Vec<Vec<f64>>, bool)> {
    let face = prob
        .set()
        .pseudo_faces_capped(cfg.face_cap)?
        .into_iter()
        .find(|f| f.alpha == component.face)
        .ok_or_else(|| Error::Invalid(format!("no pseudo-face {:?}", component.face)))?;
    let sys = assemble_kkt(prob, &face)?;
    let start = component
        .samples
        .first()
        .ok_or_else(|| Error::Invalid("component without samples".into()))?;
    let mut samples = vec![start.clone()];
    let mut escaped = false;
    for sign in [1.0, -1.0] {
        let mut z = DVector::from_vec(sys.lift(start));
        let mut dir: DVector<f64> = DVector::from_vec(tangent_in_z(&sys, z.as_slice()));
        if dir.rows(0, sys.n()).dot(&DVector::from_column_slice(&component.tangent)) * sign < 0.0 {
            dir = -dir;
        }
        for _ in 0..max_steps {
            let Some(zc) = curve_corrector(&sys, z.as_slice(), &dir, step, cfg) else {
                break;
            };
            let next = DVector::from_vec(zc);
            let new_dir = DVector::from_vec(tangent_in_z(&sys, next.as_slice()));
            dir = if new_dir.dot(&dir) < 0.0 { -new_dir } else { new_dir };
            z = next;
            let x = sys.split(z.as_slice()).0.to_vec();
            let far = norm(&x) > max_norm;
            samples.push(x);
            if far {
                escaped = true;
                break;
            }
        }
    }
    Ok((samples, escaped))
}

fn tangent_in_z(sys: &KKTSystem, z: &[f64]) -> Vec<f64> {
    let j = sys.jacobian(z);
    let svd = j.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let last = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    v_t.row(last).iter().copied().collect()
}

/// `x` solves the VI within `tol`: `x in K` and `min_{y in K} <F(x), y> >= <F(x), x>`.
///
/// Tolerances are scaled by `max(1, |F(x)|)`.
pub fn verify_solution(prob: &VIProblem, x: &[f64], tol: f64) -> bool {
    if x.len() != prob.dim() || !prob.set().contains(x, tol) {
        return false;
    }
    let fx: Vec<f64> = match prob.field().eval(x) {
        Ok(v) => v.iter().copied().collect(),
        Err(_) => return false,
    };
    let scaled = tol * norm(&fx).max(1.0);
    match prob.set().lp_minimize_tol(&fx, scaled) {
        LpOutcome::Bounded { value, .. } => value >= dot(&fx, x) - scaled * (1.0 + norm(x)),
        LpOutcome::Unbounded { .. } => false,
    }
}

struct FaceOutcome {
    points: Vec<SolutionPoint>,
    components: Vec<Component>,
    converged: usize,
    starts: usize,
    suspect: bool,
}

fn process_face(prob: &VIProblem, face: &PseudoFace, index: usize, cfg: &SolveConfig) -> Result<FaceOutcome> {
    let sys = assemble_kkt(prob, face)?;
    let solved = solve_face(&sys, cfg, derive_seed(cfg.seed, index as u64));
    let cluster_failure = solved.candidates.len() > cfg.multistart / 4;
    let mut points = Vec::new();
    let mut flagged: Vec<(SolutionPoint, Vec<f64>)> = Vec::new();
    for cand in solved.candidates {
        match detect_nonisolated(&sys, &cand, cfg) {
            Some(extra) => flagged.push((cand, extra)),
            None => points.push(cand),
        }
    }
    let components = group_components(&sys, flagged, cfg);
    Ok(FaceOutcome {
        suspect: cluster_failure && components.is_empty(),
        points,
        components,
        converged: solved.converged,
        starts: solved.starts,
    })
}

fn group_components(
    sys: &KKTSystem,
    flagged: Vec<(SolutionPoint, Vec<f64>)>,
    cfg: &SolveConfig,
) -> Vec<Component> {
    let mut groups: Vec<Vec<(SolutionPoint, Vec<f64>)>> = Vec::new();
    for item in flagged {
        match groups
            .iter_mut()
            .find(|g| connected_on_line(sys, &g[0].0.x, &item.0.x, cfg))
        {
            Some(g) => g.push(item),
            None => groups.push(vec![item]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let mut samples: Vec<Vec<f64>> = g.iter().map(|(p, _)| p.x.clone()).collect();
            if samples.len() < 2 {
                samples.push(g[0].1.clone());
            }
            sort_points(&mut samples);
            let tangent = canonical_tangent(sys, &samples[0]);
            Component {
                face: sys.face.alpha.clone(),
                samples,
                tangent,
            }
        })
        .collect()
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn sort_points(v: &mut [Vec<f64>]) {
    v.sort_by(|a, b| lex(a, b));
}

/// Computes `Sol(K, P + p)` as the union of verified face-wise KKT solutions.
pub fn solve(prob: &VIProblem, cfg: &SolveConfig) -> Result<SolutionSet> {
    cfg.validate()?;
    let faces = prob.set().pseudo_faces_capped(cfg.face_cap)?;
    if let Licq::Fails { face, .. } = prob.set().licq_check()? {
        return Err(Error::Licq { face });
    }
    let outcomes: Vec<FaceOutcome> = faces
        .par_iter()
        .enumerate()
        .map(|(i, f)| process_face(prob, f, i, cfg))
        .collect::<Result<_>>()?;

    let mut stats = SolveStats {
        faces: faces.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();
    let mut components = Vec::new();
    for (face, out) in faces.iter().zip(outcomes) {
        stats.starts += out.starts;
        stats.converged += out.converged;
        if out.suspect {
            stats.suspect_faces.push(face.alpha.clone());
        }
        candidates.extend(out.points);
        components.extend(out.components);
    }

    // cross-face duplicates: prefer the face matching the point's active set
    let mut points: Vec<SolutionPoint> = Vec::new();
    for cand in candidates {
        let active = prob.set().active_set(&cand.x, 1e-9);
        match points
            .iter_mut()
            .find(|p| dist(&p.x, &cand.x) <= cfg.cluster_radius)
        {
            Some(existing) => {
                if cand.face == active && existing.face != active {
                    *existing = cand;
                }
            }
            None => points.push(cand),
        }
    }
    // isolated points lying on a detected component belong to it
    let before = points.len();
    points.retain(|p| {
        !components
            .iter()
            .any(|c| c.face == p.face && c.samples.iter().any(|s| dist(s, &p.x) <= cfg.cluster_radius))
    });
    debug_assert!(points.len() <= before);

    let mut verified = Vec::new();
    for p in points {
        if verify_solution(prob, &p.x, cfg.verify_tol) {
            verified.push(p);
        } else {
            stats.rejected_by_verification += 1;
        }
    }
    for c in components.iter_mut() {
        let len = c.samples.len();
        c.samples.retain(|s| verify_solution(prob, s, cfg.verify_tol));
        stats.rejected_by_verification += len - c.samples.len();
    }
    components.retain(|c| !c.samples.is_empty());

    verified.sort_by(|a, b| a.face.cmp(&b.face).then_with(|| lex(&a.x, &b.x)));
    components.sort_by(|a, b| a.face.cmp(&b.face).then_with(|| lex(&a.samples[0], &b.samples[0])));

    let mut status = SolveStatus::Complete;
    if verified.len() > cfg.max_solutions {
        verified.truncate(cfg.max_solutions);
        status = SolveStatus::Capped;
    }
    if !stats.suspect_faces.is_empty() || stats.rejected_by_verification > 0 {
        status = SolveStatus::Inconclusive;
    }
    Ok(SolutionSet {
        points: verified,
        components,
        status,
        stats,
    })
}

/// Verdict of the search for unit-norm solutions of `CP(C, H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConeCpVerdict {
    Trivial,
    Nontrivial { witness: Vec<f64> },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCpResult {
    pub verdict: ConeCpVerdict,
    /// Distinct unit-norm solutions found.
    pub witnesses: Vec<Vec<f64>>,
    /// Smallest merit value over all faces and starts.
    pub min_merit: f64,
    pub starts_used: usize,
}

struct ConeFace {
    basis: DMatrix<f64>,
    rows: DMatrix<f64>,
    num_ineq: usize,
    c_rest: DMatrix<f64>,
}

impl ConeFace {
    fn merit(&self, h: &PolynomialMap, x: &[f64]) -> f64 {
        let g = h.eval(x).expect("dimension checked");
        if self.rows.nrows() == 0 {
            return g.norm_squared();
        }
        let nu = linalg::lstsq(&self.rows.transpose(), &(-&g), 1e-12);
        let r = g + self.rows.transpose() * &nu;
        let sign: f64 = nu.iter().take(self.num_ineq).map(|v| v.min(0.0).powi(2)).sum();
        r.norm_squared() + sign
    }

    fn feasible(&self, x: &[f64]) -> bool {
        self.c_rest.nrows() == 0
            || (&self.c_rest * DVector::from_column_slice(x)).max() <= 1e-9
    }

    fn embed(&self, y: &DVector<f64>) -> Vec<f64> {
        (&self.basis * y).iter().copied().collect()
    }
}

// Levenberg-Marquardt for |N^T H(N y)|^2 on the unit sphere.
fn sphere_lm(face: &ConeFace, h: &PolynomialMap, y0: DVector<f64>, iters: usize) -> DVector<f64> {
    let k = face.basis.ncols();
    let resid = |y: &DVector<f64>| -> DVector<f64> {
        let x = face.embed(y);
        face.basis.transpose() * h.eval(&x).expect("dimension checked")
    };
    let mut y = y0.normalize();
    let mut r = resid(&y);
    let mut damping = 1e-3;
    for _ in 0..iters {
        let x = face.embed(&y);
        let jh = h.jacobian(&x).expect("dimension checked");
        let jr = face.basis.transpose() * jh * &face.basis;
        let mut ja = DMatrix::zeros(k + 1, k);
        ja.view_mut((0, 0), (k, k)).copy_from(&jr);
        ja.row_mut(k).copy_from(&(&y * 2.0).transpose());
        let mut ra = DVector::zeros(k + 1);
        ra.rows_mut(0, k).copy_from(&r);
        let jtj = ja.transpose() * &ja;
        let g = ja.transpose() * &ra;
        let mut improved = false;
        for _ in 0..30 {
            let lhs = &jtj + DMatrix::identity(k, k) * (damping * (1.0 + jtj.diagonal().amax()));
            let Some(s) = lhs.lu().solve(&(-&g)) else {
                damping *= 10.0;
                continue;
            };
            let yn = (&y + &s).normalize();
            let rn = resid(&yn);
            if rn.norm_squared() < r.norm_squared() {
                let moved = (&yn - &y).norm();
                y = yn;
                r = rn;
                damping = (damping * 0.3).max(1e-15);
                improved = moved > 1e-15;
                break;
            }
            damping *= 10.0;
        }
        if !improved || r.norm_squared() == 0.0 {
            break;
        }
    }
    y
}

/// Searches for unit-norm solutions of the cone complementarity problem
/// `x in C, H(x) in C*, <H(x), x> = 0` by face-wise merit minimization on the
/// unit sphere. `H` is normalized to unit Frobenius norm so the thresholds
/// are scale free.
pub fn solve_cone_cp(cone: &PolyhedralCone, h: &PolynomialMap, cfg: &SolveConfig) -> Result<ConeCpResult> {
    if !h.is_homogeneous() {
        return Err(Error::Invalid("cone CP requires a homogeneous map".into()));
    }
    if h.is_zero() {
        return Err(Error::ZeroMap);
    }
    let h = h.scale(1.0 / h.frobenius_norm());
    let set = cone.as_set();
    let faces = set.pseudo_faces_capped(cfg.face_cap)?;
    let n = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xC0DE));
    let mut min_merit = f64::INFINITY;
    let mut all_above = true;
    let mut witnesses: Vec<Vec<f64>> = Vec::new();
    let mut starts_used = 0;
    for face in faces.iter().filter(|f| f.dim > 0) {
        let rows = set.face_rows(&face.alpha);
        let basis = linalg::null_space(&rows, n, 1e-10);
        let rest: Vec<usize> = (0..set.num_inequalities())
            .filter(|i| !face.alpha.contains(i))
            .collect();
        let cf = ConeFace {
            basis,
            rows,
            num_ineq: face.alpha.len(),
            c_rest: linalg::select_rows(set.c(), &rest),
        };
        let k = cf.basis.ncols();
        let mut face_min = f64::INFINITY;
        let consider = |x: Vec<f64>, min: &mut f64, wit: &mut Vec<Vec<f64>>| {
            if !cf.feasible(&x) {
                return;
            }
            let m = cf.merit(&h, &x);
            *min = min.min(m);
            if m < MERIT_SOLVED && !wit.iter().any(|w| dist(w, &x) < 1e-6) {
                wit.push(x);
            }
        };
        if k == 1 {
            for sign in [1.0, -1.0] {
                let x = cf.embed(&DVector::from_element(1, sign));
                starts_used += 1;
                consider(x, &mut face_min, &mut witnesses);
            }
        } else {
            let interior = DVector::from_column_slice(&face.interior_point);
            let y_int = cf.basis.transpose() * interior;
            for s in 0..cfg.multistart {
                let y0 = if s == 0 && y_int.norm() > 0.0 {
                    y_int.clone()
                } else {
                    DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
                };
                if y0.norm() == 0.0 {
                    continue;
                }
                starts_used += 1;
                let y = sphere_lm(&cf, &h, y0, 4 * cfg.max_iter);
                consider(cf.embed(&y), &mut face_min, &mut witnesses);
            }
        }
        min_merit = min_merit.min(face_min);
        if face_min.is_finite() && face_min <= MERIT_TRIVIAL {
            all_above = false;
        }
    }
    let mut witnesses: Vec<Vec<f64>> = witnesses
        .into_iter()
        .map(|w| {
            let s = norm(&w);
            w.into_iter().map(|v| v / s).collect()
        })
        .collect();
    sort_points(&mut witnesses);
    let verdict = if let Some(w) = witnesses.first() {
        ConeCpVerdict::Nontrivial { witness: w.clone() }
    } else if all_above {
        ConeCpVerdict::Trivial
    } else {
        ConeCpVerdict::Inconclusive
    };
    Ok(ConeCpResult {
        verdict,
        witnesses,
        min_merit,
        starts_used,
    })
}

/// Checks the complementarity conditions `x in C, H(x) in C*, <H(x), x> = 0`
/// directly, with tolerance `tol * max(1, |H|)`.
pub fn satisfies_cp(cone: &PolyhedralCone, h: &PolynomialMap, x: &[f64], tol: f64) -> bool {
    let scale = h.frobenius_norm().max(1.0);
    let t = tol * scale;
    if !cone.as_set().contains(x, tol) {
        return false;
    }
    let hx: Vec<f64> = h.eval(x).expect("dimension").iter().copied().collect();
    let g = cone.generators();
    g.rays.iter().all(|r| dot(&hx, r) >= -t)
        && g.lineality.iter().all(|l| dot(&hx, l).abs() <= t)
        && dot(&hx, x).abs() <= t * (1.0 + norm(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    fn ex1(p: [f64; 2]) -> VIProblem {
        VIProblem::new(nonnegative_orthant(2), squared_difference_map(), p.to_vec()).unwrap()
    }

    fn ex2(p: [f64; 2]) -> VIProblem {
        VIProblem::new(right_half_plane(), cubic_map(), p.to_vec()).unwrap()
    }

    fn face(prob: &VIProblem, alpha: &[usize]) -> PseudoFace {
        prob.set()
            .pseudo_faces()
            .unwrap()
            .into_iter()
            .find(|f| f.alpha == alpha)
            .unwrap()
    }

    #[test]
    fn cubic_edge_system_at_closed_form() {
        let prob = ex2([1.0, 5.0]);
        let sys = assemble_kkt(&prob, &face(&prob, &[0])).unwrap();
        assert_eq!(sys.dim(), 3);
        let z = [0.0, -(5f64).cbrt(), 1.0];
        assert!(sys.residual(&z).amax() < 1e-12);
        let found = solve_face(&sys, &SolveConfig::default(), 1);
        assert_eq!(found.candidates.len(), 1);
        let c = &found.candidates[0];
        assert!(dist(&c.x, &z[..2]) < 1e-9);
        assert!((c.lambda[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn squared_difference_interior_has_no_candidates_for_positive_p() {
        let prob = ex1([1.0, 1.0]);
        let sys = assemble_kkt(&prob, &face(&prob, &[])).unwrap();
        assert_eq!(sys.dim(), 2);
        assert!(solve_face(&sys, &SolveConfig::default(), 3).candidates.is_empty());
    }

    #[test]
    fn vertex_face_multipliers_are_minus_p() {
        for p in [[1.0, 2.0], [-1.0, 2.0], [0.0, 0.0], [3.0, -0.5]] {
            let prob = ex1(p);
            let sys = assemble_kkt(&prob, &face(&prob, &[0, 1])).unwrap();
            let found = solve_face(&sys, &SolveConfig::default(), 0).candidates;
            // at the origin: P = 0 and -lambda + p = 0
            let expected = p[0] >= 0.0 && p[1] >= 0.0;
            assert_eq!(found.len() == 1, expected, "p = {p:?}");
            if let Some(c) = found.first() {
                assert!(dist(&c.lambda, &p) < 1e-12);
            }
        }
    }

    #[test]
    fn verification_examples() {
        let tol = 1e-8;
        assert!(verify_solution(&ex2([-8.0, -27.0]), &[2.0, 3.0], tol));
        assert!(verify_solution(&ex1([0.0, -1.0]), &[0.0, 1.0], tol));
        assert!(!verify_solution(&ex1([1.0, 1.0]), &[1.0, 1.0], tol));
        assert!(!verify_solution(&ex1([1.0, 1.0]), &[-1.0, 0.0], tol));
    }

    #[test]
    fn solve_cubic_single_point() {
        let sol = solve(&ex2([-8.0, -27.0]), &SolveConfig::default()).unwrap();
        assert!(sol.is_complete() && sol.is_finite());
        assert_eq!(sol.points.len(), 1);
        assert!(dist(&sol.points[0].x, &[2.0, 3.0]) < 1e-9);
    }

    #[test]
    fn solve_cubic_triple_root_at_origin() {
        let sol = solve(&ex2([0.0, 0.0]), &SolveConfig::default()).unwrap();
        assert!(sol.is_finite(), "{sol:?}");
        assert_eq!(sol.points.len(), 1);
        assert!(norm(&sol.points[0].x) < 1e-8);
    }

    #[test]
    fn solve_squared_difference_on_axis() {
        let sol = solve(&ex1([-1.0, 0.0]), &SolveConfig::default()).unwrap();
        assert!(sol.is_finite());
        let xs: Vec<_> = sol.points.iter().map(|p| p.x.clone()).collect();
        assert!(xs.iter().any(|x| dist(x, &[1.0, 0.0]) < 1e-8), "{xs:?}");
    }

    #[test]
    fn squared_difference_line_is_flagged() {
        let sol = solve(&ex1([-1.0, -1.0]), &SolveConfig::default()).unwrap();
        assert!(sol.nonisolated());
        let on_l1 = sol.components.iter().any(|c| {
            c.samples.len() >= 2 && c.samples.iter().all(|s| (s[0] - s[1] - 1.0).abs() < 1e-6)
        });
        assert!(on_l1, "{:?}", sol.components);
    }

    #[test]
    fn nondegenerate_lcp_not_flagged() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let q = DVector::from_vec(vec![-1.0, 1.0]);
        let map = PolynomialMap::affine(&m, &q).unwrap();
        let prob = VIProblem::new(nonnegative_orthant(2), map, vec![0.0, 0.0]).unwrap();
        let sol = solve(&prob, &SolveConfig::default()).unwrap();
        assert!(sol.is_finite() && sol.is_complete());
        assert_eq!(sol.points.len(), 1);
        assert!(dist(&sol.points[0].x, &[0.5, 0.0]) < 1e-12);
    }

    #[test]
    fn determinism() {
        let cfg = SolveConfig {
            seed: 42,
            ..Default::default()
        };
        let a = serde_json::to_string(&solve(&ex1([-1.0, -2.0]), &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&solve(&ex1([-1.0, -2.0]), &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cone_cp_examples() {
        let cfg = SolveConfig::default();
        let cone = nonnegative_orthant(2).recession_cone();
        let r = solve_cone_cp(&cone, &squared_difference_map(), &cfg).unwrap();
        let s = 0.5f64.sqrt();
        match &r.verdict {
            ConeCpVerdict::Nontrivial { witness } => assert!(dist(witness, &[s, s]) < 1e-4),
            v => panic!("{v:?}"),
        }
        for w in &r.witnesses {
            assert!(satisfies_cp(&cone, &squared_difference_map(), w, 1e-8));
        }
        let half = right_half_plane().recession_cone();
        let r = solve_cone_cp(&half, &cubic_map(), &cfg).unwrap();
        assert_eq!(r.verdict, ConeCpVerdict::Trivial);
        let zero = PolyhedralCone::zero(2).unwrap();
        assert_eq!(solve_cone_cp(&zero, &cubic_map(), &cfg).unwrap().verdict, ConeCpVerdict::Trivial);
    }

    #[test]
    fn licq_failure_refused() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let k = PolyhedralSet::inequalities(c, DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let prob = VIProblem::new(k, cubic_map(), vec![0.0, 0.0]).unwrap();
        assert!(matches!(solve(&prob, &SolveConfig::default()), Err(Error::Licq { .. })));
    }
}
