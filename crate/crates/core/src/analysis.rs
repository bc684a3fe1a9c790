//! Structural certificates for `(K, P)`: R0 verdicts, copositivity,
//! monotonicity, existence under copositivity, and uniqueness probing.
//!
//! Every verdict is numerical. Statuses ending in `_numeric` mean that a
//! seeded search found no counterexample, not that a proof exists.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{self, derive_seed, ConeCpVerdict, SolveConfig, VIProblem};
use crate::linalg::{self, dist, dot, norm};
use crate::polyhedra::{int_dual_membership, GeneratorRep, PolyhedralSet};
use crate::polymap::PolynomialMap;

/// `<P(x), x>` below this value is a copositivity counterexample.
pub const COPOSITIVE_VIOLATION: f64 = -1e-10;
/// All minima above this value give a copositive verdict.
pub const COPOSITIVE_CLEAR: f64 = -1e-12;
/// Tolerance for `<q, r> > tol` in the interior-of-dual test.
pub const INT_DUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum R0Status {
    R0,
    NotR0 { witness: Vec<f64> },
    Inconclusive,
}

impl R0Status {
    pub fn label(&self) -> &'static str {
        match self {
            R0Status::R0 => "r0",
            R0Status::NotR0 { .. } => "not_r0",
            R0Status::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Verdict {
    pub status: R0Status,
    /// Unit-norm elements of `Sol(K^inf, P^inf)` found by the search.
    pub sc_samples: Vec<Vec<f64>>,
    pub min_merit: f64,
    pub merit_solved: f64,
    pub merit_trivial: f64,
    pub starts_used: usize,
}

impl R0Verdict {
    /// The sampled cone `Sc` as generators (origin plus the witness rays).
    pub fn sc_generators(&self) -> GeneratorRep {
        let n = self.sc_samples.first().map_or(0, Vec::len);
        GeneratorRep {
            vertices: vec![vec![0.0; n]],
            rays: self.sc_samples.clone(),
            lineality: Vec::new(),
        }
    }
}

/// Decides whether `Sol(K^inf, P^inf) = {0}`.
pub fn is_r0_pair(k: &PolyhedralSet, p: &PolynomialMap, cfg: &SolveConfig) -> Result<R0Verdict> {
    if k.dim() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: k.dim(),
        });
    }
    let cone = k.recession_cone();
    let lead = p.leading_term()?;
    let res = kkt::solve_cone_cp(&cone, &lead, cfg)?;
    let status = match res.verdict {
        ConeCpVerdict::Trivial => R0Status::R0,
        ConeCpVerdict::Nontrivial { witness } => R0Status::NotR0 { witness },
        ConeCpVerdict::Inconclusive => R0Status::Inconclusive,
    };
    Ok(R0Verdict {
        status,
        sc_samples: res.witnesses,
        min_merit: res.min_merit,
        merit_solved: kkt::MERIT_SOLVED,
        merit_trivial: kkt::MERIT_TRIVIAL,
        starts_used: res.starts_used,
    })
}

/// The R0 status of `(K, tP)` equals that of `(K, P)`, both decided.
pub fn r0_scaling_invariance_check(k: &PolyhedralSet, p: &PolynomialMap, t: f64, cfg: &SolveConfig) -> Result<bool> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Invalid("scaling factor must be positive".into()));
    }
    let a = is_r0_pair(k, p, cfg)?.status;
    let b = is_r0_pair(k, &p.scale(t), cfg)?.status;
    Ok(decided_and_equal(&a, &b))
}

/// The R0 status of `(K, P + Q)` equals that of `(K, P)` for `deg Q < deg P`.
pub fn r0_lower_degree_invariance_check(
    k: &PolyhedralSet,
    p: &PolynomialMap,
    q: &PolynomialMap,
    cfg: &SolveConfig,
) -> Result<bool> {
    if !q.is_zero() && q.degree() >= p.degree() {
        return Err(Error::Premise("deg Q must be below deg P".into()));
    }
    let a = is_r0_pair(k, p, cfg)?.status;
    let b = is_r0_pair(k, &p.add(q)?, cfg)?.status;
    Ok(decided_and_equal(&a, &b))
}

fn decided_and_equal(a: &R0Status, b: &R0Status) -> bool {
    a.label() == b.label() && *a != R0Status::Inconclusive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopositivityBudget {
    pub starts_per_face: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for CopositivityBudget {
    fn default() -> Self {
        Self {
            starts_per_face: 16,
            iters: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CopositivityStatus {
    CopositiveNumeric,
    NotCopositive { witness: Vec<f64> },
    Inconclusive,
}

impl CopositivityStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CopositivityStatus::CopositiveNumeric => "copositive_numeric",
            CopositivityStatus::NotCopositive { .. } => "not_copositive",
            CopositivityStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopositivityVerdict {
    pub status: CopositivityStatus,
    /// Smallest `<P(x), x>` found on the searched spheres.
    pub min_value: f64,
    /// Sphere radii searched.
    pub radii: Vec<f64>,
    pub evaluations: usize,
    pub budget: CopositivityBudget,
}

/// Radii searched by [`copositivity_check`]. One sphere suffices when `P` is
/// homogeneous and `K` is a cone; otherwise a ladder of spheres is used.
pub fn copositivity_radii(p: &PolynomialMap, k: &PolyhedralSet) -> Vec<f64> {
    let is_cone = k.b().iter().all(|&v| v == 0.0) && k.d().iter().all(|&v| v == 0.0);
    if p.is_homogeneous() && is_cone {
        vec![1.0]
    } else {
        vec![0.1, 0.5, 1.0, 2.0, 10.0]
    }
}

/// Minimizes `f(x) = <P(x), x>` over `K` intersected with spheres, face by face.
pub fn copositivity_check(p: &PolynomialMap, k: &PolyhedralSet, budget: &CopositivityBudget) -> Result<CopositivityVerdict> {
    if k.dim() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            found: k.dim(),
        });
    }
    let n = p.n();
    let f = |x: &[f64]| dot(p.eval(x).expect("dimension checked").as_slice(), x);
    let grad = |x: &[f64]| -> DVector<f64> {
        let j = p.jacobian(x).expect("dimension checked");
        j.transpose() * DVector::from_column_slice(x) + p.eval(x).expect("dimension checked")
    };
    let radii = copositivity_radii(p, k);
    let faces = k.pseudo_faces()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(budget.seed, 0xC0905));
    let mut min_value = f64::INFINITY;
    let mut witness: Option<Vec<f64>> = None;
    let mut evaluations = 0usize;
    let feasible = |x: &[f64]| k.contains(x, 1e-12);

    'outer: for &rho in &radii {
        for face in faces.iter().filter(|f| f.dim > 0) {
            let rows = k.face_rows(&face.alpha);
            let basis = linalg::null_space(&rows, n, 1e-10);
            // minimum-norm point of the face's affine hull
            let x0: DVector<f64> = {
                let xi = DVector::from_column_slice(&face.interior_point);
                &xi - &basis * (basis.transpose() * &xi)
            };
            let r2 = rho * rho - x0.norm_squared();
            if r2 <= 0.0 {
                continue;
            }
            let ry = r2.sqrt();
            let kdim = basis.ncols();
            let embed = |w: &DVector<f64>| -> Vec<f64> { (&x0 + &basis * w * ry).iter().copied().collect() };
            let mut seeds: Vec<DVector<f64>> = Vec::new();
            if kdim == 1 {
                seeds.push(DVector::from_element(1, 1.0));
                seeds.push(DVector::from_element(1, -1.0));
            } else {
                for s in 0..budget.starts_per_face {
                    let w = if s % 2 == 0 {
                        let xs = k.sample_in_face(face, &mut rng, rho);
                        basis.transpose() * (DVector::from_vec(xs) - &x0)
                    } else {
                        DVector::from_fn(kdim, |_, _| rng.random_range(-1.0..1.0))
                    };
                    if w.norm() > 0.0 {
                        seeds.push(w.normalize());
                    }
                }
            }
            for w0 in seeds {
                let x = embed(&w0);
                if !feasible(&x) {
                    continue;
                }
                let (w, val, evals) = sphere_descent(&f, &grad, &feasible, &embed, &basis, ry, w0, budget.iters);
                evaluations += evals;
                if val < min_value {
                    min_value = val;
                }
                if val < COPOSITIVE_VIOLATION {
                    witness = Some(embed(&w));
                    break 'outer;
                }
            }
        }
    }
    let status = match witness {
        Some(w) => CopositivityStatus::NotCopositive { witness: w },
        None if evaluations > 0 && min_value > COPOSITIVE_CLEAR => CopositivityStatus::CopositiveNumeric,
        None => CopositivityStatus::Inconclusive,
    };
    Ok(CopositivityVerdict {
        status,
        min_value,
        radii,
        evaluations,
        budget: budget.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn sphere_descent(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> DVector<f64>,
    feasible: &dyn Fn(&[f64]) -> bool,
    embed: &dyn Fn(&DVector<f64>) -> Vec<f64>,
    basis: &DMatrix<f64>,
    ry: f64,
    w0: DVector<f64>,
    iters: usize,
) -> (DVector<f64>, f64, usize) {
    let mut w = w0;
    let mut x = embed(&w);
    let mut val = f(&x);
    let mut evals = 1;
    let mut eta: f64 = 1.0;
    for _ in 0..iters {
        let g = basis.transpose() * grad(&x) * ry;
        let gt = &g - &w * g.dot(&w);
        let gn = gt.norm();
        if gn < 1e-14 {
            break;
        }
        let mut moved = false;
        eta = (eta * 2.0).min(1.0);
        while eta > 1e-14 {
            let wn = (&w - &gt * (eta / gn)).normalize();
            let xn = embed(&wn);
            evals += 1;
            if feasible(&xn) {
                let vn = f(&xn);
                if vn < val {
                    w = wn;
                    x = xn;
                    val = vn;
                    moved = true;
                    break;
                }
            }
            eta *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (w, val, evals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MonotonicityStatus {
    StrictlyMonotoneNumeric,
    MonotoneNumeric,
    NotMonotone { x: Vec<f64>, y: Vec<f64> },
    Inconclusive,
}

impl MonotonicityStatus {
    pub fn label(&self) -> &'static str {
        match self {
            MonotonicityStatus::StrictlyMonotoneNumeric => "strictly_monotone_numeric",
            MonotonicityStatus::MonotoneNumeric => "monotone_numeric",
            MonotonicityStatus::NotMonotone { .. } => "not_monotone",
            MonotonicityStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub status: MonotonicityStatus,
    /// Smallest `<P(y) - P(x), y - x> / |y - x|^2` over tested pairs.
    pub min_ratio: f64,
    pub pairs_tested: usize,
    pub jacobian_points: usize,
}

/// Seeded pair test of `<P(y) - P(x), y - x> >= 0` on `K`, plus a check of
/// the symmetrized Jacobian along the affine hull of `K`.
pub fn monotonicity_check(p: &PolynomialMap, k: &PolyhedralSet, samples: usize, seed: u64) -> Result<MonotonicityVerdict> {
    let n = p.n();
    if k.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.dim(),
        });
    }
    let hull = linalg::null_space(k.e(), n, 1e-10);
    let single_point = hull.ncols() == 0 || (k.is_bounded() && k.generators().vertices.len() == 1);
    if single_point {
        return Ok(MonotonicityVerdict {
            status: MonotonicityStatus::Inconclusive,
            min_ratio: f64::NAN,
            pairs_tested: 0,
            jacobian_points: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x3070));
    let eval = |x: &[f64]| -> Vec<f64> { p.eval(x).expect("dimension checked").iter().copied().collect() };
    let pair_value = |x: &[f64], y: &[f64]| -> (f64, f64) {
        let (px, py) = (eval(x), eval(y));
        let dp: Vec<f64> = py.iter().zip(&px).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        (dot(&dp, &dx), norm(&dp) * norm(&dx))
    };
    let mut min_ratio = f64::INFINITY;
    let mut strict = true;
    let mut tested = 0;
    let mut jac_points = 0;
    for _ in 0..samples {
        let (x, _) = k.sample(&mut rng, 2.0)?;
        let (y, _) = k.sample(&mut rng, 2.0)?;
        let d2 = dist(&x, &y).powi(2);
        if d2 == 0.0 {
            continue;
        }
        tested += 1;
        let (v, scale) = pair_value(&x, &y);
        min_ratio = min_ratio.min(v / d2);
        if v < -1e-10 * scale.max(1.0) {
            return Ok(MonotonicityVerdict {
                status: MonotonicityStatus::NotMonotone { x, y },
                min_ratio,
                pairs_tested: tested,
                jacobian_points: jac_points,
            });
        }
        if v <= 0.0 {
            strict = false;
        }

        // negative curvature of the symmetrized Jacobian gives a nearby bad pair
        jac_points += 1;
        let j = p.jacobian(&x).expect("dimension checked");
        let sym = hull.transpose() * (&j + j.transpose()) * &hull * 0.5;
        let sym_scale = sym.amax().max(1.0);
        let eig = sym.symmetric_eigen();
        let (imin, lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &l)| (i, l))
            .expect("nonempty hull");
        if lmin < -1e-8 * sym_scale {
            let v: Vec<f64> = (&hull * eig.eigenvectors.column(imin)).iter().copied().collect();
            for h in [1e-3, 1e-2, 1e-1] {
                for sign in [1.0, -1.0] {
                    let yy: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + sign * h * b).collect();
                    if !k.contains(&yy, 0.0) {
                        continue;
                    }
                    let (val, scale) = pair_value(&x, &yy);
                    if val < -1e-10 * scale.max(1.0) {
                        return Ok(MonotonicityVerdict {
                            status: MonotonicityStatus::NotMonotone { x, y: yy },
                            min_ratio: min_ratio.min(val / (h * h)),
                            pairs_tested: tested,
                            jacobian_points: jac_points,
                        });
                    }
                }
            }
        }
    }
    let status = if tested == 0 {
        MonotonicityStatus::Inconclusive
    } else if strict {
        MonotonicityStatus::StrictlyMonotoneNumeric
    } else {
        MonotonicityStatus::MonotoneNumeric
    };
    Ok(MonotonicityVerdict {
        status,
        min_ratio,
        pairs_tested: tested,
        jacobian_points: jac_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    NonemptyBounded,
    NoCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceCertificate {
    pub zero_in_k: bool,
    pub copositivity: CopositivityVerdict,
    pub r0: R0Verdict,
    /// `None` when the R0 search was inconclusive.
    pub p_in_int_sc_dual: Option<bool>,
    pub conclusion: Conclusion,
    pub caveat: Option<String>,
}

/// Checks `0 in K`, copositivity of `P` on `K`, and `p in int(Sc*)`.
pub fn existence_certificate(
    prob: &VIProblem,
    cfg: &SolveConfig,
    budget: &CopositivityBudget,
) -> Result<ExistenceCertificate> {
    let k = prob.set();
    let zero_in_k = k.contains(&vec![0.0; prob.dim()], 1e-12);
    let copositivity = copositivity_check(prob.map(), k, budget)?;
    let r0 = is_r0_pair(k, prob.map(), cfg)?;
    let (p_in, caveat) = match &r0.status {
        R0Status::R0 => (Some(true), None),
        R0Status::NotR0 { .. } => (
            Some(int_dual_membership(&r0.sc_generators(), prob.perturbation(), INT_DUAL_TOL)),
            Some(format!(
                "Sc is represented by {} sampled direction(s); undiscovered directions could make the interior-of-dual test a false positive",
                r0.sc_samples.len()
            )),
        ),
        R0Status::Inconclusive => (None, Some("R0 search inconclusive; Sc unknown".to_string())),
    };
    let ok = zero_in_k
        && copositivity.status == CopositivityStatus::CopositiveNumeric
        && p_in == Some(true);
    Ok(ExistenceCertificate {
        zero_in_k,
        copositivity,
        r0,
        p_in_int_sc_dual: p_in,
        conclusion: if ok {
            Conclusion::NonemptyBounded
        } else {
            Conclusion::NoCertificate
        },
        caveat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GusOutcome {
    ConsistentWithGus { samples: usize },
    Violated { p: Vec<f64>, solutions: Vec<Vec<f64>>, nonisolated: bool },
    Inconclusive { p: Vec<f64> },
}

/// Solves `VI(K, P + p)` on each sample and looks for a count other than one.
pub fn gus_probe(k: &PolyhedralSet, p: &PolynomialMap, samples: &[Vec<f64>], cfg: &SolveConfig) -> Result<GusOutcome> {
    for q in samples {
        let prob = VIProblem::new(k.clone(), p.clone(), q.clone())?;
        let sol = kkt::solve(&prob, cfg)?;
        if sol.nonisolated() || sol.points.len() != 1 {
            return Ok(GusOutcome::Violated {
                p: q.clone(),
                solutions: sol.all_points(),
                nonisolated: sol.nonisolated(),
            });
        }
        if !sol.is_complete() {
            return Ok(GusOutcome::Inconclusive { p: q.clone() });
        }
    }
    Ok(GusOutcome::ConsistentWithGus {
        samples: samples.len(),
    })
}
