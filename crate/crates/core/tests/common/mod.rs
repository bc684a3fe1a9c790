//! Independent oracles and property checks shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use polyvi::analysis::{self, CopositivityBudget, CopositivityStatus};
use polyvi::fixtures::*;
use polyvi::kkt::{satisfies_cp, solve, verify_solution, SolveConfig, VIProblem};
use polyvi::stability::{hoelder_fit, HoelderFit};
use polyvi::{PolyhedralCone, PolyhedralSet, PolynomialMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn ex1(p: [f64; 2]) -> VIProblem {
    VIProblem::new(nonnegative_orthant(2), squared_difference_map(), p.to_vec()).unwrap()
}

pub fn ex2(p: [f64; 2]) -> VIProblem {
    VIProblem::new(right_half_plane(), cubic_map(), p.to_vec()).unwrap()
}

/// Closed-form solution of the cubic example on the half-plane.
pub fn ex2_closed_form(p: [f64; 2]) -> [f64; 2] {
    let x1 = if p[0] < 0.0 { (-p[0]).cbrt() } else { 0.0 };
    [x1, (-p[1]).cbrt()]
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    Points(Vec<[f64; 2]>),
    /// The set `{x >= 0 : x1 - x2 = c}`.
    Line(f64),
}

/// The squared-difference example's solution table as printed in the source.
pub fn ex1_stated_table(p: [f64; 2]) -> Expected {
    let [p1, p2] = p;
    if p1 == 0.0 && p2 == 0.0 {
        Expected::Line(0.0)
    } else if p1 == p2 && p2 < 0.0 {
        Expected::Line((-p1).sqrt())
    } else if p1 > p2 && p2 < 0.0 {
        Expected::Points(vec![[0.0, 0.0], [0.0, (-p2).sqrt()]])
    } else if p1 < 0.0 && p1 < p2 {
        Expected::Points(vec![[0.0, 0.0], [(-p1).sqrt(), 0.0]])
    } else {
        Expected::Points(vec![[0.0, 0.0]])
    }
}

/// The same solution set derived by hand from the KKT conditions on each face.
///
/// Origin: `F(0) = p` must lie in the orthant. Edge `x2 = 0`: `x1^2 + p1 = 0`
/// and multiplier `x1^2 + p2 >= 0`. Edge `x1 = 0` symmetric. Interior:
/// `(x1 - x2)^2 = -p1 = -p2`, which gives both lines `x1 - x2 = +-sqrt(-p1)`.
pub fn ex1_closed_form(p: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let [p1, p2] = p;
    let mut pts = Vec::new();
    let mut lines = Vec::new();
    if p1 == p2 && p1 <= 0.0 {
        let c = (-p1).sqrt();
        lines.push(c);
        if c > 0.0 {
            lines.push(-c);
        }
        return (pts, lines);
    }
    if p1 >= 0.0 && p2 >= 0.0 {
        pts.push([0.0, 0.0]);
    }
    if p1 < 0.0 && p2 >= p1 {
        pts.push([(-p1).sqrt(), 0.0]);
    }
    if p2 < 0.0 && p1 >= p2 {
        pts.push([0.0, (-p2).sqrt()]);
    }
    (pts, lines)
}

/// Every solution of the LCP `x >= 0, Mx + q >= 0, x^T (Mx + q) = 0` by
/// enumerating complementary bases.
pub fn brute_force_lcp(m: &DMatrix<f64>, q: &DVector<f64>) -> Vec<Vec<f64>> {
    let n = q.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let mut x = DVector::zeros(n);
        if !s.is_empty() {
            let mss = DMatrix::from_fn(s.len(), s.len(), |i, j| m[(s[i], s[j])]);
            let qs = DVector::from_fn(s.len(), |i, _| -q[s[i]]);
            let Some(xs) = mss.lu().solve(&qs) else { continue };
            for (k, &i) in s.iter().enumerate() {
                x[i] = xs[k];
            }
        }
        let w = m * &x + q;
        let ok = (0..n).all(|i| x[i] >= -1e-12 && w[i] >= -1e-12);
        if ok {
            let v: Vec<f64> = x.iter().copied().collect();
            if !out.iter().any(|o| dist(o, &v) < 1e-9) {
                out.push(v);
            }
        }
    }
    out
}

/// Grid points of `K ∩ [0, r]^2` with step `h` that solve the VI up to `gap`,
/// checked against the generators of `K` (independently of the solver).
pub fn grid_vi_solutions(prob: &VIProblem, h: f64, r: f64, gap: f64) -> Vec<Vec<f64>> {
    let g = prob.set().generators().clone();
    let steps = (r / h).round() as usize;
    let mut out = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            let x = vec![i as f64 / (1.0 / h), j as f64 / (1.0 / h)];
            if !prob.set().contains(&x, 1e-12) {
                continue;
            }
            let f: Vec<f64> = prob.field().eval(&x).unwrap().iter().copied().collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
            let fx = dot(&f, &x);
            let ok = g.rays.iter().all(|ray| dot(&f, ray) >= -gap)
                && g.lineality.iter().all(|l| dot(&f, l).abs() <= gap)
                && g.vertices.iter().all(|v| dot(&f, v) - fx >= -gap);
            if ok {
                out.push(x);
            }
        }
    }
    out
}

/// Sparse polynomial arithmetic for building test maps.
type Poly = BTreeMap<Vec<u32>, f64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

fn linear_form(a: &[f64], c: f64) -> Poly {
    let n = a.len();
    let mut p = Poly::new();
    p.insert(vec![0; n], c);
    for (i, &ai) in a.iter().enumerate() {
        let mut e = vec![0; n];
        e[i] = 1;
        p.insert(e, ai);
    }
    p
}

fn map_from_polys(rows: &[Poly], n: usize, d: usize) -> PolynomialMap {
    let terms: Vec<(usize, Vec<u32>, f64)> = rows
        .iter()
        .enumerate()
        .flat_map(|(l, p)| p.iter().map(move |(e, &c)| (l, e.clone(), c)))
        .collect();
    let refs: Vec<(usize, &[u32], f64)> = terms.iter().map(|(l, e, c)| (*l, e.as_slice(), *c)).collect();
    PolynomialMap::from_terms(n, d, &refs).unwrap()
}

/// `grad phi - grad phi(0)` for the convex
/// `phi(x) = sum_k w_k (a_k.x + c_k)^4 / 4 + x^T S x / 2` with `S` PSD.
pub fn random_monotone_map(n: usize, seed: u64) -> PolynomialMap {
    let mut r = rng(seed);
    let mut rows: Vec<Poly> = vec![Poly::new(); n];
    for _ in 0..3 {
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        let c: f64 = StandardNormal.sample(&mut r);
        let w: f64 = r.random_range(0.1..1.0);
        let lf = linear_form(&a, c);
        let cube = poly_mul(&poly_mul(&lf, &lf), &lf);
        for (l, row) in rows.iter_mut().enumerate() {
            for (e, v) in &cube {
                *row.entry(e.clone()).or_insert(0.0) += w * a[l] * v;
            }
        }
    }
    let b = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut r));
    let s = b.transpose() * &b;
    for (l, row) in rows.iter_mut().enumerate() {
        for j in 0..n {
            let mut e = vec![0; n];
            e[j] = 1;
            *row.entry(e).or_insert(0.0) += s[(l, j)];
        }
        row.remove(&vec![0; n]);
    }
    map_from_polys(&rows, n, 3)
}

/// Random polyhedron `{Cx <= b}` with `b >= 0`, so it contains the origin.
pub fn random_set_with_origin(n: usize, seed: u64) -> PolyhedralSet {
    let mut r = rng(seed);
    let m = n + 1;
    let c = DMatrix::<f64>::from_fn(m, n, |_, _| StandardNormal.sample(&mut r));
    let b = DVector::from_fn(m, |_, _| r.random_range(0.0..1.0));
    PolyhedralSet::inequalities(c, b).unwrap()
}

/// The box `[-1, 1]^n` cut by random halfspaces through points near the origin.
pub fn random_polytope(n: usize, seed: u64) -> PolyhedralSet {
    let mut r = rng(seed);
    let cuts = r.random_range(1..4);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push(e.clone());
        rhs.push(1.0);
        rows.push(e.iter().map(|v| -v).collect());
        rhs.push(1.0);
    }
    for _ in 0..cuts {
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        rows.push(a);
        rhs.push(r.random_range(0.2..1.0));
    }
    let c = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    PolyhedralSet::inequalities(c, DVector::from_vec(rhs)).unwrap()
}

/// Random cone `{Cx <= 0}` in `R^n` with at most `max_rows` rows.
pub fn random_cone(n: usize, max_rows: usize, seed: u64) -> PolyhedralCone {
    let mut r = rng(seed);
    let m = r.random_range(1..=max_rows);
    let c = DMatrix::<f64>::from_fn(m, n, |_, _| StandardNormal.sample(&mut r));
    PolyhedralCone::from_inequalities(c).unwrap()
}

pub fn random_map(n: usize, d: usize, seed: u64) -> PolynomialMap {
    polyvi::stability::random_map(n, d, false, seed).unwrap()
}

// ---- property checks ----

/// Homogeneity of each component and the limit `P(t x) / t^d -> P^inf(x)`.
pub fn homogeneity_and_limit(seed: u64) -> Check {
    let mut r = rng(seed);
    let n = r.random_range(1..=3);
    let d = r.random_range(1..=4);
    let p = random_map(n, d, seed);
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let t: f64 = r.random_range(0.1..3.0);
    for (k, h) in p.homogeneous_components().iter().enumerate() {
        let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
        let lhs = h.eval(&tx).unwrap();
        let rhs = h.eval(&x).unwrap() * t.powi(k as i32);
        if (&lhs - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            return Err(format!("component {k} not homogeneous"));
        }
    }
    let lead = p.leading_term().map_err(|e| e.to_string())?;
    let target = lead.eval(&x).unwrap();
    let mut prev = f64::INFINITY;
    for lam in [1e2, 1e3, 1e4] {
        let lx: Vec<f64> = x.iter().map(|v| v * lam).collect();
        let ratio = p.eval(&lx).unwrap() / lam.powi(p.degree() as i32);
        let err = (ratio - &target).amax();
        if err > prev * 1.01 + 1e-12 {
            return Err(format!("limit error grew at lambda {lam}: {err} > {prev}"));
        }
        prev = err;
    }
    if prev > 1e-2 * (1.0 + target.amax()) {
        return Err(format!("limit error {prev} too large"));
    }
    Ok(())
}

/// `k + t v` stays in `K` for `k` in `K`, `v` in `K^inf`, `t >= 0`.
pub fn k_plus_recession(seed: u64) -> Check {
    let mut r = rng(seed);
    let n = r.random_range(2..=3);
    let k = random_set_with_origin(n, seed);
    let rec = k.recession_cone();
    let g = rec.generators();
    let mut dirs: Vec<Vec<f64>> = g.rays.clone();
    for l in &g.lineality {
        dirs.push(l.clone());
        dirs.push(l.iter().map(|v| -v).collect());
    }
    for _ in 0..20 {
        let (x, _) = k.sample(&mut r, 3.0).map_err(|e| e.to_string())?;
        if !k.contains(&x, 1e-9) {
            return Err(format!("sample {x:?} outside K"));
        }
        for v in &dirs {
            let t: f64 = r.random_range(0.0..100.0);
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
            if !k.contains(&y, 1e-9 * (1.0 + t)) {
                return Err(format!("{x:?} + {t} * {v:?} left K"));
            }
        }
    }
    Ok(())
}

/// Random points of `K` lie in exactly one enumerated pseudo-face.
pub fn face_partition(seed: u64, count: usize) -> Check {
    let mut r = rng(seed);
    let n = r.random_range(2..=3);
    let k = if seed.is_multiple_of(2) {
        random_polytope(n, seed)
    } else {
        random_set_with_origin(n, seed)
    };
    let faces = k.pseudo_faces().map_err(|e| e.to_string())?;
    let g = k.generators().clone();
    let tol = 1e-9;
    for _ in 0..count {
        // combination drawn from generators directly, biased toward boundaries
        let mut x = vec![0.0; n];
        let w: Vec<f64> = g
            .vertices
            .iter()
            .map(|_| if r.random_bool(0.4) { 0.0 } else { r.random_range(0.0..1.0) })
            .collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = if total == 0.0 {
            let mut e = vec![0.0; w.len()];
            e[0] = 1.0;
            e
        } else {
            w.iter().map(|v| v / total).collect()
        };
        for (wi, v) in w.iter().zip(&g.vertices) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += wi * vi;
            }
        }
        for ray in &g.rays {
            if r.random_bool(0.5) {
                let t = r.random_range(0.0..2.0);
                for (xi, ri) in x.iter_mut().zip(ray) {
                    *xi += t * ri;
                }
            }
        }
        let slack: Vec<f64> = (0..k.num_inequalities())
            .map(|i| k.b()[i] - (0..n).map(|j| k.c()[(i, j)] * x[j]).sum::<f64>())
            .collect();
        if slack.iter().any(|&s| s.abs() > tol && s.abs() < 1e-6) {
            continue; // ambiguous band
        }
        let hits = faces
            .iter()
            .filter(|f| {
                (0..slack.len()).all(|i| {
                    if f.alpha.contains(&i) {
                        slack[i].abs() <= tol
                    } else {
                        slack[i] > tol
                    }
                })
            })
            .count();
        if hits != 1 {
            return Err(format!("point {x:?} lies in {hits} pseudo-faces"));
        }
    }
    Ok(())
}

/// On a cone the LP verification agrees with the complementarity conditions.
pub fn vi_cp_equivalence(seed: u64) -> Check {
    let mut r = rng(seed);
    let n = 2;
    let cone = if seed.is_multiple_of(3) {
        nonnegative_orthant(2).recession_cone()
    } else {
        random_cone(n, n, seed)
    };
    let map = random_map(n, r.random_range(1..=2), seed ^ 0xABC);
    let prob = VIProblem::new(cone.as_set().clone(), map, vec![0.0; n]).map_err(|e| e.to_string())?;
    let cfg = SolveConfig {
        multistart: 16,
        seed,
        ..Default::default()
    };
    let sol = solve(&prob, &cfg).map_err(|e| e.to_string())?;
    let field = prob.field().clone();
    for x in sol.all_points() {
        let a = verify_solution(&prob, &x, 1e-8);
        let b = satisfies_cp(&cone, &field, &x, 1e-7);
        if a != b {
            return Err(format!("solver output {x:?}: vi {a}, cp {b}"));
        }
    }
    for _ in 0..100 {
        let (x, _) = cone.as_set().sample(&mut r, 2.0).map_err(|e| e.to_string())?;
        let a = verify_solution(&prob, &x, 1e-8);
        let b = satisfies_cp(&cone, &field, &x, 1e-8);
        if a != b {
            return Err(format!("random point {x:?}: vi {a}, cp {b}"));
        }
    }
    Ok(())
}

/// Same seed gives byte-identical output, independent of the thread count.
pub fn determinism(seed: u64) -> Check {
    let k = random_set_with_origin(2, seed);
    let map = random_map(2, 2, seed);
    let prob = VIProblem::new(k, map, vec![0.0, 0.0]).map_err(|e| e.to_string())?;
    let cfg = SolveConfig {
        multistart: 16,
        seed,
        ..Default::default()
    };
    let a = serde_json::to_string(&solve(&prob, &cfg).map_err(|e| e.to_string())?).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| serde_json::to_string(&solve(&prob, &cfg).unwrap()).unwrap());
    if a != b {
        return Err("serializations differ".into());
    }
    Ok(())
}

/// A monotone map with `P(0) = 0` is never reported not copositive on a set
/// containing the origin.
pub fn monotone_implies_copositive(seed: u64) -> Check {
    let n = 2;
    let p = random_monotone_map(n, seed);
    let k = random_set_with_origin(n, seed ^ 0x55);
    let mono = analysis::monotonicity_check(&p, &k, 100, seed).map_err(|e| e.to_string())?;
    if mono.status.label() == "not_monotone" {
        return Err(format!("constructed map reported not monotone: {mono:?}"));
    }
    let budget = CopositivityBudget {
        seed,
        starts_per_face: 8,
        ..Default::default()
    };
    let v = analysis::copositivity_check(&p, &k, &budget).map_err(|e| e.to_string())?;
    if let CopositivityStatus::NotCopositive { witness } = v.status {
        return Err(format!("monotone map reported not copositive at {witness:?}"));
    }
    Ok(())
}

/// The R0 verdict does not change under positive scaling.
pub fn scaling_invariance(seed: u64) -> Check {
    let mut r = rng(seed);
    let t = 10f64.powf(r.random_range(-1.0..1.0));
    let cfg = SolveConfig {
        multistart: 16,
        seed,
        ..Default::default()
    };
    let cases = [
        (nonnegative_orthant(2), squared_difference_map()),
        (right_half_plane(), cubic_map()),
        (nonnegative_orthant(2), random_map(2, 2, seed)),
    ];
    for (k, p) in &cases {
        let a = analysis::is_r0_pair(k, p, &cfg).map_err(|e| e.to_string())?.status;
        if a.label() == "inconclusive" {
            continue;
        }
        if !analysis::r0_scaling_invariance_check(k, p, t, &cfg).map_err(|e| e.to_string())? {
            return Err(format!("verdict {} changed under scaling by {t}", a.label()));
        }
    }
    Ok(())
}

/// The R0 verdict does not change when lower-degree terms are added.
pub fn lower_degree_invariance(seed: u64) -> Check {
    let cfg = SolveConfig {
        multistart: 16,
        seed,
        ..Default::default()
    };
    let mut r = rng(seed);
    let q = random_map(2, r.random_range(0..=1), seed ^ 0x77);
    let cases = [
        (nonnegative_orthant(2), squared_difference_map()),
        (right_half_plane(), cubic_map()),
    ];
    for (k, p) in &cases {
        if !analysis::r0_lower_degree_invariance_check(k, p, &q, &cfg).map_err(|e| e.to_string())? {
            return Err("verdict changed under a lower-degree perturbation".into());
        }
    }
    Ok(())
}

/// `K = {x1 >= 0}`, `P = (x1^2, x2)`: near `p = 0` solutions move like `|q|^(1/2)`.
pub fn planted_exponent() -> Result<HoelderFit, String> {
    let map = PolynomialMap::from_terms(2, 2, &[(0, &[2, 0], 1.0), (1, &[0, 1], 1.0)]).unwrap();
    let prob = VIProblem::new(right_half_plane(), map, vec![0.0, 0.0]).unwrap();
    let fit = hoelder_fit(&prob, &[1e-1, 1e-2, 1e-3, 1e-4], 16, &SolveConfig::default()).map_err(|e| e.to_string())?;
    match fit.c {
        Some(c) if (c - 0.5).abs() <= 0.05 => Ok(fit),
        other => Err(format!("fitted exponent {other:?}, expected 0.5 +- 0.05")),
    }
}
