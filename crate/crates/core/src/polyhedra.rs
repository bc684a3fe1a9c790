//! Polyhedral sets `K = {x : Cx <= b, Ex = d}` and polyhedral cones.
//!
//! Every set carries its generator representation (vertices, unit rays and a
//! lineality basis), computed once at construction by the double description
//! method on the homogenized cone `{(x, t) : Cx - bt <= 0, Ex - dt = 0, t >= 0}`.
//! Face enumeration, the LP oracle and dual cones are all read off the
//! generators, so no simplex code is needed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};

/// Default cap on the number of inequality rows for pseudo-face enumeration.
pub const DEFAULT_FACE_CAP: usize = 20;
/// Cap on `s + t` for generator enumeration.
pub const GENERATOR_CAP: usize = 60;
/// Relative rank tolerance used by the LICQ test.
pub const LICQ_RANK_TOL: f64 = 1e-9;

const DD_TOL: f64 = 1e-10;
const TIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRep {
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
    pub lineality: Vec<Vec<f64>>,
}

impl GeneratorRep {
    fn sort(&mut self) {
        let lex = |a: &Vec<f64>, b: &Vec<f64>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        self.vertices.sort_by(lex);
        self.rays.sort_by(lex);
        self.lineality.sort_by(lex);
    }

    pub fn is_trivial_cone(&self) -> bool {
        self.rays.is_empty() && self.lineality.is_empty()
    }
}

/// Outcome of minimizing a linear function over a polyhedron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LpOutcome {
    Bounded { value: f64, point: Vec<f64> },
    Unbounded { ray: Vec<f64> },
}

/// The set of points where exactly the inequalities in `alpha` are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoFace {
    pub alpha: Vec<usize>,
    #[serde(skip)]
    pub mask: u64,
    /// Affine dimension of the face.
    pub dim: usize,
    /// A point of the pseudo-face (relative interior of the closed face).
    pub interior_point: Vec<f64>,
    #[serde(skip)]
    vertices: Vec<usize>,
    #[serde(skip)]
    rays: Vec<usize>,
}

impl PseudoFace {
    pub fn label(&self) -> String {
        if self.alpha.is_empty() {
            "{}".to_string()
        } else {
            let items: Vec<String> = self.alpha.iter().map(|i| i.to_string()).collect();
            format!("{{{}}}", items.join(","))
        }
    }
}

/// LICQ verdict over all nonempty pseudo-faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Licq {
    Holds,
    Fails { face: Vec<usize>, witness: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct PolyhedralSet {
    c: DMatrix<f64>,
    b: DVector<f64>,
    e: DMatrix<f64>,
    d: DVector<f64>,
    gens: GeneratorRep,
    vertex_masks: Vec<u64>,
    ray_masks: Vec<u64>,
}

impl PartialEq for PolyhedralSet {
    fn eq(&self, other: &Self) -> bool {
        self.c == other.c && self.b == other.b && self.e == other.e && self.d == other.d
    }
}

impl PolyhedralSet {
    /// Builds `{x : Cx <= b, Ex = d}`; fails with [`Error::EmptySet`] when infeasible.
    pub fn new(c: DMatrix<f64>, b: DVector<f64>, e: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let n = c.ncols().max(e.ncols());
        if n == 0 {
            return Err(Error::Invalid("cannot infer the dimension of an empty constraint system".into()));
        }
        Self::with_dim(n, c, b, e, d)
    }

    /// Like [`PolyhedralSet::new`] but with an explicit ambient dimension, so that
    /// either matrix may have zero rows.
    pub fn with_dim(
        n: usize,
        c: DMatrix<f64>,
        b: DVector<f64>,
        e: DMatrix<f64>,
        d: DVector<f64>,
    ) -> Result<Self> {
        let c = if c.nrows() == 0 { DMatrix::zeros(0, n) } else { c };
        let e = if e.nrows() == 0 { DMatrix::zeros(0, n) } else { e };
        for (cols, name) in [(c.ncols(), "C"), (e.ncols(), "E")] {
            if cols != n {
                return Err(Error::Invalid(format!("{name} has {cols} columns, expected {n}")));
            }
        }
        if b.len() != c.nrows() {
            return Err(Error::DimensionMismatch {
                expected: c.nrows(),
                found: b.len(),
            });
        }
        if d.len() != e.nrows() {
            return Err(Error::DimensionMismatch {
                expected: e.nrows(),
                found: d.len(),
            });
        }
        if c.iter().chain(b.iter()).chain(e.iter()).chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("constraint data must be finite".into()));
        }
        if c.nrows() + e.nrows() > GENERATOR_CAP {
            return Err(Error::FaceCap {
                rows: c.nrows() + e.nrows(),
                cap: GENERATOR_CAP,
            });
        }
        let gens = double_description(&c, &b, &e, &d);
        if gens.vertices.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut set = Self {
            c,
            b,
            e,
            d,
            gens,
            vertex_masks: Vec::new(),
            ray_masks: Vec::new(),
        };
        set.vertex_masks = set.gens.vertices.iter().map(|v| set.tight_mask(v)).collect();
        set.ray_masks = set.gens.rays.iter().map(|r| set.ray_mask(r)).collect();
        Ok(set)
    }

    pub fn inequalities(c: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = c.ncols();
        Self::with_dim(n, c, b, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// All of `R^n`.
    pub fn whole_space(n: usize) -> Result<Self> {
        Self::with_dim(n, DMatrix::zeros(0, n), DVector::zeros(0), DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn num_inequalities(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_equalities(&self) -> usize {
        self.e.nrows()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// Vertices, unit rays and lineality basis of the set.
    pub fn generators(&self) -> &GeneratorRep {
        &self.gens
    }

    pub fn is_bounded(&self) -> bool {
        self.gens.rays.is_empty() && self.gens.lineality.is_empty()
    }

    fn row_scale(&self, i: usize, x_norm: f64) -> f64 {
        self.c.row(i).norm() * (1.0 + x_norm) + self.b[i].abs()
    }

    fn tight_mask(&self, v: &[f64]) -> u64 {
        let xn = norm(v);
        let mut mask = 0u64;
        for i in 0..self.c.nrows() {
            let r = self.row_value(i, v) - self.b[i];
            if r.abs() <= TIGHT_TOL * self.row_scale(i, xn) {
                mask |= 1 << i;
            }
        }
        mask
    }

    fn ray_mask(&self, r: &[f64]) -> u64 {
        let mut mask = 0u64;
        for i in 0..self.c.nrows() {
            if self.row_value(i, r).abs() <= TIGHT_TOL * self.c.row(i).norm() {
                mask |= 1 << i;
            }
        }
        mask
    }

    fn row_value(&self, i: usize, x: &[f64]) -> f64 {
        self.c.row(i).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `Cx <= b + tol` and `|Ex - d| <= tol`, componentwise.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let xv = DVector::from_column_slice(x);
        let cx = &self.c * &xv;
        let ex = &self.e * &xv;
        cx.iter().zip(self.b.iter()).all(|(l, r)| *l <= r + tol)
            && ex.iter().zip(self.d.iter()).all(|(l, r)| (l - r).abs() <= tol)
    }

    /// Inequality rows active at `x` within `tol` (relative to row scale).
    pub fn active_set(&self, x: &[f64], tol: f64) -> Vec<usize> {
        let xn = norm(x);
        (0..self.c.nrows())
            .filter(|&i| (self.row_value(i, x) - self.b[i]).abs() <= tol * self.row_scale(i, xn))
            .collect()
    }

    /// `{v : Cv <= 0, Ev = 0}`.
    pub fn recession_cone(&self) -> PolyhedralCone {
        PolyhedralCone::new(self.c.clone(), self.e.clone()).expect("a cone always contains 0")
    }

    /// Nonempty pseudo-faces, in increasing order of the active-set bitmask.
    pub fn pseudo_faces(&self) -> Result<Vec<PseudoFace>> {
        self.pseudo_faces_capped(DEFAULT_FACE_CAP)
    }

    pub fn pseudo_faces_capped(&self, cap: usize) -> Result<Vec<PseudoFace>> {
        let s = self.c.nrows();
        if s > cap.min(63) {
            return Err(Error::FaceCap { rows: s, cap });
        }
        let mut faces = Vec::new();
        for mask in 0u64..(1u64 << s) {
            if let Some(face) = self.face_for_mask(mask) {
                faces.push(face);
            }
        }
        Ok(faces)
    }

    fn face_for_mask(&self, mask: u64) -> Option<PseudoFace> {
        let vertices: Vec<usize> = (0..self.vertex_masks.len())
            .filter(|&k| self.vertex_masks[k] & mask == mask)
            .collect();
        if vertices.is_empty() {
            return None;
        }
        let rays: Vec<usize> = (0..self.ray_masks.len())
            .filter(|&k| self.ray_masks[k] & mask == mask)
            .collect();
        let all_rows = if self.c.nrows() >= 64 { u64::MAX } else { (1u64 << self.c.nrows()) - 1 };
        let implicit = vertices
            .iter()
            .map(|&k| self.vertex_masks[k])
            .chain(rays.iter().map(|&k| self.ray_masks[k]))
            .fold(all_rows, |acc, m| acc & m);
        if implicit != mask {
            return None;
        }
        let alpha: Vec<usize> = (0..self.c.nrows()).filter(|i| mask & (1 << i) != 0).collect();
        let n = self.dim();
        let mut point = vec![0.0; n];
        for &k in &vertices {
            for (p, v) in point.iter_mut().zip(&self.gens.vertices[k]) {
                *p += v / vertices.len() as f64;
            }
        }
        for &k in &rays {
            for (p, r) in point.iter_mut().zip(&self.gens.rays[k]) {
                *p += r;
            }
        }
        let rows = linalg::vstack(&linalg::select_rows(&self.c, &alpha), &self.e, n);
        let dim = n - linalg::rank(&rows, LICQ_RANK_TOL);
        Some(PseudoFace {
            alpha,
            mask,
            dim,
            interior_point: point,
            vertices,
            rays,
        })
    }

    /// Stacked constraint rows `[C_alpha; E]` of a face.
    pub fn face_rows(&self, alpha: &[usize]) -> DMatrix<f64> {
        linalg::vstack(&linalg::select_rows(&self.c, alpha), &self.e, self.dim())
    }

    pub fn licq_check(&self) -> Result<Licq> {
        for face in self.pseudo_faces()? {
            let rows = self.face_rows(&face.alpha);
            if rows.nrows() == 0 {
                continue;
            }
            let full = linalg::rank(&rows, LICQ_RANK_TOL) == rows.nrows();
            if !full {
                return Ok(Licq::Fails {
                    face: face.alpha.clone(),
                    witness: face.interior_point.clone(),
                });
            }
        }
        Ok(Licq::Holds)
    }

    /// Random points of the set: a face is drawn uniformly among nonempty
    /// pseudo-faces, then a strictly positive combination of its generators.
    pub fn sample<R: Rng>(&self, rng: &mut R, scale: f64) -> Result<(Vec<f64>, Vec<usize>)> {
        let faces = self.pseudo_faces()?;
        let face = &faces[rng.random_range(0..faces.len())];
        Ok((self.sample_in_face(face, rng, scale), face.alpha.clone()))
    }

    pub fn sample_in_face<R: Rng>(&self, face: &PseudoFace, rng: &mut R, scale: f64) -> Vec<f64> {
        let n = self.dim();
        let mut x = vec![0.0; n];
        let weights: Vec<f64> = face.vertices.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (w, &k) in weights.iter().zip(&face.vertices) {
            for (xi, v) in x.iter_mut().zip(&self.gens.vertices[k]) {
                *xi += w / total * v;
            }
        }
        for &k in &face.rays {
            let t = rng.random_range(0.01..1.0) * scale;
            for (xi, r) in x.iter_mut().zip(&self.gens.rays[k]) {
                *xi += t * r;
            }
        }
        for l in &self.gens.lineality {
            let t = rng.random_range(-1.0..1.0) * scale;
            for (xi, r) in x.iter_mut().zip(l) {
                *xi += t * r;
            }
        }
        x
    }

    /// Minimizes `<c, x>` over the set, with ray tests at tolerance `1e-12 * |c|`.
    pub fn lp_minimize(&self, c: &[f64]) -> LpOutcome {
        self.lp_minimize_tol(c, 1e-12 * norm(c).max(1.0))
    }

    pub fn lp_minimize_tol(&self, c: &[f64], tol: f64) -> LpOutcome {
        for r in &self.gens.rays {
            if dot(c, r) < -tol {
                return LpOutcome::Unbounded { ray: r.clone() };
            }
        }
        for l in &self.gens.lineality {
            let v = dot(c, l);
            if v.abs() > tol {
                let ray = if v > 0.0 { l.iter().map(|x| -x).collect() } else { l.clone() };
                return LpOutcome::Unbounded { ray };
            }
        }
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for v in &self.gens.vertices {
            let val = dot(c, v);
            if best.is_none_or(|(b, _)| val < b) {
                best = Some((val, v));
            }
        }
        let (value, point) = best.expect("nonempty set has a vertex");
        LpOutcome::Bounded {
            value,
            point: point.clone(),
        }
    }
}

/// `{v : Cv <= 0, Ev = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralCone {
    set: PolyhedralSet,
}

impl PolyhedralCone {
    pub fn new(c: DMatrix<f64>, e: DMatrix<f64>) -> Result<Self> {
        let n = c.ncols().max(e.ncols());
        let (s, t) = (c.nrows(), e.nrows());
        Self::with_dim(n, c, e, s, t)
    }

    fn with_dim(n: usize, c: DMatrix<f64>, e: DMatrix<f64>, s: usize, t: usize) -> Result<Self> {
        Ok(Self {
            set: PolyhedralSet::with_dim(n, c, DVector::zeros(s), e, DVector::zeros(t))?,
        })
    }

    pub fn from_inequalities(c: DMatrix<f64>) -> Result<Self> {
        let n = c.ncols();
        Self::new(c, DMatrix::zeros(0, n))
    }

    /// The cone `{0}` in `R^n`.
    pub fn zero(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(0, n), DMatrix::identity(n, n))
    }

    pub fn as_set(&self) -> &PolyhedralSet {
        &self.set
    }

    pub fn into_set(self) -> PolyhedralSet {
        self.set
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn generators(&self) -> &GeneratorRep {
        self.set.generators()
    }

    pub fn is_zero(&self) -> bool {
        self.set.is_bounded()
    }

    /// Generators of `{y : <y, x> >= 0 for all x in the cone}`.
    pub fn dual_cone(&self) -> GeneratorRep {
        let n = self.dim();
        let g = self.generators();
        let c = DMatrix::from_fn(g.rays.len(), n, |i, j| -g.rays[i][j]);
        let e = DMatrix::from_fn(g.lineality.len(), n, |i, j| g.lineality[i][j]);
        let (s, t) = (c.nrows(), e.nrows());
        PolyhedralCone::with_dim(n, c, e, s, t)
            .expect("dual of a cone is a nonempty cone")
            .generators()
            .clone()
    }
}

/// `q` lies in the interior of `C*` for the cone `C` generated by `gens`:
/// `<r, q> > tol` for every ray and no lineality, or `C = {0}`.
pub fn int_dual_membership(gens: &GeneratorRep, q: &[f64], tol: f64) -> bool {
    if gens.is_trivial_cone() {
        return true;
    }
    if !gens.lineality.is_empty() {
        return false;
    }
    gens.rays.iter().all(|r| dot(r, q) > tol)
}

#[derive(Clone)]
struct DdRay {
    v: DVector<f64>,
    tight: Vec<bool>,
}

// Double description on the homogenized cone in R^(n+1).
fn double_description(c: &DMatrix<f64>, b: &DVector<f64>, e: &DMatrix<f64>, d: &DVector<f64>) -> GeneratorRep {
    let n = c.ncols();
    let big = n + 1;
    let homog = |row: nalgebra::DMatrixView<f64>, rhs: f64| -> DVector<f64> {
        let mut a = DVector::zeros(big);
        for j in 0..n {
            a[j] = row[j];
        }
        a[n] = -rhs;
        let s = a.norm();
        if s > 0.0 {
            a /= s;
        }
        a
    };
    let mut constraints: Vec<(DVector<f64>, bool)> = Vec::new();
    for j in 0..e.nrows() {
        constraints.push((homog(e.rows(j, 1), d[j]), true));
    }
    let mut tau = DVector::zeros(big);
    tau[n] = -1.0;
    constraints.push((tau, false));
    for i in 0..c.nrows() {
        constraints.push((homog(c.rows(i, 1), b[i]), false));
    }

    let mut lin: Vec<DVector<f64>> = (0..big)
        .map(|i| {
            let mut v = DVector::zeros(big);
            v[i] = 1.0;
            v
        })
        .collect();
    let mut rays: Vec<DdRay> = Vec::new();
    let mut processed: Vec<DVector<f64>> = Vec::new();

    for (a, is_eq) in constraints {
        if a.norm() == 0.0 {
            // 0 <= rhs rows with rhs >= 0 after normalization are vacuous
            continue;
        }
        let pivot = lin
            .iter()
            .enumerate()
            .map(|(k, l)| (k, a.dot(l).abs()))
            .filter(|&(_, v)| v > DD_TOL)
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(k, _)| k);
        if let Some(k) = pivot {
            let l0 = lin.remove(k);
            let al0 = a.dot(&l0);
            for l in lin.iter_mut() {
                let coef = a.dot(l) / al0;
                *l -= &l0 * coef;
            }
            lin = orthonormalize(lin);
            for r in rays.iter_mut() {
                let coef = a.dot(&r.v) / al0;
                r.v -= &l0 * coef;
                r.tight.push(true);
            }
            if !is_eq {
                let dir = if al0 > 0.0 { -l0 } else { l0 };
                let mut tight = vec![true; processed.len()];
                tight.push(false);
                rays.push(DdRay { v: dir, tight });
            }
        } else {
            let vals: Vec<f64> = rays.iter().map(|r| a.dot(&r.v)).collect();
            let pointed_dim = big - lin.len();
            let mut next: Vec<DdRay> = Vec::new();
            for (r, &v) in rays.iter().zip(&vals) {
                let keep = if is_eq { v.abs() <= DD_TOL } else { v <= DD_TOL };
                if keep {
                    let mut t = r.tight.clone();
                    t.push(v.abs() <= DD_TOL);
                    next.push(DdRay { v: r.v.clone(), tight: t });
                }
            }
            for (i, p) in rays.iter().enumerate() {
                if vals[i] <= DD_TOL {
                    continue;
                }
                for (j, q) in rays.iter().enumerate() {
                    if vals[j] >= -DD_TOL {
                        continue;
                    }
                    let common: Vec<usize> = (0..processed.len())
                        .filter(|&k| p.tight[k] && q.tight[k])
                        .collect();
                    if common.len() + 2 < pointed_dim {
                        continue;
                    }
                    let rows = DMatrix::from_fn(common.len(), big, |r, col| processed[common[r]][col]);
                    if linalg::rank(&rows, 1e-9) + 2 != pointed_dim {
                        continue;
                    }
                    let v = &q.v * vals[i] - &p.v * vals[j];
                    let mut tight: Vec<bool> = (0..processed.len()).map(|k| p.tight[k] && q.tight[k]).collect();
                    tight.push(true);
                    next.push(DdRay { v, tight });
                }
            }
            rays = next;
        }
        processed.push(a);
        // canonical form: orthogonal to lineality, unit norm, deduplicated
        let mut cleaned: Vec<DdRay> = Vec::new();
        for mut r in rays.drain(..) {
            for l in &lin {
                let coef = r.v.dot(l);
                r.v -= l * coef;
            }
            let s = r.v.norm();
            if s <= DD_TOL {
                continue;
            }
            r.v /= s;
            if !cleaned.iter().any(|o| (&o.v - &r.v).norm() <= 1e-8) {
                cleaned.push(r);
            }
        }
        rays = cleaned;
    }

    let mut gens = GeneratorRep {
        vertices: Vec::new(),
        rays: Vec::new(),
        lineality: Vec::new(),
    };
    let lin_x: Vec<DVector<f64>> = lin.iter().map(|l| l.rows(0, n).into_owned()).collect();
    let lin_x = orthonormalize(lin_x);
    for r in &rays {
        let t = r.v[n];
        let x: Vec<f64> = r.v.rows(0, n).iter().copied().collect();
        if t > 1e-12 {
            let mut v: Vec<f64> = x.iter().map(|xi| xi / t).collect();
            for xi in v.iter_mut() {
                if xi.abs() < 1e-14 {
                    *xi = 0.0;
                }
            }
            gens.vertices.push(v);
        } else {
            let s = norm(&x);
            if s > DD_TOL {
                gens.rays.push(x.iter().map(|xi| clean(xi / s)).collect());
            }
        }
    }
    gens.lineality = lin_x
        .iter()
        .map(|l| l.iter().map(|&v| clean(v)).collect())
        .collect();
    gens.sort();
    gens
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-14 {
        0.0
    } else {
        v
    }
}

fn orthonormalize(vs: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for mut v in vs {
        for o in &out {
            let coef = v.dot(o);
            v -= o * coef;
        }
        let s = v.norm();
        if s > DD_TOL {
            out.push(v / s);
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PolyhedralSetJson {
    #[serde(rename = "C", default)]
    c: Vec<Vec<f64>>,
    #[serde(default)]
    b: Vec<f64>,
    #[serde(rename = "E", default)]
    e: Vec<Vec<f64>>,
    #[serde(default)]
    d: Vec<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PolyhedralSetJson {
    pub(crate) fn into_set(self, n: usize) -> Result<PolyhedralSet> {
        PolyhedralSet::with_dim(
            n,
            matrix_from_rows(&self.c, n)?,
            DVector::from_vec(self.b),
            matrix_from_rows(&self.e, n)?,
            DVector::from_vec(self.d),
        )
    }

    pub(crate) fn from_set(k: &PolyhedralSet) -> Self {
        Self {
            c: rows_of(&k.c),
            b: k.b.iter().copied().collect(),
            e: rows_of(&k.e),
            d: k.d.iter().copied().collect(),
        }
    }
}

impl Serialize for PolyhedralSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PolyhedralSetJson::from_set(self).serialize(serializer)
    }
}

impl PolyhedralSet {
    /// Parses the `{"C", "b", "E", "d"}` fragment for an ambient dimension `n`.
    pub fn from_json_value(value: serde_json::Value, n: usize) -> Result<Self> {
        let raw: PolyhedralSetJson = serde_json::from_value(value)?;
        raw.into_set(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx_set(actual: &[Vec<f64>], expected: &[Vec<f64>]) -> bool {
        actual.len() == expected.len()
            && expected
                .iter()
                .all(|e| actual.iter().any(|a| linalg::dist(a, e) < 1e-9))
    }

    #[test]
    fn recession_cone_examples() {
        let orthant = fixtures::nonnegative_orthant(2);
        let rc = orthant.recession_cone();
        assert!(approx_set(&rc.generators().rays, &[vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert!(rc.generators().lineality.is_empty());

        assert!(fixtures::unit_box(2).recession_cone().is_zero());

        let half = fixtures::right_half_plane();
        let rc = half.recession_cone();
        assert!(approx_set(&rc.generators().rays, &[vec![1.0, 0.0]]));
        assert_eq!(rc.generators().lineality.len(), 1);
        assert!((rc.generators().lineality[0][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_cone_examples() {
        let orthant = PolyhedralCone::from_inequalities(-DMatrix::<f64>::identity(2, 2)).unwrap();
        let dual = orthant.dual_cone();
        assert!(approx_set(&dual.rays, &[vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert!(dual.lineality.is_empty());

        let half = fixtures::right_half_plane().recession_cone();
        let dual = half.dual_cone();
        assert!(approx_set(&dual.rays, &[vec![1.0, 0.0]]));
        assert!(dual.lineality.is_empty());
        // soundness against sampled members of the half-plane
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (x, _) = half.as_set().sample(&mut rng, 10.0).unwrap();
            for y in &dual.rays {
                assert!(dot(y, &x) >= -1e-10);
            }
        }

        let zero = PolyhedralCone::zero(3).unwrap();
        let dual = zero.dual_cone();
        assert_eq!(dual.lineality.len(), 3);
        assert!(dual.rays.is_empty());
    }

    #[test]
    fn pseudo_face_examples() {
        let faces = fixtures::nonnegative_orthant(2).pseudo_faces().unwrap();
        assert_eq!(faces.len(), 4);
        let dims: Vec<usize> = faces.iter().map(|f| f.dim).collect();
        assert_eq!(dims, vec![2, 1, 1, 0]);

        assert_eq!(fixtures::right_half_plane().pseudo_faces().unwrap().len(), 2);

        let tri = fixtures::unit_triangle().pseudo_faces().unwrap();
        assert_eq!(tri.len(), 7);
        assert!(tri.iter().all(|f| f.alpha != vec![0, 1, 2]));
    }

    #[test]
    fn triangle_faces_match_subset_enumeration() {
        // brute force: a subset is a pseudo-face iff some point has exactly that
        // active set; search a fine grid plus the vertices
        let tri = fixtures::unit_triangle();
        let mut seen = std::collections::BTreeSet::new();
        let steps = 40;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let x = [i as f64 / steps as f64, j as f64 / steps as f64];
                seen.insert(tri.active_set(&x, 1e-12));
            }
        }
        let faces: std::collections::BTreeSet<Vec<usize>> =
            tri.pseudo_faces().unwrap().into_iter().map(|f| f.alpha).collect();
        assert_eq!(seen, faces);
    }

    #[test]
    fn face_cap_is_enforced() {
        let k = fixtures::unit_box(2);
        assert!(matches!(k.pseudo_faces_capped(3), Err(Error::FaceCap { rows: 4, cap: 3 })));
    }

    #[test]
    fn licq_examples() {
        assert_eq!(fixtures::nonnegative_orthant(2).licq_check().unwrap(), Licq::Holds);
        assert_eq!(fixtures::right_half_plane().licq_check().unwrap(), Licq::Holds);
        let dup = PolyhedralSet::inequalities(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, -1.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0, 0.0]),
        )
        .unwrap();
        match dup.licq_check().unwrap() {
            Licq::Fails { face, .. } => assert_eq!(face, vec![0, 1]),
            Licq::Holds => panic!("duplicated row must break LICQ"),
        }
    }

    #[test]
    fn generator_examples() {
        let g = fixtures::unit_box(2).generators().clone();
        assert!(approx_set(
            &g.vertices,
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]
        ));
        assert!(g.rays.is_empty() && g.lineality.is_empty());

        let g = fixtures::nonnegative_orthant(2).generators().clone();
        assert!(approx_set(&g.vertices, &[vec![0.0, 0.0]]));
        assert!(approx_set(&g.rays, &[vec![1.0, 0.0], vec![0.0, 1.0]]));

        let half = fixtures::right_half_plane();
        let g = half.generators();
        assert!(approx_set(&g.vertices, &[vec![0.0, 0.0]]));
        assert!(approx_set(&g.rays, &[vec![1.0, 0.0]]));
        assert_eq!(g.lineality.len(), 1);
    }

    #[test]
    fn half_plane_generators_cross_check() {
        // membership oracle vs. generator decomposition on 100 random points
        let half = fixtures::right_half_plane();
        let g = half.generators();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            // decompose x = v + a*ray + b*lin
            let a = dot(&x, &g.rays[0]);
            let bcoef = dot(&x, &g.lineality[0]);
            let recon: Vec<f64> = (0..2)
                .map(|j| g.vertices[0][j] + a * g.rays[0][j] + bcoef * g.lineality[0][j])
                .collect();
            assert!(linalg::dist(&recon, &x) < 1e-12);
            assert_eq!(half.contains(&x, 0.0), a >= 0.0);
        }
    }

    #[test]
    fn lp_examples() {
        let orthant = fixtures::nonnegative_orthant(2);
        assert_eq!(
            orthant.lp_minimize(&[1.0, 1.0]),
            LpOutcome::Bounded { value: 0.0, point: vec![0.0, 0.0] }
        );
        match orthant.lp_minimize(&[-1.0, 0.0]) {
            LpOutcome::Unbounded { ray } => assert!(linalg::dist(&ray, &[1.0, 0.0]) < 1e-12),
            other => panic!("expected unbounded, got {other:?}"),
        }
        match fixtures::unit_triangle().lp_minimize(&[1.0, 1.0]) {
            LpOutcome::Bounded { value, point } => {
                assert_eq!(value, 0.0);
                assert!(linalg::norm(&point) < 1e-12);
            }
            other => panic!("expected bounded, got {other:?}"),
        }
    }

    #[test]
    fn contains_examples() {
        let orthant = fixtures::nonnegative_orthant(2);
        assert!(orthant.contains(&[0.0, 0.0], 0.0));
        assert!(orthant.contains(&[-1e-12, 0.0], 1e-9));
        assert!(!orthant.contains(&[-1.0, 0.0], 1e-9));
    }

    #[test]
    fn int_dual_membership_examples() {
        let s = 0.5f64.sqrt();
        let diag = GeneratorRep {
            vertices: vec![vec![0.0, 0.0]],
            rays: vec![vec![s, s]],
            lineality: vec![],
        };
        assert!(int_dual_membership(&diag, &[1.0, 2.0], 1e-12));
        assert!(!int_dual_membership(&diag, &[1.0, -2.0], 1e-12));
        let zero = PolyhedralCone::zero(2).unwrap();
        assert!(int_dual_membership(zero.generators(), &[-3.0, 0.5], 1e-12));
        let half = fixtures::right_half_plane().recession_cone();
        assert!(!int_dual_membership(half.generators(), &[1.0, 0.0], 1e-12));
    }

    #[test]
    fn empty_set_is_rejected() {
        let infeasible = PolyhedralSet::inequalities(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        );
        assert!(matches!(infeasible, Err(Error::EmptySet)));
    }

    #[test]
    fn equality_constrained_segment() {
        // {x >= 0, x1 + x2 = 1}
        let k = PolyhedralSet::new(
            -DMatrix::<f64>::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!(approx_set(&k.generators().vertices, &[vec![1.0, 0.0], vec![0.0, 1.0]]));
        assert!(k.is_bounded());
        assert_eq!(k.pseudo_faces().unwrap().len(), 3);
    }

    #[test]
    fn json_fragment() {
        let v: serde_json::Value = serde_json::from_str(
            r#"{"C": [[-1, 0], [0, -1]], "b": [0, 0], "E": [], "d": []}"#,
        )
        .unwrap();
        let k = PolyhedralSet::from_json_value(v, 2).unwrap();
        assert_eq!(k, fixtures::nonnegative_orthant(2));
        let back = serde_json::to_value(&k).unwrap();
        assert_eq!(PolyhedralSet::from_json_value(back, 2).unwrap(), k);
        let bad: serde_json::Value = serde_json::from_str(r#"{"C": [], "x": 1}"#).unwrap();
        assert!(PolyhedralSet::from_json_value(bad, 2).is_err());
    }
}
