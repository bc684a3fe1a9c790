//! Polynomial maps `P: R^n -> R^n` stored as dense coefficient matrices.
//!
//! A map of degree at most `d` is the product `A * X(x)` where `X(x)` is the
//! vector of all monomials of total degree `<= d`. Monomials are ordered by
//! ascending total degree and, within one degree, by decreasing lexicographic
//! order of their exponent vectors, so the degree-`d` block reads
//! `x1^d, x1^(d-1) x2, ..., xn^d`. The ordering is part of the JSON format.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exponent vectors of every monomial in `n` variables of degree `<= d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    d: usize,
    exponents: Vec<Vec<u32>>,
    degrees: Vec<usize>,
}

impl MonomialBasis {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("dimension n must be positive".into()));
        }
        let mut exponents = Vec::with_capacity(binomial(n + d, d));
        for k in 0..=d {
            let mut current = vec![0u32; n];
            push_compositions(k as u32, 0, &mut current, &mut exponents);
        }
        let degrees = exponents
            .iter()
            .map(|a| a.iter().map(|&e| e as usize).sum())
            .collect();
        Ok(Self {
            n,
            d,
            exponents,
            degrees,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Declared capacity degree, not the degree of any particular map.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn degree_of(&self, column: usize) -> usize {
        self.degrees[column]
    }

    /// Column index of the given exponent vector.
    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|a| a.as_slice() == exponent)
    }

    /// Values of every monomial at `x`, in basis order.
    pub fn evaluate(&self, x: &[f64]) -> DVector<f64> {
        let powers = power_table(x, self.d);
        DVector::from_iterator(
            self.len(),
            self.exponents.iter().map(|a| monomial(&powers, a)),
        )
    }
}

// All exponent vectors of total degree `remaining` in decreasing lex order.
fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn power_table(x: &[f64], d: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| {
            let mut row = Vec::with_capacity(d + 1);
            let mut v = 1.0;
            for _ in 0..=d {
                row.push(v);
                v *= xi;
            }
            row
        })
        .collect()
}

fn monomial(powers: &[Vec<f64>], a: &[u32]) -> f64 {
    a.iter()
        .zip(powers)
        .map(|(&e, p)| p[e as usize])
        .product()
}

/// A polynomial map whose row `l` holds the coefficients of component `P_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    basis: Arc<MonomialBasis>,
    coeffs: DMatrix<f64>,
}

impl PolynomialMap {
    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        let basis = MonomialBasis::new(n, d)?;
        let m = basis.len();
        Ok(Self {
            basis: Arc::new(basis),
            coeffs: DMatrix::zeros(n, m),
        })
    }

    pub fn from_matrix(n: usize, d: usize, coeffs: DMatrix<f64>) -> Result<Self> {
        let basis = MonomialBasis::new(n, d)?;
        if coeffs.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coeffs.nrows(),
            });
        }
        if coeffs.ncols() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: coeffs.ncols(),
            });
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("coefficients must be finite".into()));
        }
        Ok(Self {
            basis: Arc::new(basis),
            coeffs,
        })
    }

    pub fn from_rows(n: usize, d: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rows.len(),
            });
        }
        let m = binomial(n + d, d);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        let coeffs = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        Self::from_matrix(n, d, coeffs)
    }

    /// Builds a map from `(component, exponent, coefficient)` triples; repeated
    /// terms accumulate.
    pub fn from_terms(n: usize, d: usize, terms: &[(usize, &[u32], f64)]) -> Result<Self> {
        let mut map = Self::zeros(n, d)?;
        for &(row, exponent, value) in terms {
            if row >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row + 1,
                });
            }
            let col = map.basis.index_of(exponent).ok_or_else(|| {
                Error::Invalid(format!("exponent {exponent:?} is not in the degree-{d} basis"))
            })?;
            map.coeffs[(row, col)] += value;
        }
        Ok(map)
    }

    /// The affine map `x -> M x + q`.
    pub fn affine(m: &DMatrix<f64>, q: &DVector<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.ncols(),
            });
        }
        if q.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: q.len(),
            });
        }
        let mut map = Self::zeros(n, 1)?;
        for i in 0..n {
            map.coeffs[(i, 0)] = q[i];
            for j in 0..n {
                map.coeffs[(i, 1 + j)] = m[(i, j)];
            }
        }
        Ok(map)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::affine(&DMatrix::identity(n, n), &DVector::zeros(n))
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Coefficient rows, for serialization.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.coeffs
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&v| v == 0.0)
    }

    /// Largest total degree carrying a nonzero coefficient (exact zero test).
    pub fn degree(&self) -> usize {
        (0..self.basis.len())
            .filter(|&c| self.coeffs.column(c).iter().any(|&v| v != 0.0))
            .map(|c| self.basis.degree_of(c))
            .max()
            .unwrap_or(0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.coeffs.norm()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: len,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(&self.coeffs * self.basis.evaluate(x))
    }

    /// Exact Jacobian obtained by differentiating each monomial column.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x.len())?;
        let n = self.n();
        let powers = power_table(x, self.basis.d);
        // dmono[(col, j)] = d/dx_j of monomial col
        let mut dmono = DMatrix::<f64>::zeros(self.basis.len(), n);
        for (col, a) in self.basis.exponents.iter().enumerate() {
            for j in 0..n {
                if a[j] == 0 {
                    continue;
                }
                let mut v = a[j] as f64;
                for (k, &e) in a.iter().enumerate() {
                    let e = if k == j { e - 1 } else { e };
                    v *= powers[k][e as usize];
                }
                dmono[(col, j)] = v;
            }
        }
        Ok(&self.coeffs * dmono)
    }

    fn with_columns(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut coeffs = self.coeffs.clone();
        for c in 0..self.basis.len() {
            if !keep(self.basis.degree_of(c)) {
                coeffs.column_mut(c).fill(0.0);
            }
        }
        Self {
            basis: Arc::clone(&self.basis),
            coeffs,
        }
    }

    /// The degree-`k` homogeneous part of the map.
    pub fn homogeneous_part(&self, k: usize) -> Self {
        self.with_columns(|deg| deg == k)
    }

    /// `P^inf`: the homogeneous part of top degree.
    pub fn leading_term(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::ZeroMap);
        }
        Ok(self.homogeneous_part(self.degree()))
    }

    /// Homogeneous parts of degree `0..=degree()`; they sum to `self`.
    pub fn homogeneous_components(&self) -> Vec<Self> {
        (0..=self.degree()).map(|k| self.homogeneous_part(k)).collect()
    }

    pub fn is_homogeneous(&self) -> bool {
        let deg = self.degree();
        (0..self.basis.len())
            .filter(|&c| self.basis.degree_of(c) != deg)
            .all(|c| self.coeffs.column(c).iter().all(|&v| v == 0.0))
    }

    /// The same map in a basis of larger capacity degree.
    pub fn embed(&self, d: usize) -> Result<Self> {
        if d < self.basis.d {
            if self.degree() > d {
                return Err(Error::Invalid(format!(
                    "cannot embed a degree-{} map into degree {d}",
                    self.degree()
                )));
            }
        } else if d == self.basis.d {
            return Ok(self.clone());
        }
        let mut out = Self::zeros(self.n(), d)?;
        for (c, a) in self.basis.exponents.iter().enumerate() {
            if let Some(target) = out.basis.index_of(a) {
                out.coeffs.set_column(target, &self.coeffs.column(c));
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: other.n(),
            });
        }
        let d = self.basis.d.max(other.basis.d);
        let a = self.embed(d)?;
        let b = other.embed(d)?;
        let sum = Self {
            basis: a.basis,
            coeffs: a.coeffs + b.coeffs,
        };
        let before = self.degree().max(other.degree());
        if !sum.is_zero() && sum.degree() < before && self.degree() == other.degree() {
            log::warn!(
                "leading coefficients cancelled: degree dropped from {before} to {}",
                sum.degree()
            );
        }
        Ok(sum)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, t: f64) -> Self {
        Self {
            basis: Arc::clone(&self.basis),
            coeffs: &self.coeffs * t,
        }
    }

    /// `P + p`: adds `p` to the constant column.
    pub fn shift(&self, p: &[f64]) -> Result<Self> {
        self.check_dim(p.len())?;
        let mut out = self.clone();
        for (i, &pi) in p.iter().enumerate() {
            out.coeffs[(i, 0)] += pi;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyMapJson {
    n: usize,
    d: usize,
    coeffs: Vec<Vec<f64>>,
}

impl Serialize for PolynomialMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PolyMapJson {
            n: self.n(),
            d: self.basis.d,
            coeffs: self.rows(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolynomialMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = PolyMapJson::deserialize(deserializer)?;
        PolynomialMap::from_rows(raw.n, raw.d, &raw.coeffs).map_err(serde::de::Error::custom)
    }
}
