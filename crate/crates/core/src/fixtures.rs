//! Small reference problems used by tests, the CLI and the Python bindings.

use nalgebra::{DMatrix, DVector};

use crate::polyhedra::PolyhedralSet;
use crate::polymap::PolynomialMap;

/// `x -> ((x1 - x2)^2, (x1 - x2)^2)`: copositive on the orthant, not an R0 map.
pub fn squared_difference_map() -> PolynomialMap {
    let row: Vec<(&[u32], f64)> = vec![(&[2, 0], 1.0), (&[1, 1], -2.0), (&[0, 2], 1.0)];
    let terms: Vec<(usize, &[u32], f64)> = (0..2)
        .flat_map(|l| row.iter().map(move |&(a, c)| (l, a, c)))
        .collect();
    PolynomialMap::from_terms(2, 2, &terms).expect("static fixture")
}

/// `x -> (x1^3, x2^3)`: strictly monotone, R0 on the half-plane `x1 >= 0`.
pub fn cubic_map() -> PolynomialMap {
    PolynomialMap::from_terms(2, 3, &[(0, &[3, 0], 1.0), (1, &[0, 3], 1.0)])
        .expect("static fixture")
}

/// `R^n_+` written as `-x <= 0`.
pub fn nonnegative_orthant(n: usize) -> PolyhedralSet {
    PolyhedralSet::inequalities(-DMatrix::identity(n, n), DVector::zeros(n))
        .expect("orthant is nonempty")
}

/// `{x in R^2 : x1 >= 0}`.
pub fn right_half_plane() -> PolyhedralSet {
    PolyhedralSet::inequalities(
        DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]),
        DVector::from_vec(vec![0.0]),
    )
    .expect("half-plane is nonempty")
}

/// `[0, 1]^n`.
pub fn unit_box(n: usize) -> PolyhedralSet {
    let mut c = DMatrix::zeros(2 * n, n);
    let mut b = DVector::zeros(2 * n);
    for i in 0..n {
        c[(2 * i, i)] = -1.0;
        c[(2 * i + 1, i)] = 1.0;
        b[2 * i + 1] = 1.0;
    }
    PolyhedralSet::inequalities(c, b).expect("box is nonempty")
}

/// The standard triangle `{x >= 0, x1 + x2 <= 1}`.
pub fn unit_triangle() -> PolyhedralSet {
    PolyhedralSet::inequalities(
        DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
        DVector::from_vec(vec![0.0, 0.0, 1.0]),
    )
    .expect("triangle is nonempty")
}
