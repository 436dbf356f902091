//! Dense numerical-rank helpers built on the singular value decomposition.
//!
//! Rank decisions use a relative threshold: a singular value counts as zero
//! when it is at most `rank_tol · σ_max`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Singular values in descending order (empty for 0-sized matrices).
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn numerical_rank(m: &Matrix, rank_tol: f64) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rank_tol * smax).count()
}

/// Square matrix of full numerical rank; 0×0 counts as nonsingular.
pub fn is_nonsingular(m: &Matrix, rank_tol: f64) -> bool {
    assert!(
        m.is_square(),
        "nonsingularity is defined for square matrices"
    );
    numerical_rank(m, rank_tol) == m.nrows()
}

/// 2-norm condition number σ_max/σ_min (infinite when singular).
pub fn condition_number(m: &Matrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Orthonormal basis (as columns) of the numerical right kernel of `m`.
pub fn nullspace_basis(m: &Matrix, rank_tol: f64) -> Matrix {
    let n = m.ncols();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return Matrix::identity(n, n);
    }
    // Pad to at least n rows so that the thin SVD exposes all right singular vectors.
    let work = if m.nrows() < n {
        let mut padded = Matrix::zeros(n, n);
        padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let cols: Vec<Vector> = (0..s.len())
        .filter(|&k| smax == 0.0 || s[k] <= rank_tol * smax)
        .map(|k| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    }
}

/// Orthogonal projector onto the numerical kernel of `m`.
pub fn nullspace_projector(m: &Matrix, rank_tol: f64) -> Matrix {
    let basis = nullspace_basis(m, rank_tol);
    &basis * basis.transpose()
}

/// Oblique projector `N (Wᵀ N)⁻¹ Wᵀ` onto span(`basis`) along a random complement.
pub fn oblique_projector<R: Rng + ?Sized>(basis: &Matrix, rng: &mut R) -> Matrix {
    let (n, k) = basis.shape();
    if k == 0 {
        return Matrix::zeros(n, n);
    }
    loop {
        // Random perturbation of the orthogonal choice keeps WᵀN well conditioned.
        let noise = Matrix::from_fn(n, k, |_, _| rng.gen_range(-0.5..0.5));
        let w = basis + noise;
        let wtn = w.transpose() * basis;
        if condition_number(&wtn) > 1e6 {
            continue;
        }
        let inv = wtn.try_inverse().expect("well-conditioned square matrix");
        return basis * inv * w.transpose();
    }
}

/// Orthogonal projector onto the column span of `basis` (columns need not be orthonormal).
pub fn span_projector(basis: &Matrix, rank_tol: f64) -> Matrix {
    let n = basis.nrows();
    if basis.ncols() == 0 {
        return Matrix::zeros(n, n);
    }
    let svd = basis.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s = &svd.singular_values;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let cols: Vec<Vector> = (0..s.len())
        .filter(|&k| smax > 0.0 && s[k] > rank_tol * smax)
        .map(|k| u.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        return Matrix::zeros(n, n);
    }
    let u = Matrix::from_columns(&cols);
    &u * u.transpose()
}

/// Frobenius norm of `a`, relative to `max(1, scale)`.
pub fn relative_norm(a: &Matrix, scale: f64) -> f64 {
    a.norm() / scale.max(1.0)
}

/// Horizontal concatenation of blocks with equal row counts.
pub fn hcat(rows: usize, blocks: &[&Matrix]) -> Matrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat: row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation of blocks with equal column counts.
pub fn vcat(cols: usize, blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat: column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}
