//! Small dense linear-algebra helpers on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-9;

/// Standard symplectic matrix on ℝ^{2d} with ω(v, w) = vᵀ J w for ω = dξ ∧ dx
/// in coordinates ordered (x, ξ).
pub fn symplectic_j(d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for k in 0..d {
        j[(k, d + k)] = -1.0;
        j[(d + k, k)] = 1.0;
    }
    j
}

/// ω(v, w) = Σ_k (v_{ξ_k} w_{x_k} − v_{x_k} w_{ξ_k}).
pub fn omega(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let n = v.len();
    assert!(n % 2 == 0 && w.len() == n, "symplectic vectors must have equal even length");
    let d = n / 2;
    (0..d).map(|k| v[d + k] * w[k] - v[k] * w[d + k]).sum()
}

/// Apply J without forming it.
pub fn apply_j(v: &DVector<f64>) -> DVector<f64> {
    let d = v.len() / 2;
    let mut out = DVector::zeros(v.len());
    for k in 0..d {
        out[k] = -v[d + k];
        out[d + k] = v[k];
    }
    out
}

struct Decomp {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

/// SVD whose V factor is always square (n×n). Wide matrices are padded with
/// zero rows, which leaves the singular vectors of the nonzero values intact.
///
/// Symmetric input goes through the symmetric eigensolver instead: nalgebra's SVD can
/// lose about nine digits on Gram matrices with clustered zero singular values.
fn full_svd(m: &DMatrix<f64>) -> Decomp {
    let (r, c) = m.shape();
    if r == c && (m - m.transpose()).amax() <= 1e-14 * m.amax() {
        let eig = m.clone().symmetric_eigen();
        let mut u = eig.eigenvectors.clone();
        for (k, l) in eig.eigenvalues.iter().enumerate() {
            if *l < 0.0 {
                u.column_mut(k).neg_mut();
            }
        }
        return Decomp { u, s: eig.eigenvalues.abs(), v: eig.eigenvectors };
    }
    let padded = if r < c {
        let mut sq = DMatrix::zeros(c, c);
        sq.view_mut((0, 0), (r, c)).copy_from(m);
        sq
    } else {
        m.clone()
    };
    let svd = padded.svd(true, true);
    let u = svd.u.expect("U requested");
    let vt = svd.v_t.expect("V^T requested");
    Decomp { u: u.rows(0, r).into_owned(), s: svd.singular_values, v: vt.transpose() }
}

fn cutoff(s: &DVector<f64>) -> f64 {
    RANK_TOL * s.iter().cloned().fold(0.0, f64::max)
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.singular_values();
    let tol = cutoff(&s);
    s.iter().filter(|&&x| x > tol && x > 0.0).count()
}

/// Orthonormal basis (columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let dec = full_svd(m);
    let tol = cutoff(&dec.s);
    let cols: Vec<DVector<f64>> = (0..dec.s.len())
        .filter(|&k| !(dec.s[k] > tol && dec.s[k] > 0.0))
        .map(|k| dec.v.column(k).into_owned())
        .collect();
    orthonormalize(&cols, c)
}

/// Orthonormal basis (columns) of the column space of `m`.
pub fn range_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let r = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(r, 0);
    }
    let dec = full_svd(m);
    let tol = cutoff(&dec.s);
    let cols: Vec<DVector<f64>> = (0..dec.s.len())
        .filter(|&k| dec.s[k] > tol && dec.s[k] > 0.0)
        .map(|k| dec.u.column(k).into_owned())
        .collect();
    orthonormalize(&cols, r)
}

/// Modified Gram–Schmidt; drops numerically dependent vectors.
pub fn orthonormalize(vs: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let nw = w.norm();
        if nw > 1e-9 * scale {
            out.push(w / nw);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Moore–Penrose pseudo-inverse with the shared rank cutoff.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let dec = full_svd(m);
    let tol = cutoff(&dec.s);
    let mut out = DMatrix::zeros(c, r);
    for k in 0..dec.s.len() {
        if dec.s[k] > tol && dec.s[k] > 0.0 {
            out += dec.v.column(k) * dec.u.column(k).transpose() / dec.s[k];
        }
    }
    out
}

/// Component of `v` orthogonal to the column span of the orthonormal `basis`.
pub fn residual_from_span(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return v.clone();
    }
    v - basis * (basis.transpose() * v)
}

/// Sine of the largest principal angle between two subspaces given by
/// orthonormal bases. Returns 1 when dimensions differ.
pub fn subspace_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for k in 0..a.ncols() {
        let col = a.column(k).into_owned();
        worst = worst.max(residual_from_span(b, &col).norm());
    }
    worst.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j_matches_omega() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let w = DVector::from_vec(vec![-1.0, 0.5, 2.0, 1.0]);
        let j = symplectic_j(2);
        assert!(((v.transpose() * &j * &w)[0] - omega(&v, &w)).abs() < 1e-14);
        assert_eq!(apply_j(&v), &j * &v);
        // dξ∧dx evaluated on (∂ξ, ∂x) is +1
        let dxi = DVector::from_vec(vec![0.0, 1.0]);
        let dx = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(omega(&dxi, &dx), 1.0);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&m);
        assert_eq!(n.ncols(), 2);
        assert!((&m * &n).norm() < 1e-12);
        assert!((n.transpose() * &n - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn null_space_of_tall_matrix() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let n = null_space(&m);
        assert_eq!(n.ncols(), 1);
        assert!((&m * &n).norm() < 1e-12);
        assert_eq!(rank(&m), 1);
        assert_eq!(range_basis(&m).ncols(), 1);
    }

    #[test]
    fn pinv_of_singular_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let p = pinv(&m);
        assert!((p[(0, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn zero_matrix_has_full_null_space() {
        let m = DMatrix::<f64>::zeros(2, 4);
        assert_eq!(null_space(&m).ncols(), 4);
        assert_eq!(rank(&m), 0);
    }
}
