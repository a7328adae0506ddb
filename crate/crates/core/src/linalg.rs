//! Dense subspace helpers shared by the algebraic modules.
//!
//! Subspaces are stored as matrices with orthonormal columns in Killing
//! coordinates, so Euclidean operations here are Killing-metric operations.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaps between consecutive eigenvalues inside this band (relative to the
/// cluster tolerance) are neither clearly equal nor clearly distinct.
const AMBIGUITY_FACTOR: f64 = 100.0;

pub(crate) fn empty(rows: usize) -> DMatrix<f64> {
    DMatrix::zeros(rows, 0)
}

/// Thin singular value decomposition `m = u diag(s) v_t`.
#[derive(Debug, Clone)]
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    fn transposed(self) -> Self {
        Self {
            u: self.v_t.transpose(),
            s: self.s,
            v_t: self.u.transpose(),
        }
    }
}

// nalgebra's default convergence threshold can stop the bidiagonal QR sweep
// early and return factors that reconstruct the input only to ~1e-3; every
// decomposition is therefore run with a tighter threshold and checked.
const DECOMP_EPS: [f64; 2] = [1e-17, f64::EPSILON];
const DECOMP_MAX_ITER: usize = 100_000;

/// `|Q^T Q - I|` for a matrix meant to have orthonormal columns.
fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let k = q.ncols();
    (q.transpose() * q - DMatrix::<f64>::identity(k, k)).norm()
}

fn checked_svd(m: &DMatrix<f64>, eps: f64) -> Option<(Svd, f64)> {
    let svd = m.clone().try_svd(true, true, eps, DECOMP_MAX_ITER)?;
    let (u, v_t) = (svd.u?, svd.v_t?);
    let scale = m.norm().max(1.0);
    let recon = (&u * DMatrix::from_diagonal(&svd.singular_values) * &v_t - m).norm() / scale;
    let err = recon
        .max(orthonormality_defect(&u))
        .max(orthonormality_defect(&v_t.transpose()));
    Some((
        Svd {
            u,
            s: svd.singular_values,
            v_t,
        },
        err,
    ))
}

/// Verified thin SVD.
pub(crate) fn svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Svd {
            u: DMatrix::zeros(r, 0),
            s: DVector::zeros(0),
            v_t: DMatrix::zeros(0, c),
        };
    }
    let tol = 1e-12;
    let mut best: Option<(Svd, f64)> = None;
    for eps in DECOMP_EPS {
        for transposed in [false, true] {
            let cand = if transposed {
                checked_svd(&m.transpose(), eps).map(|(s, e)| (s.transposed(), e))
            } else {
                checked_svd(m, eps)
            };
            if let Some((s, e)) = cand {
                if e <= tol {
                    return s;
                }
                if best.as_ref().is_none_or(|b| e < b.1) {
                    best = Some((s, e));
                }
            }
        }
    }
    let jac = if r >= c {
        jacobi_svd(m)
    } else {
        jacobi_svd(&m.transpose()).transposed()
    };
    match best {
        Some((s, e)) if e < svd_error(m, &jac) => s,
        _ => jac,
    }
}

fn svd_error(m: &DMatrix<f64>, s: &Svd) -> f64 {
    let recon = (&s.u * DMatrix::from_diagonal(&s.s) * &s.v_t - m).norm() / m.norm().max(1.0);
    recon
        .max(orthonormality_defect(&s.u))
        .max(orthonormality_defect(&s.v_t.transpose()))
}

/// Fill zero columns of `q` so that all columns are orthonormal.
fn complete_columns(q: &mut DMatrix<f64>, filled: &[bool]) {
    let rows = q.nrows();
    let mut e = 0;
    for j in 0..q.ncols() {
        if filled[j] {
            continue;
        }
        while e < rows {
            let mut v = DVector::zeros(rows);
            v[e] = 1.0;
            e += 1;
            for (k, &done) in filled.iter().enumerate() {
                if done || k < j {
                    let col = q.column(k).clone_owned();
                    v -= &col * col.dot(&v);
                }
            }
            for (k, &done) in filled.iter().enumerate() {
                if done || k < j {
                    let col = q.column(k).clone_owned();
                    v -= &col * col.dot(&v);
                }
            }
            let n = v.norm();
            if n > 0.5 {
                q.set_column(j, &(v / n));
                break;
            }
        }
    }
}

/// One-sided Jacobi SVD for `rows >= cols`. Slower than bidiagonal QR but
/// unconditionally accurate, including for clustered singular values.
fn jacobi_svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let mut u = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let floor = f64::MIN_POSITIVE.sqrt();
    let mut uo = DMatrix::zeros(rows, cols);
    let mut vo = DMatrix::zeros(cols, cols);
    let mut sv = DVector::zeros(cols);
    let mut filled = vec![false; cols];
    for (j, &i) in order.iter().enumerate() {
        sv[j] = norms[i];
        vo.set_column(j, &v.column(i));
        if norms[i] > floor {
            uo.set_column(j, &(u.column(i) / norms[i]));
            filled[j] = true;
        }
    }
    complete_columns(&mut uo, &filled);
    Svd {
        u: uo,
        s: sv,
        v_t: vo.transpose(),
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
fn jacobi_eigen(sym: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= f64::EPSILON * 1e-2 * a.norm() || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * x - s * y;
                    a[(k, q)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * x - s * y;
                    a[(q, k)] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * x - s * y;
                    v[(k, q)] = s * x + c * y;
                }
            }
        }
    }
    (a.diagonal(), v)
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    svd(m).s
}

/// SVD that also works for wide matrices by zero-padding, so that `v_t` is
/// always square.
fn full_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let s = svd(&padded);
    (s.u, s.s, s.v_t)
}

fn cutoff(sv: &DVector<f64>, rel_tol: f64) -> f64 {
    let max = sv.iter().cloned().fold(0.0, f64::max);
    rel_tol * max.max(1.0)
}

/// Orthonormal basis for the column span of `m`.
pub(crate) fn orthonormal_columns(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return empty(m.nrows());
    }
    let (u, sv, _) = full_svd(m);
    let thresh = cutoff(&sv, rel_tol);
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| sv[i] > thresh && i < u.ncols())
        .collect();
    let rows = m.nrows();
    let mut out = DMatrix::zeros(rows, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &u.column(i).rows(0, rows));
    }
    out
}

/// Orthonormal basis of the null space of `m` (as columns of length `m.ncols()`).
pub(crate) fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let c = m.ncols();
    if c == 0 {
        return empty(0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let (_, sv, v_t) = full_svd(m);
    let thresh = cutoff(&sv, rel_tol);
    let null: Vec<usize> = (0..c)
        .filter(|&i| i >= sv.len() || sv[i] <= thresh)
        .collect();
    let mut out = DMatrix::zeros(c, null.len());
    for (j, &i) in null.iter().enumerate() {
        out.set_column(j, &v_t.row(i).transpose());
    }
    out
}

/// Numeric rank with the cutoff `rel_tol * max(sigma_max, 1)`.
pub(crate) fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = singular_values(m);
    let thresh = cutoff(&sv, rel_tol);
    sv.iter().filter(|&&s| s > thresh).count()
}

/// Concatenate column blocks with the same row count.
pub(crate) fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Intersection of two subspaces given by orthonormal columns.
pub(crate) fn intersection(u: &DMatrix<f64>, v: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = u.nrows();
    if u.ncols() == 0 || v.ncols() == 0 {
        return empty(rows);
    }
    let stacked = hcat(&[u, &(-v)]);
    let null = null_space(&stacked, rel_tol);
    let a = null.rows(0, u.ncols()).into_owned();
    orthonormal_columns(&(u * a), rel_tol)
}

/// Orthonormal basis of `outer ⊖ inner` (assumes `inner ⊂ outer`).
pub(crate) fn complement_within(
    inner: &DMatrix<f64>,
    outer: &DMatrix<f64>,
    rel_tol: f64,
) -> DMatrix<f64> {
    if inner.ncols() == 0 {
        return outer.clone();
    }
    let coeffs = null_space(&(inner.transpose() * outer), rel_tol);
    orthonormal_columns(&(outer * coeffs), rel_tol)
}

/// Largest distance of a column of `sub` from the span of orthonormal `space`.
pub(crate) fn containment_defect(sub: &DMatrix<f64>, space: &DMatrix<f64>) -> f64 {
    if sub.ncols() == 0 {
        return 0.0;
    }
    let resid = sub - space * (space.transpose() * sub);
    (0..resid.ncols())
        .map(|j| resid.column(j).norm() / sub.column(j).norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// True when two orthonormal bases span the same subspace.
pub(crate) fn same_span(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.ncols() == b.ncols() && containment_defect(a, b) < tol && containment_defect(b, a) < tol
}

/// Verified symmetric eigendecomposition.
fn symmetric_eigen(sym: &DMatrix<f64>) -> nalgebra::SymmetricEigen<f64, nalgebra::Dyn> {
    let scale = sym.norm().max(1.0);
    let tol = 1e-12;
    let mut best: Option<(nalgebra::SymmetricEigen<f64, nalgebra::Dyn>, f64)> = None;
    for eps in DECOMP_EPS {
        if let Some(e) = sym.clone().try_symmetric_eigen(eps, DECOMP_MAX_ITER) {
            let resid = ((sym * &e.eigenvectors
                - &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues))
            .norm()
                / scale)
                .max(orthonormality_defect(&e.eigenvectors));
            if resid <= tol {
                return e;
            }
            if best.as_ref().is_none_or(|b| resid < b.1) {
                best = Some((e, resid));
            }
        }
    }
    let (values, vectors) = jacobi_eigen(sym);
    let resid = ((sym * &vectors - &vectors * DMatrix::from_diagonal(&values)).norm() / scale)
        .max(orthonormality_defect(&vectors));
    match best {
        Some((e, b)) if b < resid => e,
        _ => nalgebra::SymmetricEigen {
            eigenvectors: vectors,
            eigenvalues: values,
        },
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = symmetric_eigen(&sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

/// Group sorted values into clusters whose internal gaps are at most `tol`.
///
/// A gap strictly between `tol` and `AMBIGUITY_FACTOR * tol` cannot be
/// attributed either way and is reported as an error.
pub(crate) fn cluster_sorted(values: &[f64], tol: f64) -> Result<Vec<Range<usize>>> {
    let mut out = Vec::new();
    if values.is_empty() {
        return Ok(out);
    }
    let mut start = 0;
    for i in 1..values.len() {
        let gap = values[i] - values[i - 1];
        if gap <= tol {
            continue;
        }
        if gap < AMBIGUITY_FACTOR * tol {
            return Err(Error::ClusterSeparation { gap, tol });
        }
        out.push(start..i);
        start = i;
    }
    out.push(start..values.len());
    Ok(out)
}

/// A joint eigenspace of a commuting family of symmetric matrices.
#[derive(Debug, Clone)]
pub(crate) struct JointSpace {
    pub basis: DMatrix<f64>,
    /// Rayleigh quotient of each family member on this space.
    pub values: Vec<f64>,
}

/// Simultaneously diagonalize commuting symmetric matrices by successive
/// refinement of eigenspaces. `rel_tol` is relative to the largest spectral
/// radius in the family.
pub(crate) fn joint_eigenspaces(mats: &[DMatrix<f64>], rel_tol: f64) -> Result<Vec<JointSpace>> {
    let dim = mats.first().map(|m| m.nrows()).unwrap_or(0);
    let scale = mats
        .iter()
        .map(|m| m.abs().max())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale;
    let mut spaces = vec![DMatrix::<f64>::identity(dim, dim)];
    for m in mats {
        let mut next = Vec::with_capacity(spaces.len());
        for b in &spaces {
            let restricted = b.transpose() * m * b;
            let (vals, vecs) = sorted_symmetric_eigen(&restricted);
            for range in cluster_sorted(&vals, tol)? {
                let cols = vecs.columns(range.start, range.len()).into_owned();
                next.push(b * cols);
            }
        }
        spaces = next;
    }
    Ok(spaces
        .into_iter()
        .map(|basis| {
            let values = mats
                .iter()
                .map(|m| (basis.transpose() * m * &basis).trace() / basis.ncols() as f64)
                .collect();
            JointSpace { basis, values }
        })
        .collect())
}

/// Relative Frobenius norm of a commutator, `|AB - BA| / (|A| |B|)`.
pub(crate) fn normalized_commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a * b - b * a).norm() / denom
}

/// Distance from `x` to the nearest point of `offset + period * Z`.
pub(crate) fn lattice_distance(x: f64, offset: f64, period: f64) -> f64 {
    let r = (x - offset).rem_euclid(period);
    r.min(period - r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&m, 1e-12);
        assert_eq!(n.ncols(), 2);
        assert!((&m * &n).norm() < 1e-14);
    }

    #[test]
    fn intersection_of_planes_is_a_line() {
        let u = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = 0.5f64.sqrt();
        let v = DMatrix::from_column_slice(3, 2, &[0.0, s, s, 1.0, 0.0, 0.0]);
        let i = intersection(&u, &v, 1e-10);
        assert_eq!(i.ncols(), 1);
        assert!((i[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clustering_rejects_ambiguous_gaps() {
        assert_eq!(cluster_sorted(&[0.0, 1e-12, 1.0], 1e-8).unwrap().len(), 2);
        assert!(matches!(
            cluster_sorted(&[0.0, 1e-7, 1.0], 1e-8),
            Err(Error::ClusterSeparation { .. })
        ));
    }

    #[test]
    fn joint_eigenspaces_split_degenerate_first_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 2.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0, 4.0]));
        let spaces = joint_eigenspaces(&[a, b], 1e-10).unwrap();
        assert_eq!(spaces.len(), 3);
    }

    #[test]
    fn lattice_distance_wraps() {
        let pi = std::f64::consts::PI;
        assert!(lattice_distance(pi - 1e-3, 0.0, pi) < 1.1e-3);
        assert!((lattice_distance(pi / 2.0, 0.0, pi) - pi / 2.0).abs() < 1e-15);
    }

    fn checked(m: &DMatrix<f64>, s: &Svd) {
        assert!(svd_error(m, s) < 1e-13, "error {:e}", svd_error(m, s));
        assert!(s.s.iter().zip(s.s.iter().skip(1)).all(|(a, b)| a >= b));
    }

    #[test]
    fn jacobi_svd_handles_clustered_and_deficient_input() {
        // the projected tangent from the rotated sphere that defeats bidiagonal QR
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0262196442046696e-16,
                1.088470304105951e-16,
                0.0,
                0.43164110822529594,
                -0.7340883203616153,
                1.8032340157599257e-16,
                0.7340883203616151,
                0.431641108225296,
                5.249385243550334e-17,
            ],
        );
        let s = jacobi_svd(&m);
        checked(&m, &s);
        assert!((s.s[0] - s.s[1]).abs() < 1e-15);
        checked(&m, &svd(&m));
        let tall = DMatrix::from_fn(5, 3, |i, j| if j == 2 { 0.0 } else { (i + 2 * j) as f64 });
        checked(&tall, &jacobi_svd(&tall));
        let wide = tall.transpose();
        checked(&wide, &svd(&wide));
    }

    #[test]
    fn jacobi_eigen_diagonalizes() {
        let m = DMatrix::from_fn(4, 4, |i, j| {
            1.0 / (1 + i + j) as f64 + if i == j { 1.0 } else { 0.0 }
        });
        let (vals, vecs) = jacobi_eigen(&m);
        assert!((&m * &vecs - &vecs * DMatrix::from_diagonal(&vals)).norm() < 1e-14);
        assert!(orthonormality_defect(&vecs) < 1e-14);
        let trace: f64 = vals.iter().sum();
        assert!((trace - m.trace()).abs() < 1e-14);
    }
}
