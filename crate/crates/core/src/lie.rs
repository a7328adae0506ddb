//! Matrix Lie algebra substrate for `so(n)`.
//!
//! Bracket convention: `[X, Y] = XY - YX` on matrices. This is the negative of
//! the bracket of the corresponding Killing vector fields; nothing downstream
//! depends on the sign except through `ad`, which uses the matrix bracket.
//!
//! Elements are handled in two forms. [`AlgElement`] wraps the skew matrix
//! itself; coordinate vectors (`DVector<f64>` of length `dim`) are taken with
//! respect to a Killing-orthonormal basis fixed by [`SoAlgebra`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg;

/// A skew-symmetric real matrix, viewed as an element of `so(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgElement {
    mat: DMatrix<f64>,
}

impl AlgElement {
    /// Validate skew-symmetry with a defect relative to `max(1, |X|)`.
    pub fn new(mat: DMatrix<f64>, tol_skew: f64) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        let defect = (&mat + mat.transpose()).norm() / mat.norm().max(1.0);
        if defect > tol_skew {
            return Err(Error::NotSkew { defect });
        }
        Ok(Self { mat })
    }

    /// Wrap a matrix that is skew by construction; the symmetric part is dropped.
    pub(crate) fn from_skew(mat: DMatrix<f64>) -> Self {
        let mat = (&mat - mat.transpose()) * 0.5;
        Self { mat }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            mat: DMatrix::zeros(n, n),
        }
    }

    /// `R_ij = E_ij - E_ji` with zero-based indices.
    pub fn elementary(n: usize, i: usize, j: usize) -> Self {
        let mut mat = DMatrix::zeros(n, n);
        mat[(i, j)] = 1.0;
        mat[(j, i)] = -1.0;
        Self { mat }
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_mat(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: &self.mat * s }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(self.n(), other.n())?;
        Ok(Self {
            mat: &self.mat + &other.mat,
        })
    }
}

fn check_same(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// `[X, Y] = XY - YX`.
pub fn bracket(x: &AlgElement, y: &AlgElement) -> Result<AlgElement> {
    check_same(x.n(), y.n())?;
    let (a, b) = (&x.mat, &y.mat);
    Ok(AlgElement::from_skew(a * b - b * a))
}

/// An involutive automorphism `X -> C X C^T` with `C` orthogonal and `C^2 = ±I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Involution {
    conjugator: DMatrix<f64>,
}

impl Involution {
    pub fn new(conjugator: DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = conjugator.nrows();
        if !conjugator.is_square() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: conjugator.ncols(),
            });
        }
        let id = DMatrix::<f64>::identity(n, n);
        let defect = (conjugator.transpose() * &conjugator - &id).norm();
        if defect > tol {
            return Err(Error::NotOrthogonal { defect });
        }
        // Conjugation by C is an automorphism for any orthogonal C; it is
        // involutive on so(n) iff C^2 is central, i.e. C^2 = ±I.
        let sq = &conjugator * &conjugator;
        let residual = (&sq - &id).norm().min((&sq + &id).norm());
        if residual > tol {
            return Err(Error::NotInvolutive { residual });
        }
        Ok(Self { conjugator })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            conjugator: DMatrix::identity(n, n),
        }
    }

    pub fn conjugator(&self) -> &DMatrix<f64> {
        &self.conjugator
    }

    pub fn n(&self) -> usize {
        self.conjugator.nrows()
    }

    pub fn apply(&self, x: &AlgElement) -> AlgElement {
        let c = &self.conjugator;
        AlgElement::from_skew(c * &x.mat * c.transpose())
    }

    /// Apply to a plain matrix (group elements, points of the embedding).
    pub fn apply_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.conjugator * m * self.conjugator.transpose()
    }

    pub fn commutes_with(&self, other: &Involution, tol: f64) -> bool {
        let a = &self.conjugator;
        let b = &other.conjugator;
        let ab = a * b;
        let ba = b * a;
        // Conjugations agree when the conjugators commute up to a central sign.
        (&ab - &ba).norm() < tol || (&ab + &ba).norm() < tol
    }
}

/// `so(n)` with a Killing-orthonormal coordinate system.
///
/// The Killing form is evaluated through adjoint matrices on the standard
/// basis `R_ij (i < j)`, then Cholesky-factored to obtain orthonormal
/// coordinates. Nothing here assumes the `so(n)` trace shortcut.
#[derive(Debug, Clone)]
pub struct SoAlgebra {
    n: usize,
    pairs: Vec<(usize, usize)>,
    /// Lower Cholesky factor of the Killing Gram matrix on the standard basis.
    chol_l: DMatrix<f64>,
    /// `(L^T)^{-1}`: maps orthonormal coordinates to standard coordinates.
    chol_lt_inv: DMatrix<f64>,
}

impl SoAlgebra {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            // so(2) is abelian: Killing form vanishes identically.
            return Err(Error::DegenerateKillingForm);
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        let dim = pairs.len();
        let ads: Vec<DMatrix<f64>> = pairs
            .iter()
            .map(|&(i, j)| std_ad(&pairs, n, &AlgElement::elementary(n, i, j).mat))
            .collect();
        let mut gram = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                // -tr(ad_a ad_b) = -sum_ij (ad_a)_ij (ad_b)_ji
                let v = -ads[a].component_mul(&ads[b].transpose()).sum();
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        let chol = gram.cholesky().ok_or(Error::DegenerateKillingForm)?;
        let chol_l = chol.l();
        let chol_lt_inv = chol_l
            .transpose()
            .try_inverse()
            .ok_or(Error::DegenerateKillingForm)?;
        Ok(Self {
            n,
            pairs,
            chol_l,
            chol_lt_inv,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn std_coords(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.pairs.iter().map(|&(i, j)| m[(i, j)]))
    }

    fn mat_from_std(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            m[(i, j)] = s[k];
            m[(j, i)] = -s[k];
        }
        m
    }

    /// Killing-orthonormal coordinates of a matrix in `so(n)`.
    pub fn coords_mat(&self, m: &DMatrix<f64>) -> DVector<f64> {
        self.chol_l.transpose() * self.std_coords(m)
    }

    pub fn coords(&self, x: &AlgElement) -> DVector<f64> {
        self.coords_mat(&x.mat)
    }

    pub fn element(&self, c: &DVector<f64>) -> AlgElement {
        AlgElement {
            mat: self.mat_from_std(&(&self.chol_lt_inv * c)),
        }
    }

    /// Coordinates of every column of a basis matrix, as elements.
    pub fn elements(&self, basis: &DMatrix<f64>) -> Vec<AlgElement> {
        basis
            .column_iter()
            .map(|c| self.element(&c.into_owned()))
            .collect()
    }

    /// `-B(X, Y) = -tr(ad_X ad_Y)`, computed from adjoint matrices.
    pub fn killing_inner(&self, x: &AlgElement, y: &AlgElement) -> Result<f64> {
        check_same(self.n, x.n())?;
        check_same(self.n, y.n())?;
        let ax = std_ad(&self.pairs, self.n, &x.mat);
        let ay = std_ad(&self.pairs, self.n, &y.mat);
        Ok(-ax.component_mul(&ay.transpose()).sum())
    }

    /// Matrix of `ad_X` in Killing-orthonormal coordinates.
    pub fn ad(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let xm = self.element(x).mat;
        self.linear_map(|e| &xm * e - e * &xm)
    }

    /// Coordinates of `[x, y]`.
    pub fn bracket_coords(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let a = self.element(x).mat;
        let b = self.element(y).mat;
        self.coords_mat(&(&a * &b - &b * &a))
    }

    /// Matrix of a linear map `so(n) -> so(n)` given on matrices.
    pub fn linear_map<F>(&self, f: F) -> DMatrix<f64>
    where
        F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            let img = f(&self.element(&e).mat);
            out.set_column(k, &self.coords_mat(&img));
        }
        out
    }

    /// `Ad_g` in coordinates.
    pub fn adjoint_action(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let gt = g.transpose();
        self.linear_map(|e| g * e * &gt)
    }

    pub fn involution_matrix(&self, inv: &Involution) -> DMatrix<f64> {
        self.linear_map(|e| inv.apply_mat(e))
    }

    /// Numeric dimension of the span of elements.
    pub fn span_dim(&self, xs: &[AlgElement], tol: f64) -> usize {
        if xs.is_empty() {
            return 0;
        }
        let mut m = DMatrix::zeros(self.dim(), xs.len());
        for (k, x) in xs.iter().enumerate() {
            m.set_column(k, &self.coords(x));
        }
        linalg::rank(&m, tol)
    }
}

/// Adjoint matrix on the standard (non-normalized) basis.
fn std_ad(pairs: &[(usize, usize)], n: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = pairs.len();
    let mut out = DMatrix::zeros(dim, dim);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let e = AlgElement::elementary(n, i, j).mat;
        let br = x * &e - &e * x;
        for (r, &(a, b)) in pairs.iter().enumerate() {
            out[(r, k)] = br[(a, b)];
        }
    }
    out
}

/// Orthonormal bases of the `±1` eigenspaces of `inv` on `span(basis)`.
pub fn split_eigenspaces(
    alg: &SoAlgebra,
    inv: &Involution,
    basis: &[AlgElement],
    tol: &Tolerances,
) -> Result<(Vec<AlgElement>, Vec<AlgElement>)> {
    if basis.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut raw = DMatrix::zeros(alg.dim(), basis.len());
    for (k, b) in basis.iter().enumerate() {
        check_same(alg.n(), b.n())?;
        raw.set_column(k, &alg.coords(b));
    }
    let span = linalg::orthonormal_columns(&raw, tol.subspace);
    let s = alg.involution_matrix(inv);
    let image = &s * &span;
    let leak = linalg::containment_defect(&image, &span);
    if leak > tol.subspace {
        return Err(Error::SubspaceNotInvariant { leak });
    }
    let restricted = span.transpose() * &image;
    let residual =
        (&restricted * &restricted - DMatrix::identity(span.ncols(), span.ncols())).norm();
    if residual > tol.subspace {
        return Err(Error::NotInvolutive { residual });
    }
    let plus = linalg::orthonormal_columns(
        &(&span * (&restricted + DMatrix::identity(span.ncols(), span.ncols()))),
        tol.subspace,
    );
    let minus = linalg::orthonormal_columns(
        &(&span * (&restricted - DMatrix::identity(span.ncols(), span.ncols()))),
        tol.subspace,
    );
    Ok((alg.elements(&plus), alg.elements(&minus)))
}

/// `exp(tX)` by scaling and squaring with a degree-13 Padé approximant.
pub fn mat_exp(x: &AlgElement, t: f64) -> DMatrix<f64> {
    expm(&(&x.mat * t))
}

/// `exp(tX)` through the eigendecomposition of the symmetric matrix `-X^2`.
///
/// Used as an independent cross-check of [`mat_exp`]. The invariant planes of
/// `X` come from the eigenvectors of `-X^2`; on each plane `X` acts as a
/// rotation generator with angular speed `sqrt(eigenvalue)`.
pub fn mat_exp_skew_eig(x: &AlgElement, t: f64) -> DMatrix<f64> {
    let n = x.n();
    let a = &x.mat * t;
    let (vals, vecs) = linalg::sorted_symmetric_eigen(&(-(&a * &a)));
    let mut out = DMatrix::identity(n, n);
    let scale = vals.iter().cloned().fold(0.0, f64::max).max(1.0);
    for (k, &lam) in vals.iter().enumerate() {
        let v = vecs.column(k);
        if lam > 1e-14 * scale {
            let omega = lam.sqrt();
            let vv = v * v.transpose();
            // Summed over an eigenspace, vv^T is the projector P onto an
            // A-invariant subspace where exp(A) = cos(omega) P + sin(omega)/omega A P.
            out += (omega.cos() - 1.0) * &vv;
            out += (omega.sin() / omega) * (&a * &vv);
        }
    }
    out
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential of a general square matrix (Higham's Padé-13 variant).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let norm1 = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lhs.lu().solve(&rhs).unwrap_or_else(|| id.clone());
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// The symmetric triad `(so(n), sigma1, sigma2)`.
#[derive(Debug, Clone)]
pub struct Triad {
    pub alg: SoAlgebra,
    pub sigma1: Involution,
    pub sigma2: Involution,
}

impl Triad {
    pub fn new(sigma1: Involution, sigma2: Involution) -> Result<Self> {
        check_same(sigma1.n(), sigma2.n())?;
        let alg = SoAlgebra::new(sigma1.n())?;
        Ok(Self {
            alg,
            sigma1,
            sigma2,
        })
    }

    pub fn n(&self) -> usize {
        self.alg.n()
    }
}

/// Eigenspace bases of a triad, stored as orthonormal columns in Killing
/// coordinates.
#[derive(Debug, Clone)]
pub struct TriadDecomposition {
    pub g: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub kp: DMatrix<f64>,
    pub kh: DMatrix<f64>,
    pub mh: DMatrix<f64>,
    pub mp: DMatrix<f64>,
    pub commuting: bool,
    /// `sigma1` and `sigma2` as matrices on coordinates.
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
}

impl TriadDecomposition {
    pub fn new(triad: &Triad, tol: &Tolerances) -> Result<Self> {
        let alg = &triad.alg;
        let dim = alg.dim();
        let s1 = alg.involution_matrix(&triad.sigma1);
        let s2 = alg.involution_matrix(&triad.sigma2);
        let id = DMatrix::<f64>::identity(dim, dim);
        for s in [&s1, &s2] {
            let residual = (s * s - &id).norm();
            if residual > tol.subspace {
                return Err(Error::NotInvolutive { residual });
            }
        }
        let eig = |s: &DMatrix<f64>| {
            let plus = linalg::orthonormal_columns(&(s + &id), tol.subspace);
            let minus = linalg::orthonormal_columns(&(s - &id), tol.subspace);
            (plus, minus)
        };
        let (k, m) = eig(&s1);
        let (h, p) = eig(&s2);
        let commuting = (&s1 * &s2 - &s2 * &s1).norm() < tol.subspace;
        let i = |a: &DMatrix<f64>, b: &DMatrix<f64>| linalg::intersection(a, b, tol.subspace);
        let kp = i(&k, &p);
        let kh = i(&k, &h);
        let mh = i(&m, &h);
        let mp = i(&m, &p);
        Ok(Self {
            g: id,
            k,
            m,
            h,
            p,
            kp,
            kh,
            mh,
            mp,
            commuting,
            s1,
            s2,
        })
    }

    pub fn dim_g(&self) -> usize {
        self.g.ncols()
    }

    /// Orthonormal basis of `pr_m(h)`.
    pub fn h_projected_to_m(&self, tol: f64) -> DMatrix<f64> {
        let pm = &self.m * self.m.transpose();
        linalg::orthonormal_columns(&(pm * &self.h), tol)
    }

    /// `h^perp ∩ m`; equals `m ∩ p` in the commuting case.
    pub fn h_perp_in_m(&self, tol: f64) -> DMatrix<f64> {
        let proj = self.h_projected_to_m(tol);
        linalg::complement_within(&proj, &self.m, tol)
    }
}

/// A point of `M = G/K` in the Cartan embedding `gK -> g C1 g^T C1^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacePoint {
    image: DMatrix<f64>,
}

impl SpacePoint {
    pub(crate) fn from_image(image: DMatrix<f64>) -> Self {
        Self { image }
    }

    pub fn cartan_image(&self) -> &DMatrix<f64> {
        &self.image
    }
}

/// The Cartan embedding of `G/K` with its metric calibration.
///
/// At a point `P` the Killing field of `X` has value `XP - P C1 X C1^T`; at the
/// origin this is `2 X_m`. The ratio between squared Frobenius norms in the
/// embedding and the Killing metric is calibrated once on `m`.
#[derive(Debug, Clone)]
pub struct CartanEmbedding {
    c1: DMatrix<f64>,
    c1t: DMatrix<f64>,
    metric_constant: f64,
}

impl CartanEmbedding {
    pub fn new(triad: &Triad, decomp: &TriadDecomposition) -> Result<Self> {
        let c1 = triad.sigma1.conjugator().clone();
        let c1t = c1.transpose();
        let mut emb = Self {
            c1,
            c1t,
            metric_constant: 1.0,
        };
        if decomp.m.ncols() == 0 {
            return Err(Error::Degenerate("m is trivial; M is a point".into()));
        }
        let origin = emb.origin();
        let mut acc = 0.0;
        for col in decomp.m.column_iter() {
            let x = triad.alg.element(&col.into_owned());
            acc += emb.killing_field_value(&x, &origin).norm_squared();
        }
        emb.metric_constant = acc / decomp.m.ncols() as f64;
        Ok(emb)
    }

    /// Frobenius norm squared per unit Killing norm squared on tangent vectors.
    pub fn metric_constant(&self) -> f64 {
        self.metric_constant
    }

    pub fn origin(&self) -> SpacePoint {
        let n = self.c1.nrows();
        SpacePoint {
            image: DMatrix::identity(n, n),
        }
    }

    /// `g.o = g C1 g^T C1^T`.
    pub fn point_from_group(&self, g: &DMatrix<f64>) -> SpacePoint {
        SpacePoint {
            image: g * &self.c1 * g.transpose() * &self.c1t,
        }
    }

    /// `h.x` for `h` in `G`.
    pub fn act(&self, h: &DMatrix<f64>, x: &SpacePoint) -> SpacePoint {
        SpacePoint {
            image: self.push_matrix(h, &x.image),
        }
    }

    /// Pushforward of a tangent matrix under the action of `h`.
    pub fn push_tangent(&self, h: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.push_matrix(h, v)
    }

    fn push_matrix(&self, h: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
        h * m * &self.c1 * h.transpose() * &self.c1t
    }

    /// `Exp(W) = exp(W).o` for `W` in `m`.
    pub fn exp_point(&self, w: &AlgElement) -> SpacePoint {
        self.point_from_group(&mat_exp(w, 1.0))
    }

    /// `d/ds|_0` of `exp(sX).x`.
    pub fn killing_field_value(&self, x: &AlgElement, p: &SpacePoint) -> DMatrix<f64> {
        let xm = x.mat();
        xm * &p.image - &p.image * &self.c1 * xm * &self.c1t
    }

    /// Residuals of the point invariants: orthogonality and `sigma1(P) = P^{-1}`.
    pub fn validate(&self, p: &SpacePoint) -> (f64, f64) {
        let n = p.image.nrows();
        let orth = (p.image.transpose() * &p.image - DMatrix::<f64>::identity(n, n)).norm();
        let twisted = (&self.c1 * &p.image * &self.c1t - p.image.transpose()).norm();
        (orth, twisted)
    }

    /// Embedding inner product of two tangent matrices, in Killing units.
    pub fn inner(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        a.dot(b) / self.metric_constant
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_skew(n: usize, rng: &mut impl Rng) -> AlgElement {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        AlgElement::from_skew(m)
    }

    fn diag(entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(entries))
    }

    #[test]
    fn bracket_of_elementary_generators() {
        let r12 = AlgElement::elementary(3, 0, 1);
        let r13 = AlgElement::elementary(3, 0, 2);
        let r23 = AlgElement::elementary(3, 1, 2);
        let b = bracket(&r12, &r13).unwrap();
        assert!((b.mat() + r23.mat()).norm() < 1e-15);
        assert!(bracket(&r12, &r12).unwrap().mat().norm() == 0.0);
    }

    #[test]
    fn bracket_rejects_mismatched_sizes() {
        let a = AlgElement::zero(3);
        let b = AlgElement::zero(4);
        assert!(matches!(
            bracket(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jacobi_identity_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (x, y, z) = (
                random_skew(6, &mut rng),
                random_skew(6, &mut rng),
                random_skew(6, &mut rng),
            );
            let j1 = bracket(&bracket(&x, &y).unwrap(), &z).unwrap();
            let j2 = bracket(&bracket(&y, &z).unwrap(), &x).unwrap();
            let j3 = bracket(&bracket(&z, &x).unwrap(), &y).unwrap();
            assert!((j1.mat() + j2.mat() + j3.mat()).norm() < 1e-12);
        }
    }

    #[test]
    fn killing_inner_matches_trace_oracle() {
        let alg = SoAlgebra::new(3).unwrap();
        let r12 = AlgElement::elementary(3, 0, 1);
        let r13 = AlgElement::elementary(3, 0, 2);
        assert!((alg.killing_inner(&r12, &r12).unwrap() - 2.0).abs() < 1e-14);
        assert!(alg.killing_inner(&r12, &r13).unwrap().abs() < 1e-14);

        // B(X, Y) = (n - 2) tr(XY) on so(n)
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 3..7 {
            let alg = SoAlgebra::new(n).unwrap();
            let x = random_skew(n, &mut rng);
            let y = random_skew(n, &mut rng);
            let oracle = -((n - 2) as f64) * (x.mat() * y.mat()).trace();
            let val = alg.killing_inner(&x, &y).unwrap();
            assert!((val - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
            assert_eq!(val, alg.killing_inner(&y, &x).unwrap());
            // coordinates are Killing-orthonormal
            assert!((alg.coords(&x).dot(&alg.coords(&y)) - val).abs() < 1e-12);
        }
    }

    #[test]
    fn killing_form_is_ad_invariant() {
        let alg = SoAlgebra::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (x, y, z) = (
                random_skew(5, &mut rng),
                random_skew(5, &mut rng),
                random_skew(5, &mut rng),
            );
            let zx = bracket(&z, &x).unwrap();
            let zy = bracket(&z, &y).unwrap();
            let r = alg.killing_inner(&zx, &y).unwrap() + alg.killing_inner(&x, &zy).unwrap();
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn so2_is_rejected_as_degenerate() {
        assert!(matches!(
            SoAlgebra::new(2),
            Err(Error::DegenerateKillingForm)
        ));
    }

    #[test]
    fn coordinates_round_trip() {
        let alg = SoAlgebra::new(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_skew(5, &mut rng);
        let back = alg.element(&alg.coords(&x));
        assert!((back.mat() - x.mat()).norm() < 1e-14);
    }

    #[test]
    fn ad_matrix_matches_bracket() {
        let alg = SoAlgebra::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_skew(4, &mut rng);
        let y = random_skew(4, &mut rng);
        let lhs = alg.ad(&alg.coords(&x)) * alg.coords(&y);
        let rhs = alg.coords(&bracket(&x, &y).unwrap());
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn split_counts_for_block_involution() {
        let alg = SoAlgebra::new(6).unwrap();
        let tol = Tolerances::default();
        let inv = Involution::new(diag(&[1.0, 1.0, -1.0, -1.0, -1.0, -1.0]), 1e-12).unwrap();
        let basis: Vec<AlgElement> = alg.elements(&DMatrix::identity(15, 15));
        let (plus, minus) = split_eigenspaces(&alg, &inv, &basis, &tol).unwrap();
        assert_eq!((plus.len(), minus.len()), (7, 8));

        let (plus, minus) =
            split_eigenspaces(&alg, &Involution::identity(6), &basis, &tol).unwrap();
        assert_eq!((plus.len(), minus.len()), (15, 0));
    }

    #[test]
    fn non_involutive_conjugator_is_rejected() {
        let c = mat_exp(&AlgElement::elementary(3, 0, 1), 0.3);
        assert!(matches!(
            Involution::new(c, 1e-12),
            Err(Error::NotInvolutive { .. })
        ));
        let c = diag(&[1.0, 2.0, 1.0]);
        assert!(matches!(
            Involution::new(c, 1e-12),
            Err(Error::NotOrthogonal { .. })
        ));
    }

    #[test]
    fn involution_preserves_bracket() {
        let c = diag(&[1.0, -1.0, -1.0, 1.0]);
        let inv = Involution::new(c, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_skew(4, &mut rng);
        let y = random_skew(4, &mut rng);
        let lhs = inv.apply(&bracket(&x, &y).unwrap());
        let rhs = bracket(&inv.apply(&x), &inv.apply(&y)).unwrap();
        assert!((lhs.mat() - rhs.mat()).norm() < 1e-14);
        assert!((inv.apply(&inv.apply(&x)).mat() - x.mat()).norm() < 1e-14);
    }

    #[test]
    fn quarter_turn() {
        let r = mat_exp(
            &AlgElement::elementary(2, 0, 1),
            std::f64::consts::FRAC_PI_2,
        );
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((r - expect).norm() < 1e-15);
    }

    #[test]
    fn expm_agrees_with_skew_eigen_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 4, 5, 7] {
            let x = random_skew(n, &mut rng);
            let t: f64 = rng.random_range(0.0..10.0);
            let a = mat_exp(&x, t);
            let b = mat_exp_skew_eig(&x, t);
            assert!((&a - &b).norm() < 1e-11, "n={n} diff={}", (&a - &b).norm());
        }
    }

    #[test]
    fn killing_field_vanishes_on_k_and_is_calibrated_on_m() {
        let c1 = diag(&[1.0, 1.0, -1.0, -1.0, -1.0]);
        let sigma = Involution::new(c1, 1e-12).unwrap();
        let triad = Triad::new(sigma.clone(), sigma).unwrap();
        let tol = Tolerances::default();
        let d = TriadDecomposition::new(&triad, &tol).unwrap();
        let emb = CartanEmbedding::new(&triad, &d).unwrap();
        let o = emb.origin();
        for col in d.k.column_iter() {
            let x = triad.alg.element(&col.into_owned());
            assert!(emb.killing_field_value(&x, &o).norm() < 1e-14);
        }
        // value at the origin is 2X: |2X|_F^2 = 4 * 2 / (2(n-2)) per unit Killing norm
        let expect = 4.0 / (triad.n() as f64 - 2.0);
        assert!((emb.metric_constant() - expect).abs() < 1e-13);

        // finite-difference check of the differential
        let x = triad.alg.element(&d.m.column(0).into_owned());
        let h = 1e-5;
        let plus = emb.point_from_group(&mat_exp(&x, h));
        let minus = emb.point_from_group(&mat_exp(&x, -h));
        let fd = (plus.cartan_image() - minus.cartan_image()) / (2.0 * h);
        assert!((fd - emb.killing_field_value(&x, &o)).norm() < 1e-9);
    }

    #[test]
    fn killing_field_is_equivariant() {
        let c1 = diag(&[1.0, -1.0, -1.0, -1.0]);
        let sigma = Involution::new(c1, 1e-12).unwrap();
        let triad = Triad::new(sigma.clone(), sigma).unwrap();
        let d = TriadDecomposition::new(&triad, &Tolerances::default()).unwrap();
        let emb = CartanEmbedding::new(&triad, &d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_skew(4, &mut rng);
        let h = mat_exp(&random_skew(4, &mut rng), 1.0);
        let p = emb.point_from_group(&mat_exp(&random_skew(4, &mut rng), 1.0));
        let hp = emb.act(&h, &p);
        // X at h.p equals h_* of (Ad_{h^-1} X) at p
        let xh = AlgElement::from_skew(h.transpose() * x.mat() * &h);
        let lhs = emb.killing_field_value(&x, &hp);
        let rhs = emb.push_tangent(&h, &emb.killing_field_value(&xh, &p));
        assert!((lhs - rhs).norm() < 1e-10);
        let (orth, twisted) = emb.validate(&hp);
        assert!(orth < 1e-12 && twisted < 1e-12);
    }

    #[test]
    fn cartan_relations_hold() {
        let c1 = diag(&[1.0, 1.0, -1.0, -1.0, -1.0]);
        let c2 = diag(&[1.0, -1.0, 1.0, -1.0, -1.0]);
        let triad = Triad::new(
            Involution::new(c1, 1e-12).unwrap(),
            Involution::new(c2, 1e-12).unwrap(),
        )
        .unwrap();
        let d = TriadDecomposition::new(&triad, &Tolerances::default()).unwrap();
        assert!(d.commuting);
        assert_eq!(d.k.ncols() + d.m.ncols(), d.dim_g());
        assert_eq!(
            d.kp.ncols() + d.kh.ncols() + d.mh.ncols() + d.mp.ncols(),
            d.dim_g()
        );
        let alg = &triad.alg;
        let pk = &d.k * d.k.transpose();
        let pm = &d.m * d.m.transpose();
        let pkh = &d.kh * d.kh.transpose();
        let pmh = &d.mh * d.mh.transpose();
        for a in d.m.column_iter() {
            for b in d.m.column_iter() {
                let br = alg.bracket_coords(&a.into_owned(), &b.into_owned());
                assert!((&br - &pk * &br).norm() < 1e-10);
            }
            for b in d.k.column_iter() {
                let br = alg.bracket_coords(&a.into_owned(), &b.into_owned());
                assert!((&br - &pm * &br).norm() < 1e-10);
            }
        }
        for a in d.mp.column_iter() {
            for b in d.mp.column_iter() {
                let br = alg.bracket_coords(&a.into_owned(), &b.into_owned());
                assert!((&br - &pkh * &br).norm() < 1e-10);
            }
            for b in d.kp.column_iter() {
                let br = alg.bracket_coords(&a.into_owned(), &b.into_owned());
                assert!((&br - &pmh * &br).norm() < 1e-10);
            }
        }
        // refined blocks are mutually orthogonal
        let blocks = [&d.kp, &d.kh, &d.mh, &d.mp];
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!((blocks[i].transpose() * blocks[j]).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn exp_is_orthogonal(seed in any::<u64>(), n in 3usize..8, t in 0.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_skew(n, &mut rng);
            let e = mat_exp(&x, t);
            let id = DMatrix::<f64>::identity(n, n);
            prop_assert!((e.transpose() * &e - &id).norm() < 1e-12);
            let inv = mat_exp(&x, -t);
            prop_assert!((&e * inv - id).norm() < 1e-12);
        }

        #[test]
        fn skew_validation_accepts_skew_and_rejects_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_skew(4, &mut rng);
            prop_assert!(AlgElement::new(x.mat().clone(), 1e-12).is_ok());
            let sym = x.mat() + DMatrix::<f64>::identity(4, 4);
            prop_assert!(AlgElement::new(sym, 1e-12).is_err());
        }
    }
}
