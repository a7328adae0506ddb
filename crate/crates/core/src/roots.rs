//! Maximal abelian frames, restricted roots on `a` and adapted roots on `t`.
//!
//! Root functionals are stored twice: as coefficient vectors on the frame
//! they were computed on, and as their Killing duals (vectors in `g`
//! coordinates lying in `a` or `t`), so `alpha(W) = <dual, W>` for any `W`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::lie::{AlgElement, SoAlgebra, Triad, TriadDecomposition};
use crate::linalg;

const AMBIGUITY_FACTOR: f64 = 100.0;

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// Centralizer of `span(of)` inside `span(within)` (both orthonormal columns).
pub fn centralizer(
    alg: &SoAlgebra,
    of: &DMatrix<f64>,
    within: &DMatrix<f64>,
    tol: f64,
) -> DMatrix<f64> {
    if of.ncols() == 0 || within.ncols() == 0 {
        return within.clone();
    }
    let dim = alg.dim();
    let mut stacked = DMatrix::zeros(dim * of.ncols(), within.ncols());
    for (i, s) in of.column_iter().enumerate() {
        let block = alg.ad(&s.into_owned()) * within;
        stacked
            .view_mut((i * dim, 0), (dim, within.ncols()))
            .copy_from(&block);
    }
    let coeffs = linalg::null_space(&stacked, tol);
    linalg::orthonormal_columns(&(within * coeffs), tol)
}

/// A maximal abelian subspace with its certificate: the centralizer of the
/// basis inside the ambient subspace has exactly the dimension of the basis.
#[derive(Debug, Clone)]
pub struct MaximalAbelian {
    pub basis: DMatrix<f64>,
    pub centralizer_dim: usize,
    pub iterations: usize,
}

/// Greedy maximal abelian subspace of `span(subspace)`.
pub fn maximal_abelian(
    alg: &SoAlgebra,
    subspace: &DMatrix<f64>,
    seed: u64,
    tol: &Tolerances,
) -> Result<MaximalAbelian> {
    extend_abelian(alg, subspace, &linalg::empty(alg.dim()), seed, tol)
}

/// Extend an abelian `start` to a maximal abelian subspace of `span(subspace)`.
pub fn extend_abelian(
    alg: &SoAlgebra,
    subspace: &DMatrix<f64>,
    start: &DMatrix<f64>,
    seed: u64,
    tol: &Tolerances,
) -> Result<MaximalAbelian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis = start.clone();
    let limit = subspace.ncols() + 1;
    for iterations in 0..limit {
        let cent = centralizer(alg, &basis, subspace, tol.subspace);
        let fresh = linalg::complement_within(&basis, &cent, tol.subspace);
        if fresh.ncols() == 0 {
            return Ok(MaximalAbelian {
                centralizer_dim: cent.ncols(),
                basis,
                iterations,
            });
        }
        let mut x = &fresh * gaussian_vector(&mut rng, fresh.ncols());
        x /= x.norm();
        basis = linalg::hcat(&[
            &basis,
            &DMatrix::from_column_slice(x.len(), 1, x.as_slice()),
        ]);
    }
    Err(Error::MaximalityNotCertified { iterations: limit })
}

/// Abelian frames supplied by a catalog entry instead of the greedy search.
#[derive(Debug, Clone, Serialize)]
pub struct ExplicitFrames {
    /// Chart vectors spanning `t`; section coordinates are taken on these.
    pub t: Vec<AlgElement>,
    /// A complement of `t` in `a`.
    pub tprime: Vec<AlgElement>,
}

/// `t ⊂ a` with orthonormal bases and the section chart.
#[derive(Debug, Clone)]
pub struct AbelianFrames {
    pub t_basis: DMatrix<f64>,
    pub tprime_basis: DMatrix<f64>,
    /// `[t_basis | tprime_basis]`.
    pub a_basis: DMatrix<f64>,
    /// Columns `T_j` in `t`; section coordinates `w` stand for `sum_j w_j T_j`.
    /// Filled in by [`adapted_roots`] when the frames are greedy.
    pub chart: DMatrix<f64>,
    pub explicit: bool,
    pub t_centralizer_dim: usize,
    pub a_centralizer_dim: usize,
}

impl AbelianFrames {
    pub fn rank(&self) -> usize {
        self.t_basis.ncols()
    }

    /// The element `sum_j w_j T_j` as coordinates in `g`.
    pub fn section_vector(&self, w: &[f64]) -> Result<DVector<f64>> {
        if w.len() != self.chart.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.chart.ncols(),
                found: w.len(),
            });
        }
        Ok(&self.chart * DVector::from_row_slice(w))
    }
}

pub fn abelian_frames(
    alg: &SoAlgebra,
    decomp: &TriadDecomposition,
    explicit: Option<&ExplicitFrames>,
    seed: u64,
    tol: &Tolerances,
) -> Result<AbelianFrames> {
    let hperp = decomp.h_perp_in_m(tol.subspace);
    let (t_basis, chart, start_seed) = match explicit {
        Some(ex) => {
            let mut chart = DMatrix::zeros(alg.dim(), ex.t.len());
            for (j, x) in ex.t.iter().enumerate() {
                chart.set_column(j, &alg.coords(x));
            }
            let t_basis = linalg::orthonormal_columns(&chart, tol.subspace);
            if t_basis.ncols() != ex.t.len() {
                return Err(Error::InvalidInput(
                    "explicit t frame is linearly dependent".into(),
                ));
            }
            if linalg::containment_defect(&t_basis, &hperp) > tol.subspace {
                return Err(Error::InvalidInput(
                    "explicit t frame is not contained in the orthogonal complement of h in m"
                        .into(),
                ));
            }
            (t_basis, chart, seed)
        }
        None => {
            let t = maximal_abelian(alg, &hperp, seed, tol)?;
            let chart = t.basis.clone();
            (t.basis, chart, seed.wrapping_add(1))
        }
    };
    let t_cent = centralizer(alg, &t_basis, &hperp, tol.subspace);
    if t_cent.ncols() != t_basis.ncols() {
        return Err(Error::MaximalityNotCertified { iterations: 0 });
    }
    let a_basis = match explicit {
        Some(ex) => {
            let mut cols = DMatrix::zeros(alg.dim(), ex.tprime.len());
            for (j, x) in ex.tprime.iter().enumerate() {
                cols.set_column(j, &alg.coords(x));
            }
            let tp = linalg::orthonormal_columns(&cols, tol.subspace);
            linalg::hcat(&[&t_basis, &tp])
        }
        None => extend_abelian(alg, &decomp.m, &t_basis, start_seed, tol)?.basis,
    };
    let a_cent = centralizer(alg, &a_basis, &decomp.m, tol.subspace);
    if a_cent.ncols() != a_basis.ncols() {
        return Err(Error::MaximalityNotCertified { iterations: 0 });
    }
    let r = t_basis.ncols();
    let tprime_basis = a_basis.columns(r, a_basis.ncols() - r).into_owned();
    // orthogonalize t' against t in case explicit frames were not orthogonal
    let tprime_basis = linalg::complement_within(
        &t_basis,
        &linalg::orthonormal_columns(&linalg::hcat(&[&t_basis, &tprime_basis]), tol.subspace),
        tol.subspace,
    );
    let a_basis = linalg::hcat(&[&t_basis, &tprime_basis]);
    Ok(AbelianFrames {
        t_centralizer_dim: t_cent.ncols(),
        a_centralizer_dim: a_cent.ncols(),
        t_basis,
        tprime_basis,
        a_basis,
        chart,
        explicit: explicit.is_some(),
    })
}

/// One positive restricted root `alpha` of `(g, k)` with respect to `a`.
#[derive(Debug, Clone)]
pub struct RestrictedRoot {
    /// `alpha(A_i)` for the columns `A_i` of `a_basis`.
    pub coeffs: DVector<f64>,
    /// Killing dual of `alpha` in `g` coordinates.
    pub dual: DVector<f64>,
    pub m_space: DMatrix<f64>,
    pub k_space: DMatrix<f64>,
}

impl RestrictedRoot {
    pub fn eval(&self, w: &DVector<f64>) -> f64 {
        self.dual.dot(w)
    }

    pub fn mult(&self) -> usize {
        self.m_space.ncols()
    }

    /// For `Y` in `m_alpha`, the `X` in `k_alpha` with `[W, Y] = alpha(W) X` for
    /// all `W` in `a`. The roundtrip `[W, X] = -alpha(W) Y` is a separate check.
    pub fn related(&self, alg: &SoAlgebra, y: &DVector<f64>) -> DVector<f64> {
        let w = &self.dual;
        alg.bracket_coords(w, y) / w.norm_squared()
    }
}

#[derive(Debug, Clone)]
pub struct RootSystem {
    pub frames: AbelianFrames,
    pub roots: Vec<RestrictedRoot>,
    /// `z_k(a)`.
    pub zk_a: DMatrix<f64>,
    /// Generic element of `a` defining positivity, as coefficients on `a_basis`.
    pub ordering: DVector<f64>,
}

fn ad_squared_family(
    alg: &SoAlgebra,
    elements: &[DVector<f64>],
    space: &DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    elements
        .iter()
        .map(|w| {
            let ad = alg.ad(w);
            let img = &ad * space;
            // -space^T ad^2 space = (ad space)^T (ad space) since ad is skew
            img.transpose() * img
        })
        .collect()
}

fn positive(coeffs: &DVector<f64>, ordering: &DVector<f64>, tol: f64) -> bool {
    let v = coeffs.dot(ordering);
    if v.abs() > tol * coeffs.norm() {
        return v > 0.0;
    }
    coeffs
        .iter()
        .find(|c| c.abs() > tol * coeffs.norm())
        .map(|c| *c > 0.0)
        .unwrap_or(true)
}

/// Restricted roots of `(g, k)` on `a` by joint diagonalization of `ad_W^2`.
pub fn restricted_roots(
    alg: &SoAlgebra,
    frames: AbelianFrames,
    decomp: &TriadDecomposition,
    seed: u64,
    tol: &Tolerances,
) -> Result<RootSystem> {
    let a = &frames.a_basis;
    let ra = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a0a_5151);
    let mut elements: Vec<DVector<f64>> = a.column_iter().map(|c| c.into_owned()).collect();
    // Two generic elements separate roots whose squares agree on every basis vector.
    for _ in 0..2 {
        elements.push(a * gaussian_vector(&mut rng, ra));
    }
    let ordering = gaussian_vector(&mut rng, ra);

    let m_family = ad_squared_family(alg, &elements, &decomp.m);
    let m_spaces = linalg::joint_eigenspaces(&m_family, tol.cluster)?;
    let scale = m_spaces
        .iter()
        .flat_map(|s| s.values.iter().cloned())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let zero_tol = tol.cluster * scale;

    let k_family = ad_squared_family(alg, &elements, &decomp.k);
    let k_spaces = linalg::joint_eigenspaces(&k_family, tol.cluster)?;

    let is_zero = |vals: &[f64]| vals.iter().all(|v| v.abs() <= zero_tol);
    let mut zero_dim = 0;
    let mut roots = Vec::new();
    for space in &m_spaces {
        if is_zero(&space.values) {
            zero_dim += space.basis.ncols();
            let zm = &decomp.m * &space.basis;
            if !linalg::same_span(&zm, a, tol.subspace.sqrt()) {
                return Err(Error::RootData(
                    "centralizer of a in m differs from a".into(),
                ));
            }
            continue;
        }
        let m_space = &decomp.m * &space.basis;
        let y = m_space.column(0).into_owned();
        let z: Vec<DVector<f64>> = a
            .column_iter()
            .map(|w| alg.bracket_coords(&w.into_owned(), &y))
            .collect();
        let pivot = (0..ra)
            .max_by(|&i, &j| z[i].norm().total_cmp(&z[j].norm()))
            .ok_or_else(|| Error::RootData("empty abelian frame".into()))?;
        let x = &z[pivot] / z[pivot].norm();
        let mut coeffs = DVector::from_iterator(ra, z.iter().map(|zi| zi.dot(&x)));
        for (i, zi) in z.iter().enumerate() {
            // z_i must be parallel to the related vector
            if (zi - &x * coeffs[i]).norm() > tol.subspace.sqrt() * scale.sqrt() {
                return Err(Error::RootData(format!(
                    "bracket images of a root vector are not parallel (axis {i})"
                )));
            }
        }
        if !positive(&coeffs, &ordering, 1e-6) {
            coeffs = -coeffs;
        }
        let dual = a * &coeffs;
        // generic elements must agree with the squared joint values
        for (w, &val) in elements.iter().zip(&space.values) {
            let pred = dual.dot(w).powi(2);
            if (pred - val).abs() > tol.cluster.sqrt() * scale {
                return Err(Error::RootData(format!(
                    "alpha(W)^2 = {pred} disagrees with joint eigenvalue {val}"
                )));
            }
        }
        let matched: Vec<&linalg::JointSpace> = k_spaces
            .iter()
            .filter(|ks| {
                ks.values
                    .iter()
                    .zip(&space.values)
                    .all(|(a, b)| (a - b).abs() <= AMBIGUITY_FACTOR * zero_tol)
            })
            .collect();
        if matched.len() != 1 {
            return Err(Error::RootData(format!(
                "expected one matching k root space, found {}",
                matched.len()
            )));
        }
        let k_space = &decomp.k * &matched[0].basis;
        if k_space.ncols() != m_space.ncols() {
            return Err(Error::RootData(format!(
                "dim m_alpha = {} but dim k_alpha = {}",
                m_space.ncols(),
                k_space.ncols()
            )));
        }
        roots.push(RestrictedRoot {
            coeffs,
            dual,
            m_space,
            k_space,
        });
    }
    if zero_dim != ra {
        return Err(Error::RootData(format!(
            "zero joint eigenspace has dim {zero_dim}, expected dim a = {ra}"
        )));
    }
    let total: usize = roots.iter().map(|r| r.mult()).sum::<usize>() + ra;
    if total != decomp.m.ncols() {
        return Err(Error::RootData(format!(
            "root spaces and a sum to {total}, dim m = {}",
            decomp.m.ncols()
        )));
    }
    let zk_a = k_spaces
        .iter()
        .filter(|ks| is_zero(&ks.values))
        .map(|ks| &decomp.k * &ks.basis)
        .fold(linalg::empty(alg.dim()), |acc, b| linalg::hcat(&[&acc, &b]));
    roots.sort_by(|x, y| {
        x.coeffs
            .norm()
            .total_cmp(&y.coeffs.norm())
            .then_with(|| lex_cmp(&y.coeffs, &x.coeffs))
    });
    Ok(RootSystem {
        frames,
        roots,
        zk_a,
        ordering,
    })
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        if (x - y).abs() > 1e-9 {
            return x.total_cmp(y);
        }
    }
    std::cmp::Ordering::Equal
}

/// A `sigma2`-orbit `{±alpha, ±alpha∘sigma2}` of restricted roots inside one
/// adapted root space, with its own refined multiplicities.
#[derive(Debug, Clone, Serialize)]
pub struct RootFamily {
    pub roots: Vec<usize>,
    pub p_mult: usize,
    pub h_mult: usize,
}

/// One adapted root `beta` in `Delta_t^+`.
#[derive(Debug, Clone)]
pub struct AdaptedRootDatum {
    /// `beta(T_i)` for the orthonormal `t_basis`.
    pub beta: DVector<f64>,
    /// `beta(T_j)` for the chart columns; `beta(w) = chart_coeffs . w`.
    pub chart_coeffs: DVector<f64>,
    pub dual: DVector<f64>,
    /// Indices of the restricted roots with `alpha|t = ±beta`.
    pub roots: Vec<usize>,
    pub m_space: DMatrix<f64>,
    pub k_space: DMatrix<f64>,
    /// Whether `sigma2` preserves `m^t_beta`; the refined spaces below are
    /// meaningful only then.
    pub splits: bool,
    pub mh: DMatrix<f64>,
    pub mp: DMatrix<f64>,
    pub kh: DMatrix<f64>,
    pub kp: DMatrix<f64>,
    pub h_mult: usize,
    pub p_mult: usize,
    pub families: Vec<RootFamily>,
}

impl AdaptedRootDatum {
    /// `beta(w)` for section coordinates `w`.
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.chart_coeffs.iter().zip(w).map(|(c, x)| c * x).sum()
    }

    pub fn dim(&self) -> usize {
        self.m_space.ncols()
    }
}

/// `z_m(t)` and `z_k(t)` with their refined splits.
#[derive(Debug, Clone)]
pub struct CentralizerDatum {
    pub zm: DMatrix<f64>,
    pub zm_h: DMatrix<f64>,
    pub zm_p: DMatrix<f64>,
    pub zk: DMatrix<f64>,
    pub zk_h: DMatrix<f64>,
    pub zk_p: DMatrix<f64>,
    pub splits: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptedRoots {
    pub data: Vec<AdaptedRootDatum>,
    pub centralizer: CentralizerDatum,
}

impl AdaptedRoots {
    /// `dim z_m(t) + sum_beta dim m^t_beta`; equals `dim m` when complete.
    pub fn total_dim(&self) -> usize {
        self.centralizer.zm.ncols() + self.data.iter().map(|d| d.dim()).sum::<usize>()
    }
}

/// Split `span(basis)` into `sigma2` eigenspaces, or `None` if not invariant.
fn sigma2_split(
    s2: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    tol: f64,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    if basis.ncols() == 0 {
        return Some((basis.clone(), basis.clone()));
    }
    let image = s2 * basis;
    if linalg::containment_defect(&image, basis) > tol {
        return None;
    }
    let r = basis.transpose() * image;
    let id = DMatrix::<f64>::identity(r.nrows(), r.ncols());
    let plus = linalg::orthonormal_columns(&(basis * (&r + &id)), tol);
    let minus = linalg::orthonormal_columns(&(basis * (&r - &id)), tol);
    Some((plus, minus))
}

fn stack(blocks: impl Iterator<Item = DMatrix<f64>>, rows: usize, tol: f64) -> DMatrix<f64> {
    let all = blocks.fold(linalg::empty(rows), |acc, b| linalg::hcat(&[&acc, &b]));
    linalg::orthonormal_columns(&all, tol)
}

/// Weights of the defining representation on `t`: the `mu` with
/// `T v = mu(T) J v` on an invariant plane, one per `±` pair, in `t_basis`
/// coordinates.
fn standard_weights(alg: &SoAlgebra, t_basis: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    let r = t_basis.ncols();
    let ts: Vec<DMatrix<f64>> = (0..r)
        .map(|i| alg.element(&t_basis.column(i).into_owned()).into_mat())
        .collect();
    let tnorm = ts
        .iter()
        .map(|t| t.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    'attempt: for attempt in 0..8 {
        // a generic element separates weights that are not equal up to sign
        let c: Vec<f64> = (0..r)
            .map(|i| {
                ((i + 2) as f64).sqrt() + std::f64::consts::FRAC_1_PI * (attempt * (i + 1)) as f64
            })
            .collect();
        let x = ts
            .iter()
            .zip(&c)
            .fold(DMatrix::zeros(alg.n(), alg.n()), |acc, (t, ci)| {
                acc + t * *ci
            });
        let (vals, vecs) = linalg::sorted_symmetric_eigen(&(&x * x.transpose()));
        let top = vals.last().cloned().unwrap_or(0.0);
        let mut out: Vec<DVector<f64>> = Vec::new();
        for (k, v2) in vals.iter().enumerate() {
            if *v2 <= 1e-10 * top.max(f64::MIN_POSITIVE) {
                continue;
            }
            let omega = v2.sqrt();
            let u = vecs.column(k).into_owned();
            let ju = &x * &u / omega;
            let mut mu = DVector::from_iterator(r, ts.iter().map(|t| (t * &u).dot(&ju)));
            let consistent = ts
                .iter()
                .zip(mu.iter())
                .all(|(t, m)| (t * &u - &ju * *m).norm() < 1e-8 * tnorm);
            if !consistent {
                continue 'attempt;
            }
            if let Some(first) = mu.iter().find(|m| m.abs() > 1e-9 * tnorm) {
                if *first < 0.0 {
                    mu = -mu;
                }
            }
            if !out.iter().any(|w| (w - &mu).norm() < 1e-8 * tnorm) {
                out.push(mu);
            }
        }
        return Ok(out);
    }
    Err(Error::RootData(
        "could not separate the weights of t".into(),
    ))
}

/// Column-style Hermite reduction: the first `rows` returned columns are a
/// basis of the integer span of `cols`.
fn integer_basis(mut cols: Vec<Vec<i64>>, rows: usize) -> Option<Vec<Vec<i64>>> {
    for row in 0..rows {
        loop {
            let live: Vec<usize> = (row..cols.len()).filter(|&k| cols[k][row] != 0).collect();
            let &pivot = live.iter().min_by_key(|&&k| cols[k][row].abs())?;
            cols.swap(row, pivot);
            if live.len() == 1 {
                break;
            }
            let (head, tail) = cols.split_at_mut(row + 1);
            let pivot_col = &head[row];
            for col in tail {
                let q = col[row].div_euclid(pivot_col[row]);
                if q != 0 {
                    for (x, p) in col.iter_mut().zip(pivot_col) {
                        *x -= q * p;
                    }
                }
            }
        }
    }
    cols.truncate(rows);
    Some(cols)
}

/// Chart matrix `V` (in `t_basis` coordinates) whose columns are dual to a
/// basis of the weight lattice, scaled so that `exp(2 pi V e_j) = 1`. Then
/// `Exp(w)` is `pi`-periodic in every chart coordinate and every adapted root
/// has integer chart coefficients.
fn lattice_chart(alg: &SoAlgebra, t_basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = t_basis.ncols();
    let mut weights = standard_weights(alg, t_basis)?;
    weights.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    // shortest independent weights as a first basis
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for w in &weights {
        let mut cand = basis.clone();
        cand.push(w.clone());
        let m = DMatrix::from_columns(&cand);
        if linalg::rank(&m, 1e-9) == cand.len() {
            basis = cand;
        }
        if basis.len() == r {
            break;
        }
    }
    if basis.len() < r {
        return Err(Error::RootData("weights of t do not span t*".into()));
    }
    let b = DMatrix::from_columns(&basis);
    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RootData("singular weight basis".into()))?;
    let coords: Vec<DVector<f64>> = weights.iter().map(|w| &b_inv * w).collect();
    let denom = (1..=24i64)
        .find(|d| {
            coords.iter().all(|c| {
                c.iter()
                    .all(|x| (x * *d as f64 - (x * *d as f64).round()).abs() < 1e-6)
            })
        })
        .ok_or_else(|| Error::RootData("weights of t are not commensurable".into()))?;
    let cols: Vec<Vec<i64>> = coords
        .iter()
        .map(|c| {
            c.iter()
                .map(|x| (x * denom as f64).round() as i64)
                .collect()
        })
        .collect();
    let ints = integer_basis(cols, r)
        .ok_or_else(|| Error::RootData("degenerate weight lattice".into()))?;
    let h = DMatrix::from_fn(r, r, |i, j| ints[j][i] as f64 / denom as f64);
    let lattice = &b * h;
    let dual = lattice
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::RootData("singular weight lattice".into()))?;
    // orient columns so that each has a positive t_basis component where possible
    let mut v = dual;
    for j in 0..r {
        let col = v.column(j).into_owned();
        if let Some(first) = col.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v.set_column(j, &(-col));
            }
        }
    }
    Ok(v)
}

/// Restrict roots to `t`, group by `±`, and refine by `sigma2`.
///
/// When the frames came from the greedy search, the chart is replaced here by
/// [`lattice_chart`], so that every chart axis is a closed geodesic of period
/// `pi`.
pub fn adapted_roots(
    alg: &SoAlgebra,
    system: &mut RootSystem,
    decomp: &TriadDecomposition,
    tol: &Tolerances,
) -> Result<AdaptedRoots> {
    let dim = alg.dim();
    let frames = &system.frames;
    let r = frames.rank();
    let scale = system
        .roots
        .iter()
        .map(|a| a.coeffs.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = tol.cluster * scale;

    let mut zero_roots = Vec::new();
    let mut groups: Vec<(DVector<f64>, Vec<usize>)> = Vec::new();
    for (i, root) in system.roots.iter().enumerate() {
        let mut beta = root.coeffs.rows(0, r).into_owned();
        if beta.norm() <= eps {
            zero_roots.push(i);
            continue;
        }
        if beta.norm() < AMBIGUITY_FACTOR * eps {
            return Err(Error::ClusterSeparation {
                gap: beta.norm(),
                tol: eps,
            });
        }
        if let Some(first) = beta.iter().find(|c| c.abs() > eps) {
            if *first < 0.0 {
                beta = -beta;
            }
        }
        let mut placed = false;
        for (rep, members) in groups.iter_mut() {
            let d = (&*rep - &beta).norm();
            if d <= eps {
                members.push(i);
                placed = true;
                break;
            }
            if d < AMBIGUITY_FACTOR * eps {
                return Err(Error::ClusterSeparation { gap: d, tol: eps });
            }
        }
        if !placed {
            groups.push((beta, vec![i]));
        }
    }

    if !frames.explicit && r > 0 {
        // Representatives are lexicographically positive on t_basis and the
        // rank-one chart is a positive multiple of it, so there every adapted
        // root is positive on the chart.
        system.frames.chart = &frames.t_basis * lattice_chart(alg, &frames.t_basis)?;
    }
    let frames = &system.frames;

    // sigma2 on a, for family detection
    let s2a = frames.a_basis.transpose() * &decomp.s2 * &frames.a_basis;
    let s2_preserves_a =
        (s2a.transpose() * &s2a - DMatrix::<f64>::identity(s2a.nrows(), s2a.ncols())).norm()
            < tol.subspace.sqrt();

    let mut data = Vec::with_capacity(groups.len());
    for (beta, members) in groups {
        let beta = beta.map(|c| if c.abs() <= eps { 0.0 } else { c });
        let dual = &frames.t_basis * &beta;
        let chart_coeffs =
            (frames.chart.transpose() * &dual).map(|c| if c.abs() <= eps { 0.0 } else { c });
        let m_space = stack(
            members.iter().map(|&i| system.roots[i].m_space.clone()),
            dim,
            tol.subspace,
        );
        let k_space = stack(
            members.iter().map(|&i| system.roots[i].k_space.clone()),
            dim,
            tol.subspace,
        );
        let split_m = sigma2_split(&decomp.s2, &m_space, tol.subspace.sqrt());
        let split_k = sigma2_split(&decomp.s2, &k_space, tol.subspace.sqrt());
        let (splits, mh, mp, kh, kp) = match (split_m, split_k) {
            (Some((mh, mp)), Some((kh, kp))) if decomp.commuting => (true, mh, mp, kh, kp),
            _ => (
                false,
                linalg::empty(dim),
                linalg::empty(dim),
                linalg::empty(dim),
                linalg::empty(dim),
            ),
        };
        let families = if splits && s2_preserves_a {
            root_families(system, &members, &s2a, &decomp.s2, eps, tol)?
        } else {
            Vec::new()
        };
        data.push(AdaptedRootDatum {
            h_mult: mh.ncols(),
            p_mult: mp.ncols(),
            beta,
            chart_coeffs,
            dual,
            roots: members,
            m_space,
            k_space,
            splits,
            mh,
            mp,
            kh,
            kp,
            families,
        });
    }
    data.sort_by(|x, y| {
        x.chart_coeffs
            .norm()
            .total_cmp(&y.chart_coeffs.norm())
            .then_with(|| lex_cmp(&y.chart_coeffs, &x.chart_coeffs))
    });

    let zm = stack(
        std::iter::once(frames.a_basis.clone())
            .chain(zero_roots.iter().map(|&i| system.roots[i].m_space.clone())),
        dim,
        tol.subspace,
    );
    let zk = stack(
        std::iter::once(system.zk_a.clone())
            .chain(zero_roots.iter().map(|&i| system.roots[i].k_space.clone())),
        dim,
        tol.subspace,
    );
    let cm = sigma2_split(&decomp.s2, &zm, tol.subspace.sqrt());
    let ck = sigma2_split(&decomp.s2, &zk, tol.subspace.sqrt());
    let centralizer = match (cm, ck) {
        (Some((zm_h, zm_p)), Some((zk_h, zk_p))) if decomp.commuting => CentralizerDatum {
            zm,
            zm_h,
            zm_p,
            zk,
            zk_h,
            zk_p,
            splits: true,
        },
        _ => CentralizerDatum {
            zm,
            zk,
            zm_h: linalg::empty(dim),
            zm_p: linalg::empty(dim),
            zk_h: linalg::empty(dim),
            zk_p: linalg::empty(dim),
            splits: false,
        },
    };
    let out = AdaptedRoots { data, centralizer };
    if out.total_dim() != decomp.m.ncols() {
        return Err(Error::RootData(format!(
            "adapted decomposition has dim {}, dim m = {}",
            out.total_dim(),
            decomp.m.ncols()
        )));
    }
    Ok(out)
}

fn root_families(
    system: &RootSystem,
    members: &[usize],
    s2a: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    eps: f64,
    tol: &Tolerances,
) -> Result<Vec<RootFamily>> {
    let dim = s2.nrows();
    let mut assigned = vec![false; members.len()];
    let mut out = Vec::new();
    for a in 0..members.len() {
        if assigned[a] {
            continue;
        }
        assigned[a] = true;
        let mut fam = vec![members[a]];
        let image = s2a.transpose() * &system.roots[members[a]].coeffs;
        for b in 0..members.len() {
            if assigned[b] {
                continue;
            }
            let c = &system.roots[members[b]].coeffs;
            if (c - &image).norm() <= eps * AMBIGUITY_FACTOR
                || (c + &image).norm() <= eps * AMBIGUITY_FACTOR
            {
                assigned[b] = true;
                fam.push(members[b]);
            }
        }
        let space = stack(
            fam.iter().map(|&i| system.roots[i].m_space.clone()),
            dim,
            tol.subspace,
        );
        let (h, p) = sigma2_split(s2, &space, tol.subspace.sqrt())
            .ok_or_else(|| Error::RootData("sigma2 does not preserve a root family".into()))?;
        out.push(RootFamily {
            roots: fam,
            p_mult: p.ncols(),
            h_mult: h.ncols(),
        });
    }
    Ok(out)
}

/// Which condition a singular point violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    /// `beta(w) in pi Z` with `p_beta > 0`.
    Sin,
    /// `beta(w) in pi/2 + pi Z` with `h_beta > 0`.
    Cos,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WallViolation {
    pub beta: usize,
    pub kind: WallKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regularity {
    pub regular: bool,
    pub violations: Vec<WallViolation>,
}

/// Regularity of `Exp(w)` for commuting triads from the multiplicity table.
pub fn is_regular(w: &[f64], data: &[AdaptedRootDatum], angle_tol: f64) -> Regularity {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mut violations = Vec::new();
    for (i, d) in data.iter().enumerate() {
        let b = d.eval(w);
        if d.p_mult > 0 && linalg::lattice_distance(b, 0.0, PI) < angle_tol {
            violations.push(WallViolation {
                beta: i,
                kind: WallKind::Sin,
                value: b,
            });
        }
        if d.h_mult > 0 && linalg::lattice_distance(b, FRAC_PI_2, PI) < angle_tol {
            violations.push(WallViolation {
                beta: i,
                kind: WallKind::Cos,
                value: b,
            });
        }
    }
    Regularity {
        regular: violations.is_empty(),
        violations,
    }
}

/// Complete root data of a triad: frames, restricted and adapted roots.
#[derive(Debug, Clone)]
pub struct RootData {
    pub system: RootSystem,
    pub adapted: AdaptedRoots,
}

pub fn root_data(
    triad: &Triad,
    decomp: &TriadDecomposition,
    explicit: Option<&ExplicitFrames>,
    seed: u64,
    tol: &Tolerances,
) -> Result<RootData> {
    let frames = abelian_frames(&triad.alg, decomp, explicit, seed, tol)?;
    let mut system = restricted_roots(&triad.alg, frames, decomp, seed, tol)?;
    let adapted = adapted_roots(&triad.alg, &mut system, decomp, tol)?;
    Ok(RootData { system, adapted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Involution;
    use rand::Rng;

    fn diag(entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(entries))
    }

    fn triad(c1: &[f64], c2: &[f64]) -> (Triad, TriadDecomposition) {
        let t = Triad::new(
            Involution::new(diag(c1), 1e-12).unwrap(),
            Involution::new(diag(c2), 1e-12).unwrap(),
        )
        .unwrap();
        let d = TriadDecomposition::new(&t, &Tolerances::default()).unwrap();
        (t, d)
    }

    #[test]
    fn sphere_has_rank_one_and_one_root() {
        let tol = Tolerances::default();
        for n in 3..7 {
            let mut c = vec![-1.0; n];
            c[0] = 1.0;
            let (t, d) = triad(&c, &c);
            let data = root_data(&t, &d, None, 11, &tol).unwrap();
            assert_eq!(data.system.frames.rank(), 1);
            assert_eq!(data.system.roots.len(), 1);
            assert_eq!(data.system.roots[0].mult(), n - 2);
            assert_eq!(data.adapted.data.len(), 1);
            let b = &data.adapted.data[0];
            assert_eq!((b.p_mult, b.h_mult), (n - 2, 0));
            assert!((b.chart_coeffs[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn root_vectors_satisfy_joint_eigen_equation_and_related_pairs() {
        let tol = Tolerances::default();
        let (t, d) = triad(&[1.0, 1.0, -1.0, -1.0, -1.0], &[1.0, -1.0, 1.0, -1.0, -1.0]);
        let data = root_data(&t, &d, None, 3, &tol).unwrap();
        let alg = &t.alg;
        let a = &data.system.frames.a_basis;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for root in &data.system.roots {
            for _ in 0..3 {
                let w = a * DVector::from_fn(a.ncols(), |_, _| rng.random_range(-1.0..1.0));
                let ad = alg.ad(&w);
                let aw = root.eval(&w);
                for y in root.m_space.column_iter() {
                    let y = y.into_owned();
                    let lhs = &ad * (&ad * &y) + &y * aw * aw;
                    assert!(lhs.norm() < 1e-8 * y.norm().max(1.0));
                }
            }
            for y in root.m_space.column_iter() {
                let y = y.into_owned();
                let x = root.related(alg, &y);
                for w in a.column_iter() {
                    let w = w.into_owned();
                    let aw = root.eval(&w);
                    assert!((alg.bracket_coords(&w, &y) - &x * aw).norm() < 1e-9);
                    assert!((alg.bracket_coords(&w, &x) + &y * aw).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn isotropy_triad_has_no_h_multiplicities() {
        let tol = Tolerances::default();
        let c = [1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let (t, d) = triad(&c, &c);
        let data = root_data(&t, &d, None, 5, &tol).unwrap();
        assert_eq!(data.system.frames.rank(), 2);
        for b in &data.adapted.data {
            assert_eq!(b.h_mult, 0);
            assert_eq!(b.p_mult, b.dim());
        }
        assert_eq!(data.adapted.total_dim(), d.m.ncols());
    }

    #[test]
    fn centralizer_matches_direct_computation() {
        let tol = Tolerances::default();
        let (t, d) = triad(
            &[1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
            &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0],
        );
        let data = root_data(&t, &d, None, 5, &tol).unwrap();
        let direct = centralizer(&t.alg, &data.system.frames.t_basis, &d.m, tol.subspace);
        assert!(linalg::same_span(
            &direct,
            &data.adapted.centralizer.zm,
            1e-8
        ));
        let direct_k = centralizer(&t.alg, &data.system.frames.t_basis, &d.k, tol.subspace);
        assert!(linalg::same_span(
            &direct_k,
            &data.adapted.centralizer.zk,
            1e-8
        ));
    }

    #[test]
    fn regularity_conditions() {
        let tol = Tolerances::default();
        let (t, d) = triad(&[1.0, -1.0, -1.0], &[1.0, -1.0, -1.0]);
        let data = root_data(&t, &d, None, 1, &tol).unwrap();
        let reg = |s: f64| is_regular(&[s], &data.adapted.data, 1e-9);
        assert!(!reg(0.0).regular);
        assert_eq!(reg(0.0).violations[0].kind, WallKind::Sin);
        assert!(reg(std::f64::consts::FRAC_PI_4).regular);
        // h = 0 for the sphere, so pi/2 is not a cos wall
        assert!(reg(std::f64::consts::FRAC_PI_2).regular);
    }
}
