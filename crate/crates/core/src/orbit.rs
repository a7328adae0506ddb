//! Orbit geometry of the `H`-action: tangent blocks, shape operators,
//! curvature operators and relative densities.
//!
//! Two independent routes are used throughout. The algebraic route moves the
//! point `Exp(w)` back to the origin by conjugating `h` with `exp(-W)`; there
//! the tangent space is `pr_m h'` and shape and curvature operators are brackets.
//! The numeric route works in the Cartan embedding and never uses root data.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::TriadAnalysis;
use crate::error::{Error, Result};
use crate::integration::DensityProfile;
use crate::lie::{expm, SpacePoint};
use crate::linalg;

/// Where a tangent block or eigenvalue comes from, in origin labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTag {
    /// `z_m(t) ∩ h` (general case: `z_m(t) ⊖ t`).
    ZmH,
    /// `m^t_beta ∩ h`.
    MH,
    /// `m^t_beta ∩ p`.
    MP,
    /// A common eigenspace `V_{beta,i}` of the general case.
    Refined,
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentBlock {
    pub tag: BlockTag,
    pub beta: Option<usize>,
    pub dim: usize,
    #[serde(skip)]
    pub basis: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitFrame {
    pub w: Vec<f64>,
    pub regular: bool,
    pub tangent_blocks: Vec<TangentBlock>,
    pub tangent_dim: usize,
    pub normal_dim: usize,
    /// `m` minus the tangent blocks: `t` plus any collapsed blocks.
    #[serde(skip)]
    pub normal_basis: DMatrix<f64>,
}

/// Tangent blocks of `H.Exp(w)` in origin labels.
pub fn orbit_frame(a: &TriadAnalysis, w: &[f64]) -> Result<OrbitFrame> {
    if !a.commuting() {
        return Err(Error::NotCommuting);
    }
    if w.len() != a.rank() {
        return Err(Error::DimensionMismatch {
            expected: a.rank(),
            found: w.len(),
        });
    }
    let angle = a.config.tol.angle;
    let cent = &a.roots.adapted.centralizer;
    let mut blocks = Vec::new();
    if cent.zm_h.ncols() > 0 {
        blocks.push(TangentBlock {
            tag: BlockTag::ZmH,
            beta: None,
            dim: cent.zm_h.ncols(),
            basis: cent.zm_h.clone(),
        });
    }
    for (i, d) in a.adapted().iter().enumerate() {
        let b = d.eval(w);
        if d.h_mult > 0 && linalg::lattice_distance(b, FRAC_PI_2, PI) >= angle {
            blocks.push(TangentBlock {
                tag: BlockTag::MH,
                beta: Some(i),
                dim: d.h_mult,
                basis: d.mh.clone(),
            });
        }
        if d.p_mult > 0 && linalg::lattice_distance(b, 0.0, PI) >= angle {
            blocks.push(TangentBlock {
                tag: BlockTag::MP,
                beta: Some(i),
                dim: d.p_mult,
                basis: d.mp.clone(),
            });
        }
    }
    let bases: Vec<&DMatrix<f64>> = blocks.iter().map(|b| &b.basis).collect();
    let tangent = linalg::hcat(&bases);
    let tangent = if tangent.ncols() == 0 {
        linalg::empty(a.decomp.m.nrows())
    } else {
        tangent
    };
    let normal_basis = linalg::complement_within(&tangent, &a.decomp.m, a.config.tol.subspace);
    let tangent_dim = blocks.iter().map(|b| b.dim).sum();
    Ok(OrbitFrame {
        w: w.to_vec(),
        regular: a.is_regular(w).regular,
        tangent_blocks: blocks,
        tangent_dim,
        normal_dim: normal_basis.ncols(),
        normal_basis,
    })
}

/// Killing-field values `X_k(P)` of the `h` basis at `P`, flattened as columns.
fn orbit_vectors(a: &TriadAnalysis, p: &SpacePoint) -> DMatrix<f64> {
    let n = a.triad.n();
    let hs = a.triad.alg.elements(&a.decomp.h);
    let mut out = DMatrix::zeros(n * n, hs.len());
    for (k, x) in hs.iter().enumerate() {
        let v = a.embedding.killing_field_value(x, p);
        out.set_column(k, &DVector::from_column_slice(v.as_slice()));
    }
    out
}

/// Dimension of the orbit through `Exp(w)` from the rank of the Killing-field
/// vectors in the embedding.
pub fn tangent_rank_numeric(a: &TriadAnalysis, w: &[f64]) -> Result<usize> {
    let p = a.section_point(w)?;
    Ok(linalg::rank(&orbit_vectors(a, &p), a.config.tol.rank))
}

/// Orbit tangent space at the conjugated origin.
struct ConjugatedTangent {
    /// Orthonormal basis of `pr_m h'` in `g` coordinates.
    basis: DMatrix<f64>,
    /// Column `a` is the `k` part of the `Y` in `h'` with `Y_m = basis[a]`.
    lift: DMatrix<f64>,
    /// Smallest over largest kept singular value of `pr_m` on `h'`.
    conditioning: f64,
}

fn conjugated_tangent(a: &TriadAnalysis, w: &[f64]) -> Result<ConjugatedTangent> {
    let alg = &a.triad.alg;
    let wv = a.section_vector(w)?;
    let g = expm(alg.element(&wv).mat());
    let h_conj = alg.adjoint_action(&g.transpose()) * &a.decomp.h;
    let pm = &a.decomp.m * a.decomp.m.transpose();
    let pk = &a.decomp.k * a.decomp.k.transpose();
    let proj = &pm * &h_conj;
    let dim = alg.dim();
    if proj.ncols() == 0 {
        return Ok(ConjugatedTangent {
            basis: linalg::empty(dim),
            lift: linalg::empty(dim),
            conditioning: 1.0,
        });
    }
    let svd = linalg::svd(&proj);
    let sv = &svd.s;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| smax > 0.0 && sv[i] > a.config.tol.rank * smax)
        .collect();
    let (u, v_t) = (&svd.u, &svd.v_t);
    let mut basis = DMatrix::zeros(dim, keep.len());
    let mut coeffs = DMatrix::zeros(h_conj.ncols(), keep.len());
    let mut smin = f64::INFINITY;
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &u.column(i));
        coeffs.set_column(j, &(v_t.row(i).transpose() / sv[i]));
        smin = smin.min(sv[i]);
    }
    let lift = pk * (h_conj * coeffs);
    Ok(ConjugatedTangent {
        basis,
        lift,
        conditioning: if keep.is_empty() { 1.0 } else { smin / smax },
    })
}

fn symmetrize(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let norm = m.norm();
    let defect = if norm > 0.0 {
        (m - m.transpose()).norm() / norm
    } else {
        0.0
    };
    ((m + m.transpose()) * 0.5, defect)
}

/// A shape or curvature operator on an orthonormal tangent basis.
#[derive(Debug, Clone)]
pub struct TangentOperator {
    pub tangent: DMatrix<f64>,
    pub matrix: DMatrix<f64>,
    pub symmetry_defect: f64,
}

impl TangentOperator {
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::sorted_symmetric_eigen(&self.matrix).0
    }
}

fn shape_on(a: &TriadAnalysis, ct: &ConjugatedTangent, u: &[f64]) -> Result<TangentOperator> {
    let uv = a.section_vector(u)?;
    let ad_u = a.triad.alg.ad(&uv);
    let raw = ct.basis.transpose() * ad_u * &ct.lift;
    let (matrix, symmetry_defect) = symmetrize(&raw);
    Ok(TangentOperator {
        tangent: ct.basis.clone(),
        matrix,
        symmetry_defect,
    })
}

/// Shape operator `A_u` of `H.Exp(w)` computed by brackets at the conjugated
/// origin, where it maps `Y_m` to `[U, Y_k]` for `Y` in `Ad(exp(-W)) h`.
pub fn shape_operator_algebraic(
    a: &TriadAnalysis,
    w: &[f64],
    u: &[f64],
) -> Result<TangentOperator> {
    let ct = conjugated_tangent(a, w)?;
    shape_on(a, &ct, u)
}

/// `R_v(x) = R(x, v) v = -[[x, v], v]` for `x` in `m` coordinates.
pub fn curvature_operator(a: &TriadAnalysis, v: &[f64], x: &DVector<f64>) -> Result<DVector<f64>> {
    let alg = &a.triad.alg;
    if x.len() != alg.dim() {
        return Err(Error::DimensionMismatch {
            expected: alg.dim(),
            found: x.len(),
        });
    }
    let vv = a.section_vector(v)?;
    let xv = alg.bracket_coords(x, &vv);
    Ok(-alg.bracket_coords(&xv, &vv))
}

fn curvature_on(
    a: &TriadAnalysis,
    ct: &ConjugatedTangent,
    v: &[f64],
) -> Result<(TangentOperator, f64)> {
    let vv = a.section_vector(v)?;
    let ad_v = a.triad.alg.ad(&vv);
    let r = -(&ad_v * &ad_v);
    let image = &r * &ct.basis;
    let inside = ct.basis.transpose() * &image;
    let leak = (&image - &ct.basis * &inside).norm() / r.norm().max(f64::MIN_POSITIVE);
    let (matrix, symmetry_defect) = symmetrize(&inside);
    Ok((
        TangentOperator {
            tangent: ct.basis.clone(),
            matrix,
            symmetry_defect,
        },
        leak,
    ))
}

/// `R_v` restricted to the orbit tangent space at `Exp(w)`.
pub fn curvature_on_tangent(a: &TriadAnalysis, w: &[f64], v: &[f64]) -> Result<TangentOperator> {
    let ct = conjugated_tangent(a, w)?;
    Ok(curvature_on(a, &ct, v)?.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CommutationReport {
    /// `|[R_v|_T, A_u]| / (|R_v| |A_u|)`.
    pub curvature_shape: f64,
    /// `|[A_v, A_u]| / (|A_v| |A_u|)`.
    pub shape_shape: f64,
    /// How far `R_v` moves the tangent space out of itself.
    pub tangent_leak: f64,
    pub tangent_dim: usize,
}

/// Commutation residuals at `Exp(w)` for directions `v, u` in the section.
/// Works at singular points too, since `v` and `u` share the section.
pub fn commutation_residual(
    a: &TriadAnalysis,
    w: &[f64],
    v: &[f64],
    u: &[f64],
) -> Result<CommutationReport> {
    let ct = conjugated_tangent(a, w)?;
    let a_u = shape_on(a, &ct, u)?;
    let a_v = shape_on(a, &ct, v)?;
    let (r_v, leak) = curvature_on(a, &ct, v)?;
    let ad_norm = |x: &[f64]| -> Result<f64> { Ok(a.triad.alg.ad(&a.section_vector(x)?).norm()) };
    let (su, sv) = (ad_norm(u)?, ad_norm(v)?);
    // an operator at rounding level commutes with everything
    let negligible = |m: &DMatrix<f64>, scale: f64| m.norm() <= 1e-12 * scale;
    let residual = |x: &DMatrix<f64>, sx: f64, y: &DMatrix<f64>, sy: f64| {
        if negligible(x, sx) || negligible(y, sy) {
            0.0
        } else {
            linalg::normalized_commutator(x, y)
        }
    };
    Ok(CommutationReport {
        curvature_shape: residual(&r_v.matrix, sv * sv, &a_u.matrix, su),
        shape_shape: residual(&a_v.matrix, sv, &a_u.matrix, su),
        tangent_leak: leak,
        tangent_dim: ct.basis.ncols(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub value: f64,
    pub mult: usize,
    pub tag: BlockTag,
    pub beta: Option<usize>,
    /// Index of the refined block within its root, general case only.
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSpectrum {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub entries: Vec<SpectrumEntry>,
}

impl ShapeSpectrum {
    pub fn dim(&self) -> usize {
        self.entries.iter().map(|e| e.mult).sum()
    }

    /// All eigenvalues with multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.mult))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Eigenvalues of `A_u` at a regular `Exp(w)`: `beta(u) tan beta(w)` on
/// `m^t_beta ∩ h`, `-beta(u) cot beta(w)` on `m^t_beta ∩ p`, zero on `z_m(t) ∩ h`.
pub fn shape_spectrum_closed(a: &TriadAnalysis, w: &[f64], u: &[f64]) -> Result<ShapeSpectrum> {
    if !a.commuting() {
        return Err(Error::NotCommuting);
    }
    if u.len() != a.rank() || w.len() != a.rank() {
        return Err(Error::DimensionMismatch {
            expected: a.rank(),
            found: if u.len() != a.rank() {
                u.len()
            } else {
                w.len()
            },
        });
    }
    let reg = a.is_regular(w);
    if !reg.regular {
        return Err(Error::SingularPoint(format!(
            "w = {w:?} lies on {} wall(s); use the general spectrum at a nearby regular point",
            reg.violations.len()
        )));
    }
    let mut entries = Vec::new();
    let zm_h = a.roots.adapted.centralizer.zm_h.ncols();
    if zm_h > 0 {
        entries.push(SpectrumEntry {
            value: 0.0,
            mult: zm_h,
            tag: BlockTag::ZmH,
            beta: None,
            index: None,
        });
    }
    for (i, d) in a.adapted().iter().enumerate() {
        let (bw, bu) = (d.eval(w), d.eval(u));
        if d.h_mult > 0 {
            entries.push(SpectrumEntry {
                value: bu * bw.tan(),
                mult: d.h_mult,
                tag: BlockTag::MH,
                beta: Some(i),
                index: None,
            });
        }
        if d.p_mult > 0 {
            entries.push(SpectrumEntry {
                value: -bu / bw.tan(),
                mult: d.p_mult,
                tag: BlockTag::MP,
                beta: Some(i),
                index: None,
            });
        }
    }
    Ok(ShapeSpectrum {
        w: w.to_vec(),
        u: u.to_vec(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FdConfig {
    pub step: f64,
    /// Also evaluate at `step/2` and `step/4` to measure the convergence order.
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            richardson: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NumericShape {
    /// Eigenvalues at the configured step, ascending.
    pub spectrum: Vec<f64>,
    /// Eigenvalues of the step-halving extrapolation, ascending.
    pub extrapolated: Option<Vec<f64>>,
    pub symmetry_defect: f64,
    /// `log2` of successive differences between `h`, `h/2`, `h/4`.
    pub convergence_order: Option<f64>,
    /// Differences `|A(h) - A(h/2)|` and `|A(h/2) - A(h/4)|`.
    pub step_differences: Option<(f64, f64)>,
    pub tangent_dim: usize,
    pub step: f64,
}

/// Shape operator from central differences of the `H`-equivariant normal field
/// `xi(h.P) = h_* U(P)` in the Cartan embedding.
pub fn shape_operator_numeric(
    a: &TriadAnalysis,
    w: &[f64],
    u: &[f64],
    cfg: &FdConfig,
) -> Result<NumericShape> {
    if cfg.step.is_nan() || cfg.step < 1e-7 {
        return Err(Error::FiniteDifference(format!(
            "step {} is outside the usable range [1e-7, inf)",
            cfg.step
        )));
    }
    let n = a.triad.n();
    let p = a.section_point(w)?;
    let xi = a.embedding.killing_field_value(&a.section_element(u)?, &p);
    let vecs = orbit_vectors(a, &p);
    let expected = a.decomp.m.ncols() - a.rank();
    let svd = linalg::svd(&vecs);
    let sv = &svd.s;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| smax > 0.0 && sv[i] > a.config.tol.rank * smax)
        .collect();
    if keep.len() != expected {
        return Err(Error::SingularPoint(format!(
            "orbit through w = {w:?} has dimension {} instead of {expected}",
            keep.len()
        )));
    }
    let r = keep.len();
    let (uu, v_t) = (&svd.u, &svd.v_t);
    let mut basis = DMatrix::zeros(n * n, r);
    let mut dirs = DMatrix::zeros(vecs.ncols(), r);
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &uu.column(i));
        dirs.set_column(j, &(v_t.row(i).transpose() / sv[i]));
    }
    let hs = a.triad.alg.elements(&a.decomp.h);
    let operator_at = |h: f64| -> DMatrix<f64> {
        let mut d = DMatrix::zeros(n * n, hs.len());
        for (k, x) in hs.iter().enumerate() {
            let fwd = expm(&(x.mat() * h));
            let bwd = fwd.transpose();
            let diff = (a.embedding.push_tangent(&fwd, &xi) - a.embedding.push_tangent(&bwd, &xi))
                / (2.0 * h);
            d.set_column(k, &DVector::from_column_slice(diff.as_slice()));
        }
        -(basis.transpose() * d * &dirs)
    };
    let a_h = operator_at(cfg.step);
    let (sym, symmetry_defect) = symmetrize(&a_h);
    let spectrum = linalg::sorted_symmetric_eigen(&sym).0;
    let (mut extrapolated, mut convergence_order, mut step_differences) = (None, None, None);
    if cfg.richardson {
        let a_2 = operator_at(cfg.step / 2.0);
        let a_4 = operator_at(cfg.step / 4.0);
        let (e1, e2) = ((&a_h - &a_2).norm(), (&a_2 - &a_4).norm());
        step_differences = Some((e1, e2));
        // differences at rounding level carry no order information; both scale
        // with the direction, so the floor is relative
        let floor = 1e-11 * a_h.norm();
        if e2 > floor {
            convergence_order = Some((e1 / e2).log2());
        }
        let ext = (&a_2 * 4.0 - &a_h) / 3.0;
        extrapolated = Some(linalg::sorted_symmetric_eigen(&symmetrize(&ext).0).0);
    }
    Ok(NumericShape {
        spectrum,
        extrapolated,
        symmetry_defect,
        convergence_order,
        step_differences,
        tangent_dim: r,
        step: cfg.step,
    })
}

/// Largest eigenvalue error relative to `max(|b|, scale)`, matching sorted lists.
pub fn spectrum_error(reference: &[f64], other: &[f64], scale: f64) -> Option<f64> {
    if reference.len() != other.len() {
        return None;
    }
    let mut r = reference.to_vec();
    let mut o = other.to_vec();
    r.sort_by(f64::total_cmp);
    o.sort_by(f64::total_cmp);
    Some(
        r.iter()
            .zip(&o)
            .map(|(x, y)| (x - y).abs() / x.abs().max(scale).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max),
    )
}

/// Natural scale for relative spectrum errors: `max_beta |beta(u)|`.
pub fn direction_scale(a: &TriadAnalysis, u: &[f64]) -> f64 {
    a.adapted()
        .iter()
        .map(|d| d.eval(u).abs())
        .fold(0.0, f64::max)
}

/// One common eigenspace `V_{beta,i}` of the shape operators.
#[derive(Debug, Clone, Serialize)]
pub struct RefinedBlock {
    pub beta: usize,
    pub index: usize,
    pub dim: usize,
    /// `A_v = c beta(v)` on this block at the base point.
    pub c: f64,
    /// First zero of `-c sin t + cos t` in `(0, pi)`, so `c = cot t`.
    pub t: f64,
    /// `t` transported to the origin, in `(0, pi]`; the eigenvalue at `Exp(w)`
    /// is `beta(v) cot(t_origin - beta(w))`.
    pub t_origin: f64,
    /// Largest deviation of any `A_{e_j}` from `c beta(e_j)` on the block.
    pub residual: f64,
    #[serde(skip)]
    pub basis: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneralSpectrumDatum {
    pub base_point: Vec<f64>,
    pub blocks: Vec<RefinedBlock>,
    /// `dim z_m(t) - dim t`, where every shape operator vanishes.
    pub zero_dim: usize,
    pub zero_residual: f64,
}

/// First zero of `-c sin t + cos t` on `(0, pi)` by bisection.
pub fn first_jacobi_zero(c: f64) -> f64 {
    let f = |t: f64| -c * t.sin() + t.cos();
    let (mut lo, mut hi) = (0.0, PI);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn pick_base_point(a: &TriadAnalysis) -> Result<(Vec<f64>, ConjugatedTangent)> {
    let expected = a.decomp.m.ncols() - a.rank();
    let mut rng = ChaCha8Rng::seed_from_u64(a.config.seed ^ 0x6e_e7a1);
    for _ in 0..200 {
        let w: Vec<f64> = (0..a.rank()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let clear = a
            .adapted()
            .iter()
            .all(|d| linalg::lattice_distance(d.eval(&w), 0.0, FRAC_PI_2) > 0.05);
        if !clear {
            continue;
        }
        let ct = conjugated_tangent(a, &w)?;
        if ct.basis.ncols() == expected && ct.conditioning > 1e-3 {
            return Ok((w, ct));
        }
    }
    Err(Error::Degenerate(
        "no well-conditioned regular base point found".into(),
    ))
}

/// Refine each `m^t_beta` into common eigenspaces of the shape operators at a
/// regular base point and recover `t_{beta,i}`. Needs no commuting assumption.
pub fn general_spectrum(a: &TriadAnalysis) -> Result<GeneralSpectrumDatum> {
    let (w0, ct) = pick_base_point(a)?;
    let r = a.rank();
    let units: Vec<Vec<f64>> = (0..r)
        .map(|j| {
            let mut e = vec![0.0; r];
            e[j] = 1.0;
            e
        })
        .collect();
    let shapes: Vec<DMatrix<f64>> = units
        .iter()
        .map(|e| shape_on(a, &ct, e).map(|s| s.matrix))
        .collect::<Result<_>>()?;
    let tb = &ct.basis;
    let mut blocks = Vec::new();
    for (bi, d) in a.adapted().iter().enumerate() {
        let coords = tb.transpose() * &d.m_space;
        let outside = (&d.m_space - tb * &coords).norm();
        if outside > 1e-6 {
            return Err(Error::RootData(format!(
                "root space {bi} is not tangent at the base point (defect {outside:.3e})"
            )));
        }
        let bvals: Vec<f64> = units.iter().map(|e| d.eval(e)).collect();
        let bnorm2: f64 = bvals.iter().map(|b| b * b).sum();
        let restricted: Vec<DMatrix<f64>> = shapes
            .iter()
            .map(|s| coords.transpose() * s * &coords)
            .collect();
        let mut comb = DMatrix::zeros(d.dim(), d.dim());
        for (m, b) in restricted.iter().zip(&bvals) {
            comb += m * (*b / bnorm2);
        }
        let spaces = linalg::joint_eigenspaces(&[comb], a.config.tol.cluster)?;
        let beta_w0 = d.eval(&w0);
        for (idx, sp) in spaces.into_iter().enumerate() {
            let c = sp.values[0];
            let mut residual: f64 = 0.0;
            for (m, b) in restricted.iter().zip(&bvals) {
                let img = m * &sp.basis - &sp.basis * (c * b);
                residual = residual.max(img.norm());
            }
            let t = first_jacobi_zero(c);
            let mut t_origin = (t + beta_w0).rem_euclid(PI);
            if t_origin < 1e-9 {
                t_origin = PI;
            }
            blocks.push(RefinedBlock {
                beta: bi,
                index: idx,
                dim: sp.basis.ncols(),
                c,
                t,
                t_origin,
                residual,
                basis: &d.m_space * &sp.basis,
            });
        }
    }
    let cent = &a.roots.adapted.centralizer;
    let zero = linalg::complement_within(&a.frames().t_basis, &cent.zm, a.config.tol.subspace);
    let zc = tb.transpose() * &zero;
    let zero_residual = shapes.iter().map(|s| (s * &zc).norm()).fold(0.0, f64::max);
    Ok(GeneralSpectrumDatum {
        base_point: w0,
        blocks,
        zero_dim: zero.ncols(),
        zero_residual,
    })
}

/// `beta(v) cot(t_origin - beta(w))` on every refined block, zero on the rest.
pub fn eval_general_shape(
    a: &TriadAnalysis,
    datum: &GeneralSpectrumDatum,
    w: &[f64],
    v: &[f64],
) -> Result<ShapeSpectrum> {
    if w.len() != a.rank() || v.len() != a.rank() {
        return Err(Error::DimensionMismatch {
            expected: a.rank(),
            found: if w.len() != a.rank() {
                w.len()
            } else {
                v.len()
            },
        });
    }
    let mut entries = Vec::new();
    if datum.zero_dim > 0 {
        entries.push(SpectrumEntry {
            value: 0.0,
            mult: datum.zero_dim,
            tag: BlockTag::ZmH,
            beta: None,
            index: None,
        });
    }
    for b in &datum.blocks {
        let d = &a.adapted()[b.beta];
        let arg = b.t_origin - d.eval(w);
        if linalg::lattice_distance(arg, 0.0, PI) < a.config.tol.angle {
            return Err(Error::FocalPoint {
                beta: b.beta,
                block: b.index,
            });
        }
        entries.push(SpectrumEntry {
            value: d.eval(v) / arg.tan(),
            mult: b.dim,
            tag: BlockTag::Refined,
            beta: Some(b.beta),
            index: Some(b.index),
        });
    }
    Ok(ShapeSpectrum {
        w: w.to_vec(),
        u: v.to_vec(),
        entries,
    })
}

/// `F_p(q)`: the factor by which the orbit density changes from `Exp(w)` to
/// `Exp(w_target)`, as a product of `cos(beta Δ) + cot(beta(w) - o) sin(beta Δ)`.
pub fn relative_density(profile: &DensityProfile, w: &[f64], w_target: &[f64]) -> Result<f64> {
    if w.len() != profile.rank || w_target.len() != profile.rank {
        return Err(Error::DimensionMismatch {
            expected: profile.rank,
            found: if w.len() != profile.rank {
                w.len()
            } else {
                w_target.len()
            },
        });
    }
    let delta: Vec<f64> = w_target.iter().zip(w).map(|(a, b)| a - b).collect();
    let mut out = 1.0;
    for f in profile.factors.iter().filter(|f| f.exponent > 0) {
        let start = f.eval_beta(w) - f.offset;
        let end = f.eval_beta(w_target) - f.offset;
        if linalg::lattice_distance(start, 0.0, PI) < profile.angle_tol
            || linalg::lattice_distance(end, 0.0, PI) < profile.angle_tol
        {
            return Err(Error::SingularPoint(format!(
                "factor of root {} vanishes at an endpoint",
                f.beta
            )));
        }
        if (start / PI).floor() != (end / PI).floor() {
            return Err(Error::ChamberCrossing { beta: f.beta });
        }
        let bd = f.eval_beta(&delta);
        let base = bd.cos() + bd.sin() / start.tan();
        out *= base.powi(f.exponent as i32);
    }
    Ok(out)
}

/// Independent density ratio: push a fixed complement of the isotropy algebra
/// to both points and compare `sqrt(det Gram)`.
pub fn gram_density_ratio(a: &TriadAnalysis, w: &[f64], w_target: &[f64]) -> Result<f64> {
    let p = a.section_point(w)?;
    let q = a.section_point(w_target)?;
    let vp = orbit_vectors(a, &p);
    let svd = linalg::svd(&vp);
    let sv = &svd.s;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let v_t = &svd.v_t;
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| smax > 0.0 && sv[i] > a.config.tol.rank * smax)
        .collect();
    let expected = a.decomp.m.ncols() - a.rank();
    if keep.len() != expected {
        return Err(Error::SingularPoint(format!(
            "orbit through w = {w:?} has dimension {} instead of {expected}",
            keep.len()
        )));
    }
    let mut comp = DMatrix::zeros(vp.ncols(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        comp.set_column(j, &v_t.row(i).transpose());
    }
    let vq = orbit_vectors(a, &q);
    let log_vol =
        |m: DMatrix<f64>| -> f64 { linalg::singular_values(&m).iter().map(|s| s.ln()).sum() };
    Ok((log_vol(vq * &comp) - log_vol(vp * &comp)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::config::AnalysisConfig;

    fn analysis(spec: catalog::TriadSpec) -> TriadAnalysis {
        TriadAnalysis::new(&spec, &AnalysisConfig::default()).unwrap()
    }

    #[test]
    fn sphere_latitude_curvature() {
        let a = analysis(catalog::make_isotropy(3).unwrap());
        let w = [std::f64::consts::FRAC_PI_4];
        let s = shape_spectrum_closed(&a, &w, &[1.0]).unwrap();
        assert_eq!(s.expanded().len(), 1);
        assert!((s.expanded()[0] + 1.0).abs() < 1e-14);
        let alg = shape_operator_algebraic(&a, &w, &[1.0]).unwrap();
        assert!((alg.eigenvalues()[0] + 1.0).abs() < 1e-12);
        let num = shape_operator_numeric(&a, &w, &[1.0], &FdConfig::default()).unwrap();
        assert!((num.spectrum[0] + 1.0).abs() < 1e-6, "{:?}", num.spectrum);
    }

    #[test]
    fn worked_example_spectrum() {
        let a = analysis(catalog::make_unitary_on_grassmannian(1, 2).unwrap());
        let w = [PI / 6.0];
        let s = shape_spectrum_closed(&a, &w, &[1.0]).unwrap();
        let t = (PI / 6.0).tan();
        let mut want = vec![t, t, -1.0 / t, -1.0 / t, -2.0 / (PI / 3.0).tan(), 0.0, 0.0];
        want.sort_by(f64::total_cmp);
        let got = s.expanded();
        assert_eq!(got.len(), want.len());
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12, "{got:?} vs {want:?}");
        }
        let alg = shape_operator_algebraic(&a, &w, &[1.0]).unwrap();
        assert!(spectrum_error(&want, &alg.eigenvalues(), 2.0).unwrap() < 1e-10);
        let num = shape_operator_numeric(&a, &w, &[1.0], &FdConfig::default()).unwrap();
        assert!(spectrum_error(&want, &num.spectrum, 2.0).unwrap() < 1e-5);
        let order = num.convergence_order.unwrap();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn tangent_dims_follow_the_block_rules() {
        let a = analysis(catalog::make_unitary_on_grassmannian(1, 2).unwrap());
        for (w, dim) in [(PI / 4.0, 7), (PI / 2.0, 4), (0.0, 4)] {
            let f = orbit_frame(&a, &[w]).unwrap();
            assert_eq!(f.tangent_dim, dim, "w = {w}");
            assert_eq!(tangent_rank_numeric(&a, &[w]).unwrap(), dim);
            assert_eq!(f.tangent_dim + f.normal_dim, a.decomp.m.ncols());
        }
    }

    #[test]
    fn curvature_eigenvalues_are_squared_roots() {
        let a = analysis(catalog::make_unitary_on_grassmannian(2, 2).unwrap());
        let v = [0.3, -0.7];
        for d in a.adapted() {
            let b = d.eval(&v);
            for j in 0..d.m_space.ncols() {
                let x = d.m_space.column(j).into_owned();
                let rx = curvature_operator(&a, &v, &x).unwrap();
                assert!((rx - &x * (b * b)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_zero_inverts_cotangent() {
        for c in [-3.0, -0.2, 0.0, 0.5, 7.0] {
            let t = first_jacobi_zero(c);
            assert!(t > 0.0 && t < PI);
            assert!((1.0 / t.tan() - c).abs() < 1e-10);
        }
    }

    #[test]
    fn relative_density_matches_hand_value() {
        let a = analysis(catalog::make_unitary_on_grassmannian(1, 2).unwrap());
        let prof = DensityProfile::from_analysis(&a).unwrap();
        let f = relative_density(&prof, &[PI / 6.0], &[PI / 4.0]).unwrap();
        let hand = 8.0 / (3.0 * 3f64.sqrt());
        assert!((f - hand).abs() < 1e-12);
        let g = gram_density_ratio(&a, &[PI / 6.0], &[PI / 4.0]).unwrap();
        assert!((g - hand).abs() / hand < 1e-9);
        assert!(matches!(
            relative_density(&prof, &[PI / 6.0], &[2.0]),
            Err(Error::ChamberCrossing { .. })
        ));
    }
}
