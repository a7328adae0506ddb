//! Integration over `M` through the section: the density `theta`, period
//! lattice, section quadrature, and the Haar Monte Carlo oracle.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::TriadAnalysis;
use crate::error::{Error, Result};
use crate::lie::{expm, CartanEmbedding, Involution, SpacePoint};
use crate::linalg;
use crate::orbit::GeneralSpectrumDatum;

/// Samples per Monte Carlo chunk; each chunk owns one RNG stream.
pub const MC_CHUNK: usize = 8192;

/// A real function on points of `M`.
pub type PointFn<'a> = dyn Fn(&SpacePoint) -> f64 + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// `|sin beta|^{p_beta}`.
    Sin,
    /// `|cos beta|^{h_beta}`.
    Cos,
    /// `|sin(beta - t)|^{dim V}` from the general case.
    Shifted,
}

/// One factor `|sin(beta(w) - offset)|^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityFactor {
    pub beta: usize,
    pub chart_coeffs: Vec<f64>,
    pub offset: f64,
    pub exponent: usize,
    pub kind: FactorKind,
}

impl DensityFactor {
    pub fn eval_beta(&self, w: &[f64]) -> f64 {
        self.chart_coeffs.iter().zip(w).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityProfile {
    pub rank: usize,
    pub factors: Vec<DensityFactor>,
    /// Distance to a wall below which `theta` is reported as exactly zero.
    pub angle_tol: f64,
}

impl DensityProfile {
    /// `prod |sin beta|^{p_beta} |cos beta|^{h_beta}` for a commuting triad.
    pub fn from_analysis(a: &TriadAnalysis) -> Result<Self> {
        if !a.commuting() {
            return Err(Error::NotCommuting);
        }
        let mut factors = Vec::new();
        for (i, d) in a.adapted().iter().enumerate() {
            let coeffs: Vec<f64> = d.chart_coeffs.iter().cloned().collect();
            for (exp, offset, kind) in [
                (d.p_mult, 0.0, FactorKind::Sin),
                (d.h_mult, FRAC_PI_2, FactorKind::Cos),
            ] {
                if exp > 0 {
                    factors.push(DensityFactor {
                        beta: i,
                        chart_coeffs: coeffs.clone(),
                        offset,
                        exponent: exp,
                        kind,
                    });
                }
            }
        }
        Ok(Self {
            rank: a.rank(),
            factors,
            angle_tol: a.config.tol.angle,
        })
    }

    /// `prod |sin(beta(w) - t_{beta,i})|^{dim V_{beta,i}}`, valid for any triad.
    pub fn from_general(a: &TriadAnalysis, datum: &GeneralSpectrumDatum) -> Self {
        let factors = datum
            .blocks
            .iter()
            .map(|b| DensityFactor {
                beta: b.beta,
                chart_coeffs: a.adapted()[b.beta].chart_coeffs.iter().cloned().collect(),
                offset: b.t_origin,
                exponent: b.dim,
                kind: FactorKind::Shifted,
            })
            .collect();
        Self {
            rank: a.rank(),
            factors,
            angle_tol: a.config.tol.angle,
        }
    }

    /// `theta(w)`; exactly zero within `angle_tol` of a wall.
    pub fn eval(&self, w: &[f64]) -> f64 {
        let mut out = 1.0;
        for f in self.factors.iter().filter(|f| f.exponent > 0) {
            let s = f.eval_beta(w) - f.offset;
            if linalg::lattice_distance(s, 0.0, PI) < self.angle_tol {
                return 0.0;
            }
            out *= s.sin().abs().powi(f.exponent as i32);
        }
        out
    }

    /// The same density written with `-beta` in place of the chosen root.
    pub fn flipped(&self, beta: usize) -> Self {
        let mut out = self.clone();
        for f in out.factors.iter_mut().filter(|f| f.beta == beta) {
            f.chart_coeffs.iter_mut().for_each(|c| *c = -*c);
            f.offset = -f.offset;
        }
        out
    }

    /// Chamber label: for every factor, which strip between walls `w` is in.
    pub fn chamber_label(&self, w: &[f64]) -> Vec<i64> {
        self.factors
            .iter()
            .filter(|f| f.exponent > 0)
            .map(|f| ((f.eval_beta(w) - f.offset) / PI).floor() as i64)
            .collect()
    }

    /// Reflection of `w` in the wall `beta(w) - offset = k pi` nearest to `w`,
    /// orthogonal for the chart metric `gram`.
    pub fn reflect(&self, factor: usize, w: &[f64], gram: &DMatrix<f64>) -> Option<Vec<f64>> {
        let f = &self.factors[factor];
        let c = DVector::from_row_slice(&f.chart_coeffs);
        let sharp = gram.clone().try_inverse()? * &c;
        let norm2 = c.dot(&sharp);
        if norm2 <= 0.0 {
            return None;
        }
        let s = f.eval_beta(w) - f.offset;
        let k = (s / PI).round();
        let shift = 2.0 * (s - k * PI) / norm2;
        Some(
            w.iter()
                .zip(sharp.iter())
                .map(|(x, y)| x - shift * y)
                .collect(),
        )
    }
}

/// `theta(w)` for a profile.
pub fn theta(w: &[f64], profile: &DensityProfile) -> f64 {
    profile.eval(w)
}

/// `Vol(H.Exp(w2)) / Vol(H.Exp(w1)) = theta(w2) / theta(w1)`.
pub fn orbit_volume_ratio(profile: &DensityProfile, w1: &[f64], w2: &[f64]) -> Result<f64> {
    let (t1, t2) = (profile.eval(w1), profile.eval(w2));
    if t1 == 0.0 || t2 == 0.0 {
        let which = if t1 == 0.0 { w1 } else { w2 };
        return Err(Error::SingularPoint(format!(
            "theta vanishes at w = {which:?}"
        )));
    }
    Ok(t2 / t1)
}

/// Largest `|theta(r(w)) - theta(w)|` over seeded samples and all wall
/// reflections `r`, relative to `max theta` on the samples.
pub fn weyl_invariance_residual(
    a: &TriadAnalysis,
    profile: &DensityProfile,
    samples: usize,
    seed: u64,
) -> f64 {
    let gram = a.chart_gram();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for _ in 0..samples {
        let w: Vec<f64> = (0..profile.rank)
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let t = profile.eval(&w);
        scale = scale.max(t);
        for i in 0..profile.factors.len() {
            if let Some(r) = profile.reflect(i, &w, &gram) {
                worst = worst.max((profile.eval(&r) - t).abs());
            }
        }
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionLattice {
    /// Period `T_i` of `s -> Exp(s e_i)`.
    pub axis_periods: Vec<f64>,
    /// Integration cell `prod [0, T_i)`.
    pub cell: Vec<(f64, f64)>,
    /// `|Exp(T_i e_i) - o|` in the embedding.
    pub period_residuals: Vec<f64>,
    /// Sampled `max |theta(w + T_i e_i) - theta(w)|`.
    pub theta_periodicity_residual: f64,
    /// Cell volume over the volume of one chamber, if that looks integral.
    pub weyl_order_estimate: Option<usize>,
    pub weyl_ratio: Option<f64>,
    pub weyl_note: String,
}

fn axis_period(a: &TriadAnalysis, axis: usize, bound: f64) -> Result<(f64, f64)> {
    let n = a.triad.n();
    let col = a.frames().chart.column(axis).into_owned();
    let m = a.triad.alg.element(&col).into_mat();
    // exp(2 s M) = 1 exactly when s * omega is a multiple of pi for every
    // rotation frequency omega of M
    let (vals, _) = linalg::sorted_symmetric_eigen(&(m.transpose() * &m));
    let scale = vals.last().cloned().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut omegas: Vec<f64> = vals
        .iter()
        .filter(|v| **v > 1e-10 * scale)
        .map(|v| v.sqrt())
        .collect();
    omegas.dedup_by(|x, y| (*x - *y).abs() < 1e-9 * y.abs());
    let omax = match omegas.last() {
        Some(o) => *o,
        None => return Err(Error::PeriodNotFound { axis, bound }),
    };
    let mut m_idx = 1usize;
    loop {
        let s0 = m_idx as f64 * PI / omax;
        if s0 > bound {
            return Err(Error::PeriodNotFound { axis, bound });
        }
        let ints: Vec<f64> = omegas.iter().map(|o| (s0 * o / PI).round()).collect();
        let close = omegas
            .iter()
            .zip(&ints)
            .all(|(o, k)| (s0 * o / PI - k).abs() < 1e-6);
        if close {
            // least-squares fit of s against all frequencies
            let num: f64 = omegas.iter().zip(&ints).map(|(o, k)| o * k * PI).sum();
            let den: f64 = omegas.iter().map(|o| o * o).sum();
            let s = num / den;
            let resid = (expm(&(&m * (2.0 * s))) - DMatrix::<f64>::identity(n, n)).norm();
            if resid < 1e-8 * n as f64 {
                return Ok((s, resid));
            }
        }
        m_idx += 1;
    }
}

/// Period lattice of the section along the chart axes, and a heuristic
/// estimate of the number of chambers in one cell.
pub fn section_lattice(a: &TriadAnalysis, profile: &DensityProfile) -> Result<SectionLattice> {
    const BOUND: f64 = 1e4;
    let r = a.rank();
    let mut periods = Vec::with_capacity(r);
    let mut residuals = Vec::with_capacity(r);
    for axis in 0..r {
        let (t, res) = axis_period(a, axis, BOUND)?;
        periods.push(t);
        residuals.push(res);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.config.seed ^ 0x1a77);
    let mut theta_res: f64 = 0.0;
    for _ in 0..64 {
        let w: Vec<f64> = periods.iter().map(|t| rng.random_range(0.0..*t)).collect();
        let base = profile.eval(&w);
        for (i, t) in periods.iter().enumerate() {
            let mut shifted = w.clone();
            shifted[i] += t;
            theta_res = theta_res.max((profile.eval(&shifted) - base).abs());
        }
    }
    let (weyl_ratio, weyl_order_estimate, weyl_note) =
        estimate_chambers(profile, &periods, &mut rng);
    Ok(SectionLattice {
        cell: periods.iter().map(|t| (0.0, *t)).collect(),
        axis_periods: periods,
        period_residuals: residuals,
        theta_periodicity_residual: theta_res,
        weyl_order_estimate,
        weyl_ratio,
        weyl_note,
    })
}

fn estimate_chambers(
    profile: &DensityProfile,
    periods: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Option<f64>, Option<usize>, String) {
    let r = periods.len();
    let per_axis: usize = match r {
        1 => 8192,
        2 => 256,
        _ => {
            return (
                None,
                None,
                "unavailable: chamber counting is only done in rank 1 and 2".into(),
            )
        }
    };
    // a generic reference point away from all walls
    let mut reference = None;
    for _ in 0..100 {
        let w: Vec<f64> = periods.iter().map(|t| rng.random_range(0.0..*t)).collect();
        let clear = profile
            .factors
            .iter()
            .filter(|f| f.exponent > 0)
            .all(|f| linalg::lattice_distance(f.eval_beta(&w) - f.offset, 0.0, PI) > 0.05);
        if clear {
            reference = Some(w);
            break;
        }
    }
    let Some(w0) = reference else {
        return (None, None, "unavailable: no generic reference point".into());
    };
    let label = profile.chamber_label(&w0);
    // count grid points of the window w0 + prod [-T_i, T_i) in the same chamber
    let total = per_axis.pow(r as u32);
    let mut hits = 0usize;
    let mut w = vec![0.0; r];
    for idx in 0..total {
        let mut rest = idx;
        for i in 0..r {
            let j = rest % per_axis;
            rest /= per_axis;
            w[i] = w0[i] - periods[i] + (j as f64 + 0.5) * 2.0 * periods[i] / per_axis as f64;
        }
        if profile.chamber_label(&w) == label {
            hits += 1;
        }
    }
    // the window is 2^r cells
    let ratio = (total as f64 / 2f64.powi(r as i32)) / hits.max(1) as f64;
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() < 0.05 * rounded {
        (
            Some(ratio),
            Some(rounded as usize),
            "estimate: cell volume over the volume of the chamber containing a random point".into(),
        )
    } else {
        (
            Some(ratio),
            None,
            "unavailable: chamber volume ratio is not close to an integer".into(),
        )
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureConfig {
    /// Grid points per axis; `None` picks a rank-dependent default.
    pub points_per_axis: Option<usize>,
    /// Random probes for the `H`-invariance check; zero disables it.
    pub invariance_probes: usize,
    pub invariance_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            points_per_axis: None,
            invariance_probes: 16,
            invariance_tol: 1e-8,
        }
    }
}

impl QuadratureConfig {
    pub fn resolution(&self, rank: usize) -> usize {
        let n = self.points_per_axis.unwrap_or(match rank {
            0 | 1 => 4096,
            2 => 256,
            _ => 32,
        });
        // the coarser levels use every second and every fourth node
        n.max(8) & !3
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureResult {
    /// Extrapolated `int f theta / int theta`; `fine` and `coarse` are the plain
    /// trapezoid values with `n` and `n/2` points per axis.
    pub mean: f64,
    pub fine: f64,
    pub coarse: f64,
    pub error_estimate: f64,
    /// Observed convergence order in the step, when the levels show one.
    pub order: Option<f64>,
    pub points_per_axis: usize,
    /// `int_cell theta dw` in chart coordinates.
    pub theta_integral: f64,
}

/// Largest `|f(h.x) - f(x)|` over random `x` in `M` and `h` in `H`.
pub fn invariance_defect(
    a: &TriadAnalysis,
    f: &PointFn<'_>,
    probes: usize,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let hs = HSampler::new(&a.triad.sigma2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0, 0.0, 0.0);
    for _ in 0..probes {
        let x = a
            .embedding
            .point_from_group(&haar_so(a.triad.n(), &mut rng));
        let h = hs.sample(&mut rng);
        let (fx, fhx) = (f(&x), f(&a.embedding.act(&h, &x)));
        let d = (fx - fhx).abs();
        if d >= worst.0 {
            worst = (d, fx, fhx);
        }
    }
    Ok(worst)
}

/// `int_M f / Vol(M)` for several invariant `f` by trapezoidal quadrature of
/// `f theta` over the lattice cell.
pub fn integrate_invariant_many(
    a: &TriadAnalysis,
    fs: &[&PointFn<'_>],
    profile: &DensityProfile,
    lattice: &SectionLattice,
    cfg: &QuadratureConfig,
) -> Result<Vec<QuadratureResult>> {
    if cfg.invariance_probes > 0 {
        for f in fs {
            let (d, fx, fhx) =
                invariance_defect(a, *f, cfg.invariance_probes, a.config.seed ^ 0x1417)?;
            if d > cfg.invariance_tol * fx.abs().max(1.0) {
                return Err(Error::NotInvariant { fx, fhx });
            }
        }
    }
    let r = a.rank();
    let n = cfg.resolution(r);
    // per-axis factors exp(2 w_i T_i) of the image exp(2W)
    let axes: Vec<Vec<DMatrix<f64>>> = (0..r)
        .map(|i| {
            let col = a.frames().chart.column(i).into_owned();
            let m = a.triad.alg.element(&col).into_mat();
            let step = lattice.axis_periods[i] / n as f64;
            (0..n)
                .map(|j| expm(&(&m * (2.0 * step * j as f64))))
                .collect()
        })
        .collect();
    let rest_count = n.pow(r as u32 - 1);
    let nf = fs.len();
    // per level (all nodes, even nodes, nodes divisible by 4): f.theta sums then the theta sum
    let width = nf + 1;
    let partial: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j0| {
            let mut acc = vec![0.0; LEVELS * width];
            let mut w = vec![0.0; r];
            w[0] = j0 as f64 * lattice.axis_periods[0] / n as f64;
            for rest in 0..rest_count {
                let mut img = axes[0][j0].clone();
                let mut gcd_bits = j0;
                let mut k = rest;
                for i in 1..r {
                    let j = k % n;
                    k /= n;
                    w[i] = j as f64 * lattice.axis_periods[i] / n as f64;
                    img *= &axes[i][j];
                    gcd_bits |= j;
                }
                let th = profile.eval(&w);
                if th == 0.0 {
                    continue;
                }
                let pt = SpacePoint::from_image(img);
                let vals: Vec<f64> = fs.iter().map(|f| f(&pt) * th).collect();
                for level in 0..LEVELS {
                    if gcd_bits % (1 << level) != 0 {
                        break;
                    }
                    let base = level * width;
                    for (fi, v) in vals.iter().enumerate() {
                        acc[base + fi] += v;
                    }
                    acc[base + nf] += th;
                }
            }
            acc
        })
        .collect();
    let mut tot = vec![0.0; LEVELS * width];
    for p in &partial {
        for (t, x) in tot.iter_mut().zip(p) {
            *t += x;
        }
    }
    let cell_volume: f64 = lattice.axis_periods.iter().product();
    let weight = |level: usize| cell_volume / ((n >> level) as f64).powi(r as i32);
    let thetas: Vec<f64> = (0..LEVELS)
        .map(|l| tot[l * width + nf] * weight(l))
        .collect();
    if thetas[0] <= 0.0 {
        return Err(Error::Degenerate("theta vanishes on the whole grid".into()));
    }
    let (theta_integral, _, _) = extrapolate(&thetas);
    Ok((0..nf)
        .map(|fi| {
            let means: Vec<f64> = (0..LEVELS)
                .map(|l| tot[l * width + fi] / tot[l * width + nf])
                .collect();
            let (mean, error_estimate, order) = extrapolate(&means);
            QuadratureResult {
                mean,
                fine: means[0],
                coarse: means[1],
                error_estimate,
                order,
                points_per_axis: n,
                theta_integral,
            }
        })
        .collect())
}

/// Number of nested grids: `n`, `n/2` and `n/4` points per axis.
const LEVELS: usize = 3;

/// Aitken extrapolation of a sequence `[fine, mid, coarse]` on grids halving
/// in step, with the observed order. Differences at rounding level or with an
/// implausible ratio leave the finest value unchanged.
fn extrapolate(v: &[f64]) -> (f64, f64, Option<f64>) {
    let d1 = v[1] - v[0];
    let d2 = v[2] - v[1];
    let floor = 1e-13 * v[0].abs().max(1e-300);
    if d1.abs() <= floor {
        return (v[0], floor, None);
    }
    let ratio = d2 / d1;
    if !(3.0..=4096.0).contains(&ratio) {
        return (v[0], d1.abs(), None);
    }
    let corr = d1 / (ratio - 1.0);
    (v[0] - corr, corr.abs(), Some(ratio.log2()))
}

pub fn integrate_invariant(
    a: &TriadAnalysis,
    f: &PointFn<'_>,
    profile: &DensityProfile,
    lattice: &SectionLattice,
    cfg: &QuadratureConfig,
) -> Result<QuadratureResult> {
    Ok(integrate_invariant_many(a, &[f], profile, lattice, cfg)?.remove(0))
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeFraction {
    pub theta: f64,
    /// `theta(w) / int_Sigma theta` in the Killing measure of the section.
    pub weyl_free: f64,
    pub weyl_order: Option<usize>,
    /// `|W| theta(w) / int_Sigma theta`, only with a `|W|` estimate.
    pub fraction: Option<f64>,
    pub note: String,
}

/// `Vol(H.Exp(w)) / Vol(M)` up to the `|W|` estimate.
pub fn orbit_volume_fraction(
    a: &TriadAnalysis,
    profile: &DensityProfile,
    lattice: &SectionLattice,
    w: &[f64],
    cfg: &QuadratureConfig,
) -> Result<VolumeFraction> {
    let th = profile.eval(w);
    if th == 0.0 {
        return Err(Error::SingularPoint(format!("theta vanishes at w = {w:?}")));
    }
    let one = |_: &SpacePoint| 1.0;
    let cfg = QuadratureConfig {
        invariance_probes: 0,
        ..*cfg
    };
    let q = integrate_invariant(a, &one, profile, lattice, &cfg)?;
    let integral = q.theta_integral * a.chart_gram().determinant().abs().sqrt();
    let weyl_free = th / integral;
    let fraction = lattice.weyl_order_estimate.map(|k| k as f64 * weyl_free);
    Ok(VolumeFraction {
        theta: th,
        weyl_free,
        weyl_order: lattice.weyl_order_estimate,
        fraction,
        note: lattice.weyl_note.clone(),
    })
}

/// Haar-uniform element of `SO(n)`: QR of a Gaussian matrix with the signs of
/// `diag R` moved into `Q`, then one column flipped if `det Q = -1`.
pub fn haar_so(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

fn haar_unitary(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex<f64>> {
    let s = 0.5f64.sqrt();
    let z = DMatrix::<Complex<f64>>::from_fn(m, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * s, im * s)
    });
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..m {
        let d = r[(j, j)];
        let norm = d.norm();
        if norm > 0.0 {
            let phase = d / Complex::new(norm, 0.0);
            for i in 0..m {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

#[derive(Debug, Clone)]
enum HKind {
    /// `SO(E+) x SO(E-)` for a symmetric conjugator.
    Real { plus: usize },
    /// `U(n/2)` for a complex structure.
    Complex { m: usize },
}

/// Haar sampler on the identity component of `H = {h : h C2 = C2 h}`.
#[derive(Debug, Clone)]
pub struct HSampler {
    basis: DMatrix<f64>,
    kind: HKind,
}

impl HSampler {
    pub fn new(sigma2: &Involution) -> Result<Self> {
        let c = sigma2.conjugator();
        let n = c.nrows();
        let sym = (c - c.transpose()).norm() < 1e-10;
        if sym {
            let (vals, vecs) = linalg::sorted_symmetric_eigen(c);
            let minus = vals.iter().filter(|v| **v < 0.0).count();
            // eigenvalues ascend, so put the +1 space first
            let mut basis = DMatrix::zeros(n, n);
            for j in 0..n {
                let src = (j + minus) % n;
                basis.set_column(j, &vecs.column(src));
            }
            return Ok(Self {
                basis,
                kind: HKind::Real { plus: n - minus },
            });
        }
        if (c + c.transpose()).norm() > 1e-10 || n % 2 == 1 {
            return Err(Error::InvalidInput(
                "second conjugator is neither symmetric nor a complex structure".into(),
            ));
        }
        let m = n / 2;
        let mut us: Vec<DVector<f64>> = Vec::new();
        let mut vs: Vec<DVector<f64>> = Vec::new();
        for k in 0..n {
            if us.len() == m {
                break;
            }
            let mut x = DVector::zeros(n);
            x[k] = 1.0;
            for b in us.iter().chain(&vs) {
                let d = b.dot(&x);
                x -= b * d;
            }
            let norm = x.norm();
            if norm < 1e-8 {
                continue;
            }
            x /= norm;
            vs.push(-(c * &x));
            us.push(x);
        }
        let mut basis = DMatrix::zeros(n, n);
        for (j, u) in us.iter().enumerate() {
            basis.set_column(j, u);
        }
        for (j, v) in vs.iter().enumerate() {
            basis.set_column(m + j, v);
        }
        Ok(Self {
            basis,
            kind: HKind::Complex { m },
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let n = self.basis.nrows();
        let mut inner = DMatrix::zeros(n, n);
        match self.kind {
            HKind::Real { plus } => {
                inner
                    .view_mut((0, 0), (plus, plus))
                    .copy_from(&haar_so(plus, rng));
                let minus = n - plus;
                inner
                    .view_mut((plus, plus), (minus, minus))
                    .copy_from(&haar_so(minus, rng));
            }
            HKind::Complex { m } => {
                let u = haar_unitary(m, rng);
                for i in 0..m {
                    for j in 0..m {
                        let z = u[(i, j)];
                        inner[(i, j)] = z.re;
                        inner[(i, m + j)] = -z.im;
                        inner[(m + i, j)] = z.im;
                        inner[(m + i, m + j)] = z.re;
                    }
                }
            }
        }
        &self.basis * inner * self.basis.transpose()
    }
}

/// Running mean and variance, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Welford) {
        if o.count == 0.0 {
            return;
        }
        let total = self.count + o.count;
        let d = o.mean - self.mean;
        self.mean += d * o.count / total;
        self.m2 += o.m2 + d * d * self.count * o.count / total;
        self.count = total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McResult {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Haar Monte Carlo estimates of `int_M f / Vol(M)` for several `f` on the
/// same samples `g.o`. Chunk `c` draws from stream `c` of the seeded RNG and
/// chunks are merged in index order, so the result does not depend on the
/// thread count.
pub fn haar_mc_integrate_many(
    emb: &CartanEmbedding,
    n: usize,
    fs: &[&PointFn<'_>],
    samples: usize,
    seed: u64,
) -> Vec<McResult> {
    let chunks = samples.div_ceil(MC_CHUNK);
    let stats: Vec<Vec<Welford>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut acc = vec![Welford::default(); fs.len()];
            for _ in 0..count {
                let x = emb.point_from_group(&haar_so(n, &mut rng));
                for (s, f) in acc.iter_mut().zip(fs) {
                    s.push(f(&x));
                }
            }
            acc
        })
        .collect();
    (0..fs.len())
        .map(|fi| {
            let mut tot = Welford::default();
            for s in &stats {
                tot.merge(&s[fi]);
            }
            let var = if tot.count > 1.0 {
                tot.m2 / (tot.count - 1.0)
            } else {
                0.0
            };
            McResult {
                mean: tot.mean,
                std_error: (var / tot.count.max(1.0)).sqrt(),
                samples,
            }
        })
        .collect()
}

pub fn haar_mc_integrate(
    a: &TriadAnalysis,
    f: &PointFn<'_>,
    samples: usize,
    seed: u64,
) -> McResult {
    haar_mc_integrate_many(&a.embedding, a.triad.n(), &[f], samples, seed)[0]
}

/// `f(x) = mean_k g(h_k.x)` over a fixed Haar sample of `H`.
pub struct HAveraged<'a> {
    g: Box<PointFn<'a>>,
    emb: CartanEmbedding,
    samples: Vec<DMatrix<f64>>,
    /// Largest `|f(x) - f(h.x)|` seen on random probes.
    pub defect: f64,
}

impl HAveraged<'_> {
    pub fn eval(&self, x: &SpacePoint) -> f64 {
        let mut mean = 0.0;
        for (k, h) in self.samples.iter().enumerate() {
            let v = (self.g)(&self.emb.act(h, x));
            mean += (v - mean) / (k + 1) as f64;
        }
        mean
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }
}

/// Average `g` over `samples` Haar elements of `H` and measure the invariance
/// defect on `probes` random pairs `(x, h.x)`.
pub fn h_averaged_function<'a, G>(
    a: &TriadAnalysis,
    g: G,
    samples: usize,
    seed: u64,
    probes: usize,
    tol: f64,
) -> Result<HAveraged<'a>>
where
    G: Fn(&SpacePoint) -> f64 + Sync + 'a,
{
    if samples == 0 {
        return Err(Error::InvalidInput(
            "H sample count must be positive".into(),
        ));
    }
    let hs = HSampler::new(&a.triad.sigma2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = (0..samples).map(|_| hs.sample(&mut rng)).collect();
    let mut out = HAveraged {
        g: Box::new(g),
        emb: a.embedding.clone(),
        samples: drawn,
        defect: 0.0,
    };
    let mut probe_rng = ChaCha8Rng::seed_from_u64(seed);
    probe_rng.set_stream(1);
    let mut defect: f64 = 0.0;
    for _ in 0..probes {
        let x = a
            .embedding
            .point_from_group(&haar_so(a.triad.n(), &mut probe_rng));
        let h = hs.sample(&mut probe_rng);
        defect = defect.max((out.eval(&x) - out.eval(&a.embedding.act(&h, &x))).abs());
    }
    out.defect = defect;
    if defect > tol {
        return Err(Error::Degenerate(format!(
            "H-average invariance defect {defect:.3e} exceeds {tol:.3e}; use more H samples than {samples}"
        )));
    }
    Ok(out)
}

/// Invariant test functions of points, built from `Q = P C1 = g C1 g^T`.
pub mod testfns {
    use super::*;

    /// `tr((Q C2 Q C2^T)^k) / n`, invariant under `H` for every triad.
    pub fn trace_power(a: &TriadAnalysis, k: u32) -> impl Fn(&SpacePoint) -> f64 + Sync + 'static {
        let c1 = a.triad.sigma1.conjugator().clone();
        let c2 = a.triad.sigma2.conjugator().clone();
        let c2t = c2.transpose();
        let n = c1.nrows() as f64;
        move |x: &SpacePoint| {
            let q = x.cartan_image() * &c1;
            let m = &q * &c2 * &q * &c2t;
            let mut p = m.clone();
            for _ in 1..k {
                p = &p * &m;
            }
            p.trace() / n
        }
    }

    /// `cos^2` of the angle between the line `g e_0` and `e_0`, for the
    /// sphere-type triads whose first conjugator is `diag(1, -1, ..., -1)`.
    pub fn cos2(x: &SpacePoint) -> f64 {
        // Q = 2 v v^T - 1 with v = g e_0
        0.5 * (1.0 + x.cartan_image()[(0, 0)])
    }

    /// A bump in the first diagonal entry, not invariant in general.
    pub fn corner_bump(x: &SpacePoint) -> f64 {
        let q = x.cartan_image()[(0, 0)];
        (-(q - 0.3).powi(2) * 4.0).exp()
    }

    /// Names accepted by [`by_name`].
    pub const NAMES: [&str; 5] = ["one", "cos2", "trace1", "trace2", "trace3"];

    pub fn by_name(a: &TriadAnalysis, name: &str) -> Result<Box<PointFn<'static>>> {
        Ok(match name {
            "one" => Box::new(|_: &SpacePoint| 1.0),
            "cos2" => Box::new(cos2),
            "trace1" => Box::new(trace_power(a, 1)),
            "trace2" => Box::new(trace_power(a, 2)),
            "trace3" => Box::new(trace_power(a, 3)),
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown test function '{other}'; known: {}",
                    NAMES.join(", ")
                )))
            }
        })
    }
}
