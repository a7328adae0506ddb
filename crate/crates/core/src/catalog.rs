//! Built-in symmetric triads with explicit frames and regression tables.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{AlgElement, Involution};
use crate::roots::ExplicitFrames;

/// Expected refined multiplicities of one adapted root.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedRoot {
    pub label: String,
    /// `beta` on the explicit chart, when the catalog fixes one.
    pub chart_coeffs: Option<Vec<f64>>,
    pub p_mult: usize,
    pub h_mult: usize,
    /// `(p, h)` of each `sigma2`-family of restricted roots inside `m^t_beta`.
    pub families: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedRootTable {
    pub roots: Vec<ExpectedRoot>,
    pub centralizer_dim: usize,
    pub rank: usize,
}

/// Expected dimensions of `k∩p, k∩h, m∩h, m∩p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExpectedBlocks {
    pub kp: usize,
    pub kh: usize,
    pub mh: usize,
    pub mp: usize,
}

/// A symmetric triad `(so(n), sigma1, sigma2)` with optional frames and
/// regression data.
#[derive(Debug, Clone)]
pub struct TriadSpec {
    pub name: String,
    /// Builder parameters in declaration order, e.g. `[("p", 1), ("q", 2)]`.
    pub params: Vec<(String, usize)>,
    pub n: usize,
    pub sigma1: Involution,
    pub sigma2: Involution,
    pub frames: Option<ExplicitFrames>,
    pub expected: Option<ExpectedRootTable>,
    pub expected_blocks: Option<ExpectedBlocks>,
    pub commuting: bool,
}

/// Matrices spanning `t` and its complement `t'` in `a`.
pub type FrameMatrices = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

impl TriadSpec {
    /// A user-supplied triad; conjugators and frames are validated.
    pub fn custom(
        name: &str,
        sigma1_conjugator: DMatrix<f64>,
        sigma2_conjugator: DMatrix<f64>,
        frames: Option<FrameMatrices>,
        tol_skew: f64,
    ) -> Result<Self> {
        let n = sigma1_conjugator.nrows();
        if sigma2_conjugator.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sigma2_conjugator.nrows(),
            });
        }
        let sigma1 = Involution::new(sigma1_conjugator, 1e-10)?;
        let sigma2 = Involution::new(sigma2_conjugator, 1e-10)?;
        let frames = match frames {
            Some((t, tp)) => {
                let conv = |ms: Vec<DMatrix<f64>>| -> Result<Vec<AlgElement>> {
                    ms.into_iter()
                        .map(|m| {
                            if m.nrows() != n {
                                return Err(Error::DimensionMismatch {
                                    expected: n,
                                    found: m.nrows(),
                                });
                            }
                            AlgElement::new(m, tol_skew)
                        })
                        .collect()
                };
                Some(ExplicitFrames {
                    t: conv(t)?,
                    tprime: conv(tp)?,
                })
            }
            None => None,
        };
        let commuting = sigma1.commutes_with(&sigma2, 1e-12);
        Ok(Self {
            name: name.to_string(),
            params: Vec::new(),
            n,
            sigma1,
            sigma2,
            frames,
            expected: None,
            expected_blocks: None,
            commuting,
        })
    }

    /// A short identifier including parameters, e.g. `u-on-grassmannian(1,2)`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.name.clone();
        }
        let vals: Vec<String> = self.params.iter().map(|(_, v)| v.to_string()).collect();
        format!("{}({})", self.name, vals.join(","))
    }
}

fn diag_signs(plus: usize, minus: usize) -> DMatrix<f64> {
    let mut d = vec![1.0; plus];
    d.extend(std::iter::repeat_n(-1.0, minus));
    DMatrix::from_diagonal(&DVector::from_vec(d))
}

fn params(pairs: &[(&str, usize)]) -> Vec<(String, usize)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Conjugator `J_{p+q}` with blocks `(p, p, q, q)`.
pub fn j_conjugator(p: usize, q: usize) -> DMatrix<f64> {
    let n = 2 * p + 2 * q;
    let mut j = DMatrix::zeros(n, n);
    for i in 0..p {
        j[(i, p + i)] = 1.0;
        j[(p + i, i)] = -1.0;
    }
    let o = 2 * p;
    for i in 0..q {
        j[(o + i, o + q + i)] = 1.0;
        j[(o + q + i, o + i)] = -1.0;
    }
    j
}

/// Which of the four block patterns of the worked example to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleBasis {
    Q,
    R,
    F,
    G,
}

/// The matrices `Q_ij, R_ij, F_ij, G_ij` (zero-based `i < p`, `j < q`) with
/// block rows and columns of sizes `(p, p, q, q)`.
pub fn example_basis(kind: ExampleBasis, p: usize, q: usize, i: usize, j: usize) -> AlgElement {
    let n = 2 * p + 2 * q;
    let off = [0, p, 2 * p, 2 * p + q];
    let mut m = DMatrix::zeros(n, n);
    // (block row, block col, sign) for the entries carrying E_ij; the
    // transposed partner gets the negated sign to keep the matrix skew.
    let entries: [(usize, usize, f64); 2] = match kind {
        ExampleBasis::Q => [(0, 2, 1.0), (1, 3, -1.0)],
        ExampleBasis::R => [(0, 3, 1.0), (1, 2, 1.0)],
        ExampleBasis::F => [(0, 2, 1.0), (1, 3, 1.0)],
        ExampleBasis::G => [(0, 3, -1.0), (1, 2, 1.0)],
    };
    for (br, bc, s) in entries {
        m[(off[br] + i, off[bc] + j)] = s;
        m[(off[bc] + j, off[br] + i)] = -s;
    }
    AlgElement::from_skew(m)
}

/// `U(p+q)` acting on `SO(2p+2q)/S(O(2p)×O(2q))`.
pub fn make_unitary_on_grassmannian(p: usize, q: usize) -> Result<TriadSpec> {
    if p == 0 || p > q {
        return Err(Error::InvalidInput(format!(
            "u-on-grassmannian needs 1 <= p <= q, got p = {p}, q = {q}"
        )));
    }
    let n = 2 * p + 2 * q;
    let sigma1 = Involution::new(diag_signs(2 * p, 2 * q), 1e-12)?;
    let sigma2 = Involution::new(j_conjugator(p, q), 1e-12)?;
    let frames = ExplicitFrames {
        t: (0..p)
            .map(|i| example_basis(ExampleBasis::Q, p, q, i, i))
            .collect(),
        tprime: (0..p)
            .map(|i| example_basis(ExampleBasis::F, p, q, i, i))
            .collect(),
    };
    let unit = |i: usize, s: f64| {
        let mut v = vec![0.0; p];
        v[i] = s;
        v
    };
    let mut roots = Vec::new();
    for i in 0..p {
        if q > p {
            roots.push(ExpectedRoot {
                label: format!("lambda_{}", i + 1),
                chart_coeffs: Some(unit(i, 1.0)),
                p_mult: 2 * (q - p),
                h_mult: 2 * (q - p),
                families: vec![(2 * (q - p), 2 * (q - p))],
            });
        }
        roots.push(ExpectedRoot {
            label: format!("2lambda_{}", i + 1),
            chart_coeffs: Some(unit(i, 2.0)),
            p_mult: 1,
            h_mult: 0,
            families: vec![(1, 0)],
        });
        for j in (i + 1)..p {
            for s in [1.0, -1.0] {
                let mut c = unit(i, 1.0);
                c[j] = s;
                let sign = if s > 0.0 { '+' } else { '-' };
                roots.push(ExpectedRoot {
                    label: format!("lambda_{}{}lambda_{}", i + 1, sign, j + 1),
                    chart_coeffs: Some(c),
                    p_mult: 2,
                    h_mult: 2,
                    families: vec![(1, 1), (1, 1)],
                });
            }
        }
    }
    Ok(TriadSpec {
        name: "u-on-grassmannian".into(),
        params: params(&[("p", p), ("q", q)]),
        n,
        commuting: sigma1.commutes_with(&sigma2, 1e-12),
        sigma1,
        sigma2,
        frames: Some(frames),
        expected: Some(ExpectedRootTable {
            roots,
            centralizer_dim: 3 * p,
            rank: p,
        }),
        expected_blocks: None,
    })
}

/// `H = K = S(O(1)×O(n-1))` acting on the rank-one space of lines in `R^n`.
pub fn make_isotropy(n: usize) -> Result<TriadSpec> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "sphere-isotropy needs n >= 3, got {n}"
        )));
    }
    let mut spec = make_grassmannian_isotropy(1, n - 1)?;
    spec.name = "sphere-isotropy".into();
    spec.params = params(&[("n", n)]);
    Ok(spec)
}

/// The stabilizer of the line `R e_0` acting on lines in `R^n`, where `R`
/// rotates the `(e_0, e_1)` plane by `angle`. The involutions commute only for
/// multiples of `pi/2`.
pub fn make_rotated_sphere(n: usize, angle: f64) -> Result<TriadSpec> {
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "rotated-sphere needs n >= 3, got {n}"
        )));
    }
    let c1 = diag_signs(1, n - 1);
    let mut rot = DMatrix::identity(n, n);
    let (s, c) = angle.sin_cos();
    rot[(0, 0)] = c;
    rot[(0, 1)] = -s;
    rot[(1, 0)] = s;
    rot[(1, 1)] = c;
    let c2 = &rot * &c1 * rot.transpose();
    let sigma1 = Involution::new(c1, 1e-12)?;
    let sigma2 = Involution::new(c2, 1e-12)?;
    Ok(TriadSpec {
        name: "rotated-sphere".into(),
        params: params(&[("n", n)]),
        n,
        commuting: sigma1.commutes_with(&sigma2, 1e-12),
        sigma1,
        sigma2,
        frames: None,
        expected: None,
        expected_blocks: None,
    })
}

/// `H = K = S(O(a)×O(b))` acting on the real Grassmannian of `a`-planes.
pub fn make_grassmannian_isotropy(a: usize, b: usize) -> Result<TriadSpec> {
    if a == 0 || b == 0 || a + b < 3 {
        return Err(Error::InvalidInput(format!(
            "grassmannian-isotropy needs a, b >= 1 and a + b >= 3, got ({a}, {b})"
        )));
    }
    let c = diag_signs(a, b);
    let sigma = Involution::new(c, 1e-12)?;
    let (lo, hi) = (a.min(b), a.max(b));
    let mut roots = Vec::new();
    for i in 0..lo {
        if hi > lo {
            roots.push(ExpectedRoot {
                label: format!("e_{}", i + 1),
                chart_coeffs: None,
                p_mult: hi - lo,
                h_mult: 0,
                families: Vec::new(),
            });
        }
        for j in (i + 1)..lo {
            for sign in ['+', '-'] {
                roots.push(ExpectedRoot {
                    label: format!("e_{}{}e_{}", i + 1, sign, j + 1),
                    chart_coeffs: None,
                    p_mult: 1,
                    h_mult: 0,
                    families: Vec::new(),
                });
            }
        }
    }
    Ok(TriadSpec {
        name: "grassmannian-isotropy".into(),
        params: params(&[("a", a), ("b", b)]),
        n: a + b,
        sigma1: sigma.clone(),
        sigma2: sigma,
        frames: None,
        expected: Some(ExpectedRootTable {
            roots,
            centralizer_dim: lo,
            rank: lo,
        }),
        expected_blocks: Some(ExpectedBlocks {
            kp: 0,
            kh: a * (a - 1) / 2 + b * (b - 1) / 2,
            mh: 0,
            mp: a * b,
        }),
        commuting: true,
    })
}

/// `S(O(c)×O(d))` acting on the Grassmannian `SO(a+b)/S(O(a)×O(b))`.
pub fn make_double_grassmannian(a: usize, b: usize, c: usize, d: usize) -> Result<TriadSpec> {
    if a + b != c + d || a + b < 3 || [a, b, c, d].contains(&0) {
        return Err(Error::InvalidInput(format!(
            "double-grassmannian needs positive blocks with a + b = c + d >= 3, got ({a}, {b}, {c}, {d})"
        )));
    }
    let n = a + b;
    let sigma1 = Involution::new(diag_signs(a, b), 1e-12)?;
    let sigma2 = Involution::new(diag_signs(c, d), 1e-12)?;
    let mut blocks = ExpectedBlocks {
        kp: 0,
        kh: 0,
        mh: 0,
        mp: 0,
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let in_k = (i < a) == (j < a);
            let in_h = (i < c) == (j < c);
            match (in_k, in_h) {
                (true, true) => blocks.kh += 1,
                (true, false) => blocks.kp += 1,
                (false, true) => blocks.mh += 1,
                (false, false) => blocks.mp += 1,
            }
        }
    }
    Ok(TriadSpec {
        name: "double-grassmannian".into(),
        params: params(&[("a", a), ("b", b), ("c", c), ("d", d)]),
        n,
        sigma1,
        sigma2,
        frames: None,
        expected: None,
        expected_blocks: Some(blocks),
        commuting: true,
    })
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 4] = [
    "sphere-isotropy",
    "grassmannian-isotropy",
    "double-grassmannian",
    "u-on-grassmannian",
];

/// Parameters for [`by_name`]; unused fields are ignored.
#[derive(Debug, Clone, Default)]
pub struct CatalogParams {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub blocks: Vec<usize>,
}

pub fn by_name(name: &str, params: &CatalogParams) -> Result<TriadSpec> {
    let need = |v: Option<usize>, flag: &str| {
        v.ok_or_else(|| Error::InvalidInput(format!("{name} requires --{flag}")))
    };
    let blocks = |k: usize| -> Result<&[usize]> {
        if params.blocks.len() != k {
            return Err(Error::InvalidInput(format!(
                "{name} requires --blocks with {k} entries"
            )));
        }
        Ok(&params.blocks)
    };
    match name {
        "sphere-isotropy" => make_isotropy(need(params.n, "n")?),
        "grassmannian-isotropy" => {
            let b = blocks(2)?;
            make_grassmannian_isotropy(b[0], b[1])
        }
        "double-grassmannian" => {
            let b = blocks(4)?;
            make_double_grassmannian(b[0], b[1], b[2], b[3])
        }
        "u-on-grassmannian" => {
            make_unitary_on_grassmannian(need(params.p, "p")?, need(params.q, "q")?)
        }
        other => Err(Error::InvalidInput(format!(
            "unknown triad '{other}'; known: {}",
            NAMES.join(", ")
        ))),
    }
}

/// The instances exercised by the verification suite.
pub fn standard_instances() -> Vec<TriadSpec> {
    let mut out = vec![
        make_isotropy(3),
        make_isotropy(4),
        make_grassmannian_isotropy(2, 4),
        make_double_grassmannian(2, 4, 3, 3),
    ];
    for (p, q) in [(1, 1), (1, 2), (2, 2), (2, 3)] {
        out.push(make_unitary_on_grassmannian(p, q));
    }
    out.into_iter()
        .map(|s| s.expect("catalog entries are valid"))
        .collect()
}

/// One `|sin|^a |cos|^b` factor of a closed-form density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormFactor {
    pub label: String,
    pub chart_coeffs: Vec<f64>,
    pub sin_exp: usize,
    pub cos_exp: usize,
}

/// Comparison between the worked example's closed-form density and the
/// multiplicity-derived one.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormComparison {
    pub p: usize,
    pub q: usize,
    /// Factors that vanish identically and were dropped from the closed form.
    pub excluded_factors: Vec<String>,
    /// Closed-form exponents after merging equal arguments up to sign.
    pub closed_form: Vec<ClosedFormFactor>,
    pub samples: usize,
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub matches: bool,
}

fn merge_factor(
    list: &mut Vec<ClosedFormFactor>,
    coeffs: Vec<f64>,
    sin_exp: usize,
    cos_exp: usize,
) {
    let neg: Vec<f64> = coeffs.iter().map(|c| -c).collect();
    for f in list.iter_mut() {
        if f.chart_coeffs == coeffs || f.chart_coeffs == neg {
            f.sin_exp += sin_exp;
            f.cos_exp += cos_exp;
            return;
        }
    }
    let label = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| format!("{:+}lambda_{}", c, i + 1))
        .collect::<String>();
    list.push(ClosedFormFactor {
        label,
        chart_coeffs: coeffs,
        sin_exp,
        cos_exp,
    });
}

/// Exponent table of the worked example's final product over `i, j = 1..p`
/// (squared factors) times the `2(q-p)` factors, with identically vanishing
/// `i = j` difference factors removed.
pub fn closed_form_factors(p: usize, q: usize) -> (Vec<ClosedFormFactor>, Vec<String>) {
    let mut factors = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..p {
        for j in 0..p {
            let mut plus = vec![0.0; p];
            plus[i] += 1.0;
            plus[j] += 1.0;
            merge_factor(&mut factors, plus, 2, 2);
            if i == j {
                excluded.push(format!("|sin(lambda_{0} - lambda_{0})|^2", i + 1));
                // cos(0) = 1 contributes nothing
                continue;
            }
            let mut minus = vec![0.0; p];
            minus[i] += 1.0;
            minus[j] -= 1.0;
            merge_factor(&mut factors, minus, 2, 2);
        }
        if q > p {
            let mut single = vec![0.0; p];
            single[i] = 1.0;
            merge_factor(&mut factors, single, 2 * (q - p), 2 * (q - p));
        }
    }
    (factors, excluded)
}

pub fn eval_factors(factors: &[ClosedFormFactor], w: &[f64]) -> f64 {
    factors
        .iter()
        .map(|f| {
            let b: f64 = f.chart_coeffs.iter().zip(w).map(|(c, x)| c * x).sum();
            b.sin().abs().powi(f.sin_exp as i32) * b.cos().abs().powi(f.cos_exp as i32)
        })
        .product()
}

/// Compare the closed form against `derived` (the multiplicity-derived density
/// on the `Q_ii` chart) at the given sample points.
pub fn compare_closed_form_theta<F>(
    p: usize,
    q: usize,
    derived: F,
    points: &[Vec<f64>],
    tol: f64,
) -> ClosedFormComparison
where
    F: Fn(&[f64]) -> f64,
{
    let (closed_form, excluded_factors) = closed_form_factors(p, q);
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for w in points {
        let a = eval_factors(&closed_form, w);
        let b = derived(w);
        let d = (a - b).abs();
        max_abs = max_abs.max(d);
        max_rel = max_rel.max(d / b.abs().max(f64::MIN_POSITIVE));
    }
    ClosedFormComparison {
        p,
        q,
        excluded_factors,
        closed_form,
        samples: points.len(),
        max_abs_diff: max_abs,
        max_rel_diff: max_rel,
        matches: max_abs < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_matrices_live_in_the_stated_blocks() {
        let (p, q) = (2, 3);
        let spec = make_unitary_on_grassmannian(p, q).unwrap();
        for i in 0..p {
            for j in 0..q {
                for (kind, in_h) in [
                    (ExampleBasis::Q, false),
                    (ExampleBasis::R, false),
                    (ExampleBasis::F, true),
                    (ExampleBasis::G, true),
                ] {
                    let x = example_basis(kind, p, q, i, j);
                    // in m: sigma1 flips sign
                    assert!((spec.sigma1.apply(&x).mat() + x.mat()).norm() < 1e-15);
                    let s2 = spec.sigma2.apply(&x);
                    let err = if in_h {
                        (s2.mat() - x.mat()).norm()
                    } else {
                        (s2.mat() + x.mat()).norm()
                    };
                    assert!(err < 1e-15, "{kind:?} {i} {j}");
                }
            }
        }
        assert!(spec.commuting);
    }

    #[test]
    fn p_greater_than_q_is_rejected() {
        assert!(make_unitary_on_grassmannian(3, 2).is_err());
        assert!(make_double_grassmannian(2, 4, 3, 2).is_err());
        assert!(by_name("torus", &CatalogParams::default()).is_err());
    }

    #[test]
    fn double_grassmannian_block_count() {
        let s = make_double_grassmannian(2, 4, 3, 3).unwrap();
        let b = s.expected_blocks.unwrap();
        assert_eq!((b.kp, b.kh, b.mh, b.mp), (3, 4, 2, 6));
        assert_eq!(b.kp + b.kh + b.mh + b.mp, 15);
    }

    #[test]
    fn closed_form_excludes_diagonal_difference_factors() {
        let (factors, excluded) = closed_form_factors(2, 3);
        assert_eq!(excluded.len(), 2);
        // 2lambda_1 picks up the squared i = j sum factor only
        let two = factors
            .iter()
            .find(|f| f.chart_coeffs == vec![2.0, 0.0])
            .unwrap();
        assert_eq!((two.sin_exp, two.cos_exp), (2, 2));
        let single = factors
            .iter()
            .find(|f| f.chart_coeffs == vec![1.0, 0.0])
            .unwrap();
        assert_eq!((single.sin_exp, single.cos_exp), (2, 2));
    }
}
