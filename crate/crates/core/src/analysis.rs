//! Everything derived from a triad once: decomposition, embedding, roots.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::catalog::{ExpectedRoot, TriadSpec};
use crate::config::AnalysisConfig;
use crate::error::Result;
use crate::lie::{AlgElement, CartanEmbedding, SpacePoint, Triad, TriadDecomposition};
use crate::roots::{self, AbelianFrames, AdaptedRootDatum, Regularity, RootData};

#[derive(Debug, Clone)]
pub struct TriadAnalysis {
    pub spec: TriadSpec,
    pub config: AnalysisConfig,
    pub triad: Triad,
    pub decomp: TriadDecomposition,
    pub embedding: CartanEmbedding,
    pub roots: RootData,
}

impl TriadAnalysis {
    pub fn new(spec: &TriadSpec, config: &AnalysisConfig) -> Result<Self> {
        let triad = Triad::new(spec.sigma1.clone(), spec.sigma2.clone())?;
        let decomp = TriadDecomposition::new(&triad, &config.tol)?;
        let embedding = CartanEmbedding::new(&triad, &decomp)?;
        let explicit = if config.explicit_frames {
            spec.frames.as_ref()
        } else {
            None
        };
        let roots = roots::root_data(&triad, &decomp, explicit, config.seed, &config.tol)?;
        Ok(Self {
            spec: spec.clone(),
            config: *config,
            triad,
            decomp,
            embedding,
            roots,
        })
    }

    pub fn frames(&self) -> &AbelianFrames {
        &self.roots.system.frames
    }

    pub fn adapted(&self) -> &[AdaptedRootDatum] {
        &self.roots.adapted.data
    }

    pub fn rank(&self) -> usize {
        self.frames().rank()
    }

    pub fn commuting(&self) -> bool {
        self.decomp.commuting
    }

    /// `W = sum_j w_j T_j` in `g` coordinates.
    pub fn section_vector(&self, w: &[f64]) -> Result<DVector<f64>> {
        self.frames().section_vector(w)
    }

    pub fn section_element(&self, w: &[f64]) -> Result<AlgElement> {
        Ok(self.triad.alg.element(&self.section_vector(w)?))
    }

    /// `Exp(W)` in the Cartan embedding.
    pub fn section_point(&self, w: &[f64]) -> Result<SpacePoint> {
        Ok(self.embedding.exp_point(&self.section_element(w)?))
    }

    pub fn is_regular(&self, w: &[f64]) -> Regularity {
        roots::is_regular(w, self.adapted(), self.config.tol.angle)
    }

    /// Chart Gram matrix `<T_i, T_j>` in the Killing metric.
    pub fn chart_gram(&self) -> DMatrix<f64> {
        let c = &self.frames().chart;
        c.transpose() * c
    }
}

/// One expected root and what it was matched against.
#[derive(Debug, Clone, Serialize)]
pub struct RootMatch {
    pub label: String,
    /// Index into the computed adapted roots.
    pub computed: Option<usize>,
    pub expected_mult: (usize, usize),
    pub computed_mult: Option<(usize, usize)>,
    pub expected_families: Vec<(usize, usize)>,
    pub computed_families: Vec<(usize, usize)>,
    pub ok: bool,
}

/// Comparison of the computed root data with a catalog regression table.
#[derive(Debug, Clone, Serialize)]
pub struct RootTableCheck {
    pub roots: Vec<RootMatch>,
    /// Computed roots no expected entry claimed.
    pub unexpected: Vec<usize>,
    pub rank: (usize, usize),
    pub centralizer_dim: (usize, usize),
    /// `sum (p + h) + dim z_m(t)` against `dim m`.
    pub dimension_sum: (usize, usize),
    pub passed: bool,
}

fn sorted_families(mut f: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    f.sort_unstable();
    f
}

fn same_up_to_sign(a: &[f64], b: &DVector<f64>, tol: f64) -> bool {
    a.len() == b.len()
        && (a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < tol)
            || a.iter().zip(b.iter()).all(|(x, y)| (x + y).abs() < tol))
}

impl TriadAnalysis {
    /// `sum_beta (p_beta + h_beta) + dim z_m(t)` and `dim m`.
    pub fn dimension_sum(&self) -> (usize, usize) {
        let roots: usize = self.adapted().iter().map(|d| d.p_mult + d.h_mult).sum();
        (
            roots + self.roots.adapted.centralizer.zm.ncols(),
            self.decomp.m.ncols(),
        )
    }

    /// Match the computed adapted roots against the catalog table, by chart
    /// coefficients when both sides fix them (explicit frames) and otherwise by
    /// multiplicities alone. `None` when the triad carries no table.
    pub fn check_expected(&self) -> Option<RootTableCheck> {
        let table = self.spec.expected.as_ref()?;
        let by_coeffs = self.frames().explicit;
        let mut used = vec![false; self.adapted().len()];
        let mut roots = Vec::new();
        for e in &table.roots {
            let found = self.find_root(e, by_coeffs, &used);
            if let Some(i) = found {
                used[i] = true;
            }
            let d = found.map(|i| &self.adapted()[i]);
            let computed_families = d
                .map(|d| sorted_families(d.families.iter().map(|f| (f.p_mult, f.h_mult)).collect()))
                .unwrap_or_default();
            let expected_families = sorted_families(e.families.clone());
            let computed_mult = d.map(|d| (d.p_mult, d.h_mult));
            roots.push(RootMatch {
                label: e.label.clone(),
                computed: found,
                expected_mult: (e.p_mult, e.h_mult),
                computed_mult,
                // an empty family list leaves the families unspecified
                ok: computed_mult == Some((e.p_mult, e.h_mult))
                    && (expected_families.is_empty() || computed_families == expected_families),
                expected_families,
                computed_families,
            });
        }
        let unexpected: Vec<usize> = (0..used.len()).filter(|&i| !used[i]).collect();
        let rank = (self.rank(), table.rank);
        let centralizer_dim = (
            self.roots.adapted.centralizer.zm.ncols(),
            table.centralizer_dim,
        );
        let dimension_sum = self.dimension_sum();
        let passed = roots.iter().all(|r| r.ok)
            && unexpected.is_empty()
            && rank.0 == rank.1
            && centralizer_dim.0 == centralizer_dim.1
            && dimension_sum.0 == dimension_sum.1;
        Some(RootTableCheck {
            roots,
            unexpected,
            rank,
            centralizer_dim,
            dimension_sum,
            passed,
        })
    }

    fn find_root(&self, e: &ExpectedRoot, by_coeffs: bool, used: &[bool]) -> Option<usize> {
        let tol = 1e-8;
        self.adapted().iter().enumerate().position(|(i, d)| {
            if used[i] {
                return false;
            }
            match (&e.chart_coeffs, by_coeffs) {
                (Some(c), true) => same_up_to_sign(c, &d.chart_coeffs, tol),
                _ => {
                    (d.p_mult, d.h_mult) == (e.p_mult, e.h_mult)
                        && (e.families.is_empty()
                            || sorted_families(
                                d.families.iter().map(|f| (f.p_mult, f.h_mult)).collect(),
                            ) == sorted_families(e.families.clone()))
                }
            }
        })
    }
}
