use serde::{Deserialize, Serialize};

/// Session-level numerical tolerances. Every report echoes these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative skew-symmetry defect accepted for algebra elements.
    pub skew: f64,
    /// Subspace membership, null-space and leak checks.
    pub subspace: f64,
    /// Relative separation used when clustering joint eigenvalues into roots.
    pub cluster: f64,
    /// Angular tolerance for wall tests such as `beta(w) in pi Z`.
    pub angle: f64,
    /// Relative singular-value cutoff for numeric ranks of Killing-field matrices.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            skew: 1e-12,
            subspace: 1e-9,
            cluster: 1e-8,
            angle: 1e-9,
            rank: 1e-7,
        }
    }
}

/// Options for building the root data of a triad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub tol: Tolerances,
    pub seed: u64,
    /// Use the frames attached to a catalog triad instead of the greedy construction.
    pub explicit_frames: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            seed: 0x5eed,
            explicit_frames: true,
        }
    }
}
