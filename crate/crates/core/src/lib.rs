//! Hermann actions on compact symmetric spaces of `SO(n)`: restricted root
//! data, orbit geometry and integration through a section.

pub mod analysis;
pub mod catalog;
pub mod config;
pub mod error;
pub mod integration;
pub mod lie;
pub(crate) mod linalg;
pub mod orbit;
pub mod roots;

pub use analysis::{RootMatch, RootTableCheck, TriadAnalysis};
pub use catalog::TriadSpec;
pub use config::{AnalysisConfig, Tolerances};
pub use error::{Error, ErrorKind, Result};
pub use integration::{
    DensityProfile, McResult, QuadratureConfig, QuadratureResult, SectionLattice,
};
pub use lie::{
    AlgElement, CartanEmbedding, Involution, SoAlgebra, SpacePoint, Triad, TriadDecomposition,
};
pub use orbit::{FdConfig, GeneralSpectrumDatum, OrbitFrame, ShapeSpectrum};
pub use roots::{AdaptedRootDatum, RootData};
