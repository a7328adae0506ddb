#![allow(dead_code)]

use hermann_core::catalog::{self, TriadSpec};
use hermann_core::{AnalysisConfig, TriadAnalysis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn analysis(spec: &TriadSpec) -> TriadAnalysis {
    TriadAnalysis::new(spec, &AnalysisConfig::default()).expect("catalog triad analyses")
}

pub fn all_analyses() -> Vec<TriadAnalysis> {
    catalog::standard_instances().iter().map(analysis).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random section point whose every root value stays `margin` away from the
/// lattice `(pi/2) Z`, so it is regular for every multiplicity pattern.
pub fn regular_point(a: &TriadAnalysis, rng: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    let half = std::f64::consts::FRAC_PI_2;
    loop {
        let w: Vec<f64> = (0..a.rank()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ok = a.adapted().iter().all(|d| {
            let r = d.eval(&w).rem_euclid(half);
            r.min(half - r) > margin
        });
        if ok {
            return w;
        }
    }
}

pub fn random_vector(r: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..r).map(|_| rng.random_range(-1.0..1.0)).collect()
}
