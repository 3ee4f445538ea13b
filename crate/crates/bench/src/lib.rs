//! Shared fixtures for the criterion benches.

use srsm::scene::{preliminary_extract, synth_scene, Candidate, SceneSpec, SyntheticScene};
use srsm::superres::project_points;
use srsm::{SparseZImage, ZImage};

pub fn scene(seed: u64) -> SyntheticScene {
    synth_scene(&SceneSpec::standard(), seed).expect("standard scene")
}

pub fn sparse(scene: &SyntheticScene) -> SparseZImage {
    project_points(&scene.cloud, &scene.gt).expect("projection")
}

/// Candidates on the noise-free surface, so the snake benches don't depend on FISTA.
pub fn candidates(scene: &SyntheticScene) -> Vec<Candidate> {
    preliminary_extract(&scene.truth_z, &scene.gt, 2.0, 10.0, None).expect("extraction")
}

pub fn truth_z(scene: &SyntheticScene) -> &ZImage {
    &scene.truth_z
}
