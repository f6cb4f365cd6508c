#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tanner_core::code::build_color_code;
use tanner_core::{build_extended_tanner, Basis, ExtendedTannerGraph, StabilizerCode};
use tanner_neural::{GraphQec, ModelConfig, SizePreset};
use tanner_tensor::Tensor;

pub fn color3() -> (StabilizerCode, ExtendedTannerGraph) {
    let code = build_color_code(3).unwrap();
    let graph = build_extended_tanner(&code, Basis::Z).unwrap();
    (code, graph)
}

pub fn small_model(graph: &ExtendedTannerGraph, seed: u64) -> GraphQec {
    GraphQec::new(ModelConfig::preset(SizePreset::Small), graph, seed).unwrap()
}

/// Adds `N(0, scale)`-ish uniform noise to every parameter so that gates and
/// products are far from their initial regime.
pub fn perturb(model: &mut GraphQec, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for x in model.params_mut().get_mut(id).data_mut() {
            *x += scale * (rng.random::<f64>() * 2.0 - 1.0);
        }
    }
}

pub fn random_bits(len: usize, density: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| u8::from(rng.random::<f64>() < density)).collect()
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random::<f64>() * 2.0 - 1.0)
}
