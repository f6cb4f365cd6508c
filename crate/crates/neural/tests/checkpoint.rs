mod common;

use common::{color3, perturb};
use tanner_core::code::build_surface_code;
use tanner_core::{build_extended_tanner, sample_incremental, Basis, NoiseProfile};
use tanner_neural::checkpoint::MAGIC;
use tanner_neural::{DecodeMode, GraphQec, ModelCheckpoint, ModelConfig, NeuralError};

fn trained_like(seed: u64) -> GraphQec {
    let (_, graph) = color3();
    let mut m = GraphQec::new(ModelConfig::tiny(), &graph, seed).unwrap();
    perturb(&mut m, 0.1, seed + 1);
    m
}

#[test]
fn save_load_save_is_byte_identical() {
    let (_, graph) = color3();
    let model = trained_like(1);
    let first = ModelCheckpoint::capture(&model, 17, 99).to_bytes().unwrap();
    assert_eq!(&first[..5], MAGIC);
    let loaded = ModelCheckpoint::from_bytes(&first).unwrap();
    assert_eq!(loaded.step, 17);
    assert_eq!(loaded.rng.seed, 99);
    let rebuilt = loaded.into_model(&graph).unwrap();
    let second = ModelCheckpoint::capture(&rebuilt, 17, 99).to_bytes().unwrap();
    assert_eq!(first, second);
}

#[test]
fn reloaded_model_predicts_like_the_f32_rounded_original() {
    let (code, graph) = color3();
    let model = trained_like(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gqec");
    ModelCheckpoint::capture(&model, 0, 0).save(&path).unwrap();
    let reloaded = ModelCheckpoint::load(&path).unwrap().into_model(&graph).unwrap();
    let mut rounded = model.clone();
    let ids: Vec<_> = rounded.params().ids().collect();
    for id in ids {
        for x in rounded.params_mut().get_mut(id).data_mut() {
            *x = *x as f32 as f64;
        }
    }
    let batch = sample_incremental(&code, 3, Basis::Z, NoiseProfile::uniform(0.02), 16, 4).unwrap();
    assert_eq!(
        reloaded.predict(&batch, DecodeMode::Recurrent).unwrap(),
        rounded.predict(&batch, DecodeMode::Recurrent).unwrap()
    );
}

#[test]
fn other_graph_is_rejected() {
    let model = trained_like(5);
    let ck = ModelCheckpoint::capture(&model, 0, 0);
    let surface = build_extended_tanner(&build_surface_code(3).unwrap(), Basis::Z).unwrap();
    assert!(matches!(ck.into_model(&surface), Err(NeuralError::Fingerprint { .. })));
    let (code, _) = color3();
    let x_graph = build_extended_tanner(&code, Basis::X).unwrap();
    assert!(matches!(ck.into_model(&x_graph), Err(NeuralError::Fingerprint { .. })));
}

#[test]
fn corrupt_files_are_rejected() {
    let bytes = ModelCheckpoint::capture(&trained_like(6), 0, 0).to_bytes().unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(ModelCheckpoint::from_bytes(&bad_magic), Err(NeuralError::Checkpoint(_))));
    let truncated = &bytes[..bytes.len() - 4];
    assert!(matches!(ModelCheckpoint::from_bytes(truncated), Err(NeuralError::Checkpoint(_))));
    assert!(ModelCheckpoint::from_bytes(&bytes[..10]).is_err());
}
