mod common;

use common::{color3, perturb, random_tensor, small_model};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tanner_core::{sample_incremental, Basis, NoiseProfile};
use tanner_neural::config::training_preset;
use tanner_neural::mask::{decomposed_attention, dense_masked_attention, effective_mask};
use tanner_neural::train::loss_and_grads;
use tanner_neural::{GraphQec, SizePreset, TrainConfig, Trainer};
use tanner_tensor::Tape;

fn loss_at(model: &GraphQec, batch: &tanner_core::SyndromeBatch) -> f64 {
    let tape = Tape::new();
    model.loss(&model.params().bind(&tape), batch, None).unwrap().value().item()
}

/// Central differences on a few entries of every parameter tensor: the two
/// largest-gradient entries and two random ones.
#[test]
fn full_model_gradients_match_finite_differences() {
    let (code, graph) = color3();
    let mut model = small_model(&graph, 40);
    perturb(&mut model, 0.05, 41);
    let batch = sample_incremental(&code, 3, Basis::Z, NoiseProfile::uniform(0.05), 4, 42).unwrap();
    let (_, grads) = loss_and_grads(&model, &batch, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let h = 1e-5;
    let mut worst = (0.0, String::new());
    let ids: Vec<_> = model.params().ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let g = grads[i].clone().expect("every parameter reaches the loss");
        let n = g.numel();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| g.data()[b].abs().total_cmp(&g.data()[a].abs()));
        let mut picks = order[..n.min(2)].to_vec();
        picks.extend((0..2).map(|_| rng.random_range(0..n)));
        for j in picks {
            let x0 = model.params().get(id).data()[j];
            model.params_mut().get_mut(id).data_mut()[j] = x0 + h;
            let up = loss_at(&model, &batch);
            model.params_mut().get_mut(id).data_mut()[j] = x0 - h;
            let down = loss_at(&model, &batch);
            model.params_mut().get_mut(id).data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g.data()[j];
            // roundoff of a central difference on an O(1) loss is ~1e-11 at
            // this step, so gradients below the floor are compared absolutely
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}]: {analytic} vs {numeric}", model.params().name(id)));
            }
        }
    }
    assert!(worst.0 < 1e-4, "worst relative error {} at {}", worst.0, worst.1);
}

#[test]
fn decomposed_attention_matches_masked_attention() {
    let (cycles, nodes, d) = (5, 3, 8);
    let l = 2 * cycles * nodes;
    let q = random_tensor(&[l, d], 50);
    let k = random_tensor(&[l, d], 51);
    let v = random_tensor(&[l, d], 52);
    let dense = dense_masked_attention(&q, &k, &v, cycles, nodes).unwrap();
    let parts = decomposed_attention(&q, &k, &v, cycles, nodes).unwrap();
    assert!(dense.max_abs_diff(&parts) < 1e-6, "{}", dense.max_abs_diff(&parts));
    // the mask is not trivially full or causal
    let m = effective_mask(cycles, nodes);
    let visible = m.iter().filter(|&&b| b).count();
    assert!(visible < l * (l + 1) / 2);
}

#[test]
fn preset_row_loads_verbatim() {
    let row = training_preset("color", 7).unwrap();
    assert_eq!(row.model, SizePreset::Small);
    let cfg = TrainConfig::from_preset(&row, 0.005, 1);
    assert_eq!(cfg.learning_rate, 3e-4);
    assert_eq!(cfg.batch_size, 1024);
    assert_eq!(cfg.pretrain_length, 18);
}

/// 200 steps on small batches: the last 50 losses average below the first 50.
#[test]
fn short_training_lowers_the_loss() {
    let (code, graph) = color3();
    let model = small_model(&graph, 60);
    let mut cfg = TrainConfig::from_preset(&training_preset("color", 7).unwrap(), 0.005, 61);
    cfg.batch_size = 8;
    cfg.pretrain_length = 3;
    cfg.pretrain_steps = 200;
    let dir = tempfile::tempdir().unwrap();
    let mut trainer = Trainer::new(model, &code, Basis::Z, cfg).unwrap();
    trainer.loss_log = Some(dir.path().join("loss.csv"));
    let report = trainer.run().unwrap();
    assert_eq!(report.steps, 200);
    let first: f64 = report.losses[..50].iter().sum::<f64>() / 50.0;
    let last: f64 = report.losses[150..].iter().sum::<f64>() / 50.0;
    assert!(last < first, "first {first} last {last}");
    let log = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 201);
    assert!(log.starts_with("step,loss,lr,grad_norm\n0,"));
}

#[test]
fn checkpoints_are_written_on_schedule() {
    let (code, graph) = color3();
    let model = GraphQec::new(tanner_neural::ModelConfig::tiny(), &graph, 70).unwrap();
    let mut cfg = TrainConfig::from_preset(&training_preset("color", 7).unwrap(), 0.01, 71);
    cfg.batch_size = 2;
    cfg.pretrain_length = 2;
    cfg.pretrain_steps = 5;
    cfg.checkpoint_every = 2;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.gqec");
    let mut trainer = Trainer::new(model, &code, Basis::Z, cfg).unwrap();
    trainer.checkpoint_path = Some(path.clone());
    trainer.step().unwrap();
    assert!(!path.exists());
    trainer.step().unwrap();
    let ck = tanner_neural::ModelCheckpoint::load(&path).unwrap();
    assert_eq!(ck.step, 2);
    trainer.run().unwrap();
    assert_eq!(tanner_neural::ModelCheckpoint::load(&path).unwrap().step, 5);
}

#[test]
fn time_budget_stops_training() {
    let (code, graph) = color3();
    let model = GraphQec::new(tanner_neural::ModelConfig::tiny(), &graph, 80).unwrap();
    let mut cfg = TrainConfig::from_preset(&training_preset("color", 7).unwrap(), 0.01, 81);
    cfg.batch_size = 2;
    cfg.pretrain_length = 2;
    cfg.time_budget_secs = Some(0.0);
    let mut trainer = Trainer::new(model, &code, Basis::Z, cfg).unwrap();
    let report = trainer.run().unwrap();
    assert_eq!(report.steps, 0);
    assert_eq!(report.stop, tanner_neural::StopReason::TimeBudget);
}
