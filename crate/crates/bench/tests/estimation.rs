use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tanner_bench::ler::mispredictions;
use tanner_bench::{estimate_ler, run_stopping_rule, BpOsdDecoder, MemoryExperiment, ShotDecoder, StoppingRule};
use tanner_core::code::build_color_code;
use tanner_core::{Basis, SyndromeBatch};

struct Perfect;

impl ShotDecoder for Perfect {
    fn name(&self) -> &str {
        "perfect"
    }
    fn predict(&self, batch: &SyndromeBatch) -> tanner_bench::Result<Vec<u8>> {
        Ok(batch.labels.clone())
    }
}

struct CoinFlip;

impl ShotDecoder for CoinFlip {
    fn name(&self) -> &str {
        "coin"
    }
    fn predict(&self, batch: &SyndromeBatch) -> tanner_bench::Result<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(batch.seed ^ 0x5eed);
        Ok((0..batch.labels.len()).map(|_| u8::from(rng.random::<bool>())).collect())
    }
}

fn color3(cycles: usize) -> MemoryExperiment {
    MemoryExperiment::new(build_color_code(3).unwrap(), cycles, Basis::Z, 0.005).unwrap()
}

#[test]
fn perfect_decoder_is_flagged_low_confidence() {
    let rule = StoppingRule { min_failures: 10, max_shots: 3000, batch_shots: 1000 };
    let e = estimate_ler(&Perfect, &color3(2), &rule, 1).unwrap();
    assert_eq!((e.failures, e.shots), (0, 3000));
    assert!(e.low_confidence);
    assert_eq!(e.per_cycle_pc, Some(0.0));
}

#[test]
fn coin_flip_is_one_half() {
    let rule = StoppingRule { min_failures: 2000, max_shots: 100_000, batch_shots: 500 };
    let e = estimate_ler(&CoinFlip, &color3(1), &rule, 2).unwrap();
    assert!((e.p_hat - 0.5).abs() <= 4.0 * e.sigma, "{} ± {}", e.p_hat, e.sigma);
    assert!(!e.low_confidence);
}

fn bernoulli(q: f64) -> impl FnMut(usize, u64) -> tanner_bench::Result<Vec<u8>> {
    move |n, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| u8::from(rng.random::<f64>() < q)).collect())
    }
}

#[test]
fn hundred_failures_give_ten_percent_error() {
    let rule = StoppingRule { min_failures: 100, max_shots: 10_000_000, batch_shots: 100 };
    for (i, q) in [0.05, 0.02, 0.005].into_iter().enumerate() {
        let e = run_stopping_rule(1, 1, &rule, i as u64, bernoulli(q)).unwrap();
        assert!(e.failures >= 100);
        assert!(e.p_hat <= 0.05 + 3.0 * e.sigma);
        if e.p_hat <= 0.05 {
            assert!(e.relative_error() <= 0.101, "q={q}: {}", e.relative_error());
        }
    }
}

#[test]
fn stopping_rule_covers_truth() {
    let q = 0.02;
    let rule = StoppingRule { min_failures: 100, max_shots: 10_000_000, batch_shots: 100 };
    let trials = 500;
    let covered = (0..trials)
        .filter(|&t| {
            let e = run_stopping_rule(1, 1, &rule, 1000 + t, bernoulli(q)).unwrap();
            (e.p_hat - q).abs() <= 2.0 * e.sigma
        })
        .count();
    assert!(covered as f64 >= 0.93 * trials as f64, "covered {covered} of {trials}");
}

#[test]
fn estimates_are_reproducible() {
    let exp = color3(1);
    let dec = BpOsdDecoder::with_defaults(&exp.dem().unwrap()).unwrap();
    let rule = StoppingRule { min_failures: 20, max_shots: 20_000, batch_shots: 500 };
    let a = estimate_ler(&dec, &exp, &rule, 9).unwrap();
    let b = estimate_ler(&dec, &exp, &rule, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.failures >= 20);
    assert!(a.p_hat > 0.01 && a.p_hat < 0.08, "{}", a.p_hat);
}

#[test]
fn misprediction_lengths_must_match() {
    assert!(mispredictions(&[0, 1], &[0]).is_err());
    assert_eq!(mispredictions(&[0, 1, 1], &[1, 1, 0]).unwrap(), vec![1, 0, 1]);
}
