use alloc::string::ToString;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::baselines::BinningSpec;

fn chunk(task: &str, horizon: usize, dims: usize, values: Vec<f64>) -> ActionChunk {
    ActionChunk::new(horizon, dims, values, task, 0).unwrap()
}

fn uniform_chunks(n: usize, horizon: usize, dims: usize, seed: u64) -> Vec<ActionChunk> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v = (0..horizon * dims).map(|_| rng.random_range(-1.0..1.0)).collect();
            chunk(&format!("t{i}"), horizon, dims, v)
        })
        .collect()
}

#[test]
fn identity_has_zero_error() {
    let test = uniform_chunks(5, 4, 3, 1);
    let r = eval_reconstruction(
        &IdentityTokenizer { horizon: 4, dims: 3 },
        &test,
        EvalOptions::default(),
    )
    .unwrap();
    assert!(r.mse < 1e-12);
    assert_eq!(r.code_length, 12.0);
    assert_eq!(r.failure_rate, 0.0);
}

#[test]
fn binning_matches_uniform_noise_formula() {
    let test = uniform_chunks(1000, 10, 1, 2);
    let spec = BinningSpec::new(256, vec![-1.0], vec![1.0], 10).unwrap();
    let r = eval_reconstruction(&BinningTokenizer(spec), &test, EvalOptions::default()).unwrap();
    let expect = (2.0f64 / 256.0).powi(2) / 12.0;
    assert!((r.mse / expect - 1.0).abs() < 0.2, "{} vs {expect}", r.mse);
}

#[test]
fn mse_matches_scalar_loop() {
    let test = uniform_chunks(10, 6, 2, 3);
    let spec = BinningSpec::new(7, vec![-0.8, -0.5], vec![0.9, 0.5], 6).unwrap();
    let r = eval_reconstruction(&BinningTokenizer(spec.clone()), &test, EvalOptions::default()).unwrap();
    let mut total = 0.0;
    let mut n = 0.0;
    for c in &test {
        for t in 0..6 {
            for d in 0..2 {
                let x = c.values[t * 2 + d];
                let bin = spec.bin(d, x);
                let xh = spec.low[d] + (bin as f64 + 0.5) * (spec.high[d] - spec.low[d]) / 7.0;
                total += (x - xh) * (x - xh);
                n += 1.0;
            }
        }
    }
    assert!((r.mse - total / n).abs() < 1e-9);
}

struct Flaky;

impl Tokenizer for Flaky {
    fn name(&self) -> String {
        "flaky".to_string()
    }
    fn vocab_size(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        1
    }
    fn dims(&self) -> usize {
        1
    }
    fn tokenize(&self, values: &[f64]) -> Result<Vec<u32>, TokenizerError> {
        Ok(vec![(values[0] > 0.0) as u32])
    }
    fn detokenize(&self, ids: &[u32], _seed: u64) -> Result<Vec<f64>, TokenizerError> {
        if ids[0] == 1 {
            Err(TokenizerError::DecodeFailure("positive".into()))
        } else {
            Ok(vec![0.0])
        }
    }
}

#[test]
fn decode_failures_are_counted_not_averaged() {
    let test: Vec<_> = [-1.0, 2.0, -3.0, 4.0]
        .iter()
        .map(|&v| chunk("t", 1, 1, vec![v]))
        .collect();
    let r = eval_reconstruction(&Flaky, &test, EvalOptions::default()).unwrap();
    assert_eq!(r.failure_rate, 0.5);
    assert_eq!(r.mse, 5.0);
}

#[test]
fn leakage_detected() {
    let a = uniform_chunks(3, 2, 1, 0);
    assert!(assert_disjoint(&a[..2], &a[2..]).is_ok());
    assert_eq!(assert_disjoint(&a, &a[2..]), Err(EvalError::Leakage("t2".into())));
}

#[test]
fn bit_activation_counts_msb_first() {
    let codes = vec![vec![0b10u32, 0b01], vec![0b11, 0b00]];
    assert_eq!(bit_activation(&codes, 2), [1.0, 0.5, 0.0, 0.5]);
    assert_eq!(balanced_bit_fraction(&[1.0, 0.5, 0.0, 0.5], 0.1, 0.9), 0.5);
}

#[test]
fn chunk_seeds_differ() {
    assert_ne!(chunk_seed(0, 0, 0), chunk_seed(0, 1, 0));
    assert_ne!(chunk_seed(0, 0, 0), chunk_seed(0, 0, 1));
    assert_ne!(chunk_seed(0, 0, 0), chunk_seed(1, 0, 0));
}
