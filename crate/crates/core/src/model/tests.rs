use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn tiny_config() -> TokenizerConfig {
    TokenizerConfig {
        horizon: 6,
        action_dims: 3,
        code_length: 4,
        bits: 5,
        width: 8,
        encoder_depth: 1,
        decoder_depth: 1,
        heads: 2,
        mlp_ratio: 2,
        ode_steps: 4,
        seed: 3,
        ..TokenizerConfig::default()
    }
}

fn randomize(model: &mut FactModel<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_batch(c: &TokenizerConfig, b: usize, seed: u64) -> FlowBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = (0..b).map(|_| rng.random_range(0.0..1.0)).collect();
    FlowBatch::new(
        random_tensor(&[b, c.horizon, c.action_dims], seed + 1),
        gaussian(&[b, c.horizon, c.action_dims], seed + 2),
        times,
    )
    .unwrap()
}

fn binary_entropy_oracle(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

#[test]
fn encode_shape_and_zero_queries() {
    let c = tiny_config();
    let model = FactModel::<f64>::new(c.clone()).unwrap();
    assert!(model
        .params()
        .get("encoder.queries")
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
    let e = model.encode(&random_tensor(&[6, 3], 1)).unwrap();
    assert_eq!(e.shape(), &[4, 5]);
    let e = model.encode(&random_tensor(&[3, 6, 3], 1)).unwrap();
    assert_eq!(e.shape(), &[3, 4, 5]);
    assert!(model.encode(&random_tensor(&[5, 3], 1)).is_err());
}

#[test]
fn zero_network_emits_head_bias() {
    let mut model = FactModel::<f64>::new(tiny_config()).unwrap();
    randomize(&mut model, 9);
    let names: Vec<_> = model.params().names().to_vec();
    for name in names {
        if !name.ends_with(".bias") {
            let t = model.params_mut().get_mut(&name).unwrap();
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let bias = model.params().get("encoder.head.bias").unwrap().clone();
    let e = model.encode(&random_tensor(&[6, 3], 2)).unwrap();
    for row in e.data().chunks(5) {
        for (a, b) in row.iter().zip(bias.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn timestep_order_matters() {
    let model = FactModel::<f64>::new(tiny_config()).unwrap();
    let x = random_tensor(&[6, 3], 4);
    let mut swapped = x.clone();
    for d in 0..3 {
        swapped.data_mut().swap(d, 3 + d);
    }
    let (a, b) = (model.encode(&x).unwrap(), model.encode(&swapped).unwrap());
    let diff: f64 = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).sum();
    assert!(diff > 1e-6, "permutation left the latent unchanged");
}

#[test]
fn decoder_depends_on_time_when_gates_open() {
    let mut model = FactModel::<f64>::new(tiny_config()).unwrap();
    randomize(&mut model, 5);
    let x = random_tensor(&[6, 3], 6);
    let code = quantize(&random_tensor(&[4, 5], 7)).remove(0);
    let v0 = model.decode_velocity(&x, core::slice::from_ref(&code), &[0.2]).unwrap();
    let v1 = model.decode_velocity(&x, &[code], &[0.7]).unwrap();
    assert_eq!(v0.shape(), &[6, 3]);
    let diff: f64 = v0.data().iter().zip(v1.data()).map(|(p, q)| (p - q).abs()).sum();
    assert!(diff > 1e-6);
}

#[test]
fn decoder_rejects_time_outside_unit_interval() {
    let model = FactModel::<f64>::new(tiny_config()).unwrap();
    let code = quantize(&random_tensor(&[4, 5], 7)).remove(0);
    assert!(model
        .decode_velocity(&random_tensor(&[6, 3], 1), &[code], &[1.5])
        .is_err());
}

#[test]
fn zero_gates_reduce_decoder_to_projection_and_head() {
    let c = tiny_config();
    let model = FactModel::<f64>::new(c.clone()).unwrap();
    let x = random_tensor(&[6, 3], 8);
    let code = quantize(&random_tensor(&[4, 5], 9)).remove(0);
    let v = model.decode_velocity(&x, &[code], &[0.4]).unwrap();

    // head(final_norm(input_projection(x) + pos)) on the action rows.
    let p = model.params();
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let w = tape.constant(p.get("decoder.input.weight").unwrap().clone());
    let b = tape.constant(p.get("decoder.input.bias").unwrap().clone());
    let h = tape.matmul(xv, w).unwrap();
    let h = tape.add(h, b).unwrap();
    let pos = p.get("decoder.pos").unwrap();
    let pos = tape.constant(Tensor::new(&[6, c.width], pos.data()[..6 * c.width].to_vec()).unwrap());
    let h = tape.add(h, pos).unwrap();
    let h = tape.layer_norm(h);
    let g = tape.constant(p.get("decoder.norm.gain").unwrap().clone());
    let nb = tape.constant(p.get("decoder.norm.bias").unwrap().clone());
    let h = tape.mul(h, g).unwrap();
    let h = tape.add(h, nb).unwrap();
    let hw = tape.constant(p.get("decoder.head.weight").unwrap().clone());
    let hb = tape.constant(p.get("decoder.head.bias").unwrap().clone());
    let h = tape.matmul(h, hw).unwrap();
    let expected = tape.add(h, hb).unwrap();
    for (a, b) in v.data().iter().zip(tape.value(expected).data()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn interpolation_endpoints() {
    let z = random_tensor(&[6, 3], 1);
    let a = random_tensor(&[6, 3], 2);
    assert_eq!(interpolate(&z, &a, 0.0).unwrap(), z);
    assert_eq!(interpolate(&z, &a, 1.0).unwrap(), a);
    let mid = interpolate(&z, &a, 0.5).unwrap();
    for ((m, p), q) in mid.data().iter().zip(z.data()).zip(a.data()) {
        assert!((m - 0.5 * (p + q)).abs() < 1e-15);
    }
    assert!(interpolate(&z, &a, -0.1).is_err());
    assert!(interpolate(&z, &a, 1.1).is_err());
}

#[test]
fn flow_loss_matches_scalar_loop() {
    let c = tiny_config();
    let mut model = FactModel::<f64>::new(c.clone()).unwrap();
    randomize(&mut model, 11);
    let batch = random_batch(&c, 3, 12);
    let codes: Vec<LatentCode> = (0..3)
        .map(|i| quantize(&random_tensor(&[4, 5], 20 + i)).remove(0))
        .collect();
    let loss = model.flow_loss(&batch, &codes).unwrap();

    let per = c.horizon * c.action_dims;
    let mut total = 0.0;
    for i in 0..3 {
        let a = &batch.actions.data()[i * per..(i + 1) * per];
        let z = &batch.noise.data()[i * per..(i + 1) * per];
        let t = batch.times[i];
        let xt: Vec<f64> = a.iter().zip(z).map(|(a, z)| (1.0 - t) * z + t * a).collect();
        let v = model
            .decode_velocity(&Tensor::new(&[6, 3], xt).unwrap(), &codes[i..i + 1], &[t])
            .unwrap();
        for j in 0..per {
            let r = (a[j] - z[j]) - v.data()[j];
            total += r * r;
        }
    }
    let oracle = total / (3 * per) as f64;
    assert!((loss - oracle).abs() < 1e-6, "{loss} vs {oracle}");
}

#[test]
fn flow_loss_with_silent_decoder_is_target_energy() {
    let c = tiny_config();
    let mut model = FactModel::<f64>::new(c.clone()).unwrap();
    for name in ["decoder.head.weight", "decoder.head.bias"] {
        let t = model.params_mut().get_mut(name).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let batch = random_batch(&c, 2, 3);
    let codes: Vec<LatentCode> = (0..2).map(|i| quantize(&random_tensor(&[4, 5], i)).remove(0)).collect();
    let loss = model.flow_loss(&batch, &codes).unwrap();
    let target = batch.target();
    let energy = target.data().iter().map(|v| v * v).sum::<f64>() / target.numel() as f64;
    assert!((loss - energy).abs() < 1e-12);

    // A decoder reproducing a - z exactly scores zero.
    let mut tape = Tape::new();
    let a = tape.constant(target.clone());
    let b = tape.constant(target);
    let m = tape.mse(a, b).unwrap();
    assert_eq!(tape.value(m).item(), 0.0);
}

fn entropy_value(e: Tensor<f64>, tau: f64) -> f64 {
    let mut tape = Tape::new();
    let v = tape.constant(e);
    let l = entropy_loss(&mut tape, v, tau).unwrap();
    tape.value(l).item()
}

#[test]
fn entropy_collapsed_confident_batch_scores_zero() {
    let tau = 1.0;
    let e = Tensor::full(&[8, 4, 5], 30.0);
    let loss = entropy_value(e, tau);
    let p = 1.0 / (1.0 + (-2.0 * 30.0 / tau).exp());
    let oracle = binary_entropy_oracle(p) - binary_entropy_oracle(p);
    assert!((loss - oracle).abs() < 1e-3 && loss.abs() < 1e-3, "{loss}");
}

#[test]
fn entropy_balanced_confident_batch_scores_minus_ln2() {
    for tau in [1.0, 0.5] {
        let e = Tensor::from_fn(&[8, 4, 5], |i| if i < 80 { 10.0 * tau } else { -10.0 * tau });
        let loss = entropy_value(e, tau);
        let p = 1.0 / (1.0 + (-20.0f64).exp());
        let oracle = binary_entropy_oracle(p) - binary_entropy_oracle(0.5);
        assert!((loss - oracle).abs() < 1e-3, "{loss} vs {oracle}");
        assert!((loss + core::f64::consts::LN_2).abs() < 1e-3);
    }
}

#[test]
fn entropy_rejects_single_sample() {
    let mut tape = Tape::<f64>::new();
    let v = tape.constant(Tensor::zeros(&[1, 4, 5]));
    assert!(entropy_loss(&mut tape, v, 1.0).is_err());
}

#[test]
fn commitment_values_and_gradient() {
    let mut tape = Tape::<f64>::new();
    let e = tape.param(Tensor::new(&[2, 2], vec![1.0, -1.0, -1.0, 1.0]).unwrap());
    let l = commit_loss(&mut tape, e).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);

    let mut tape = Tape::<f64>::new();
    let e = tape.param(Tensor::zeros(&[3, 4]));
    let l = commit_loss(&mut tape, e).unwrap();
    assert_eq!(tape.value(l).item(), 1.0);

    // Gradient is 2 (e - bits) / n with bits held fixed; check against
    // central differences that also hold the bits fixed.
    let x = random_tensor(&[3, 4], 5);
    let mut tape = Tape::<f64>::new();
    let e = tape.param(x.clone());
    let l = commit_loss(&mut tape, e).unwrap();
    tape.backward(l).unwrap();
    let grad = tape.grad(e).unwrap().to_vec();
    let bits: Vec<f64> = x.data().iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
    let f = |y: &[f64]| -> f64 { y.iter().zip(&bits).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64 };
    let h = 1e-6;
    for j in 0..x.numel() {
        let closed = 2.0 * (x.data()[j] - bits[j]) / 12.0;
        assert!((grad[j] - closed).abs() < 1e-12);
        let (mut p, mut m) = (x.data().to_vec(), x.data().to_vec());
        p[j] += h;
        m[j] -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        assert!((grad[j] - fd).abs() < 1e-8);
    }
}

#[test]
fn total_loss_is_weighted_sum() {
    let c = tiny_config();
    let mut model = FactModel::<f64>::new(c.clone()).unwrap();
    randomize(&mut model, 2);
    let batch = random_batch(&c, 4, 6);
    let v = model.losses(&batch).unwrap();
    assert!(v.flow.is_finite() && v.entropy.is_finite() && v.commit.is_finite());
    let oracle = v.flow + c.entropy_weight * v.entropy + c.commit_weight * v.commit;
    assert!((v.total - oracle).abs() < 1e-7);

    let unweighted = TokenizerConfig {
        entropy_weight: 0.0,
        commit_weight: 0.0,
        ..c
    };
    let mut plain = FactModel::<f64>::new(unweighted).unwrap();
    *plain.params_mut() = model.params().clone();
    let w = plain.losses(&batch).unwrap();
    assert_eq!(w.total, w.flow);
    assert_eq!(w.flow, v.flow);
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let c = tiny_config();
    let mut model = FactModel::<f64>::new(c.clone()).unwrap();
    randomize(&mut model, 21);
    let batch = random_batch(&c, 3, 22);
    let mut tape = Tape::new();
    let p = model.register(&mut tape, true);
    let losses = model.record_losses(&mut tape, &p, &batch).unwrap();
    tape.backward(losses.total).unwrap();

    let h = 1e-6;
    let mut checked = 0;
    for (idx, name) in model.params().names().to_vec().iter().enumerate() {
        // The sign quantizer makes encoder-side finite differences
        // discontinuous; check decoder parameters, a few entries each.
        if FactModel::<f64>::is_encoder_param(name) {
            continue;
        }
        let grad = tape.grad(p[idx]).unwrap().to_vec();
        for j in (0..grad.len()).step_by(7).take(3) {
            let mut plus = model.clone();
            plus.params_mut().tensors_mut()[idx].data_mut()[j] += h;
            let mut minus = model.clone();
            minus.params_mut().tensors_mut()[idx].data_mut()[j] -= h;
            let fd = (plus.losses(&batch).unwrap().total - minus.losses(&batch).unwrap().total) / (2.0 * h);
            let tol = (1e-5 * grad[j].abs().max(fd.abs())).max(1e-8);
            assert!((grad[j] - fd).abs() <= tol, "{name}[{j}]: {} vs {fd}", grad[j]);
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn straight_through_reaches_encoder() {
    let c = TokenizerConfig {
        entropy_weight: 0.0,
        commit_weight: 0.0,
        ..tiny_config()
    };
    let mut model = FactModel::<f64>::new(c.clone()).unwrap();
    randomize(&mut model, 31);
    let batch = random_batch(&c, 2, 32);
    let mut tape = Tape::new();
    let p = model.register(&mut tape, true);
    let losses = model.record_losses(&mut tape, &p, &batch).unwrap();
    tape.backward(losses.total).unwrap();
    let mut norm = 0.0;
    for (i, name) in model.params().names().iter().enumerate() {
        if FactModel::<f64>::is_encoder_param(name) {
            norm += tape.grad(p[i]).unwrap().iter().map(|g| g * g).sum::<f64>();
        }
    }
    assert!(norm > 0.0);
}

#[test]
fn euler_constant_field_is_exact() {
    let z = random_tensor(&[6, 3], 1);
    let a = random_tensor(&[6, 3], 2);
    let v: Vec<f64> = a.data().iter().zip(z.data()).map(|(a, z)| a - z).collect();
    for steps in [1, 3, 10, 64] {
        let out =
            euler_integrate::<f64, ()>(z.clone(), steps, |_, _| Ok(Tensor::new(&[6, 3], v.clone()).unwrap())).unwrap();
        for (o, t) in out.data().iter().zip(a.data()) {
            assert!((o - t).abs() < 1e-12);
        }
    }
}

#[test]
fn euler_exponential_decay() {
    let x0 = random_tensor(&[6, 3], 3);
    let out = euler_integrate::<f64, ()>(x0.clone(), 1000, |x, _| {
        Ok(Tensor::from_fn(x.shape(), |i| -x.data()[i]))
    })
    .unwrap();
    let k = (-1.0f64).exp();
    for (o, x) in out.data().iter().zip(x0.data()) {
        assert!((o - k * x).abs() <= 1e-3 * (k * x).abs());
    }
}

#[test]
fn reconstruct_is_deterministic() {
    let model = FactModel::<f32>::new(tiny_config()).unwrap();
    let code = LatentCode::from_token_ids(&[1, 7, 30, 0], 5).unwrap();
    let a = model.reconstruct(&code, 4, 99).unwrap();
    let b = model.reconstruct(&code, 4, 99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), &[6, 3]);
    assert!(model.reconstruct(&code, 0, 99).is_err());
    let batch = model.reconstruct_batch(&[code.clone(), code], 4, &[99, 5]).unwrap();
    assert_eq!(batch[0], a);
}

#[test]
fn tokenize_emits_fixed_length() {
    let model = FactModel::<f32>::new(tiny_config()).unwrap();
    for seed in 0..5 {
        let x = random_tensor(&[6, 3], seed).cast::<f32>();
        let ids = model.tokenize(&x).unwrap();
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|&i| i < 32));
        let back = model.detokenize(&ids, seed).unwrap();
        assert_eq!(back.shape(), &[6, 3]);
    }
    assert!(matches!(
        model.detokenize(&[0, 1, 2, 32], 0),
        Err(ModelError::TokenOutOfRange { id: 32, .. })
    ));
}

#[test]
fn config_validation() {
    let bad = TokenizerConfig {
        code_length: 7,
        ..tiny_config()
    };
    assert!(FactModel::<f32>::new(bad).is_err());
    let bad = TokenizerConfig {
        bits: 0,
        ..tiny_config()
    };
    assert!(FactModel::<f32>::new(bad).is_err());
    assert_eq!(TokenizerConfig::default().vocab_size(), 4096);
}
