//! Central finite-difference checks for every differentiable tape op (f64).
//! Shared by the core test suite and the acceptance runner.

use fact_core::tensor::{Tape, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;
const ABS_FLOOR: f64 = 1e-8;
const INSTANCES: u64 = 20;

type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>;

pub struct Case {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub build: Box<Build>,
}

fn case(
    name: &'static str,
    shapes: &[&[usize]],
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError> + 'static,
) -> Case {
    Case {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        build: Box::new(build),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.5..1.5))
}

/// Reduces any output to a scalar through fixed random weights so every
/// Jacobian entry contributes.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let w = tape.constant(random_tensor(&mut rng, &shape));
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

fn eval(build: &Build, inputs: &[Tensor<f64>], seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let loss = weighted_sum(&mut tape, out, seed);
    tape.value(loss).item()
}

/// Largest error/tolerance ratio over all instances and entries; fails on
/// the first entry outside tolerance.
pub fn check(case: &Case) -> Result<f64, String> {
    let (name, build) = (case.name, &*case.build);
    let mut worst = 0.0f64;
    for instance in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let inputs: Vec<Tensor<f64>> = case.shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars).map_err(|e| format!("{name}: {e}"))?;
        let loss = weighted_sum(&mut tape, out, instance);
        tape.backward(loss).map_err(|e| format!("{name}: {e}"))?;

        for (which, var) in vars.iter().enumerate() {
            let analytic = tape.grad(*var).unwrap().to_vec();
            for (j, &a) in analytic.iter().enumerate() {
                let mut plus = inputs.clone();
                plus[which].data_mut()[j] += STEP;
                let mut minus = inputs.clone();
                minus[which].data_mut()[j] -= STEP;
                let numeric = (eval(build, &plus, instance) - eval(build, &minus, instance)) / (2.0 * STEP);
                let err = (a - numeric).abs();
                let tol = (REL_TOL * a.abs().max(numeric.abs())).max(ABS_FLOOR);
                if err > tol {
                    return Err(format!(
                        "{name}: instance {instance} input {which} elem {j}: analytic {a} numeric {numeric}"
                    ));
                }
                worst = worst.max(err / tol);
            }
        }
    }
    Ok(worst)
}

pub fn cases() -> Vec<Case> {
    vec![
        case("matmul", &[&[4, 5], &[5, 3]], |t, v| t.matmul(v[0], v[1])),
        case("matmul_batched", &[&[2, 3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1])),
        case("add_broadcast", &[&[2, 3, 4], &[4]], |t, v| t.add(v[0], v[1])),
        case("sub", &[&[3, 4], &[3, 4]], |t, v| t.sub(v[0], v[1])),
        case("mul_broadcast", &[&[2, 3, 4], &[3, 4]], |t, v| t.mul(v[0], v[1])),
        case("scale", &[&[3, 4]], |t, v| Ok(t.scale(v[0], -0.7))),
        case("add_scalar", &[&[3, 4]], |t, v| Ok(t.add_scalar(v[0], 2.5))),
        case("silu", &[&[3, 5]], |t, v| Ok(t.silu(v[0]))),
        case("sigmoid", &[&[3, 5]], |t, v| Ok(t.sigmoid(v[0]))),
        case("softmax", &[&[3, 5]], |t, v| Ok(t.softmax(v[0]))),
        case("layer_norm", &[&[2, 3, 6]], |t, v| Ok(t.layer_norm(v[0]))),
        case("mse", &[&[3, 4], &[3, 4]], |t, v| t.mse(v[0], v[1])),
        case("sum", &[&[3, 4]], |t, v| Ok(t.sum(v[0]))),
        case("mean", &[&[3, 4]], |t, v| Ok(t.mean(v[0]))),
        case("bit_entropy", &[&[4, 6]], |t, v| t.bit_entropy(v[0], 1.0)),
        case("bit_entropy_tau", &[&[3, 2, 3]], |t, v| t.bit_entropy(v[0], 0.5)),
        case("reshape", &[&[3, 4]], |t, v| t.reshape(v[0], &[2, 6])),
        case("concat_rows", &[&[2, 3, 4], &[2, 2, 4]], |t, v| {
            t.concat_rows(v[0], v[1])
        }),
        case("slice_rows", &[&[2, 5, 3]], |t, v| t.slice_rows(v[0], 1, 3)),
        case("narrow_last", &[&[3, 7]], |t, v| t.narrow_last(v[0], 2, 4)),
        case("row_expand", &[&[2, 3]], |t, v| t.row_expand(v[0], 3, 5, 0.25)),
        case("attention", &[&[2, 4, 6], &[2, 4, 6], &[2, 4, 6]], |t, v| {
            t.attention(v[0], v[1], v[2], 2)
        }),
        // mse(silu(x W + b), y) through a small layer.
        case("mse_linear", &[&[3, 4], &[4, 2], &[2]], |t, v| {
            let h = t.matmul(v[0], v[1])?;
            let h = t.add(h, v[2])?;
            let h = t.silu(h);
            let target = t.constant(Tensor::full(&[3, 2], 0.3));
            t.mse(h, target)
        }),
    ]
}
