use intele_core::diffcore::gradcheck::{numeric_grads, numeric_param_grads, relative_error};
use intele_core::diffcore::{Activation, ParamSet, Tape, Tensor, Var};
use intele_core::intele::{loss_with_grads, Batch, HyperParams, InTeLeModel, LossTerm, Mode, ModelConfig};
use intele_core::rng::{substream, Rng};
use intele_core::Result;
use rand::Rng as _;
use rand_distr::StandardNormal;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;
const SEEDS: u64 = 100;

fn randn(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Builds a scalar from the op under test. Non-scalar outputs are reduced
/// with a squared error against fixed random targets so every output entry
/// carries a distinct weight.
fn reduce<'t>(tape: &'t Tape, out: Var<'t>, aux: &[f64]) -> Result<Var<'t>> {
    let shape = out.shape();
    let n: usize = shape.iter().product();
    let target = Tensor::new(shape, aux[..n].to_vec())?;
    out.sq_error(tape.constant(target))
}

struct Case {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    op: for<'t> fn(&'t Tape, &[Var<'t>], &[f64]) -> Result<Var<'t>>,
}

fn cases() -> Vec<Case> {
    vec![
        Case { name: "matmul", shapes: vec![vec![3, 4], vec![4, 2]], op: |t, v, a| reduce(t, v[0].matmul(v[1])?, a) },
        Case { name: "add_row", shapes: vec![vec![3, 4], vec![4]], op: |t, v, a| reduce(t, v[0].add_row(v[1])?, a) },
        Case { name: "add", shapes: vec![vec![3, 2], vec![3, 2]], op: |t, v, a| reduce(t, v[0].add(v[1])?, a) },
        Case { name: "sub", shapes: vec![vec![3, 2], vec![3, 2]], op: |t, v, a| reduce(t, v[0].sub(v[1])?, a) },
        Case { name: "scale", shapes: vec![vec![2, 3]], op: |t, v, a| reduce(t, v[0].scale(a[10] * 3.0)?, a) },
        Case {
            name: "scale_rows",
            shapes: vec![vec![3, 2]],
            op: |t, v, a| reduce(t, v[0].scale_rows(&a[20..23])?, a),
        },
        Case {
            name: "leaky_relu",
            shapes: vec![vec![3, 3]],
            op: |t, v, a| reduce(t, v[0].pointwise(Activation::LeakyRelu { slope: 0.2 })?, a),
        },
        Case {
            name: "sigmoid",
            shapes: vec![vec![3, 3]],
            op: |t, v, a| reduce(t, v[0].pointwise(Activation::Sigmoid)?, a),
        },
        Case { name: "tanh", shapes: vec![vec![3, 3]], op: |t, v, a| reduce(t, v[0].pointwise(Activation::Tanh)?, a) },
        Case {
            name: "identity",
            shapes: vec![vec![2, 2]],
            op: |t, v, a| reduce(t, v[0].pointwise(Activation::Identity)?, a),
        },
        Case { name: "sum", shapes: vec![vec![2, 3]], op: |_, v, _| v[0].scale_rows(&[1.5, -0.5])?.sum() },
        Case { name: "sum_squares", shapes: vec![vec![2, 3]], op: |_, v, _| v[0].sum_squares() },
        Case { name: "sq_error", shapes: vec![vec![2, 3], vec![2, 3]], op: |_, v, _| v[0].sq_error(v[1]) },
        Case {
            name: "bce_with_logits",
            shapes: vec![vec![4, 1]],
            op: |_, v, a| {
                let targets: Vec<f64> = a[30..34].iter().map(|x| f64::from(u8::from(*x > 0.0))).collect();
                v[0].scale(3.0)?.bce_with_logits(&targets)
            },
        },
        Case {
            name: "mlp_chain",
            shapes: vec![vec![4, 3], vec![3, 5], vec![5], vec![5, 1]],
            op: |_, v, a| {
                let h = v[0].matmul(v[1])?.add_row(v[2])?.pointwise(Activation::LeakyRelu { slope: 0.2 })?;
                let targets: Vec<f64> = a[40..44].iter().map(|x| f64::from(u8::from(*x > 0.0))).collect();
                h.matmul(v[3])?.bce_with_logits(&targets)
            },
        },
    ]
}

fn value_of(case: &Case, inputs: &[Tensor], aux: &[f64]) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    Ok((case.op)(&tape, &vars, aux)?.item())
}

#[test]
fn every_op_matches_finite_differences() {
    let empty = ParamSet::new();
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        for (k, case) in cases().iter().enumerate() {
            let mut rng = substream(seed, 0x6772_6164, k as u64);
            let inputs: Vec<Tensor> = case.shapes.iter().map(|s| randn(&mut rng, s)).collect();
            let aux: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();

            let tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let loss = (case.op)(&tape, &vars, &aux).unwrap();
            let grads = tape.backward(loss, &empty).unwrap();
            let numeric = numeric_grads(&inputs, STEP, |x| value_of(case, x, &aux)).unwrap();
            for (v, num) in vars.iter().zip(&numeric) {
                let err = relative_error(&grads.wrt(*v), num);
                worst = worst.max(err);
                assert!(err < TOL, "{} seed {seed}: relative error {err:e}", case.name);
            }
        }
    }
    println!("worst op relative error {worst:e}");
}

fn small_config() -> ModelConfig {
    ModelConfig {
        d_h: 3,
        enc_hidden: vec![6, 5, 4],
        dec_hidden: vec![4, 5],
        sc_hidden: 3,
        cls_hidden: 4,
        slope: 0.2,
    }
}

fn random_batch(rng: &mut Rng, n: usize, d_x: usize) -> Batch {
    let x = randn(rng, &[n, d_x]);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    labels[0] = 0;
    labels[1] = 1;
    Batch::new(x, labels).unwrap()
}

fn flatten<'a>(parts: impl Iterator<Item = &'a Tensor>) -> Tensor {
    let data: Vec<f64> = parts.flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(vec![data.len()], data).unwrap()
}

/// Relative error of the whole parameter gradient of one loss term, plus
/// the worst per-tensor error for reporting.
fn check_term(model: &InTeLeModel, batch: &Batch, hp: &HyperParams, term: LossTerm) -> (f64, f64) {
    let (_, grads) = loss_with_grads(model, batch, hp, term).unwrap();
    let numeric = numeric_param_grads(&model.params, STEP, |p| {
        let mut m = model.clone();
        m.params = p.clone();
        Ok(loss_with_grads(&m, batch, hp, term)?.0)
    })
    .unwrap();
    let analytic = flatten(numeric.keys().map(|n| grads.param(n).unwrap()));
    let err = relative_error(&analytic, &flatten(numeric.values()));
    assert!(err < TOL, "{term:?} ({}): relative error {err:e}", model.mode);
    let per_tensor = numeric
        .iter()
        .map(|(n, num)| relative_error(grads.param(n).unwrap(), num))
        .fold(0.0, f64::max);
    (err, per_tensor)
}

#[test]
fn composite_losses_match_finite_differences() {
    let d_x = 5;
    let (mut worst, mut worst_tensor) = (0.0f64, 0.0f64);
    for seed in 0..SEEDS {
        let mut rng = substream(seed, 0x6c6f_7373, 0);
        let batch = random_batch(&mut rng, 6, d_x);
        for mode in [Mode::Intele, Mode::NoFsc, Mode::CeBaseline] {
            let model = InTeLeModel::new(d_x, &small_config(), mode, seed).unwrap();
            let hp = HyperParams { mode, ..Default::default() };
            let terms: &[LossTerm] = match mode {
                Mode::Intele => &[LossTerm::Ae, LossTerm::Ce, LossTerm::Aux, LossTerm::Cls, LossTerm::Total],
                Mode::NoFsc => &[LossTerm::Ae, LossTerm::Total],
                Mode::CeBaseline => &[LossTerm::Total],
            };
            for &term in terms {
                let (e, t) = check_term(&model, &batch, &hp, term);
                worst = worst.max(e);
                worst_tensor = worst_tensor.max(t);
            }
        }
    }
    println!("worst composite relative error {worst:e} (worst single tensor {worst_tensor:e})");
}

#[test]
fn total_gradient_is_weighted_sum_of_components() {
    let mut rng = substream(3, 0x6c6f_7373, 1);
    let batch = random_batch(&mut rng, 2, 4);
    let model = InTeLeModel::new(4, &small_config(), Mode::Intele, 3).unwrap();
    let hp = HyperParams::default();
    let g = |term| loss_with_grads(&model, &batch, &hp, term).unwrap().1;
    let (ae, ce, aux, cls, total) = (g(LossTerm::Ae), g(LossTerm::Ce), g(LossTerm::Aux), g(LossTerm::Cls), g(LossTerm::Total));
    for name in model.params.names() {
        let parts = [ae.param(name), ce.param(name), aux.param(name), cls.param(name)];
        let combined: Vec<f64> = (0..model.params.get(name).unwrap().len())
            .map(|i| {
                let at = |k: usize| parts[k].unwrap().data()[i];
                at(0) + hp.lambda1 * (at(1) + hp.alpha * at(2)) + hp.lambda2 * at(3)
            })
            .collect();
        let combined = Tensor::new(model.params.get(name).unwrap().shape().to_vec(), combined).unwrap();
        assert!(relative_error(&combined, total.param(name).unwrap()) < 1e-12, "{name}");
    }
}

/// Five-point central differences resolve per-tensor gradients whose norm is
/// too small for the two-point rule at step 1e-6 to measure accurately.
#[test]
fn small_gradient_tensors_match_high_order_differences() {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = substream(seed, 0x6c6f_7373, 0);
        let batch = random_batch(&mut rng, 6, 5);
        let model = InTeLeModel::new(5, &small_config(), Mode::Intele, seed).unwrap();
        let hp = HyperParams::default();
        for term in [LossTerm::Ae, LossTerm::Ce, LossTerm::Aux, LossTerm::Cls, LossTerm::Total] {
            let (_, grads) = loss_with_grads(&model, &batch, &hp, term).unwrap();
            let eval = |name: &str, i: usize, delta: f64| {
                let mut m = model.clone();
                let mut t = m.params.get(name).unwrap().clone();
                t.data_mut()[i] += delta;
                m.params.set(name, t).unwrap();
                loss_with_grads(&m, &batch, &hp, term).unwrap().0
            };
            for (name, value) in model.params.iter() {
                let num: Vec<f64> = (0..value.len())
                    .map(|i| {
                        (-eval(name, i, 2.0 * h) + 8.0 * eval(name, i, h) - 8.0 * eval(name, i, -h)
                            + eval(name, i, -2.0 * h))
                            / (12.0 * h)
                    })
                    .collect();
                let num = Tensor::new(value.shape().to_vec(), num).unwrap();
                let analytic = grads.param(name).unwrap();
                let scale = analytic.data().iter().chain(num.data()).fold(0.0f64, |m, v| m.max(v.abs()));
                if scale < 1e-8 {
                    continue;
                }
                let err = relative_error(analytic, &num);
                worst = worst.max(err);
                assert!(err < TOL, "{term:?} {name} seed {seed}: relative error {err:e}");
            }
        }
    }
    println!("worst per-tensor relative error (five-point) {worst:e}");
}
