//! Central finite-difference verification of the analytic backward pass.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, euclidean};
use super::network::{Gradients, Network};
use super::tensor::Tensor;
use super::spec::{Head, InputShape, LayerSpec, NetworkSpec};
use super::NnetError;

/// Scalar objective differentiated during the check.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    CrossEntropy(Vec<usize>),
    Euclidean(Vec<f64>),
    /// `Σ r ⊙ output` with `r ~ U(-1, 1)` drawn from the seed; exercises
    /// every output coordinate.
    Projection(u64),
}

impl Objective {
    fn eval(&self, out: &Tensor<f64>) -> (f64, Tensor<f64>) {
        match self {
            Objective::CrossEntropy(y) => cross_entropy(out, y, None),
            Objective::Euclidean(t) => euclidean(out, t),
            Objective::Projection(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let r: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let loss = out.data().iter().zip(&r).map(|(o, r)| o * r).sum();
                (loss, Tensor::from_vec(out.shape(), r).expect("same shape"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Parameter coordinates to compare (all of them when fewer exist).
    pub num_params: usize,
    /// Input coordinates to compare.
    pub num_inputs: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            num_params: 200,
            num_inputs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_param_error: f64,
    pub max_input_error: f64,
    pub checked_params: usize,
    pub checked_inputs: usize,
    /// Coordinates skipped because the ±ε perturbation changed a ReLU or
    /// max-pool branch (the objective is not differentiable there).
    pub skipped_kinks: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn grad_check(
    net: &Network<f64>,
    x: &Tensor<f64>,
    objective: &Objective,
    config: &GradCheckConfig,
) -> Result<GradCheckReport, NnetError> {
    grad_check_with(net, x, objective, config, |_| {})
}

/// As [`grad_check`], with `tamper` applied to the analytic gradients before
/// comparison (mutation testing of the checker itself).
pub fn grad_check_with(
    net: &Network<f64>,
    x: &Tensor<f64>,
    objective: &Objective,
    config: &GradCheckConfig,
    tamper: impl FnOnce(&mut Gradients<f64>),
) -> Result<GradCheckReport, NnetError> {
    let (out, trace) = net.forward_train(x)?;
    let base_pattern = trace.activation_pattern();
    let (_, grad_out) = objective.eval(&out);
    let mut grads = net.backward(&trace, &grad_out);
    tamper(&mut grads);

    let eps = config.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_param_error: 0.0,
        max_input_error: 0.0,
        checked_params: 0,
        checked_inputs: 0,
        skipped_kinks: 0,
    };

    // returns None when the perturbation crossed a kink
    let probe = |net: &Network<f64>, x: &Tensor<f64>| -> Result<Option<f64>, NnetError> {
        let (o, t) = net.forward_train(x)?;
        if t.activation_pattern() != base_pattern {
            return Ok(None);
        }
        Ok(Some(objective.eval(&o).0))
    };

    let mut coords: Vec<(usize, usize)> = net
        .params()
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |i| (t, i)))
        .collect();
    coords.shuffle(&mut rng);
    for (t, i) in coords {
        if report.checked_params >= config.num_params {
            break;
        }
        let orig = work.params()[t].data()[i];
        work.params_mut()[t].data_mut()[i] = orig + eps;
        let plus = probe(&work, x)?;
        work.params_mut()[t].data_mut()[i] = orig - eps;
        let minus = probe(&work, x)?;
        work.params_mut()[t].data_mut()[i] = orig;
        let (Some(plus), Some(minus)) = (plus, minus) else {
            report.skipped_kinks += 1;
            continue;
        };
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(grads.params[t].data()[i], numeric);
        report.max_param_error = report.max_param_error.max(err);
        report.checked_params += 1;
    }

    let mut inputs: Vec<usize> = (0..x.len()).collect();
    inputs.shuffle(&mut rng);
    let mut xp = x.clone();
    for i in inputs {
        if report.checked_inputs >= config.num_inputs {
            break;
        }
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + eps;
        let plus = probe(net, &xp)?;
        xp.data_mut()[i] = orig - eps;
        let minus = probe(net, &xp)?;
        xp.data_mut()[i] = orig;
        let (Some(plus), Some(minus)) = (plus, minus) else {
            report.skipped_kinks += 1;
            continue;
        };
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(grads.input.data()[i], numeric);
        report.max_input_error = report.max_input_error.max(err);
        report.checked_inputs += 1;
    }

    report.max_rel_error = report.max_param_error.max(report.max_input_error);
    Ok(report)
}

/// One entry of the standard gradient-check suite.
#[derive(Debug, Clone)]
pub struct CheckCase {
    pub name: &'static str,
    pub spec: NetworkSpec,
    pub batch: usize,
    pub cross_entropy: bool,
}

fn case(name: &'static str, input: (usize, usize), layers: Vec<LayerSpec>, batch: usize) -> CheckCase {
    let mut spec = NetworkSpec {
        name: name.into(),
        input: InputShape {
            channels: 3,
            height: input.0,
            width: input.1,
        },
        layers,
        num_classes: 1,
        head: Head::SoftmaxClassifier,
    };
    // the projection objective accepts whatever the last layer emits
    let mut shape = vec![3, input.0, input.1];
    for (l, n) in spec.layers.iter().zip(spec.layer_names()) {
        shape = l.output_shape(&shape, &n).expect("suite shapes chain");
    }
    spec.num_classes = shape.iter().product();
    CheckCase {
        name,
        spec,
        batch,
        cross_entropy: false,
    }
}

/// Every layer type on its own, a fully-connected stack, BatchNorm over
/// features, and TinyNet end-to-end (at `tinynet_size` input).
pub fn standard_cases(tinynet_size: usize) -> Vec<CheckCase> {
    use LayerSpec as L;
    let mut tiny = CheckCase {
        name: "tinynet",
        spec: NetworkSpec::tinynet(4, tinynet_size, Head::SoftmaxClassifier),
        batch: 2,
        cross_entropy: true,
    };
    tiny.spec.name = "tinynet".into();
    vec![
        case("conv", (5, 5), vec![L::conv(2, 3, 2, 1), L::Flatten], 2),
        case("batch_norm", (4, 4), vec![L::batch_norm(3), L::Flatten], 4),
        case("relu", (3, 3), vec![L::ReLU, L::Flatten], 2),
        case("max_pool", (4, 4), vec![L::MaxPool { kernel: 2, stride: 2 }, L::Flatten], 2),
        case("flatten", (2, 2), vec![L::Flatten], 2),
        case(
            "fully_connected",
            (2, 2),
            vec![L::Flatten, L::fc(5)],
            2,
        ),
        case(
            "fc_stack_bn",
            (2, 2),
            vec![
                L::Flatten,
                L::fc(6).without_bias(),
                L::batch_norm(6),
                L::ReLU,
                L::fc(3),
            ],
            8,
        ),
        tiny,
    ]
}

/// Network for `case` with randomised parameters (including BatchNorm scale
/// and shift) and a random input batch.
pub fn randomized_instance(case: &CheckCase, seed: u64) -> (Network<f64>, Tensor<f64>, Objective) {
    let mut net = Network::<f64>::new(case.spec.clone(), seed).expect("suite spec valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5_a5a5);
    for p in net.params_mut() {
        // weight jitter shrinks with fan-in so wide layers stay unsaturated
        let scale = match p.shape() {
            [out, ..] if p.shape().len() > 1 => (p.len() as f64 / *out as f64).sqrt().recip(),
            _ => 1.0,
        };
        for v in p.data_mut() {
            *v += scale * rng.gen_range(-0.3..0.3);
        }
    }
    let i = case.spec.input;
    let shape = [case.batch, i.channels, i.height, i.width];
    let n: usize = shape.iter().product();
    let x = Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("input shape");
    let objective = if case.cross_entropy {
        Objective::CrossEntropy(
            (0..case.batch)
                .map(|_| rng.gen_range(0..case.spec.num_classes))
                .collect(),
        )
    } else {
        Objective::Projection(seed)
    };
    (net, x, objective)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub trials: usize,
    pub max_rel_error: f64,
    pub skipped_kinks: usize,
}

/// Runs every standard case for `trials` random instances.
pub fn run_suite(trials: usize, seed: u64, tinynet_size: usize) -> Result<Vec<SuiteResult>, NnetError> {
    let config = GradCheckConfig::default();
    standard_cases(tinynet_size)
        .iter()
        .map(|case| {
            let mut worst = 0.0f64;
            let mut skipped = 0;
            for t in 0..trials {
                let s = seed.wrapping_mul(1_000_003).wrapping_add(t as u64);
                let (net, x, objective) = randomized_instance(case, s);
                let r = grad_check(&net, &x, &objective, &GradCheckConfig { seed: s, ..config })?;
                worst = worst.max(r.max_rel_error);
                skipped += r.skipped_kinks;
            }
            Ok(SuiteResult {
                name: case.name.to_string(),
                trials,
                max_rel_error: worst,
                skipped_kinks: skipped,
            })
        })
        .collect()
}
