//! Full-batch gradient-descent trainer for desk-scale dense subjects.
//!
//! Deterministic under a fixed seed: Xavier-style initialization from a
//! seeded stream and full-batch updates, so there is no shuffle order to
//! pin down. Cross-entropy loss for classification (through the implicit
//! softmax), mean squared error for regression.

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use certpri_core::dataset::{Dataset, Labels};
use certpri_core::model::{Activation, LayerSpec, Model, ModelSignature, TaskKind};

#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            hidden: vec![16],
            activation: Activation::Tanh,
            epochs: 300,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub final_loss: f64,
    /// Training accuracy for classification, mean squared error for
    /// regression.
    pub train_metric: f64,
}

fn xavier_layers(dims: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        layers.push(LayerSpec {
            weights: (0..fan_out)
                .map(|_| {
                    (0..fan_in)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect()
                })
                .collect(),
            bias: vec![0.0; fan_out],
            activation,
        });
    }
    let last = layers.len() - 1;
    layers[last].activation = Activation::Identity;
    layers
}

struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn forward_trace(layers: &[LayerSpec], x: &[f64]) -> Trace {
    let mut pre = Vec::with_capacity(layers.len());
    let mut post = Vec::with_capacity(layers.len());
    let mut current = x.to_vec();
    for layer in layers {
        let z: Vec<f64> = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, b)| row.iter().zip(&current).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect();
        current = z.iter().map(|&v| layer.activation.apply(v)).collect();
        pre.push(z);
        post.push(current.clone());
    }
    Trace { pre, post }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Trains a dense model on a labeled dataset. Classification needs class
/// labels; regression needs target columns. `classes` overrides the class
/// count inferred from the labels; `output_domain` is stored on regression
/// models for center clipping.
pub fn train_toy(
    data: &Dataset,
    task: TaskKind,
    classes: Option<usize>,
    output_domain: Option<(f64, f64)>,
    spec: &TrainSpec,
) -> anyhow::Result<TrainOutcome> {
    if spec.learning_rate.is_nan() || spec.learning_rate <= 0.0 || !spec.learning_rate.is_finite() {
        bail!("learning rate must be positive, got {}", spec.learning_rate);
    }
    let input_dim = data.input_dim();
    let (output_dim, class_labels, targets) = match (task, data.labels()) {
        (TaskKind::Classification, Labels::Classes(labels)) => {
            let inferred = labels.iter().max().map_or(0, |m| m + 1).max(2);
            let k = classes.unwrap_or(inferred);
            if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
                bail!("label {bad} outside the declared {k} classes");
            }
            (k, Some(labels.as_ref() as &[usize]), None)
        }
        (TaskKind::Regression, Labels::Targets(targets)) => (targets[0].len(), None, Some(targets)),
        _ => bail!("dataset labels do not match the requested task"),
    };

    let mut dims = vec![input_dim];
    dims.extend(&spec.hidden);
    dims.push(output_dim);
    if dims.contains(&0) {
        bail!("layer widths must be positive");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut layers = xavier_layers(&dims, spec.activation, &mut rng);
    let n = data.len() as f64;
    let mut final_loss = f64::NAN;

    for epoch in 0..spec.epochs {
        // Accumulate full-batch gradients.
        let mut grad_w: Vec<Vec<Vec<f64>>> = layers
            .iter()
            .map(|l| vec![vec![0.0; l.in_dim()]; l.out_dim()])
            .collect();
        let mut grad_b: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.out_dim()]).collect();
        let mut loss = 0.0;

        for (row_index, x) in data.inputs().iter().enumerate() {
            let trace = forward_trace(&layers, x);
            let outputs = trace.post.last().unwrap();

            // Gradient of the per-sample loss with respect to the final
            // pre-activation stage (logits or raw outputs).
            let mut grad: Vec<f64> = match task {
                TaskKind::Classification => {
                    let label = class_labels.unwrap()[row_index];
                    let probs = softmax(outputs);
                    loss += -probs[label].max(1e-300).ln() / n;
                    probs
                        .iter()
                        .enumerate()
                        .map(|(j, p)| (p - if j == label { 1.0 } else { 0.0 }) / n)
                        .collect()
                }
                TaskKind::Regression => {
                    let target = &targets.unwrap()[row_index];
                    let d2 = output_dim as f64;
                    loss += outputs
                        .iter()
                        .zip(target)
                        .map(|(y, t)| (y - t) * (y - t))
                        .sum::<f64>()
                        / (d2 * n);
                    outputs
                        .iter()
                        .zip(target)
                        .map(|(y, t)| 2.0 * (y - t) / (d2 * n))
                        .collect()
                }
            };

            for (l, layer) in layers.iter().enumerate().rev() {
                let dz: Vec<f64> = grad
                    .iter()
                    .zip(&trace.pre[l])
                    .map(|(g, &z)| g * layer.activation.derivative(z))
                    .collect();
                let below: &[f64] = if l == 0 { x } else { &trace.post[l - 1] };
                for (row, &d) in grad_w[l].iter_mut().zip(&dz) {
                    for (g, &a) in row.iter_mut().zip(below) {
                        *g += d * a;
                    }
                }
                for (g, &d) in grad_b[l].iter_mut().zip(&dz) {
                    *g += d;
                }
                if l > 0 {
                    let mut upstream = vec![0.0; layer.in_dim()];
                    for (row, &d) in layer.weights.iter().zip(&dz) {
                        for (u, w) in upstream.iter_mut().zip(row) {
                            *u += w * d;
                        }
                    }
                    grad = upstream;
                }
            }
        }

        if !loss.is_finite() {
            bail!("training diverged at epoch {epoch} (loss is not finite)");
        }
        final_loss = loss;

        for (l, layer) in layers.iter_mut().enumerate() {
            for (row, grads) in layer.weights.iter_mut().zip(&grad_w[l]) {
                for (w, g) in row.iter_mut().zip(grads) {
                    *w -= spec.learning_rate * g;
                }
            }
            for (b, g) in layer.bias.iter_mut().zip(&grad_b[l]) {
                *b -= spec.learning_rate * g;
            }
        }
    }

    let model = Model::new(
        ModelSignature {
            input_dim,
            output_dim,
            task,
            output_domain,
        },
        layers,
    )
    .context("assembling the trained model")?;
    let train_metric = evaluate_metric(&model, data)?;
    if spec.epochs == 0 {
        final_loss = f64::NAN;
    }
    Ok(TrainOutcome {
        model,
        final_loss,
        train_metric,
    })
}

/// Accuracy for classification, mean squared error for regression.
pub fn evaluate_metric(model: &Model, data: &Dataset) -> anyhow::Result<f64> {
    match (model.signature.task, data.labels()) {
        (TaskKind::Classification, Labels::Classes(labels)) => {
            let mut correct = 0usize;
            for (x, &label) in data.inputs().iter().zip(labels) {
                if model.predict_label(x)? == label {
                    correct += 1;
                }
            }
            Ok(correct as f64 / data.len() as f64)
        }
        (TaskKind::Regression, Labels::Targets(targets)) => {
            let mut total = 0.0;
            for (x, target) in data.inputs().iter().zip(targets) {
                let y = model.forward(x)?;
                total += y
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / target.len() as f64;
            }
            Ok(total / data.len() as f64)
        }
        _ => bail!("dataset labels do not match the model task"),
    }
}

/// Per-input squared error against the targets, for regression RAUC.
pub fn per_input_mse(model: &Model, data: &Dataset) -> anyhow::Result<Vec<f64>> {
    let Some(targets) = data.targets() else {
        bail!("dataset has no regression targets");
    };
    let mut out = Vec::with_capacity(data.len());
    for (x, target) in data.inputs().iter().zip(targets) {
        let y = model.forward(x)?;
        out.push(
            y.iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / target.len() as f64,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    #[test]
    fn separable_blobs_train_to_high_accuracy() {
        let data = generate(&SynthSpec {
            seed: 5,
            noise: 0.0,
            train_count: 300,
            test_count: 150,
            ..SynthSpec::default()
        })
        .unwrap();
        let outcome = train_toy(
            &data.train,
            TaskKind::Classification,
            Some(3),
            None,
            &TrainSpec {
                epochs: 200,
                ..TrainSpec::default()
            },
        )
        .unwrap();
        assert!(
            outcome.train_metric >= 0.95,
            "train accuracy {}",
            outcome.train_metric
        );
        let test_accuracy = evaluate_metric(&outcome.model, &data.test).unwrap();
        assert!(test_accuracy >= 0.95, "test accuracy {test_accuracy}");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = generate(&SynthSpec {
            seed: 1,
            train_count: 30,
            test_count: 10,
            ..SynthSpec::default()
        })
        .unwrap();
        let spec = TrainSpec {
            epochs: 0,
            seed: 9,
            ..TrainSpec::default()
        };
        let outcome =
            train_toy(&data.train, TaskKind::Classification, Some(3), None, &spec).unwrap();
        // Fresh initialization from the same seed must match exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dims = [2, 16, 3];
        let init = xavier_layers(&dims, Activation::Tanh, &mut rng);
        for (trained, fresh) in outcome.model.layers.iter().zip(&init) {
            assert_eq!(trained.weights, fresh.weights);
            assert_eq!(trained.bias, fresh.bias);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = generate(&SynthSpec {
            seed: 2,
            train_count: 60,
            test_count: 20,
            ..SynthSpec::default()
        })
        .unwrap();
        let spec = TrainSpec {
            epochs: 50,
            seed: 4,
            ..TrainSpec::default()
        };
        let a = train_toy(&data.train, TaskKind::Classification, Some(3), None, &spec).unwrap();
        let b = train_toy(&data.train, TaskKind::Classification, Some(3), None, &spec).unwrap();
        for (la, lb) in a.model.layers.iter().zip(&b.model.layers) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.bias, lb.bias);
        }
    }

    #[test]
    fn regression_training_reduces_error() {
        let data = generate(&SynthSpec {
            generator: crate::synth::Generator::LinearRegressionNoise,
            input_dim: 4,
            targets: 1,
            noise_sigma: 0.05,
            train_count: 200,
            test_count: 50,
            seed: 6,
            ..SynthSpec::default()
        })
        .unwrap();
        let spec = TrainSpec {
            epochs: 400,
            learning_rate: 0.2,
            hidden: vec![8],
            ..TrainSpec::default()
        };
        let outcome = train_toy(
            &data.train,
            TaskKind::Regression,
            None,
            Some((-20.0, 20.0)),
            &spec,
        )
        .unwrap();
        assert!(
            outcome.train_metric < 0.1,
            "train mse {}",
            outcome.train_metric
        );
        assert_eq!(outcome.model.signature.output_domain, Some((-20.0, 20.0)));
    }

    #[test]
    fn divergent_learning_rate_aborts() {
        // Unbounded regression outputs blow up multiplicatively under an
        // absurd learning rate; the trainer must notice and abort.
        let data = generate(&SynthSpec {
            generator: crate::synth::Generator::LinearRegressionNoise,
            input_dim: 3,
            targets: 1,
            train_count: 60,
            test_count: 20,
            seed: 8,
            ..SynthSpec::default()
        })
        .unwrap();
        let spec = TrainSpec {
            epochs: 500,
            learning_rate: 1e6,
            activation: Activation::Identity,
            ..TrainSpec::default()
        };
        let result = train_toy(&data.train, TaskKind::Regression, None, None, &spec);
        let message = format!("{}", result.expect_err("expected divergence"));
        assert!(message.contains("diverged"), "message: {message}");
    }
}
