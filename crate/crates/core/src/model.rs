//! Minimal dense feed-forward model runtime.
//!
//! Models are immutable after construction and every operation here is a pure
//! read, so values can be shared freely across threads. Evaluation is plain
//! `f64` throughout; model files store doubles and round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative at pre-activation `z`. The relu subgradient at exactly 0
    /// is taken as 0.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Shape and task of a model: input dimension, output dimension and, for
/// regression, the output domain used to clip regression centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSignature {
    pub input_dim: usize,
    pub output_dim: usize,
    pub task: TaskKind,
    /// `(min, max)` of the regression output domain; `None` means unbounded.
    pub output_domain: Option<(f64, f64)>,
}

impl ModelSignature {
    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidModel {
                layer: None,
                message: "input dimension must be at least 1".into(),
            });
        }
        match self.task {
            TaskKind::Classification => {
                if self.output_dim < 2 {
                    return Err(Error::InvalidModel {
                        layer: None,
                        message: format!(
                            "classification needs at least 2 classes, got {}",
                            self.output_dim
                        ),
                    });
                }
            }
            TaskKind::Regression => {
                if self.output_dim == 0 {
                    return Err(Error::InvalidModel {
                        layer: None,
                        message: "regression output dimension must be at least 1".into(),
                    });
                }
            }
        }
        if let Some((min, max)) = self.output_domain {
            if !min.is_finite() || !max.is_finite() || min >= max {
                return Err(Error::InvalidBounds { min, max });
            }
        }
        Ok(())
    }
}

/// One dense layer: `y = activation(W x + b)` with `W` stored row-major,
/// one row per output neuron.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, |row| row.len())
    }

    fn validate(&self, index: usize) -> Result<()> {
        let invalid = |message: String| Error::InvalidModel {
            layer: Some(index),
            message,
        };
        if self.weights.is_empty() {
            return Err(invalid("layer has no output rows".into()));
        }
        let in_dim = self.in_dim();
        if in_dim == 0 {
            return Err(invalid("layer has zero input width".into()));
        }
        for row in &self.weights {
            if row.len() != in_dim {
                return Err(invalid(format!(
                    "ragged weight matrix: row width {} != {}",
                    row.len(),
                    in_dim
                )));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(invalid("non-finite weight".into()));
            }
        }
        if self.bias.len() != self.out_dim() {
            return Err(invalid(format!(
                "bias length {} does not match {} output rows",
                self.bias.len(),
                self.out_dim()
            )));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(invalid("non-finite bias".into()));
        }
        Ok(())
    }
}

/// A differentiable scalar reduction of a model's outputs.
///
/// For classification models the outputs seen by the head are post-softmax
/// probabilities. Implementors return the scalar value together with its
/// gradient with respect to the output vector.
pub trait OutputHead {
    fn value_and_output_grad(&self, outputs: &[f64]) -> (f64, Vec<f64>);
}

/// Head selecting a single output component (a class probability for
/// classification, a fitted coordinate for regression).
pub struct OutputComponent(pub usize);

impl OutputHead for OutputComponent {
    fn value_and_output_grad(&self, outputs: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; outputs.len()];
        grad[self.0] = 1.0;
        (outputs[self.0], grad)
    }
}

/// Dense feed-forward model. Classification models apply softmax after the
/// final layer implicitly; regression models expose the final activations
/// directly.
#[derive(Debug, Clone)]
pub struct Model {
    pub signature: ModelSignature,
    pub layers: Vec<LayerSpec>,
}

struct ForwardTrace {
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activations per layer; the last entry feeds the output stage.
    post: Vec<Vec<f64>>,
    /// Final outputs (softmax probabilities or raw fit vector).
    outputs: Vec<f64>,
}

impl Model {
    /// Builds a model, checking the layer dimension chain and finiteness.
    pub fn new(signature: ModelSignature, layers: Vec<LayerSpec>) -> Result<Self> {
        signature.validate()?;
        if layers.is_empty() {
            return Err(Error::InvalidModel {
                layer: None,
                message: "model has no layers".into(),
            });
        }
        let mut expected_in = signature.input_dim;
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            if layer.in_dim() != expected_in {
                return Err(Error::InvalidModel {
                    layer: Some(i),
                    message: format!(
                        "dimension chain broken: layer expects {} inputs but receives {}",
                        layer.in_dim(),
                        expected_in
                    ),
                });
            }
            expected_in = layer.out_dim();
        }
        if expected_in != signature.output_dim {
            return Err(Error::InvalidModel {
                layer: Some(layers.len() - 1),
                message: format!(
                    "final layer produces {} values but the signature declares {}",
                    expected_in, signature.output_dim
                ),
            });
        }
        Ok(Model { signature, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.signature.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.signature.output_dim
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.signature.input_dim {
            return Err(Error::DimensionMismatch {
                what: "model input",
                expected: self.signature.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.out_dim());
            for (row, b) in layer.weights.iter().zip(&layer.bias) {
                z.push(row.iter().zip(&current).map(|(w, xi)| w * xi).sum::<f64>() + b);
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntermediate { layer: i });
            }
            current = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(current.clone());
        }
        let outputs = match self.signature.task {
            TaskKind::Classification => softmax(&current),
            TaskKind::Regression => current,
        };
        Ok(ForwardTrace { pre, post, outputs })
    }

    /// Evaluates the model: a probability vector for classification, the raw
    /// fit vector for regression.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.outputs)
    }

    /// Index of the most probable class; ties break to the lowest index.
    pub fn predict_label(&self, x: &[f64]) -> Result<usize> {
        if self.signature.task != TaskKind::Classification {
            return Err(Error::TaskMismatch {
                expected: "classification",
            });
        }
        let probs = self.forward(x)?;
        Ok(argmax(&probs))
    }

    /// Reverse-mode gradient of `head(outputs(x))` with respect to `x`.
    pub fn input_gradient(&self, x: &[f64], head: &dyn OutputHead) -> Result<Vec<f64>> {
        let trace = self.forward_trace(x)?;
        let (_, output_grad) = head.value_and_output_grad(&trace.outputs);

        // Gradient with respect to the final layer's post-activations.
        let mut grad = match self.signature.task {
            TaskKind::Classification => softmax_backward(&trace.outputs, &output_grad),
            TaskKind::Regression => output_grad,
        };

        for (i, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[i];
            let dz: Vec<f64> = grad
                .iter()
                .zip(z)
                .map(|(g, &zi)| g * layer.activation.derivative(zi))
                .collect();
            let in_dim = layer.in_dim();
            let mut upstream = vec![0.0; in_dim];
            for (row, &d) in layer.weights.iter().zip(&dz) {
                for (u, w) in upstream.iter_mut().zip(row) {
                    *u += w * d;
                }
            }
            if upstream.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteIntermediate { layer: i });
            }
            grad = upstream;
        }
        let _ = trace.post;
        Ok(grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file: ModelFile = self.into();
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.try_into()
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Pulls a gradient with respect to softmax outputs back to the logits:
/// `dz_j = p_j (dp_j − Σ_i dp_i p_i)`.
fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(dprobs).map(|(p, d)| p * d).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, d)| p * (d - dot))
        .collect()
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

// --- on-disk format ------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LayerFile {
    activation: Activation,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    task: TaskKind,
    input_dim: usize,
    output_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_max: Option<f64>,
    layers: Vec<LayerFile>,
}

impl From<&Model> for ModelFile {
    fn from(model: &Model) -> Self {
        ModelFile {
            task: model.signature.task,
            input_dim: model.signature.input_dim,
            output_dim: model.signature.output_dim,
            output_min: model.signature.output_domain.map(|(min, _)| min),
            output_max: model.signature.output_domain.map(|(_, max)| max),
            layers: model
                .layers
                .iter()
                .map(|l| LayerFile {
                    activation: l.activation,
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for Model {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let output_domain = match (file.output_min, file.output_max) {
            (Some(min), Some(max)) => Some((min, max)),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidModel {
                    layer: None,
                    message: "output_min and output_max must be given together".into(),
                })
            }
        };
        let signature = ModelSignature {
            input_dim: file.input_dim,
            output_dim: file.output_dim,
            task: file.task,
            output_domain,
        };
        let layers = file
            .layers
            .into_iter()
            .map(|l| LayerSpec {
                weights: l.weights,
                bias: l.bias,
                activation: l.activation,
            })
            .collect();
        Model::new(signature, layers)
    }
}
