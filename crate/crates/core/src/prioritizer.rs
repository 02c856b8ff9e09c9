//! End-to-end movement-cost pipeline: per-input gradient-norm sampling,
//! reverse-Weibull fit, certified bound, and ascending-order ranking.
//!
//! For every test input the pipeline freezes the predicted class at the
//! input itself, samples gradient norms of the gap function over an L_p
//! hyper-ball, takes per-batch maxima, estimates the local Lipschitz
//! constant from the fitted extreme-value endpoint, and certifies
//! `lower_bound = gap / lipschitz`. Inputs are ranked by that bound,
//! ascending, ties broken by original index. Labels never enter: the
//! interface only accepts the input matrix.
//!
//! Per-input randomness derives as `base_seed XOR index`, so a parallel
//! schedule and the serial one produce identical results; the reference
//! implementation runs serially.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::centers::{center_gap_with_class, CenterGapHead, CenterValue};
use crate::error::{Error, Result};
use crate::gevt::{
    fit_reverse_weibull, lipschitz_estimate, BlockMaxima, EndpointVariant, FitFallback, WeibullFit,
};
use crate::model::{Model, OutputHead, TaskKind};
use crate::norm::PNorm;
use crate::sampler::{sample_batch, BallSpec, RngState};

/// Sampling radius: absolute, or a fraction of the largest absolute
/// feature value (`0.04x` syntax on the command line).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Absolute(f64),
    FractionOfMax(f64),
}

impl Radius {
    pub fn resolve(self, feature_bound: f64) -> Result<f64> {
        let radius = match self {
            Radius::Absolute(r) => r,
            Radius::FractionOfMax(f) => f * feature_bound,
        };
        if radius <= 0.0 || !radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "resolved sampling radius must be positive and finite, got {radius} \
                 (pass an absolute radius when the data has zero feature bound)"
            )));
        }
        Ok(radius)
    }
}

impl std::fmt::Display for Radius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Radius::Absolute(r) => write!(f, "{r}"),
            Radius::FractionOfMax(x) => write!(f, "{x}x"),
        }
    }
}

impl std::str::FromStr for Radius {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (text, fractional) = match s.strip_suffix(['x', 'X']) {
            Some(rest) => (rest, true),
            None => (s, false),
        };
        let value: f64 = text
            .parse()
            .map_err(|_| format!("cannot parse radius {s:?}"))?;
        if value <= 0.0 || !value.is_finite() {
            return Err(format!("radius must be positive and finite, got {s:?}"));
        }
        Ok(if fractional {
            Radius::FractionOfMax(value)
        } else {
            Radius::Absolute(value)
        })
    }
}

impl Serialize for Radius {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Radius::Absolute(r) => serializer.serialize_f64(*r),
            Radius::FractionOfMax(_) => serializer.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Radius {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(r) => Ok(Radius::Absolute(r)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    WhiteBox,
    BlackBox,
}

/// Pipeline configuration. Defaults use the smallest effective budget:
/// 6 batches of 10 samples in an L2 ball of radius 0.04 times the feature
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertPriConfig {
    /// Perturbation norm order `p`; gradients are measured in the dual `q`.
    #[serde(rename = "p")]
    pub norm: PNorm,
    pub radius: Radius,
    /// Number of batches `N_b` (one block maximum each).
    pub batches: usize,
    /// Random samples per batch `N_rsb`.
    pub samples_per_batch: usize,
    pub mode: Mode,
    /// Relative finite-difference step for black-box gradients; the
    /// effective step per coordinate is `fd_step * max(1, |x_i|)`.
    pub fd_step: f64,
    pub seed: u64,
    pub endpoint_variant: EndpointVariant,
}

impl Default for CertPriConfig {
    fn default() -> Self {
        CertPriConfig {
            norm: PNorm::L2,
            radius: Radius::FractionOfMax(0.04),
            batches: 6,
            samples_per_batch: 10,
            mode: Mode::WhiteBox,
            fd_step: 1e-4,
            seed: 0,
            endpoint_variant: EndpointVariant::LocationScale,
        }
    }
}

impl CertPriConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 batches, got {}",
                self.batches
            )));
        }
        if self.samples_per_batch < 5 {
            return Err(Error::InvalidConfig(format!(
                "need at least 5 samples per batch, got {}",
                self.samples_per_batch
            )));
        }
        match self.radius {
            Radius::Absolute(r) | Radius::FractionOfMax(r) => {
                if r <= 0.0 || !r.is_finite() {
                    return Err(Error::InvalidConfig(format!("invalid radius {r}")));
                }
            }
        }
        if self.fd_step <= 0.0 || !self.fd_step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "finite-difference step must be positive, got {}",
                self.fd_step
            )));
        }
        Ok(())
    }

    /// The dual norm order `q` in which gradient magnitudes are measured.
    pub fn dual_norm(&self) -> PNorm {
        self.norm.dual()
    }
}

/// A scalar function of the input together with a gradient oracle. The
/// white-box pipeline differentiates the model exactly; the black-box one
/// estimates the same gradient from forward evaluations only.
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Gap field with exact reverse-mode gradients.
pub struct WhiteBoxGap<'a> {
    model: &'a Model,
    head: CenterGapHead,
}

impl<'a> WhiteBoxGap<'a> {
    pub fn new(model: &'a Model, frozen_class: Option<usize>) -> Self {
        WhiteBoxGap {
            model,
            head: CenterGapHead::for_model(model, frozen_class),
        }
    }
}

impl ScalarField for WhiteBoxGap<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let outputs = self.model.forward(x)?;
        Ok(self.head.value_and_output_grad(&outputs).0)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.input_gradient(x, &self.head)
    }
}

/// Gap field whose gradients come from coordinate-wise symmetric
/// differences of forward evaluations.
pub struct BlackBoxGap<'a> {
    inner: WhiteBoxGap<'a>,
    fd_step: f64,
}

impl<'a> BlackBoxGap<'a> {
    pub fn new(model: &'a Model, frozen_class: Option<usize>, fd_step: f64) -> Self {
        BlackBoxGap {
            inner: WhiteBoxGap::new(model, frozen_class),
            fd_step,
        }
    }
}

impl ScalarField for BlackBoxGap<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.inner.value(x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        estimate_gradient_blackbox(|p| self.inner.value(p), x, self.fd_step)
    }
}

/// Coordinate-wise symmetric-difference gradient estimate
/// `(h(x + δ e_i) − h(x − δ e_i)) / (2δ)` with `δ = fd_step max(1, |x_i|)`.
pub fn estimate_gradient_blackbox<F>(h: F, x: &[f64], fd_step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if fd_step <= 0.0 || !fd_step.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let delta = fd_step * x[i].abs().max(1.0);
        probe[i] = x[i] + delta;
        let up = h(&probe)?;
        probe[i] = x[i] - delta;
        let down = h(&probe)?;
        probe[i] = x[i];
        let slope = (up - down) / (2.0 * delta);
        if !slope.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        grad.push(slope);
    }
    Ok(grad)
}

/// Runs the sampling loop for one input: `batches` block maxima, each the
/// maximum of `samples_per_batch` dual-norm gradient magnitudes over
/// independent ball samples.
pub fn gradient_norm_samples(
    field: &dyn ScalarField,
    center: &[f64],
    radius: f64,
    config: &CertPriConfig,
    rng: &mut RngState,
) -> Result<BlockMaxima> {
    let spec = BallSpec {
        center,
        radius,
        norm: config.norm,
    };
    let q = config.dual_norm();
    let mut maxima = Vec::with_capacity(config.batches);
    for _ in 0..config.batches {
        let points = sample_batch(&spec, config.samples_per_batch, rng)?;
        let mut best = 0.0f64;
        for point in &points {
            let grad = field.gradient(point)?;
            best = best.max(q.norm(&grad));
        }
        maxima.push(best);
    }
    BlockMaxima::new(maxima)
}

/// Movement cost of one input: the certified bound together with its
/// ingredients and the fit diagnostics.
#[derive(Debug, Clone)]
pub struct MovementCost {
    /// Certified lower bound `gap / lipschitz` on the perturbation norm
    /// needed to reach the target position.
    pub lower_bound: f64,
    /// Gap `h` at the input.
    pub gap: f64,
    /// Local Lipschitz estimate (fitted endpoint or fallback maximum).
    pub lipschitz: f64,
    pub fit: std::result::Result<WeibullFit, FitFallback>,
}

impl MovementCost {
    /// Human-readable diagnostics for the per-input report.
    pub fn warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if let Err(fallback) = &self.fit {
            warnings.push(format!(
                "{fallback}; used the observed maximum gradient norm"
            ));
        }
        if self.lipschitz == 0.0 {
            warnings.push("zero gradient norms throughout the ball".into());
        }
        warnings
    }
}

/// Movement cost over an explicit scalar field with a pre-resolved radius.
/// The field is expected to be a nonnegative gap function; the bound is its
/// value at `x0` divided by the Lipschitz estimate.
pub fn movement_cost_for_field(
    field: &dyn ScalarField,
    x0: &[f64],
    radius: f64,
    config: &CertPriConfig,
    rng: &mut RngState,
) -> Result<MovementCost> {
    let gap = field.value(x0)?;
    let maxima = gradient_norm_samples(field, x0, radius, config, rng)?;
    let fit = fit_reverse_weibull(maxima.values());
    let lipschitz = lipschitz_estimate(&fit, &maxima, config.endpoint_variant);
    let lower_bound = if lipschitz > 0.0 {
        gap / lipschitz
    } else if gap == 0.0 {
        0.0
    } else {
        // Zero observed slope with a positive gap: no sampled evidence the
        // target is reachable at all.
        f64::INFINITY
    };
    Ok(MovementCost {
        lower_bound,
        gap,
        lipschitz,
        fit,
    })
}

fn field_for<'a>(
    model: &'a Model,
    x0: &[f64],
    config: &CertPriConfig,
) -> Result<Box<dyn ScalarField + 'a>> {
    let frozen_class = match model.signature.task {
        TaskKind::Classification => Some(model.predict_label(x0)?),
        TaskKind::Regression => None,
    };
    Ok(match config.mode {
        Mode::WhiteBox => Box::new(WhiteBoxGap::new(model, frozen_class)),
        Mode::BlackBox => Box::new(BlackBoxGap::new(model, frozen_class, config.fd_step)),
    })
}

/// Movement cost of a single input. A fractional radius resolves against
/// this input's own largest absolute feature; batch runs resolve against
/// the whole input matrix instead.
pub fn movement_cost(
    model: &Model,
    x0: &[f64],
    config: &CertPriConfig,
    rng: &mut RngState,
) -> Result<MovementCost> {
    config.validate()?;
    let bound = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let radius = config.radius.resolve(bound)?;
    let field = field_for(model, x0, config)?;
    movement_cost_for_field(field.as_ref(), x0, radius, config, rng)
}

/// Full prioritization output: per-input movement costs and the ascending
/// ranking.
#[derive(Debug, Clone)]
pub struct PrioritizationResult {
    pub costs: Vec<MovementCost>,
    /// Permutation of input indices, ascending by certified bound, ties by
    /// original index.
    pub order: Vec<usize>,
    pub config: CertPriConfig,
    /// The radius actually used, after resolving a fractional spec.
    pub resolved_radius: f64,
}

/// Ranks all inputs by certified movement cost, cheapest first.
///
/// Deliberately takes only the raw input matrix: ground-truth labels are
/// not part of the interface, so prioritization cannot read them.
pub fn prioritize(
    model: &Model,
    inputs: &[Vec<f64>],
    config: &CertPriConfig,
) -> Result<PrioritizationResult> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidDataset("no inputs to prioritize".into()));
    }
    for row in inputs {
        if row.len() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "prioritization input",
                expected: model.input_dim(),
                got: row.len(),
            });
        }
    }
    let bound = inputs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let radius = config.radius.resolve(bound)?;

    let mut costs = Vec::with_capacity(inputs.len());
    for (index, x0) in inputs.iter().enumerate() {
        let mut rng = RngState::for_input(config.seed, index);
        let field = field_for(model, x0, config)?;
        costs.push(movement_cost_for_field(
            field.as_ref(),
            x0,
            radius,
            config,
            &mut rng,
        )?);
    }

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .lower_bound
            .partial_cmp(&costs[b].lower_bound)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    Ok(PrioritizationResult {
        costs,
        order,
        config: config.clone(),
        resolved_radius: radius,
    })
}

/// Empirically probes the certificate of one input: draws `trials`
/// perturbations with `‖μ‖_p ≤ gamma` and reports the fraction that reach
/// the target position fixed at `x0` (probability at or past the class
/// center for classification, zero mean gap to the regression center for
/// regression). The bound is estimated, so a small rate is tolerated by
/// callers; zero budget admits no perturbation and the rate is 0.
pub fn soundness_probe(
    model: &Model,
    x0: &[f64],
    gamma: f64,
    config: &CertPriConfig,
    trials: usize,
    rng: &mut RngState,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "certified bound must be finite and nonnegative, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let frozen_class = match model.signature.task {
        TaskKind::Classification => Some(model.predict_label(x0)?),
        TaskKind::Regression => None,
    };
    let target = center_gap_with_class(model, x0, frozen_class)?.center;
    let spec = BallSpec {
        center: x0,
        radius: gamma,
        norm: config.norm,
    };
    let mut violations = 0usize;
    for _ in 0..trials {
        let point = crate::sampler::sample(&spec, rng)?;
        let outputs = model.forward(&point)?;
        let reached = match (&target, frozen_class) {
            (CenterValue::Probability(center), Some(c)) => outputs[c] >= *center,
            (CenterValue::Vector(centers), None) => {
                let gap: f64 = centers
                    .iter()
                    .zip(&outputs)
                    .map(|(t, f)| (t - f).abs())
                    .sum::<f64>()
                    / centers.len() as f64;
                gap <= 0.0
            }
            _ => unreachable!("target kind always matches the task"),
        };
        if reached {
            violations += 1;
        }
    }
    Ok(violations as f64 / trials as f64)
}
