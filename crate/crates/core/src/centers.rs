//! Target positions in output space and the scalar gap driving the
//! movement-cost bound.
//!
//! For a classifier the target of the predicted class `c` is
//! `min{p_c (1 + ln(1 + p_c)), 1}`; the gap is the distance of the current
//! probability from that target. For a regression model each output
//! component is pulled toward `clip(f + |f| ln(1 + tanh f))` inside the
//! declared output domain, and the gap is the mean absolute component
//! distance. Logarithms are natural throughout.
//!
//! The gap is evaluated with the class index resolved once at the original
//! input and held fixed, so that it stays a continuous function over the
//! sampling ball.

use crate::error::{Error, Result};
use crate::model::{Model, OutputHead, TaskKind};

/// Target probability for a predicted-class probability `p_c ∈ (0, 1)`.
pub fn class_center(p_c: f64) -> Result<f64> {
    if p_c.is_nan() || p_c <= 0.0 || p_c >= 1.0 {
        return Err(Error::InvalidProbability(p_c));
    }
    Ok((p_c * (1.0 + (1.0 + p_c).ln())).min(1.0))
}

/// `class_center` without the open-interval precondition, for pipeline use
/// where softmax saturation can round `p_c` to exactly 0 or 1.
fn class_center_raw(p_c: f64) -> f64 {
    (p_c * (1.0 + (1.0 + p_c).ln())).min(1.0)
}

/// Slope of `class_center` at `p_c`; zero on the clipped branch.
fn class_center_slope(p_c: f64) -> f64 {
    if p_c * (1.0 + (1.0 + p_c).ln()) >= 1.0 {
        0.0
    } else {
        1.0 + (1.0 + p_c).ln() + p_c / (1.0 + p_c)
    }
}

/// Target value for one regression output component, clipped into
/// `bounds = (min, max)`.
pub fn regression_center(f_i: f64, bounds: (f64, f64)) -> Result<f64> {
    let (min, max) = bounds;
    if min.is_nan() || max.is_nan() || min >= max {
        return Err(Error::InvalidBounds { min, max });
    }
    if !f_i.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let raw = f_i + f_i.abs() * (1.0 + f_i.tanh()).ln();
    Ok(raw.clamp(min, max))
}

fn regression_center_unbounded(f_i: f64, bounds: Option<(f64, f64)>) -> f64 {
    let raw = f_i + f_i.abs() * (1.0 + f_i.tanh()).ln();
    match bounds {
        Some((min, max)) => raw.clamp(min, max),
        None => raw,
    }
}

/// Slope of the regression center map at `f`; zero where the clip is active.
/// Uses d/df ln(1 + tanh f) = 1 − tanh f.
fn regression_center_slope(f: f64, bounds: Option<(f64, f64)>) -> f64 {
    let raw = f + f.abs() * (1.0 + f.tanh()).ln();
    if let Some((min, max)) = bounds {
        if raw <= min || raw >= max {
            return 0.0;
        }
    }
    1.0 + sign(f) * (1.0 + f.tanh()).ln() + f.abs() * (1.0 - f.tanh())
}

/// Sign with the subgradient convention sign(0) = 0.
fn sign(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

/// The target position together with the current distance from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterGap {
    /// Nonnegative scalar gap `h`.
    pub value: f64,
    /// The target: a probability for classification, a vector for regression.
    pub center: CenterValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CenterValue {
    Probability(f64),
    Vector(Vec<f64>),
}

/// Gap at `x` with the class index resolved at `x` itself.
pub fn center_gap(model: &Model, x: &[f64]) -> Result<CenterGap> {
    let class = match model.signature.task {
        TaskKind::Classification => Some(model.predict_label(x)?),
        TaskKind::Regression => None,
    };
    center_gap_with_class(model, x, class)
}

/// Gap at `x` with a pre-resolved class index (classification only). The
/// prioritizer freezes the class at the ball center and passes it here for
/// every sample.
pub fn center_gap_with_class(
    model: &Model,
    x: &[f64],
    frozen_class: Option<usize>,
) -> Result<CenterGap> {
    let outputs = model.forward(x)?;
    match model.signature.task {
        TaskKind::Classification => {
            let c = frozen_class.ok_or(Error::TaskMismatch {
                expected: "classification (frozen class index missing)",
            })?;
            let p_c = outputs[c];
            // Saturated softmax can round p_c to exactly 1; the raw formula
            // stays well-defined there while the public op rejects it.
            let center = class_center_raw(p_c);
            Ok(CenterGap {
                value: center - p_c,
                center: CenterValue::Probability(center),
            })
        }
        TaskKind::Regression => {
            let bounds = model.signature.output_domain;
            let centers: Vec<f64> = outputs
                .iter()
                .map(|&f| regression_center_unbounded(f, bounds))
                .collect();
            let d2 = outputs.len() as f64;
            let value = centers
                .iter()
                .zip(&outputs)
                .map(|(c, f)| (c - f).abs())
                .sum::<f64>()
                / d2;
            Ok(CenterGap {
                value,
                center: CenterValue::Vector(centers),
            })
        }
    }
}

/// Output head computing the gap `h` and its gradient with respect to the
/// model outputs, for reverse-mode input gradients of `h`.
pub struct CenterGapHead {
    /// Class index frozen at the ball center; `None` for regression.
    pub frozen_class: Option<usize>,
    /// Output domain for the regression clip; ignored for classification.
    pub output_domain: Option<(f64, f64)>,
}

impl CenterGapHead {
    pub fn for_model(model: &Model, frozen_class: Option<usize>) -> CenterGapHead {
        CenterGapHead {
            frozen_class,
            output_domain: model.signature.output_domain,
        }
    }
}

impl OutputHead for CenterGapHead {
    fn value_and_output_grad(&self, outputs: &[f64]) -> (f64, Vec<f64>) {
        match self.frozen_class {
            Some(c) => {
                let p_c = outputs[c];
                let center = class_center_raw(p_c);
                let mut grad = vec![0.0; outputs.len()];
                grad[c] = class_center_slope(p_c) - 1.0;
                (center - p_c, grad)
            }
            None => {
                let d2 = outputs.len() as f64;
                let mut value = 0.0;
                let mut grad = Vec::with_capacity(outputs.len());
                for &f in outputs {
                    let center = regression_center_unbounded(f, self.output_domain);
                    let diff = center - f;
                    value += diff.abs();
                    let slope = regression_center_slope(f, self.output_domain) - 1.0;
                    grad.push(sign(diff) * slope / d2);
                }
                (value / d2, grad)
            }
        }
    }
}
