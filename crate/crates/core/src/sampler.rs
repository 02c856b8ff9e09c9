//! Uniform sampling from L_p hyper-balls.
//!
//! Constructions: for p = 2 a Gaussian direction scaled by `U^(1/d)`; for
//! p = ∞ independent uniform coordinates; for p = 1 a signed Dirichlet
//! direction (normalized exponentials) with the same radial scaling. Points
//! are not clipped to any data domain — the bound needs a full ball around
//! the center, and clipping would bias the gradient-norm maximum downward.
//!
//! All randomness flows through [`RngState`], a seeded ChaCha8 stream with
//! stable cross-platform output, so fixed seeds reproduce byte-identical
//! samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::norm::PNorm;

/// The sampling region: a hyper-ball `B_p(center, radius)`.
#[derive(Debug, Clone)]
pub struct BallSpec<'a> {
    pub center: &'a [f64],
    pub radius: f64,
    pub norm: PNorm,
}

impl BallSpec<'_> {
    fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 || !self.radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sampling radius must be positive and finite, got {}",
                self.radius
            )));
        }
        if self.center.is_empty() {
            return Err(Error::InvalidConfig("empty ball center".into()));
        }
        Ok(())
    }
}

/// Deterministic random stream. Same seed and call sequence, same samples.
#[derive(Debug, Clone)]
pub struct RngState {
    rng: ChaCha8Rng,
    seed: u64,
}

impl RngState {
    pub fn from_seed(seed: u64) -> RngState {
        RngState {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Stream for one input of a batch run: `base_seed XOR index`, so
    /// parallel and serial schedules agree exactly.
    pub fn for_input(base_seed: u64, index: usize) -> RngState {
        RngState::from_seed(base_seed ^ index as u64)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal pair via Box-Muller.
    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(dim);
        while v.len() < dim {
            let (a, b) = self.normal_pair();
            v.push(a);
            if v.len() < dim {
                v.push(b);
            }
        }
        v
    }

    /// Exponential(1) draw.
    fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }
}

/// Draws one point uniformly from the ball.
pub fn sample(spec: &BallSpec, rng: &mut RngState) -> Result<Vec<f64>> {
    spec.validate()?;
    let d = spec.center.len();
    let point = match spec.norm {
        PNorm::L2 => {
            let mut direction = rng.normal_vec(d);
            let mut norm = PNorm::L2.norm(&direction);
            while norm == 0.0 {
                direction = rng.normal_vec(d);
                norm = PNorm::L2.norm(&direction);
            }
            let scale = spec.radius * rng.uniform().powf(1.0 / d as f64) / norm;
            direction
                .iter()
                .zip(spec.center)
                .map(|(v, c)| c + scale * v)
                .collect()
        }
        PNorm::LInf => spec
            .center
            .iter()
            .map(|c| c + spec.radius * (2.0 * rng.uniform() - 1.0))
            .collect(),
        PNorm::L1 => {
            let exps: Vec<f64> = (0..d).map(|_| rng.exponential()).collect();
            let total: f64 = exps.iter().sum();
            let signs: Vec<f64> = (0..d)
                .map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 })
                .collect();
            let scale = spec.radius * rng.uniform().powf(1.0 / d as f64);
            if total == 0.0 {
                // Unreachable for d >= 1 except with probability ~0; fall
                // back to the center point.
                return Ok(spec.center.to_vec());
            }
            exps.iter()
                .zip(&signs)
                .zip(spec.center)
                .map(|((e, s), c)| c + scale * s * e / total)
                .collect()
        }
    };
    Ok(point)
}

/// Draws `count` independent uniform samples.
pub fn sample_batch(spec: &BallSpec, count: usize, rng: &mut RngState) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidConfig(
            "sample count must be at least 1".into(),
        ));
    }
    (0..count).map(|_| sample(spec, rng)).collect()
}
