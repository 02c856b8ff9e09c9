//! Synthetic desk-scale subjects: Gaussian blobs, two moons, and a noisy
//! linear regression generator that records its own ground truth.
//!
//! Feature generation and label-noise flips use separate seeded streams, so
//! changing the noise rate perturbs labels only: the same seed always
//! produces the same points.

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use certpri_core::dataset::{Dataset, Labels};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    GaussianBlobs,
    TwoMoons,
    LinearRegressionNoise,
}

impl std::str::FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "blobs" | "gaussian-blobs" => Ok(Generator::GaussianBlobs),
            "moons" | "two-moons" => Ok(Generator::TwoMoons),
            "linreg" | "linear-regression-noise" => Ok(Generator::LinearRegressionNoise),
            other => Err(format!(
                "unknown generator {other:?} (blobs, moons, linreg)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub generator: Generator,
    /// Classes for blobs (moons are always binary).
    pub classes: usize,
    pub input_dim: usize,
    /// Output width for the regression generator.
    pub targets: usize,
    pub train_count: usize,
    pub test_count: usize,
    /// Label-flip rate in [0, 0.5] (ignored by the regression generator).
    pub noise: f64,
    /// Distance between adjacent blob centers, in units of the cluster
    /// standard deviation.
    pub separation: f64,
    pub cluster_std: f64,
    /// Geometric jitter for the moons.
    pub jitter: f64,
    /// Target noise standard deviation for the regression generator.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            generator: Generator::GaussianBlobs,
            classes: 3,
            input_dim: 2,
            targets: 1,
            train_count: 600,
            test_count: 300,
            noise: 0.0,
            separation: 6.0,
            cluster_std: 1.0,
            jitter: 0.1,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    /// Generator provenance, including the ground-truth coefficients of the
    /// regression generator.
    pub meta: serde_json::Value,
}

fn validate(spec: &SynthSpec) -> anyhow::Result<()> {
    if spec.train_count == 0 || spec.test_count == 0 {
        bail!("train and test counts must be at least 1");
    }
    if !(0.0..=0.5).contains(&spec.noise) {
        bail!("label-noise rate must be in [0, 0.5], got {}", spec.noise);
    }
    if spec.input_dim == 0 {
        bail!("input dimension must be at least 1");
    }
    match spec.generator {
        Generator::GaussianBlobs => {
            if spec.classes < 2 {
                bail!("blobs need at least 2 classes");
            }
            if spec.input_dim < 2 && spec.classes > 2 {
                bail!("blobs with more than 2 classes need at least 2 dimensions");
            }
            if spec.cluster_std.is_nan()
                || spec.cluster_std <= 0.0
                || spec.separation.is_nan()
                || spec.separation <= 0.0
            {
                bail!("cluster std and separation must be positive");
            }
        }
        Generator::TwoMoons => {
            if spec.input_dim != 2 {
                bail!("two moons are strictly 2-dimensional");
            }
        }
        Generator::LinearRegressionNoise => {
            if spec.targets == 0 {
                bail!("regression needs at least 1 target");
            }
            if spec.noise_sigma < 0.0 {
                bail!("target noise must be nonnegative");
            }
        }
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Blob centers equally spaced on a circle in the first two coordinates,
/// with adjacent centers `separation * cluster_std` apart. Deterministic,
/// so the classes are linearly separable whenever the separation dominates
/// the cluster spread.
fn blob_centers(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let k = spec.classes;
    let spacing = spec.separation * spec.cluster_std;
    if k == 2 {
        let mut a = vec![0.0; spec.input_dim];
        let mut b = vec![0.0; spec.input_dim];
        a[0] = -spacing / 2.0;
        b[0] = spacing / 2.0;
        return vec![a, b];
    }
    let radius = spacing / (2.0 * (std::f64::consts::PI / k as f64).sin());
    (0..k)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            let mut center = vec![0.0; spec.input_dim];
            center[0] = radius * angle.cos();
            center[1] = radius * angle.sin();
            center
        })
        .collect()
}

fn flip_labels(labels: &mut [usize], classes: usize, noise: f64, rng: &mut ChaCha8Rng) {
    if noise == 0.0 {
        return;
    }
    for label in labels.iter_mut() {
        if rng.random::<f64>() < noise {
            let offset = rng.random_range(1..classes);
            *label = (*label + offset) % classes;
        }
    }
}

fn generate_split(
    spec: &SynthSpec,
    count: usize,
    features_rng: &mut ChaCha8Rng,
    noise_rng: &mut ChaCha8Rng,
    regression_w: Option<&[Vec<f64>]>,
) -> anyhow::Result<Dataset> {
    match spec.generator {
        Generator::GaussianBlobs => {
            let centers = blob_centers(spec);
            let mut inputs = Vec::with_capacity(count);
            let mut labels = Vec::with_capacity(count);
            for i in 0..count {
                let class = i % spec.classes;
                let point: Vec<f64> = centers[class]
                    .iter()
                    .map(|c| c + spec.cluster_std * normal(features_rng))
                    .collect();
                inputs.push(point);
                labels.push(class);
            }
            flip_labels(&mut labels, spec.classes, spec.noise, noise_rng);
            Ok(Dataset::new(inputs, Labels::Classes(labels))?)
        }
        Generator::TwoMoons => {
            let mut inputs = Vec::with_capacity(count);
            let mut labels = Vec::with_capacity(count);
            for i in 0..count {
                let class = i % 2;
                let t = std::f64::consts::PI * features_rng.random::<f64>();
                let (x, y) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                inputs.push(vec![
                    x + spec.jitter * normal(features_rng),
                    y + spec.jitter * normal(features_rng),
                ]);
                labels.push(class);
            }
            flip_labels(&mut labels, 2, spec.noise, noise_rng);
            Ok(Dataset::new(inputs, Labels::Classes(labels))?)
        }
        Generator::LinearRegressionNoise => {
            let w = regression_w.expect("regression coefficients prepared by caller");
            let mut inputs = Vec::with_capacity(count);
            let mut targets = Vec::with_capacity(count);
            for _ in 0..count {
                let x: Vec<f64> = (0..spec.input_dim).map(|_| normal(features_rng)).collect();
                let t: Vec<f64> = w
                    .iter()
                    .map(|row| {
                        row.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>()
                            + spec.noise_sigma * normal(features_rng)
                    })
                    .collect();
                inputs.push(x);
                targets.push(t);
            }
            Ok(Dataset::new(inputs, Labels::Targets(targets))?)
        }
    }
}

/// Generates train and test splits plus a provenance record.
pub fn generate(spec: &SynthSpec) -> anyhow::Result<SynthOutput> {
    validate(spec)?;
    let mut features_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Independent stream so noise flips never disturb the geometry.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x004e_4f49_5345_u64);

    let regression_w: Option<Vec<Vec<f64>>> = if spec.generator == Generator::LinearRegressionNoise
    {
        let mut w_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x57u64);
        Some(
            (0..spec.targets)
                .map(|_| {
                    (0..spec.input_dim)
                        .map(|_| w_rng.random_range(-2.0..2.0))
                        .collect()
                })
                .collect(),
        )
    } else {
        None
    };

    let train = generate_split(
        spec,
        spec.train_count,
        &mut features_rng,
        &mut noise_rng,
        regression_w.as_deref(),
    )
    .context("generating the training split")?;
    let test = generate_split(
        spec,
        spec.test_count,
        &mut features_rng,
        &mut noise_rng,
        regression_w.as_deref(),
    )
    .context("generating the test split")?;

    let meta = match spec.generator {
        Generator::GaussianBlobs => json!({
            "generator": "gaussian_blobs",
            "classes": spec.classes,
            "input_dim": spec.input_dim,
            "separation": spec.separation,
            "cluster_std": spec.cluster_std,
            "noise": spec.noise,
            "seed": spec.seed,
        }),
        Generator::TwoMoons => json!({
            "generator": "two_moons",
            "jitter": spec.jitter,
            "noise": spec.noise,
            "seed": spec.seed,
        }),
        Generator::LinearRegressionNoise => json!({
            "generator": "linear_regression_noise",
            "input_dim": spec.input_dim,
            "targets": spec.targets,
            "w": regression_w,
            "noise_sigma": spec.noise_sigma,
            "seed": spec.seed,
        }),
    };

    Ok(SynthOutput { train, test, meta })
}
