//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `--nocapture` to see them on success).
//!
//! Tolerances and thresholds are pinned in the constants below. The
//! synthetic subject used by the behavioral criteria is a 3-class Gaussian
//! blob task with moderate overlap (adjacent centers 3 cluster standard
//! deviations apart) and a 10% label-flip rate, trained with the toy
//! full-batch trainer.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use certpri::synth::{generate, SynthSpec};
use certpri::train::{train_toy, TrainSpec};
use certpri_core::dataset::Dataset;
use certpri_core::gevt::{fit_reverse_weibull, EndpointVariant};
use certpri_core::metrics::{
    deepgini_score, rauc_classification, rauc_regression, spearman, welch_t_test,
};
use certpri_core::model::{Activation, LayerSpec, Model, ModelSignature, TaskKind};
use certpri_core::prioritizer::{
    movement_cost_for_field, prioritize, soundness_probe, CertPriConfig, Mode, Radius, ScalarField,
};
use certpri_core::sampler::{sample_batch, BallSpec, RngState};
use certpri_core::{PNorm, Result as CoreResult};

fn report(criterion: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion}: {status} ({detail})");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn random_mlp(seed: u64, dims: &[usize], activation: Activation, task: TaskKind) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for w in dims.windows(2) {
        layers.push(LayerSpec {
            weights: (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.random_range(-1.2..1.2)).collect())
                .collect(),
            bias: (0..w[1]).map(|_| rng.random_range(-0.4..0.4)).collect(),
            activation,
        });
    }
    let last = layers.len() - 1;
    layers[last].activation = Activation::Identity;
    Model::new(
        ModelSignature {
            input_dim: dims[0],
            output_dim: dims[dims.len() - 1],
            task,
            output_domain: None,
        },
        layers,
    )
    .unwrap()
}

/// Central finite differences with per-coordinate relative steps.
fn finite_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Criterion 1: reverse-mode gradients match central finite differences to
/// relative error 1e-5 over 100 random smooth models, in under 10 seconds.
#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let activation = if trial % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Sigmoid
        };
        let hidden = 4 + (trial as usize % 5);
        let dims = [3 + (trial as usize % 3), hidden, hidden, 3];
        let model = random_mlp(1000 + trial, &dims, activation, TaskKind::Classification);
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let class = model.predict_label(&x).unwrap();
        let grad = model
            .input_gradient(&x, &certpri_core::model::OutputComponent(class))
            .unwrap();
        let fd = finite_difference(&|p| model.forward(p).unwrap()[class], &x, 1e-5);
        for (g, f) in grad.iter().zip(&fd) {
            let rel = (g - f).abs() / f.abs().max(1e-6);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "01 gradient-correctness",
        worst <= 1e-5 && elapsed < 10.0,
        &format!("max relative error {worst:.3e}, {elapsed:.2} s"),
    );
}

/// Criterion 2: 1e5 samples from the unit L2 ball in dimension 5 stay
/// inside the ball and follow the r^5 radial law (KS <= 0.02) in under 5 s.
#[test]
fn criterion_02_sampler_law() {
    let start = Instant::now();
    let d = 5;
    let center = vec![0.0; d];
    let spec = BallSpec {
        center: &center,
        radius: 1.0,
        norm: PNorm::L2,
    };
    let n = 100_000;
    let samples = sample_batch(&spec, n, &mut RngState::from_seed(0xACC2)).unwrap();
    let mut max_norm: f64 = 0.0;
    let mut radii: Vec<f64> = samples
        .iter()
        .map(|s| {
            let r = PNorm::L2.norm(s);
            max_norm = max_norm.max(r);
            r
        })
        .collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ks: f64 = 0.0;
    for (i, r) in radii.iter().enumerate() {
        let theory = r.powi(5);
        ks = ks
            .max(((i + 1) as f64 / n as f64 - theory).abs())
            .max((i as f64 / n as f64 - theory).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "02 sampler-law",
        max_norm <= 1.0 + 1e-12 && ks <= 0.02 && elapsed < 5.0,
        &format!("max norm {max_norm:.12}, KS {ks:.4}, {elapsed:.2} s"),
    );
}

/// Criterion 3: the fitter recovers the reverse Weibull with shape -0.6,
/// location 0, scale 1 from 500 samples: shape in [-0.8, -0.4] and the
/// endpoint within 15% of 5/3, in at least 18 of 20 seeded repetitions.
#[test]
fn criterion_03_weibull_recovery() {
    let true_endpoint = 5.0 / 3.0;
    let mut successes = 0;
    let mut details = Vec::new();
    for rep in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACC3 + rep);
        let sample: Vec<f64> = (0..500)
            .map(|_| {
                let v: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
                // Inverse CDF with shape -0.6, location 0, scale 1.
                ((-v.ln()).powf(0.6) - 1.0) / (-0.6)
            })
            .collect();
        match fit_reverse_weibull(&sample) {
            Ok(fit) => {
                let shape_ok = fit.shape >= -0.8 && fit.shape <= -0.4;
                let endpoint_ok = (fit.endpoint - true_endpoint).abs() / true_endpoint <= 0.15;
                if shape_ok && endpoint_ok {
                    successes += 1;
                } else {
                    details.push(format!(
                        "rep {rep}: shape {:.3} endpoint {:.3}",
                        fit.shape, fit.endpoint
                    ));
                }
            }
            Err(fallback) => details.push(format!("rep {rep}: {fallback}")),
        }
    }
    report(
        "03 weibull-recovery",
        successes >= 18,
        &format!("{successes}/20 repetitions in range; misses: {details:?}"),
    );
}

struct LinearField {
    w: Vec<f64>,
    b: f64,
}

impl ScalarField for LinearField {
    fn value(&self, x: &[f64]) -> CoreResult<f64> {
        Ok(self.w.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b)
    }

    fn gradient(&self, _x: &[f64]) -> CoreResult<Vec<f64>> {
        Ok(self.w.clone())
    }
}

/// Criterion 4: on linear heads h(x) = w·x + b the pipeline's certified
/// bound is within 10% of h(x0)/‖w‖_q for every norm order, over 50 random
/// instances.
#[test]
fn criterion_04_linear_gamma_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let mut worst: f64 = 0.0;
    for trial in 0..50u64 {
        let dim = 2 + (trial as usize % 6);
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x0: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dot: f64 = w.iter().zip(&x0).map(|(a, b)| a * b).sum();
        // Offset keeps the gap strictly positive.
        let gap_target = 0.1 + rng.random::<f64>();
        let field = LinearField {
            w: w.clone(),
            b: gap_target - dot,
        };
        for norm in [PNorm::L1, PNorm::L2, PNorm::LInf] {
            let config = CertPriConfig {
                norm,
                seed: trial,
                ..CertPriConfig::default()
            };
            let mut stream = RngState::from_seed(trial);
            let cost = movement_cost_for_field(&field, &x0, 0.25, &config, &mut stream).unwrap();
            let expected = gap_target / norm.dual().norm(&w);
            let rel = (cost.lower_bound - expected).abs() / expected;
            worst = worst.max(rel);
        }
    }
    report(
        "04 linear-gamma-oracle",
        worst <= 0.10,
        &format!("max relative deviation {worst:.3e}"),
    );
}

/// The calibrated blob subject shared by criteria 5, 6 and 9.
fn blob_subject(seed: u64) -> (Model, Dataset) {
    let data = generate(&SynthSpec {
        seed,
        noise: 0.10,
        train_count: 600,
        test_count: 500,
        separation: 3.0,
        ..SynthSpec::default()
    })
    .unwrap();
    let outcome = train_toy(
        &data.train,
        TaskKind::Classification,
        Some(3),
        None,
        &TrainSpec {
            epochs: 800,
            learning_rate: 0.5,
            hidden: vec![24],
            seed,
            ..TrainSpec::default()
        },
    )
    .unwrap();
    (outcome.model, data.test)
}

fn misclassification_flags(model: &Model, data: &Dataset) -> Vec<bool> {
    data.inputs()
        .iter()
        .zip(data.class_labels().unwrap())
        .map(|(x, &label)| model.predict_label(x).unwrap() != label)
        .collect()
}

/// Criterion 5: on the noisy blob subject, misclassified inputs have a
/// smaller mean certified bound than correct ones with Welch p < 0.01, in
/// at least 4 of 5 seeds, in under 2 minutes.
#[test]
fn criterion_05_separation() {
    let start = Instant::now();
    let mut passes = 0;
    let mut details = Vec::new();
    for seed in 0..5u64 {
        let (model, test) = blob_subject(seed);
        let config = CertPriConfig {
            seed,
            ..CertPriConfig::default()
        };
        let run = prioritize(&model, test.inputs(), &config).unwrap();
        let gammas: Vec<f64> = run.costs.iter().map(|c| c.lower_bound).collect();
        let flags = misclassification_flags(&model, &test);
        let bug: Vec<f64> = gammas
            .iter()
            .zip(&flags)
            .filter(|(_, f)| **f)
            .map(|(g, _)| *g)
            .collect();
        let correct: Vec<f64> = gammas
            .iter()
            .zip(&flags)
            .filter(|(_, f)| !**f)
            .map(|(g, _)| *g)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let welch = welch_t_test(&bug, &correct).unwrap();
        let ok = mean(&bug) < mean(&correct) && welch.p < 0.01;
        if ok {
            passes += 1;
        }
        details.push(format!(
            "seed {seed}: mean(bug) {:.3} mean(ok) {:.3} p {:.2e}{}",
            mean(&bug),
            mean(&correct),
            welch.p,
            if ok { "" } else { " [miss]" }
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "05 separation",
        passes >= 4 && elapsed < 120.0,
        &format!("{passes}/5 seeds, {elapsed:.1} s; {details:?}"),
    );
}

/// Criterion 6: prioritization beats the mean of 20 random orderings by at
/// least 0.10 RAUC-all on the blob subject; the DeepGini baseline value is
/// reported alongside.
#[test]
fn criterion_06_effectiveness() {
    let (model, test) = blob_subject(0);
    let flags = misclassification_flags(&model, &test);
    let config = CertPriConfig {
        seed: 0,
        ..CertPriConfig::default()
    };
    let run = prioritize(&model, test.inputs(), &config).unwrap();
    let certpri_rauc = rauc_classification(&run.order, &flags, flags.len()).unwrap();

    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC6);
    let mut random_sum = 0.0;
    for _ in 0..20 {
        let mut order: Vec<usize> = (0..flags.len()).collect();
        order.shuffle(&mut rng);
        random_sum += rauc_classification(&order, &flags, flags.len()).unwrap();
    }
    let random_mean = random_sum / 20.0;

    // DeepGini baseline: rank by output impurity, highest first.
    let scores: Vec<f64> = test
        .inputs()
        .iter()
        .map(|x| deepgini_score(&model.forward(x).unwrap()).unwrap())
        .collect();
    let mut gini_order: Vec<usize> = (0..scores.len()).collect();
    gini_order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let gini_rauc = rauc_classification(&gini_order, &flags, flags.len()).unwrap();

    let gap = certpri_rauc - random_mean;
    report(
        "06 effectiveness",
        gap >= 0.10,
        &format!(
            "RAUC-all {certpri_rauc:.4}, random mean {random_mean:.4}, gap {gap:.4}; deepgini {gini_rauc:.4} (reported)"
        ),
    );
}

/// Criterion 7: the classification RAUC matches brute-force enumeration for
/// every bug placement with N <= 7 exactly, and the regression RAUC matches
/// hand-computed fixtures to 1e-12.
#[test]
fn criterion_07_metric_oracle() {
    let mut checked = 0usize;
    for n in 1..=7usize {
        for mask in 0..(1u32 << n) {
            let flags: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let order: Vec<usize> = (0..n).collect();
            let metric = rauc_classification(&order, &flags, n).unwrap();
            let bugs = flags.iter().filter(|&&b| b).count();
            let expected = if bugs == 0 {
                1.0
            } else {
                let mut area = 0usize;
                let mut cum = 0usize;
                for &f in &flags {
                    if f {
                        cum += 1;
                    }
                    area += cum;
                }
                let mut ideal = 0usize;
                cum = 0;
                for i in 0..n {
                    if i < bugs {
                        cum += 1;
                    }
                    ideal += cum;
                }
                area as f64 / ideal as f64
            };
            assert_eq!(metric, expected, "n={n} mask={mask:b}");
            checked += 1;
        }
    }

    let fixtures_ok = {
        let a = rauc_regression(&[0, 1, 2], &[3.0, 1.0, 2.0], 3).unwrap();
        let b = rauc_regression(&[2, 1, 0], &[3.0, 2.0, 1.0], 3).unwrap();
        (a - 13.0 / 14.0).abs() < 1e-12 && (b - 10.0 / 14.0).abs() < 1e-12
    };
    report(
        "07 metric-oracle",
        fixtures_ok,
        &format!("{checked} placements exact, regression fixtures within 1e-12"),
    );
}

/// Criterion 8: white-box and black-box certified bounds agree in rank
/// (Spearman >= 0.9) over 100 inputs of a tanh MLP.
#[test]
fn criterion_08_blackbox_agreement() {
    let model = random_mlp(
        0xACC8,
        &[5, 12, 3],
        Activation::Tanh,
        TaskKind::Classification,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inputs: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();

    let white = prioritize(
        &model,
        &inputs,
        &CertPriConfig {
            seed: 17,
            ..CertPriConfig::default()
        },
    )
    .unwrap();
    let black = prioritize(
        &model,
        &inputs,
        &CertPriConfig {
            seed: 17,
            mode: Mode::BlackBox,
            ..CertPriConfig::default()
        },
    )
    .unwrap();
    let gw: Vec<f64> = white.costs.iter().map(|c| c.lower_bound).collect();
    let gb: Vec<f64> = black.costs.iter().map(|c| c.lower_bound).collect();
    let rho = spearman(&gw, &gb).unwrap();
    report(
        "08 blackbox-agreement",
        rho >= 0.9,
        &format!("rank correlation {rho:.4} over 100 inputs"),
    );
}

/// Criterion 9: certificates survive empirical probing: over 20 inputs with
/// 1000 random admissible perturbations each, the overall target-reaching
/// rate stays at or below 5% (per-input rates logged).
#[test]
fn criterion_09_soundness_probe() {
    let (model, test) = blob_subject(0);
    let config = CertPriConfig {
        seed: 0,
        ..CertPriConfig::default()
    };
    let run = prioritize(&model, test.inputs(), &config).unwrap();

    let mut rates = Vec::new();
    let mut total = 0.0;
    for index in 0..20usize {
        let x0 = &test.inputs()[index];
        let gamma = run.costs[index].lower_bound;
        let rate = soundness_probe(
            &model,
            x0,
            gamma,
            &config,
            1000,
            &mut RngState::from_seed(0x50B + index as u64),
        )
        .unwrap();
        println!("  input {index}: gamma {gamma:.4} violation rate {rate:.4}");
        rates.push(rate);
        total += rate;
    }
    let overall = total / rates.len() as f64;
    report(
        "09 soundness-probe",
        overall <= 0.05,
        &format!(
            "overall violation rate {overall:.4}, per-input max {:.4}",
            rates.iter().cloned().fold(0.0f64, f64::max)
        ),
    );
}

/// Criterion 10: the prioritize command handles 1000 inputs (d = 20,
/// 2-layer MLP, default sampling settings) in under 60 seconds and
/// reproduces byte-identical output under a fixed seed.
#[test]
fn criterion_10_determinism_and_throughput() {
    let dir = std::env::temp_dir().join(format!("certpri-acc10-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    // Build the subject through the harness: d = 20 blobs, small training
    // run, stored as files for the CLI.
    let data = generate(&SynthSpec {
        seed: 10,
        input_dim: 20,
        train_count: 600,
        test_count: 1000,
        noise: 0.05,
        separation: 4.0,
        ..SynthSpec::default()
    })
    .unwrap();
    let outcome = train_toy(
        &data.train,
        TaskKind::Classification,
        Some(3),
        None,
        &TrainSpec {
            epochs: 60,
            hidden: vec![32],
            seed: 10,
            ..TrainSpec::default()
        },
    )
    .unwrap();
    let model_path = dir.join("model.json");
    let data_path = dir.join("test.csv");
    outcome.model.save(&model_path).unwrap();
    data.test.save(&data_path).unwrap();

    let binary = env!("CARGO_BIN_EXE_certpri");
    let run = |out: &std::path::Path| {
        let start = Instant::now();
        let status = std::process::Command::new(binary)
            .args([
                "prioritize",
                "--model",
                model_path.to_str().unwrap(),
                "--data",
                data_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "42",
            ])
            .status()
            .expect("running the prioritize command");
        (status, start.elapsed().as_secs_f64())
    };

    let out_a = dir.join("a.json");
    let out_b = dir.join("b.json");
    let (status_a, elapsed_a) = run(&out_a);
    let (status_b, elapsed_b) = run(&out_b);
    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    std::fs::remove_dir_all(&dir).ok();

    report(
        "10 determinism-throughput",
        status_a.success()
            && status_b.success()
            && bytes_a == bytes_b
            && elapsed_a < 60.0
            && elapsed_b < 60.0,
        &format!(
            "runs {:.1} s / {:.1} s over 1000 inputs, outputs {} bytes, identical: {}",
            elapsed_a,
            elapsed_b,
            bytes_a.len(),
            bytes_a == bytes_b
        ),
    );
}

/// The two endpoint conventions are both available and produce rankings;
/// the location-scale default respects the observed-evidence floor.
#[test]
fn endpoint_variants_both_run() {
    let model = random_mlp(0xE0, &[4, 8, 2], Activation::Tanh, TaskKind::Classification);
    let mut rng = ChaCha8Rng::seed_from_u64(0xE1);
    let inputs: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..4).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    for variant in [
        EndpointVariant::LocationScale,
        EndpointVariant::Standardized,
    ] {
        let config = CertPriConfig {
            endpoint_variant: variant,
            radius: Radius::FractionOfMax(0.04),
            ..CertPriConfig::default()
        };
        let run = prioritize(&model, &inputs, &config).unwrap();
        assert_eq!(run.order.len(), inputs.len());
    }
}
