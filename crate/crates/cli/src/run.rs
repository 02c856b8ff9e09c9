//! Command implementations: prioritize, evaluate and fit-gevt, plus the
//! on-disk result and report schemas.
//!
//! Result and report payloads are byte-stable under a fixed seed: struct
//! field order is fixed, collections are ordered, and no timestamps enter
//! the files. All writes are whole-file atomic (temp file plus rename).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use certpri_core::dataset::{Dataset, Labels};
use certpri_core::gevt::fit_reverse_weibull;
use certpri_core::metrics::{
    deepgini_score, rauc_classification, rauc_regression, render_table, robr, spearman,
    welch_t_test, MetricReport,
};
use certpri_core::model::{Model, TaskKind};
use certpri_core::prioritizer::{prioritize, CertPriConfig, PrioritizationResult};

use crate::train::per_input_mse;

pub const RESULT_SCHEMA: &str = "certpri-result/1";
pub const REPORT_SCHEMA: &str = "certpri-report/1";

/// Stored prioritization run.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultFile {
    pub schema: String,
    pub seed: u64,
    pub config: CertPriConfig,
    pub resolved_radius: f64,
    /// Input indices in prioritized order (ascending certified bound).
    pub omega: Vec<usize>,
    pub inputs: Vec<InputRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InputRow {
    pub index: usize,
    #[serde(rename = "gamma_L")]
    pub gamma: Option<f64>,
    pub h: f64,
    pub lipschitz: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<FitInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitInfo {
    pub xi: f64,
    pub u: f64,
    pub sigma: f64,
    pub endpoint: f64,
    pub loglik: f64,
}

impl ResultFile {
    pub fn from_run(run: &PrioritizationResult) -> ResultFile {
        let inputs = run
            .costs
            .iter()
            .enumerate()
            .map(|(index, cost)| InputRow {
                index,
                // Infinite bounds (zero observed slope with a positive gap)
                // have no JSON float; they are recorded as null and sort
                // last through omega.
                gamma: cost.lower_bound.is_finite().then_some(cost.lower_bound),
                h: cost.gap,
                lipschitz: cost.lipschitz,
                warnings: cost.warnings(),
                fit: cost.fit.as_ref().ok().map(|fit| FitInfo {
                    xi: fit.shape,
                    u: fit.location,
                    sigma: fit.scale,
                    endpoint: fit.endpoint,
                    loglik: fit.log_likelihood,
                }),
            })
            .collect();
        ResultFile {
            schema: RESULT_SCHEMA.into(),
            seed: run.config.seed,
            config: run.config.clone(),
            resolved_radius: run.resolved_radius,
            omega: run.order.clone(),
            inputs,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<ResultFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading result file {}", path.display()))?;
        let file: ResultFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing result file {}", path.display()))?;
        if file.schema != RESULT_SCHEMA {
            bail!(
                "unsupported result schema {:?} in {}",
                file.schema,
                path.display()
            );
        }
        let n = file.inputs.len();
        let mut seen = vec![false; n];
        for &i in &file.omega {
            if i >= n || seen[i] {
                bail!("result file {} has an invalid ordering", path.display());
            }
            seen[i] = true;
        }
        if file.omega.len() != n {
            bail!("result file {} has an incomplete ordering", path.display());
        }
        if file
            .inputs
            .iter()
            .enumerate()
            .any(|(i, row)| row.index != i)
        {
            bail!(
                "result file {} has out-of-place input records",
                path.display()
            );
        }
        Ok(file)
    }

    /// Per-input certified bounds with unbounded rows mapped to infinity.
    pub fn gammas(&self) -> Vec<f64> {
        self.inputs
            .iter()
            .map(|row| row.gamma.unwrap_or(f64::INFINITY))
            .collect()
    }
}

/// Writes bytes under `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match parent {
        Some(dir) => dir.join(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
        None => PathBuf::from(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
    };
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

/// Runs the prioritizer over a dataset and returns the storable result.
/// Labels never reach the pipeline: only the input matrix is passed on.
pub fn run_prioritize(
    model: &Model,
    dataset: &Dataset,
    config: &CertPriConfig,
) -> anyhow::Result<ResultFile> {
    dataset
        .check_against(&model.signature)
        .context("dataset does not fit the model")?;
    let run = prioritize(model, dataset.inputs(), config)?;

    // Internal invariant: the ordering must be a permutation.
    let mut seen = vec![false; dataset.len()];
    for &i in &run.order {
        if i >= seen.len() || seen[i] {
            bail!("internal: prioritization produced an invalid permutation");
        }
        seen[i] = true;
    }
    Ok(ResultFile::from_run(&run))
}

/// Everything `evaluate` needs to grade one or more stored orderings
/// against a labeled dataset.
pub struct EvaluateRequest<'a> {
    pub results: Vec<(String, ResultFile)>,
    pub dataset: &'a Dataset,
    pub model: &'a Model,
    pub cutoffs: Vec<usize>,
    pub include_deepgini: bool,
    /// RAUC-all of an original (unattacked) run; enables the robustness
    /// ratio column.
    pub robr_baseline: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ReportFile {
    pub schema: String,
    pub cutoffs: Vec<usize>,
    pub reports: Vec<MetricReport>,
    /// Pairwise rank correlation of certified bounds across result files.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rank_correlation: Vec<RankCorrelation>,
}

#[derive(Debug, Serialize)]
pub struct RankCorrelation {
    pub a: String,
    pub b: String,
    pub spearman: f64,
}

fn bug_flags(model: &Model, dataset: &Dataset) -> anyhow::Result<Vec<bool>> {
    match dataset.labels() {
        Labels::Classes(labels) => {
            let mut flags = Vec::with_capacity(dataset.len());
            for (x, &label) in dataset.inputs().iter().zip(labels) {
                flags.push(model.predict_label(x)? != label);
            }
            Ok(flags)
        }
        _ => bail!("classification evaluation needs a label column"),
    }
}

fn grade_ordering(
    method: &str,
    order: &[usize],
    flags: Option<&[bool]>,
    mse: Option<&[f64]>,
    cutoffs: &[usize],
    total: usize,
) -> anyhow::Result<MetricReport> {
    let rauc_at = |cutoff: usize| -> anyhow::Result<f64> {
        Ok(match (flags, mse) {
            (Some(flags), None) => rauc_classification(order, flags, cutoff)?,
            (None, Some(mse)) => rauc_regression(order, mse, cutoff)?,
            _ => unreachable!("exactly one grading source"),
        })
    };
    let mut report = MetricReport::new(method, rauc_at(total)?);
    for &cutoff in cutoffs {
        if cutoff > total {
            report.warnings.push(format!(
                "cutoff {cutoff} exceeds the {total} available inputs; clamped"
            ));
        }
        report.set_cutoff(cutoff, rauc_at(cutoff)?);
    }
    if let Some(mse) = mse {
        if mse.iter().all(|&v| v == 0.0) {
            report
                .warnings
                .push("all per-input errors are zero; RAUC is 1 by convention".into());
        }
    }
    Ok(report)
}

/// Grades each stored ordering (and optionally a DeepGini baseline), then
/// fills in the cross-method measurements.
pub fn run_evaluate(request: &EvaluateRequest) -> anyhow::Result<ReportFile> {
    let dataset = request.dataset;
    let model = request.model;
    dataset
        .check_against(&model.signature)
        .context("dataset does not fit the model")?;
    if request.results.is_empty() && !request.include_deepgini {
        bail!("nothing to evaluate: pass at least one result file");
    }
    for (name, result) in &request.results {
        if result.inputs.len() != dataset.len() {
            bail!(
                "result {name} covers {} inputs but the dataset has {}",
                result.inputs.len(),
                dataset.len()
            );
        }
    }

    let (flags, mse) = match model.signature.task {
        TaskKind::Classification => (Some(bug_flags(model, dataset)?), None),
        TaskKind::Regression => (None, Some(per_input_mse(model, dataset)?)),
    };

    let mut reports = Vec::new();
    for (name, result) in &request.results {
        let mut report = grade_ordering(
            name,
            &result.omega,
            flags.as_deref(),
            mse.as_deref(),
            &request.cutoffs,
            dataset.len(),
        )?;
        // Separation check between bug-revealing and correct inputs.
        if let Some(flags) = &flags {
            let gammas = result.gammas();
            let finite = |v: &f64| v.is_finite();
            let bug: Vec<f64> = gammas
                .iter()
                .zip(flags)
                .filter(|(g, f)| **f && finite(g))
                .map(|(g, _)| *g)
                .collect();
            let correct: Vec<f64> = gammas
                .iter()
                .zip(flags)
                .filter(|(g, f)| !**f && finite(g))
                .map(|(g, _)| *g)
                .collect();
            if bug.len() >= 2 && correct.len() >= 2 {
                if let Ok(test) = welch_t_test(&bug, &correct) {
                    report.t = Some(test.t);
                    report.p = Some(test.p);
                }
            }
        }
        reports.push(report);
    }

    if request.include_deepgini {
        if model.signature.task != TaskKind::Classification {
            bail!("the DeepGini baseline applies to classification models only");
        }
        let mut scores = Vec::with_capacity(dataset.len());
        for x in dataset.inputs() {
            scores.push(deepgini_score(&model.forward(x)?)?);
        }
        // Highest impurity first; ties stay in input order.
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        reports.push(grade_ordering(
            "deepgini",
            &order,
            flags.as_deref(),
            mse.as_deref(),
            &request.cutoffs,
            dataset.len(),
        )?);
    }

    if let Some(baseline) = request.robr_baseline {
        for report in &mut reports {
            report.robr = Some(robr(report.rauc_all, baseline)?);
        }
    }

    // Per-method generalization reward over this subject: rank by RAUC-all,
    // descending, ties sharing the better rank.
    if reports.len() >= 2 {
        let methods = reports.len();
        let values: Vec<f64> = reports.iter().map(|r| r.rauc_all).collect();
        for (i, report) in reports.iter_mut().enumerate() {
            let rank = 1 + values.iter().filter(|&&v| v > values[i]).count();
            report.genrew = Some(certpri_core::metrics::genrew(&[vec![rank]], methods)?);
        }
    }

    let mut rank_correlation = Vec::new();
    for i in 0..request.results.len() {
        for j in (i + 1)..request.results.len() {
            let (name_a, result_a) = &request.results[i];
            let (name_b, result_b) = &request.results[j];
            if let Ok(rho) = spearman(&result_a.gammas(), &result_b.gammas()) {
                rank_correlation.push(RankCorrelation {
                    a: name_a.clone(),
                    b: name_b.clone(),
                    spearman: rho,
                });
            }
        }
    }

    Ok(ReportFile {
        schema: REPORT_SCHEMA.into(),
        cutoffs: request.cutoffs.clone(),
        reports,
        rank_correlation,
    })
}

pub fn report_to_table(report: &ReportFile) -> String {
    let mut out = render_table(&report.reports);
    if !report.rank_correlation.is_empty() {
        out.push('\n');
        for pair in &report.rank_correlation {
            out.push_str(&format!(
                "rank correlation {} vs {}: {:.4}\n",
                pair.a, pair.b, pair.spearman
            ));
        }
    }
    out
}

/// Fits the reverse Weibull to a newline-separated value file and returns
/// the JSON diagnostics payload.
pub fn run_fit_gevt(path: &Path) -> anyhow::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading value file {}", path.display()))?;
    let mut values = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line
            .parse()
            .map_err(|_| anyhow!("line {}: cannot parse {line:?}", line_no + 1))?;
        values.push(value);
    }
    let fit = fit_reverse_weibull(&values)
        .map_err(|fallback| anyhow!("cannot fit these values: {fallback}"))?;
    Ok(serde_json::json!({
        "xi": fit.shape,
        "u": fit.location,
        "sigma": fit.scale,
        "endpoint": fit.endpoint,
        "loglik": fit.log_likelihood,
    }))
}
