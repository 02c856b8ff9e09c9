//! Evaluation measurements for prioritization orderings, plus the DeepGini
//! baseline scorer.
//!
//! The classification RAUC compares the cumulative count of bug-revealing
//! inputs along an ordering against the ideal ordering that places all bugs
//! first. With `N` considered positions and `N'` bugs, the ideal cumulative
//! area is `Σ_{i≤N'} i + (N-N') N' = N·N' + (N' - N'²)/2`, which is the
//! denominator used here; the numerator counts bug-revealing inputs, the
//! counting convention under which that denominator is exactly the ideal
//! curve's area. By default `N'` counts bugs in the full input set (capped
//! at the cutoff), matching the ideal-prioritization reading; a
//! prefix-only convention is available behind [`BugCountConvention`].

use serde::Serialize;

use crate::error::{Error, Result};

/// How the bug total `N'` is counted for cutoff RAUC values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BugCountConvention {
    /// Bugs in the full set, capped at the cutoff (default).
    #[default]
    GlobalCapped,
    /// Bugs within the first `N` positions only.
    PrefixOnly,
}

fn check_ordering(order: &[usize], n: usize) -> Result<()> {
    if order.is_empty() {
        return Err(Error::EmptyOrdering);
    }
    if order.len() != n {
        return Err(Error::DimensionMismatch {
            what: "ordering",
            expected: n,
            got: order.len(),
        });
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidConfig(format!(
                "ordering is not a permutation (index {i})"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

/// RAUC of a classification ordering over the first `cutoff` positions.
///
/// `bug_flags[i]` marks input `i` as bug-revealing. Returns 1 when no bugs
/// exist (any order is ideal). Cutoffs beyond the input count are clamped.
pub fn rauc_classification(order: &[usize], bug_flags: &[bool], cutoff: usize) -> Result<f64> {
    rauc_classification_with(order, bug_flags, cutoff, BugCountConvention::GlobalCapped)
}

pub fn rauc_classification_with(
    order: &[usize],
    bug_flags: &[bool],
    cutoff: usize,
    convention: BugCountConvention,
) -> Result<f64> {
    check_ordering(order, bug_flags.len())?;
    if cutoff == 0 {
        return Err(Error::InvalidConfig("cutoff must be at least 1".into()));
    }
    let n = cutoff.min(order.len());
    let bug_total = match convention {
        BugCountConvention::GlobalCapped => bug_flags.iter().filter(|&&b| b).count().min(n),
        BugCountConvention::PrefixOnly => order[..n].iter().filter(|&&i| bug_flags[i]).count(),
    };
    if bug_total == 0 {
        return Ok(1.0);
    }
    let mut cumulative = 0usize;
    let mut area = 0usize;
    for &i in &order[..n] {
        if bug_flags[i] {
            cumulative += 1;
        }
        area += cumulative;
    }
    let n = n as f64;
    let bugs = bug_total as f64;
    let ideal = n * bugs + (bugs - bugs * bugs) / 2.0;
    Ok(area as f64 / ideal)
}

/// RAUC of a regression ordering: cumulative per-input error mass along the
/// ordering against the descending-error ideal, over the first `cutoff`
/// positions. All-zero error returns 1 by convention.
pub fn rauc_regression(order: &[usize], mse: &[f64], cutoff: usize) -> Result<f64> {
    check_ordering(order, mse.len())?;
    if cutoff == 0 {
        return Err(Error::InvalidConfig("cutoff must be at least 1".into()));
    }
    if mse.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(
            "per-input errors must be finite and nonnegative".into(),
        ));
    }
    let n = cutoff.min(order.len());
    let mut ideal: Vec<f64> = mse.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut numerator = 0.0;
    let mut cumulative = 0.0;
    for &i in &order[..n] {
        cumulative += mse[i];
        numerator += cumulative;
    }
    let mut denominator = 0.0;
    cumulative = 0.0;
    for v in &ideal[..n] {
        cumulative += v;
        denominator += cumulative;
    }
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok(numerator / denominator)
}

/// Robustness ratio: RAUC on attacked inputs over RAUC on original inputs,
/// as a percentage.
pub fn robr(rauc_attacked: f64, rauc_original: f64) -> Result<f64> {
    if rauc_original.is_nan() || rauc_original <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "original RAUC must be positive, got {rauc_original}"
        )));
    }
    Ok(100.0 * rauc_attacked / rauc_original)
}

/// Generalization reward over a rank table: `rank_table[rep][subject]` is
/// the method's 1-based rank among `methods` competitors; the reward is the
/// mean of `(methods - rank + 1) / methods`, so it lives in
/// `[1/methods, 1]` and is antitone in every rank.
pub fn genrew(rank_table: &[Vec<usize>], methods: usize) -> Result<f64> {
    if methods == 0 || rank_table.iter().map(|row| row.len()).sum::<usize>() == 0 {
        return Err(Error::InvalidConfig("empty rank table".into()));
    }
    let mut total = 0.0;
    let mut cells = 0usize;
    for row in rank_table {
        for &rank in row {
            if rank < 1 || rank > methods {
                return Err(Error::RankOutOfRange { rank, methods });
            }
            total += (methods - rank + 1) as f64 / methods as f64;
            cells += 1;
        }
    }
    Ok(total / cells as f64)
}

/// Welch two-sample t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub dof: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Welch's unequal-variance t-test. Needs two samples of at least two
/// values with at least one nonzero variance.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample("need at least 2 values per sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var = |s: &[f64], m: f64| {
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (s.len() as f64 - 1.0)
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::DegenerateSample("both samples have zero variance"));
    }
    let sa = va / na;
    let sb = vb / nb;
    let se = (sa + sb).sqrt();
    let t = (ma - mb) / se;
    let dof = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = if t == 0.0 {
        1.0
    } else {
        // Two-sided: p = I_{ν/(ν+t²)}(ν/2, 1/2).
        regularized_incomplete_beta(dof / (dof + t * t), dof / 2.0, 0.5)
    };
    Ok(WelchTest { t, dof, p })
}

/// Student t cumulative distribution function.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let tail = regularized_incomplete_beta(dof / (dof + t * t), dof / 2.0, 0.5) / 2.0;
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Gini impurity of a probability vector: `1 − Σ p_i²`. Higher means less
/// committed output; the baseline ordering ranks descending scores first.
pub fn deepgini_score(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::NotNormalized);
    }
    let sum: f64 = probabilities.iter().sum();
    if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized);
    }
    Ok(1.0 - probabilities.iter().map(|p| p * p).sum::<f64>())
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "rank correlation samples",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::DegenerateSample("need at least 2 values"));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateSample("constant sample has no ranks"));
    }
    Ok(cov / (va * vb).sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut indexed: Vec<(usize, f64)> = values.iter().cloned().enumerate().collect();
    indexed.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i;
        while j + 1 < indexed.len() && indexed[j + 1].1 == indexed[i].1 {
            j += 1;
        }
        let average = (i + j) as f64 / 2.0 + 1.0;
        for item in &indexed[i..=j] {
            ranks[item.0] = average;
        }
        i = j + 1;
    }
    ranks
}

// --- special functions for the t distribution -----------------------------

/// Lanczos approximation of ln Γ(x) for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFICIENTS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_72,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311e-7,
    ];
    let x = x - 1.0;
    let mut sum = COEFFICIENTS[0];
    for (i, c) in COEFFICIENTS.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta function `I_x(a, b)` via the continued
/// fraction (Lentz's method), accurate to about 1e-10 over the t-test
/// parameter range.
fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const EPSILON: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPSILON {
            break;
        }
    }
    h
}

// --- report ----------------------------------------------------------------

/// One method's evaluation row. Serialized with the fixed key set
/// `rauc_100, rauc_200, rauc_300, rauc_500, rauc_all, robr, genrew, t, p`;
/// inapplicable entries are null.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub method: String,
    pub rauc_100: Option<f64>,
    pub rauc_200: Option<f64>,
    pub rauc_300: Option<f64>,
    pub rauc_500: Option<f64>,
    pub rauc_all: f64,
    pub robr: Option<f64>,
    pub genrew: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn new(method: impl Into<String>, rauc_all: f64) -> Self {
        MetricReport {
            method: method.into(),
            rauc_100: None,
            rauc_200: None,
            rauc_300: None,
            rauc_500: None,
            rauc_all,
            robr: None,
            genrew: None,
            t: None,
            p: None,
            warnings: Vec::new(),
        }
    }

    pub fn set_cutoff(&mut self, cutoff: usize, value: f64) {
        match cutoff {
            100 => self.rauc_100 = Some(value),
            200 => self.rauc_200 = Some(value),
            300 => self.rauc_300 = Some(value),
            500 => self.rauc_500 = Some(value),
            _ => {}
        }
    }
}

/// Aligned-column text table over a set of report rows.
pub fn render_table(reports: &[MetricReport]) -> String {
    let headers = [
        "method", "rauc_100", "rauc_200", "rauc_300", "rauc_500", "rauc_all", "robr", "genrew",
        "t", "p",
    ];
    let fmt = |v: Option<f64>| match v {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    };
    let mut rows: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for r in reports {
        rows.push(vec![
            r.method.clone(),
            fmt(r.rauc_100),
            fmt(r.rauc_200),
            fmt(r.rauc_300),
            fmt(r.rauc_500),
            format!("{:.4}", r.rauc_all),
            fmt(r.robr),
            fmt(r.genrew),
            fmt(r.t),
            match r.p {
                Some(p) => format!("{p:.3e}"),
                None => "n/a".into(),
            },
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rauc_ideal_ordering_is_one() {
        // 4 inputs, bugs at the first two ranks.
        let flags = [true, true, false, false];
        let order = [0, 1, 2, 3];
        assert_eq!(rauc_classification(&order, &flags, 4).unwrap(), 1.0);
    }

    #[test]
    fn rauc_hand_fixture() {
        // Bugs at ranks 1 and 3: cumulative 1,1,2,2 = 6; ideal 4·2+(2-4)/2 = 7.
        let flags = [true, false, true, false];
        let order = [0, 1, 2, 3];
        let value = rauc_classification(&order, &flags, 4).unwrap();
        assert!((value - 6.0 / 7.0).abs() < 1e-15);
        assert!((value - 0.857142).abs() < 1e-6);
    }

    #[test]
    fn rauc_no_bugs_is_one_by_convention() {
        let flags = [false, false, false];
        assert_eq!(rauc_classification(&[2, 0, 1], &flags, 3).unwrap(), 1.0);
    }

    /// Brute-force comparison for every bug placement with N ≤ 7: the
    /// closed-form denominator must equal the explicitly simulated ideal
    /// area, exactly.
    #[test]
    fn rauc_matches_brute_force_enumeration() {
        for n in 1..=7usize {
            for mask in 0..(1u32 << n) {
                let flags: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let order: Vec<usize> = (0..n).collect();
                let metric = rauc_classification(&order, &flags, n).unwrap();

                // Independent route: simulate the cumulative curve and the
                // ideal curve position by position.
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
                    let mut ideal_area = 0usize;
                    let mut cum = 0usize;
                    for i in 0..n {
                        if i < bugs {
                            cum += 1;
                        }
                        ideal_area += cum;
                    }
                    area as f64 / ideal_area as f64
                };
                assert_eq!(metric, expected, "n={n} mask={mask:b}");
            }
        }
    }

    #[test]
    fn rauc_minimum_when_bugs_last() {
        // Exhaustive: placing all bugs at the end minimizes the metric.
        for n in 2..=7usize {
            for bugs in 1..n {
                let order: Vec<usize> = (0..n).collect();
                let mut worst_flags = vec![false; n];
                for f in worst_flags.iter_mut().skip(n - bugs) {
                    *f = true;
                }
                let worst = rauc_classification(&order, &worst_flags, n).unwrap();
                for mask in 0..(1u32 << n) {
                    let flags: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                    if flags.iter().filter(|&&b| b).count() != bugs {
                        continue;
                    }
                    let value = rauc_classification(&order, &flags, n).unwrap();
                    assert!(value >= worst - 1e-15);
                }
            }
        }
    }

    #[test]
    fn rauc_invariant_to_shuffles_within_prefix_and_suffix() {
        // All-bug prefix and all-correct suffix can be permuted freely.
        let flags = [true, true, true, false, false, false, false];
        let orders = [
            [0, 1, 2, 3, 4, 5, 6],
            [2, 0, 1, 5, 3, 6, 4],
            [1, 2, 0, 6, 5, 4, 3],
        ];
        let base = rauc_classification(&orders[0], &flags, 7).unwrap();
        for order in &orders[1..] {
            assert_eq!(rauc_classification(order, &flags, 7).unwrap(), base);
        }
    }

    #[test]
    fn rauc_cutoff_clamps_and_prefix_convention_differs() {
        let flags = [true, false, true, false];
        let order = [0, 1, 2, 3];
        let clamped = rauc_classification(&order, &flags, 100).unwrap();
        let full = rauc_classification(&order, &flags, 4).unwrap();
        assert_eq!(clamped, full);

        // Prefix convention over the first 2: one bug within the prefix.
        let prefix =
            rauc_classification_with(&order, &flags, 2, BugCountConvention::PrefixOnly).unwrap();
        // Cumulative 1,1 = 2; ideal with N'=1: 2·1 + 0 = 2.
        assert_eq!(prefix, 1.0);
        let global = rauc_classification(&order, &flags, 2).unwrap();
        // Global N' = 2: ideal 2·2 + (2-4)/2 = 3; area 2.
        assert!((global - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rauc_regression_fixtures() {
        // Errors (3,1,2), identity order: (3+4+6)/(3+5+6) = 13/14.
        let mse = [3.0, 1.0, 2.0];
        let value = rauc_regression(&[0, 1, 2], &mse, 3).unwrap();
        assert!((value - 13.0 / 14.0).abs() < 1e-12);
        assert!((value - 0.928571).abs() < 1e-6);

        // Descending ideal gives exactly 1.
        assert_eq!(rauc_regression(&[0, 2, 1], &mse, 3).unwrap(), 1.0);

        // Reversed ideal on (3,2,1): (1+3+6)/(3+5+6) = 10/14.
        let mse = [3.0, 2.0, 1.0];
        let value = rauc_regression(&[2, 1, 0], &mse, 3).unwrap();
        assert!((value - 10.0 / 14.0).abs() < 1e-12);

        // All-zero error mass: 1 by convention.
        assert_eq!(rauc_regression(&[0, 1], &[0.0, 0.0], 2).unwrap(), 1.0);
        assert!(rauc_regression(&[0, 1], &[1.0, -0.5], 2).is_err());
    }

    #[test]
    fn rauc_regression_is_one_iff_nonincreasing() {
        let mse = [5.0, 3.0, 3.0, 1.0];
        assert_eq!(rauc_regression(&[0, 1, 2, 3], &mse, 4).unwrap(), 1.0);
        assert_eq!(rauc_regression(&[0, 2, 1, 3], &mse, 4).unwrap(), 1.0);
        assert!(rauc_regression(&[3, 0, 1, 2], &mse, 4).unwrap() < 1.0);
    }

    #[test]
    fn robr_fixtures() {
        assert_eq!(robr(0.9, 0.9).unwrap(), 100.0);
        let value = robr(0.85, 0.90).unwrap();
        assert!((value - 94.44444444444444).abs() < 1e-9);
        assert!(robr(0.5, 0.0).is_err());
    }

    #[test]
    fn genrew_fixtures() {
        // Always first: reward 1.
        assert_eq!(genrew(&[vec![1, 1], vec![1, 1]], 6).unwrap(), 1.0);
        // Always last: reward 1/n_pm.
        let worst = genrew(&[vec![6, 6]], 6).unwrap();
        assert!((worst - 1.0 / 6.0).abs() < 1e-15);
        // Ranks 1 and 2 equally often: (1 + 5/6)/2.
        let mixed = genrew(&[vec![1, 2]], 6).unwrap();
        assert!((mixed - 11.0 / 12.0).abs() < 1e-12);
        assert!((mixed - 0.91667).abs() < 1e-5);
        assert!(genrew(&[vec![0, 1]], 6).is_err());
        assert!(genrew(&[vec![7]], 6).is_err());
        assert!(genrew(&[], 6).is_err());
    }

    #[test]
    fn genrew_is_antitone_in_ranks() {
        let base = genrew(&[vec![2, 3], vec![1, 4]], 6).unwrap();
        let bumped = genrew(&[vec![2, 3], vec![1, 5]], 6).unwrap();
        assert!(bumped < base);
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let result = welch_t_test(&a, &a).unwrap();
        assert_eq!(result.t, 0.0);
        assert_eq!(result.p, 1.0);
    }

    #[test]
    fn welch_separated_samples_have_tiny_p() {
        // Hand-jittered near-constant samples, clearly separated.
        let a = [0.0, 1e-6, -1e-6, 2e-6, 0.0];
        let b = [1.0, 1.0 + 1e-6, 1.0 - 2e-6, 1.0, 1.0 + 2e-6];
        let result = welch_t_test(&a, &b).unwrap();
        assert!(result.p < 1e-4, "p = {}", result.p);
        assert!(result.t < 0.0);
    }

    #[test]
    fn welch_fixture_matches_hand_computation() {
        // a = (1,2,3,4), b = (2,4,6,8,10): worked by hand,
        // t = -3.5/sqrt(5/12 + 2) = -2.251436..., dof = 5.520788.
        let result = welch_t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!((result.t - -2.2514363231593695).abs() < 1e-12);
        assert!((result.dof - 5.520787746170677).abs() < 1e-12);
        // Reference p-value computed independently.
        assert!((result.p - 0.06913359319239236).abs() < 1e-10);
    }

    #[test]
    fn welch_degenerate_variance_errors() {
        assert!(welch_t_test(&[1.0, 1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    /// Quadrature oracle for the t CDF: integrate the unnormalized density
    /// `(1 + t²/ν)^(-(ν+1)/2)` and normalize numerically, avoiding every
    /// special function in the implementation path.
    fn t_cdf_quadrature(t: f64, dof: f64) -> f64 {
        let density = |x: f64| (1.0 + x * x / dof).powf(-(dof + 1.0) / 2.0);
        let simpson = |a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut sum = density(a) + density(b);
            for i in 1..n {
                let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
                sum += weight * density(a + i as f64 * h);
            }
            sum * h / 3.0
        };
        let limit = 400.0;
        let total = simpson(-limit, limit, 200_000);
        let below = simpson(-limit, t.min(limit), 200_000);
        below / total
    }

    #[test]
    fn t_cdf_matches_quadrature_and_references() {
        // Closed form for one degree of freedom: the Cauchy distribution.
        assert!((student_t_cdf(1.0, 1.0) - 0.75).abs() < 1e-10);
        // Reference values computed independently.
        assert!((student_t_cdf(2.0, 5.0) - 0.9490302605850709).abs() < 1e-10);
        assert!((student_t_cdf(0.5, 30.0) - 0.6896384975574363).abs() < 1e-10);
        assert!((student_t_cdf(3.5, 2.5) - 0.9738272265198398).abs() < 1e-10);
        // Quadrature oracle across a grid.
        for &(t, dof) in &[(0.7, 3.0), (-1.3, 8.0), (2.4, 5.5), (-0.2, 20.0)] {
            let oracle = t_cdf_quadrature(t, dof);
            let value = student_t_cdf(t, dof);
            assert!(
                (value - oracle).abs() < 1e-7,
                "t={t} dof={dof}: {value} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn deepgini_fixtures() {
        assert_eq!(deepgini_score(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        assert!((deepgini_score(&uniform).unwrap() - 0.9).abs() < 1e-12);
        let mixed = deepgini_score(&[0.7, 0.2, 0.1]).unwrap();
        assert!((mixed - 0.46).abs() < 1e-12);
        assert!(deepgini_score(&[0.7, 0.7]).is_err());
        assert!(deepgini_score(&[]).is_err());
        assert!(deepgini_score(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn deepgini_ordering_invariant_under_class_relabeling() {
        let vectors = [
            vec![0.7, 0.2, 0.1],
            vec![0.4, 0.35, 0.25],
            vec![0.98, 0.01, 0.01],
        ];
        let scores: Vec<f64> = vectors.iter().map(|v| deepgini_score(v).unwrap()).collect();
        let permuted: Vec<f64> = vectors
            .iter()
            .map(|v| {
                let relabeled = vec![v[2], v[0], v[1]];
                deepgini_score(&relabeled).unwrap()
            })
            .collect();
        assert_eq!(scores, permuted);
    }

    #[test]
    fn spearman_fixtures() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [10.0, 20.0, 30.0, 40.0];
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let reversed = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &reversed).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&a, &[1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn report_serialization_has_fixed_keys() {
        let mut report = MetricReport::new("certpri", 0.91);
        report.set_cutoff(100, 0.8);
        let json = serde_json::to_value(&report).unwrap();
        for key in [
            "method", "rauc_100", "rauc_200", "rauc_300", "rauc_500", "rauc_all", "robr", "genrew",
            "t", "p",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(json["rauc_200"], serde_json::Value::Null);
        assert_eq!(json["rauc_100"], serde_json::json!(0.8));

        let table = render_table(&[report]);
        assert!(table.contains("method"));
        assert!(table.contains("n/a"));
        assert!(table.contains("0.9100"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            /// Classification RAUC stays within [0, 1] under the global
            /// convention and equals 1 for the ideal ordering.
            #[test]
            fn rauc_bounded_and_ideal_is_one(
                flags in proptest::collection::vec(proptest::bool::ANY, 1..40)
            ) {
                let n = flags.len();
                let identity: Vec<usize> = (0..n).collect();
                let value = rauc_classification(&identity, &flags, n).unwrap();
                prop_assert!((0.0..=1.0).contains(&value));

                let mut ideal: Vec<usize> = (0..n).collect();
                ideal.sort_by_key(|&i| !flags[i]);
                let best = rauc_classification(&ideal, &flags, n).unwrap();
                prop_assert!((best - 1.0).abs() < 1e-12);
            }
        }
    }
}
