//! Paired significance tests and multiple-comparison correction.
//!
//! The paired t-test is two-sided; the Wilcoxon signed-rank test is
//! one-sided (alternative: first sample greater), reported through its
//! negative-rank sum W⁻, exact for n ≤ 20 and normal-approximated with
//! tie and continuity corrections above that. Test routing screens the
//! differences with Jarque–Bera against the χ²(2) 0.95 quantile.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// χ²(2) quantile at 0.95; Jarque–Bera statistics above it reject
/// normality.
pub const JB_NORMALITY_CUTOFF: f64 = 5.991_464_547_107_979;

/// Exact Wilcoxon enumeration is used up to this sample size.
const WILCOXON_EXACT_MAX_N: usize = 20;

/// Samples smaller than this always route to Wilcoxon.
const SMALL_SAMPLE_GUARD: usize = 8;

/// Outcome of one paired test.
#[derive(Debug, Clone, PartialEq)]
pub struct SigTestResult {
    pub test_name: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Paired-sample count (for Wilcoxon, before dropping zeros).
    pub n: usize,
    /// Set by the Holm–Bonferroni step, false until corrected.
    pub corrected_reject: bool,
    /// Zero-variance or all-zero-difference inputs.
    pub degenerate: bool,
}

fn paired_diffs(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    for (i, d) in diffs.iter().enumerate() {
        if !d.is_finite() {
            return Err(Error::invalid(format!("non-finite difference at pair {i}")));
        }
    }
    Ok(diffs)
}

/// Two-sided paired Student's t-test of x against y.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<SigTestResult> {
    let diffs = paired_diffs(x, y)?;
    let n = diffs.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        // All differences identical: no spread to test against.
        let (statistic, p_value) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        return Ok(SigTestResult {
            test_name: "t-test".into(),
            statistic,
            p_value,
            n,
            corrected_reject: false,
            degenerate: true,
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::invalid(format!("t distribution: {e}")))?;
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(SigTestResult {
        test_name: "t-test".into(),
        statistic: t,
        p_value: p.clamp(0.0, 1.0),
        n,
        corrected_reject: false,
        degenerate: false,
    })
}

/// Average ranks of |d| with ties sharing their group mean rank.
/// Returns (signed diffs, ranks) with zero differences already dropped.
fn signed_ranks(diffs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let mut order: Vec<usize> = (0..nonzero.len()).collect();
    order.sort_by(|&a, &b| nonzero[a].abs().partial_cmp(&nonzero[b].abs()).unwrap());
    let mut ranks = vec![0.0; nonzero.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs()
        {
            j += 1;
        }
        // Positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    (nonzero, ranks)
}

/// One-sided Wilcoxon signed-rank test (alternative: x > y). Zero
/// differences are dropped; statistic is the negative-rank sum W⁻.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<SigTestResult> {
    let diffs = paired_diffs(x, y)?;
    let n_input = diffs.len();
    if n_input == 0 {
        return Err(Error::invalid("Wilcoxon test needs at least 1 pair"));
    }
    let (nonzero, ranks) = signed_ranks(&diffs);
    let n = nonzero.len();
    if n == 0 {
        return Ok(SigTestResult {
            test_name: "wilcoxon".into(),
            statistic: 0.0,
            p_value: 1.0,
            n: n_input,
            corrected_reject: false,
            degenerate: true,
        });
    }
    let w_minus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d < 0.0)
        .map(|(_, r)| r)
        .sum();

    let p = if n <= WILCOXON_EXACT_MAX_N {
        // Under H₀ every sign pattern is equally likely; count patterns
        // whose negative-rank sum is at most the observed one.
        let total = 1u64 << n;
        let mut at_most = 0u64;
        for mask in 0..total {
            let mut sum = 0.0;
            for (bit, r) in ranks.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    sum += r;
                }
            }
            if sum <= w_minus + 1e-9 {
                at_most += 1;
            }
        }
        at_most as f64 / total as f64
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // Tie correction subtracts Σ(t³ − t)/48 over tie groups.
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (w_minus + 0.5 - mean) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        normal.cdf(z)
    };

    Ok(SigTestResult {
        test_name: "wilcoxon".into(),
        statistic: w_minus,
        p_value: p.clamp(0.0, 1.0),
        n: n_input,
        corrected_reject: false,
        degenerate: false,
    })
}

/// Holm–Bonferroni step-down correction; booleans in input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    for (i, &p) in p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("p-value {p} at index {i}")));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut reject = vec![false; m];
    for (step, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha / (m - step) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    Ok(reject)
}

/// Jarque–Bera normality statistic from sample skewness and kurtosis;
/// `None` when the sample has no spread.
pub fn jarque_bera(sample: &[f64]) -> Option<f64> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let m2 = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if m2 == 0.0 {
        return None;
    }
    let m3 = sample.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
    let m4 = sample.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    Some(nf / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0))
}

/// Which paired test to run on a difference sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    TTest,
    Wilcoxon,
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestKind::TTest => write!(f, "t-test"),
            TestKind::Wilcoxon => write!(f, "wilcoxon"),
        }
    }
}

/// Routes to the t-test only for samples that look normal: at least 8
/// values, non-degenerate, Jarque–Bera below the χ²(2) 0.95 quantile.
pub fn select_test(diffs: &[f64]) -> TestKind {
    if diffs.len() < SMALL_SAMPLE_GUARD {
        return TestKind::Wilcoxon;
    }
    match jarque_bera(diffs) {
        Some(jb) if jb < JB_NORMALITY_CUTOFF => TestKind::TTest,
        _ => TestKind::Wilcoxon,
    }
}

/// Runs the routed test: two-sided t or one-sided-greater Wilcoxon.
pub fn routed_test(x: &[f64], y: &[f64]) -> Result<SigTestResult> {
    let diffs = paired_diffs(x, y)?;
    match select_test(&diffs) {
        TestKind::TTest => paired_t_test(x, y),
        TestKind::Wilcoxon => wilcoxon_signed_rank(x, y),
    }
}
