//! Risk-based and fixed-budget dimension selection.
//!
//! Under the additive noise model q = θ + εz, scoring with a dimension
//! subset S costs |S|ε² in retained noise plus Σ_{i∉S} θᵢ² in discarded
//! signal. The minimizer of that risk is the hard-threshold set
//! {i : θᵢ² > ε²}; the data-driven variant thresholds importance
//! estimates against a noise variance estimated from the query itself.

use crate::error::{Error, Result};

/// Largest dimension count for exhaustive subset search.
const BRUTE_FORCE_MAX_DIM: usize = 20;

/// Boolean retention mask over embedding dimensions, tagged with the
/// rule that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    retained: Vec<bool>,
    tag: String,
}

impl SelectionMask {
    /// Mask retaining exactly `indices` out of `dim` dimensions.
    pub fn from_indices(dim: usize, indices: &[usize], tag: impl Into<String>) -> Result<Self> {
        let mut retained = vec![false; dim];
        for &i in indices {
            if i >= dim {
                return Err(Error::invalid(format!("index {i} out of range for dim {dim}")));
            }
            retained[i] = true;
        }
        Ok(Self {
            retained,
            tag: tag.into(),
        })
    }

    /// Mask retaining every dimension.
    pub fn full(dim: usize, tag: impl Into<String>) -> Self {
        Self {
            retained: vec![true; dim],
            tag: tag.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.retained.len()
    }

    pub fn is_retained(&self, i: usize) -> bool {
        self.retained[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.retained
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&b| b).count()
    }

    /// Retained dimension count over total dimensions.
    pub fn retained_fraction(&self) -> f64 {
        self.retained_count() as f64 / self.retained.len() as f64
    }

    /// Retained indices in ascending order.
    pub fn retained_indices(&self) -> Vec<usize> {
        self.retained
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Query-side noise variance estimate. `value` is clamped at zero; the
/// unclamped mean is kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimate {
    pub value: f64,
    pub raw: f64,
}

impl NoiseEstimate {
    pub fn clamped(&self) -> bool {
        self.raw < 0.0
    }
}

/// How a query's retention mask is chosen in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionPolicy {
    /// Retain all dimensions.
    Baseline,
    /// Retain the ⌊k·p⌋ largest importance scores (at least one);
    /// `absolute` ranks by magnitude instead of raw value.
    TopK { k: f64, absolute: bool },
    /// Threshold importance scores at the estimated noise variance.
    Rdime,
    /// Threshold true squared signal at the true noise variance;
    /// only available when ground truth is known.
    Oracle,
}

impl SelectionPolicy {
    /// Parses `baseline`, `topk:<k>`, `topk-abs:<k>`, `rdime`, `oracle`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => return Ok(Self::Baseline),
            "rdime" => return Ok(Self::Rdime),
            "oracle" => return Ok(Self::Oracle),
            _ => {}
        }
        for (prefix, absolute) in [("topk:", false), ("topk-abs:", true)] {
            if let Some(rest) = s.strip_prefix(prefix) {
                let k: f64 = rest
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad top-k fraction {rest:?}")))?;
                if !k.is_finite() || k <= 0.0 || k > 1.0 {
                    return Err(Error::invalid(format!(
                        "top-k fraction {k} outside (0, 1]"
                    )));
                }
                return Ok(Self::TopK { k, absolute });
            }
        }
        Err(Error::invalid(format!("unknown selection policy {s:?}")))
    }
}

impl std::fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Baseline => write!(f, "baseline"),
            Self::TopK { k, absolute: false } => write!(f, "topk:{k}"),
            Self::TopK { k, absolute: true } => write!(f, "topk-abs:{k}"),
            Self::Rdime => write!(f, "rdime"),
            Self::Oracle => write!(f, "oracle"),
        }
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid("score vector must be non-empty"));
    }
    for (i, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::invalid(format!("non-finite score at dimension {i}")));
        }
    }
    Ok(())
}

/// Retains the m = max(1, ⌊k·p⌋) largest scores; ties break toward the
/// lower index. With `absolute`, scores are ranked by magnitude.
pub fn topk_select(scores: &[f64], k: f64, absolute: bool) -> Result<SelectionMask> {
    check_scores(scores)?;
    if !k.is_finite() || k <= 0.0 || k > 1.0 {
        return Err(Error::invalid(format!("top-k fraction {k} outside (0, 1]")));
    }
    let p = scores.len();
    let m = ((k * p as f64).floor() as usize).max(1);
    let key = |i: usize| if absolute { scores[i].abs() } else { scores[i] };
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    idx.truncate(m);
    let tag = if absolute {
        format!("topk-abs:{k}")
    } else {
        format!("topk:{k}")
    };
    SelectionMask::from_indices(p, &idx, tag)
}

/// Estimates the noise variance from the query and its importance
/// vector: mean of qᵢ² − uᵢ, clamped at zero.
pub fn estimate_noise(query: &[f64], importance: &[f64]) -> Result<NoiseEstimate> {
    if query.len() != importance.len() {
        return Err(Error::DimMismatch {
            left: query.len(),
            right: importance.len(),
        });
    }
    check_scores(query)?;
    check_scores(importance)?;
    let p = query.len() as f64;
    let raw = query
        .iter()
        .zip(importance)
        .map(|(q, u)| q * q - u)
        .sum::<f64>()
        / p;
    Ok(NoiseEstimate {
        value: raw.max(0.0),
        raw,
    })
}

/// Retains dimensions whose importance exceeds the noise variance
/// estimated from the query itself. An empty result falls back to the
/// full mask, tagged `rdime-fallback`.
pub fn rdime_select(query: &[f64], importance: &[f64]) -> Result<SelectionMask> {
    let noise = estimate_noise(query, importance)?;
    rdime_select_at(importance, noise.value)
}

/// The thresholding half of [`rdime_select`], for callers that already
/// hold a noise variance.
pub fn rdime_select_at(importance: &[f64], eps_sq: f64) -> Result<SelectionMask> {
    check_scores(importance)?;
    if !eps_sq.is_finite() || eps_sq < 0.0 {
        return Err(Error::invalid(format!("noise variance {eps_sq}")));
    }
    let indices: Vec<usize> = importance
        .iter()
        .enumerate()
        .filter_map(|(i, &u)| (u > eps_sq).then_some(i))
        .collect();
    if indices.is_empty() {
        return Ok(SelectionMask::full(importance.len(), "rdime-fallback"));
    }
    SelectionMask::from_indices(importance.len(), &indices, "rdime")
}

/// The risk-optimal index set {i : θᵢ² > ε²}, possibly empty.
pub fn oracle_set(theta: &[f64], eps: f64) -> Result<Vec<usize>> {
    check_scores(theta)?;
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::invalid(format!("noise scale {eps}")));
    }
    let eps_sq = eps * eps;
    Ok(theta
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| (t * t > eps_sq).then_some(i))
        .collect())
}

/// Mask form of [`oracle_set`]; an empty optimum falls back to the full
/// mask, tagged `oracle-fallback`.
pub fn oracle_select(theta: &[f64], eps: f64) -> Result<SelectionMask> {
    let indices = oracle_set(theta, eps)?;
    if indices.is_empty() {
        return Ok(SelectionMask::full(theta.len(), "oracle-fallback"));
    }
    SelectionMask::from_indices(theta.len(), &indices, "oracle")
}

/// Risk of scoring with exactly `indices` retained:
/// |S|·ε² + Σ_{i∉S} θᵢ², with the discarded-signal sum accumulated in
/// ascending index order.
pub fn risk_of_indices(indices: &[usize], theta: &[f64], eps: f64) -> Result<f64> {
    check_scores(theta)?;
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::invalid(format!("noise scale {eps}")));
    }
    let mut retained = vec![false; theta.len()];
    for &i in indices {
        if i >= theta.len() {
            return Err(Error::invalid(format!(
                "index {i} out of range for dim {}",
                theta.len()
            )));
        }
        retained[i] = true;
    }
    let count = retained.iter().filter(|&&b| b).count();
    let mut discarded = 0.0;
    for (i, &t) in theta.iter().enumerate() {
        if !retained[i] {
            discarded += t * t;
        }
    }
    Ok(count as f64 * eps * eps + discarded)
}

/// Risk of a retention mask under ground truth (θ, ε).
pub fn risk(mask: &SelectionMask, theta: &[f64], eps: f64) -> Result<f64> {
    if mask.dim() != theta.len() {
        return Err(Error::DimMismatch {
            left: mask.dim(),
            right: theta.len(),
        });
    }
    risk_of_indices(&mask.retained_indices(), theta, eps)
}

/// Exhaustive minimum-risk subset over all 2^p candidates (p ≤ 20).
/// When several subsets tie, the hard-threshold set is preferred;
/// otherwise the first minimizer in bitmask order wins.
pub fn brute_force_optimal(theta: &[f64], eps: f64) -> Result<(Vec<usize>, f64)> {
    check_scores(theta)?;
    let p = theta.len();
    if p > BRUTE_FORCE_MAX_DIM {
        return Err(Error::invalid(format!(
            "exhaustive search supports at most {BRUTE_FORCE_MAX_DIM} dimensions, got {p}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for bits in 0_u32..(1_u32 << p) {
        let indices: Vec<usize> = (0..p).filter(|i| bits >> i & 1 == 1).collect();
        let r = risk_of_indices(&indices, theta, eps)?;
        match &best {
            Some((_, best_r)) if r >= *best_r => {}
            _ => best = Some((indices, r)),
        }
    }
    let (mut best_set, best_risk) = best.unwrap();
    let canonical = oracle_set(theta, eps)?;
    if risk_of_indices(&canonical, theta, eps)? == best_risk {
        best_set = canonical;
    }
    Ok((best_set, best_risk))
}
