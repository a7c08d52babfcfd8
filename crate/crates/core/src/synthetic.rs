//! Synthetic Gaussian lab.
//!
//! Draws follow the additive model q = θ + ε·z, d⁽ⁱ⁾ = θ + σᵢ·z⁽ⁱ⁾ with
//! z, z⁽ⁱ⁾ ~ N(0, I_p) i.i.d. Monte Carlo suites check that the
//! uniform-weight kernel estimate is unbiased for θ², that its MSE
//! matches the closed form (θⱼ² + ε²)Σσᵢ²wᵢ² + ε²θⱼ², and that the
//! data-driven selection recovers the risk-optimal dimension set when
//! noise is small. Everything is a pure function of (params, seed,
//! trials): per-trial seeds come from a 64-bit mix of the master seed
//! and trial index, and parallel accumulation runs over fixed chunk
//! boundaries so results are independent of thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dime::{kernel_dime, WeightScheme, WeightVector};
use crate::error::{Error, Result};
use crate::selection::{estimate_noise, oracle_select, oracle_set, rdime_select_at};

/// Trials per parallel accumulation chunk.
const MC_CHUNK: usize = 4096;

/// Ground truth for the Gaussian model: latent signal, query noise
/// scale, and per-document noise scales (non-decreasing).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModelParams {
    theta: Vec<f64>,
    epsilon: f64,
    sigmas: Vec<f64>,
}

impl NoiseModelParams {
    pub fn new(theta: Vec<f64>, epsilon: f64, sigmas: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("theta must be non-empty"));
        }
        for (i, t) in theta.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::invalid(format!("non-finite theta at dimension {i}")));
            }
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::invalid(format!("epsilon {epsilon}")));
        }
        if sigmas.is_empty() {
            return Err(Error::invalid("sigmas must be non-empty"));
        }
        for (i, &s) in sigmas.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid(format!("sigma {s} at index {i}")));
            }
            if i > 0 && s < sigmas[i - 1] {
                return Err(Error::invalid("sigmas must be non-decreasing"));
            }
        }
        Ok(Self {
            theta,
            epsilon,
            sigmas,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn num_docs(&self) -> usize {
        self.sigmas.len()
    }
}

/// One sampled (query, documents) pair with its noise draws retained for
/// white-box checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDraw {
    pub q: Vec<f64>,
    pub docs: Vec<Vec<f64>>,
    pub z_query: Vec<f64>,
    pub z_docs: Vec<Vec<f64>>,
    pub seed: u64,
}

/// splitmix64 stream element `index` of the stream seeded at `master`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Samples one draw from the model; deterministic per seed.
pub fn gen_draw(params: &NoiseModelParams, seed: u64) -> SyntheticDraw {
    let p = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_query = standard_normals(&mut rng, p);
    let z_docs: Vec<Vec<f64>> = (0..params.num_docs())
        .map(|_| standard_normals(&mut rng, p))
        .collect();
    let q = params
        .theta
        .iter()
        .zip(&z_query)
        .map(|(t, z)| t + params.epsilon * z)
        .collect();
    let docs = params
        .sigmas
        .iter()
        .zip(&z_docs)
        .map(|(s, zs)| {
            params
                .theta
                .iter()
                .zip(zs)
                .map(|(t, z)| t + s * z)
                .collect()
        })
        .collect();
    SyntheticDraw {
        q,
        docs,
        z_query,
        z_docs,
        seed,
    }
}

/// Monte Carlo summary: per-dimension estimate means and standard
/// errors, plus empirical-vs-closed-form MSE when the suite computes it
/// (empty vectors otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub trials: usize,
    pub per_dim_mean: Vec<f64>,
    pub per_dim_stderr: Vec<f64>,
    pub empirical_mse: Vec<f64>,
    pub closed_form_mse: Vec<f64>,
    pub mse_stderr: Vec<f64>,
}

/// Per-dimension running sums accumulated chunk-by-chunk in a fixed
/// order.
struct Accumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    err_sq_sum: Vec<f64>,
    err_sq_sum_sq: Vec<f64>,
}

impl Accumulator {
    fn zero(p: usize) -> Self {
        Self {
            sum: vec![0.0; p],
            sum_sq: vec![0.0; p],
            err_sq_sum: vec![0.0; p],
            err_sq_sum_sq: vec![0.0; p],
        }
    }

    fn add_estimate(&mut self, u: &[f64], target_sq: &[f64]) {
        for j in 0..u.len() {
            self.sum[j] += u[j];
            self.sum_sq[j] += u[j] * u[j];
            let err_sq = (u[j] - target_sq[j]) * (u[j] - target_sq[j]);
            self.err_sq_sum[j] += err_sq;
            self.err_sq_sum_sq[j] += err_sq * err_sq;
        }
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        for j in 0..self.sum.len() {
            self.sum[j] += other.sum[j];
            self.sum_sq[j] += other.sum_sq[j];
            self.err_sq_sum[j] += other.err_sq_sum[j];
            self.err_sq_sum_sq[j] += other.err_sq_sum_sq[j];
        }
        self
    }
}

fn stderr_from_sums(sum: f64, sum_sq: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

/// Runs `trials` draws, estimating u per draw, and accumulates
/// per-dimension statistics deterministically across threads.
fn mc_run(
    params: &NoiseModelParams,
    weights: &WeightVector,
    trials: usize,
    master_seed: u64,
) -> Result<Accumulator> {
    if trials < 2 {
        return Err(Error::invalid("Monte Carlo needs at least 2 trials"));
    }
    if weights.len() != params.num_docs() {
        return Err(Error::invalid(format!(
            "{} weights for {} document noise scales",
            weights.len(),
            params.num_docs()
        )));
    }
    let p = params.dim();
    let target_sq: Vec<f64> = params.theta.iter().map(|t| t * t).collect();
    let n_chunks = trials.div_ceil(MC_CHUNK);
    let partials: Vec<Accumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * MC_CHUNK;
            let hi = ((chunk + 1) * MC_CHUNK).min(trials);
            let mut acc = Accumulator::zero(p);
            for trial in lo..hi {
                let draw = gen_draw(params, mix_seed(master_seed, trial as u64));
                let u = kernel_dime(&draw.q, &draw.docs, weights)
                    .expect("synthetic draw dims are consistent");
                acc.add_estimate(u.as_slice(), &target_sq);
            }
            acc
        })
        .collect();
    Ok(partials
        .into_iter()
        .fold(Accumulator::zero(p), Accumulator::merge))
}

/// Estimates the per-dimension mean of u over repeated draws with
/// uniform weights — the configuration under which u is unbiased
/// for θ².
pub fn mc_unbiasedness(
    params: &NoiseModelParams,
    scheme: &WeightScheme,
    trials: usize,
    master_seed: u64,
) -> Result<McReport> {
    if *scheme != WeightScheme::Uniform {
        return Err(Error::invalid(
            "unbiasedness holds for uniform weights only; other schemes have no such guarantee",
        ));
    }
    let m = params.num_docs();
    let weights = WeightVector::new(vec![1.0 / m as f64; m])?;
    let acc = mc_run(params, &weights, trials, master_seed)?;
    let nf = trials as f64;
    Ok(McReport {
        trials,
        per_dim_mean: acc.sum.iter().map(|s| s / nf).collect(),
        per_dim_stderr: (0..params.dim())
            .map(|j| stderr_from_sums(acc.sum[j], acc.sum_sq[j], trials))
            .collect(),
        empirical_mse: Vec::new(),
        closed_form_mse: Vec::new(),
        mse_stderr: Vec::new(),
    })
}

/// Closed-form MSE of one dimension's estimate under deterministic
/// weights: (θⱼ² + ε²)·Σᵢσᵢ²wᵢ² + ε²·θⱼ².
pub fn mse_closed_form(
    theta_j: f64,
    epsilon: f64,
    sigmas: &[f64],
    weights: &WeightVector,
) -> Result<f64> {
    if sigmas.len() != weights.len() {
        return Err(Error::DimMismatch {
            left: sigmas.len(),
            right: weights.len(),
        });
    }
    let sw: f64 = sigmas
        .iter()
        .zip(weights.as_slice())
        .map(|(s, w)| s * s * w * w)
        .sum();
    let t_sq = theta_j * theta_j;
    let e_sq = epsilon * epsilon;
    Ok((t_sq + e_sq) * sw + e_sq * t_sq)
}

/// Empirical MSE of u against θ² per dimension, next to the closed form.
pub fn mc_mse(
    params: &NoiseModelParams,
    weights: &WeightVector,
    trials: usize,
    master_seed: u64,
) -> Result<McReport> {
    let acc = mc_run(params, weights, trials, master_seed)?;
    let nf = trials as f64;
    let closed: Result<Vec<f64>> = params
        .theta
        .iter()
        .map(|&t| mse_closed_form(t, params.epsilon, &params.sigmas, weights))
        .collect();
    Ok(McReport {
        trials,
        per_dim_mean: acc.sum.iter().map(|s| s / nf).collect(),
        per_dim_stderr: (0..params.dim())
            .map(|j| stderr_from_sums(acc.sum[j], acc.sum_sq[j], trials))
            .collect(),
        empirical_mse: acc.err_sq_sum.iter().map(|s| s / nf).collect(),
        closed_form_mse: closed?,
        mse_stderr: (0..params.dim())
            .map(|j| stderr_from_sums(acc.err_sq_sum[j], acc.err_sq_sum_sq[j], trials))
            .collect(),
    })
}

/// Configuration for the end-to-end recovery experiment: a sparse θ with
/// `support_size` dimensions at ±`theta_magnitude`, estimated with
/// uniform weights over `sigmas.len()` documents per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub p: usize,
    pub support_size: usize,
    pub theta_magnitude: f64,
    pub epsilon: f64,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Aggregate agreement between the selected set and the risk-optimal
/// set across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryStats {
    pub trials: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    /// Trials whose selected set equals the risk-optimal set exactly.
    pub exact_matches: usize,
    /// Trials where the optimal set was empty and fell back to full.
    pub degenerate_trials: usize,
    /// Trials whose noise-variance estimate went negative and clamped
    /// to zero, leaving the threshold at 0.
    pub clamped_noise_trials: usize,
}

/// Per-trial data-driven selection versus the ground-truth optimum.
pub fn recovery_experiment(config: &RecoveryConfig) -> Result<RecoveryStats> {
    if config.support_size > config.p {
        return Err(Error::invalid(format!(
            "support size {} exceeds dimension {}",
            config.support_size, config.p
        )));
    }
    if config.trials == 0 {
        return Err(Error::invalid("recovery needs at least 1 trial"));
    }
    let mut theta = vec![0.0; config.p];
    for t in theta.iter_mut().take(config.support_size) {
        *t = config.theta_magnitude;
    }
    let params = NoiseModelParams::new(theta, config.epsilon, config.sigmas.clone())?;
    let m = params.num_docs();
    let weights = WeightVector::new(vec![1.0 / m as f64; m])?;
    let optimal = oracle_select(params.theta(), params.epsilon())?;
    let degenerate_run = oracle_set(params.theta(), params.epsilon())?.is_empty();
    let optimal_set = optimal.retained_indices();

    let results: Vec<(f64, f64, f64, bool, bool)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let draw = gen_draw(&params, mix_seed(config.seed, trial as u64));
            let u = kernel_dime(&draw.q, &draw.docs, &weights)
                .expect("synthetic draw dims are consistent");
            let noise = estimate_noise(&draw.q, u.as_slice())
                .expect("synthetic draw dims are consistent");
            let selected = rdime_select_at(u.as_slice(), noise.value)
                .expect("importance scores are finite")
                .retained_indices();
            let inter = selected.iter().filter(|i| optimal_set.contains(i)).count() as f64;
            let precision = inter / selected.len() as f64;
            let recall = inter / optimal_set.len() as f64;
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (
                precision,
                recall,
                f1,
                selected == optimal_set,
                noise.clamped(),
            )
        })
        .collect();

    let nf = config.trials as f64;
    Ok(RecoveryStats {
        trials: config.trials,
        mean_precision: results.iter().map(|r| r.0).sum::<f64>() / nf,
        mean_recall: results.iter().map(|r| r.1).sum::<f64>() / nf,
        mean_f1: results.iter().map(|r| r.2).sum::<f64>() / nf,
        exact_matches: results.iter().filter(|r| r.3).count(),
        degenerate_trials: if degenerate_run { config.trials } else { 0 },
        clamped_noise_trials: results.iter().filter(|r| r.4).count(),
    })
}
