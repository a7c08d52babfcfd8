//! Self-contained validation suites: each one checks an estimator or
//! selector against an independent oracle (brute force, closed form, or
//! Monte Carlo) and writes a CSV audit trail. All suites are pure
//! functions of the seed, so repeated runs emit byte-identical files.

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dime::{kernel_dime, WeightScheme, WeightVector};
use crate::error::{Error, Result};
use crate::selection::{
    brute_force_optimal, estimate_noise, oracle_select, oracle_set, rdime_select_at,
    risk_of_indices,
};
use crate::synthetic::{
    gen_draw, mc_mse, mc_unbiasedness, mix_seed, recovery_experiment, NoiseModelParams,
    RecoveryConfig,
};

/// Outcome of one suite: its CSV artifact plus a pass/fail verdict.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Report for a whole `validate` invocation.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub suites: Vec<SuiteResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn write_csv(out_dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn join_f64(values: &[f64], sep: char) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(&sep.to_string())
}

/// Hard-threshold risk optimality on random instances against
/// exhaustive subset search.
fn suite_threshold_optimality(seed: u64, out_dir: &Path) -> Result<SuiteResult> {
    const INSTANCES: usize = 200;
    let normal = Normal::new(0.0, 2.0).expect("valid normal");
    let mut csv = String::from("instance,p,epsilon,selected_risk,optimal_risk,equal\n");
    let mut failures = 0usize;
    for i in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
        let p = rng.random_range(1..=12usize);
        let theta: Vec<f64> = (0..p).map(|_| normal.sample(&mut rng)).collect();
        let eps = rng.random_range(0.1..2.0f64);
        let selected = oracle_set(&theta, eps)?;
        let selected_risk = risk_of_indices(&selected, &theta, eps)?;
        let (_, optimal_risk) = brute_force_optimal(&theta, eps)?;
        let equal = selected_risk == optimal_risk;
        if !equal {
            failures += 1;
        }
        csv.push_str(&format!(
            "{i},{p},{eps},{selected_risk},{optimal_risk},{equal}\n"
        ));
    }
    write_csv(out_dir, "threshold_optimality.csv", &csv)?;
    Ok(SuiteResult {
        name: "threshold-optimality",
        passed: failures == 0,
        detail: format!("{}/{INSTANCES} instances match the exhaustive optimum", INSTANCES - failures),
    })
}

/// Per-dimension unbiasedness of the uniform-weight estimator, 4-stderr
/// bound with a one-rerun flake budget.
fn suite_unbiasedness(seed: u64, out_dir: &Path) -> Result<SuiteResult> {
    const P: usize = 16;
    const TRIALS: usize = 100_000;
    const MIN_DIMS_WITHIN: usize = 15;
    let normal = Normal::new(0.0, 2.0).expect("valid normal");
    let mut csv = String::from("m,attempt,dim,mean,stderr,target,within\n");
    let mut passed = true;
    let mut detail = Vec::new();
    for m in [2usize, 8] {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1_000 + m as u64));
        let theta: Vec<f64> = (0..P).map(|_| normal.sample(&mut rng)).collect();
        let sigmas: Vec<f64> = (0..m).map(|i| 0.4 + 0.05 * i as f64).collect();
        let params = NoiseModelParams::new(theta.clone(), 0.5, sigmas)?;

        let mut config_ok = false;
        for attempt in 0..2u64 {
            let mc_seed = mix_seed(seed, 2_000 + 10 * m as u64 + attempt);
            let report = mc_unbiasedness(&params, &WeightScheme::Uniform, TRIALS, mc_seed)?;
            let mut within = 0usize;
            for (j, th) in theta.iter().enumerate() {
                let target = th * th;
                let ok = (report.per_dim_mean[j] - target).abs() <= 4.0 * report.per_dim_stderr[j];
                if ok {
                    within += 1;
                }
                csv.push_str(&format!(
                    "{m},{attempt},{j},{},{},{target},{ok}\n",
                    report.per_dim_mean[j], report.per_dim_stderr[j]
                ));
            }
            detail.push(format!("M={m} attempt {attempt}: {within}/{P} dims within 4 stderr"));
            if within >= MIN_DIMS_WITHIN {
                config_ok = true;
                break;
            }
        }
        passed &= config_ok;
    }
    write_csv(out_dir, "unbiasedness.csv", &csv)?;
    Ok(SuiteResult {
        name: "unbiasedness",
        passed,
        detail: detail.join("; "),
    })
}

/// Closed-form MSE against Monte Carlo for three weight/noise settings.
fn suite_mse(seed: u64, out_dir: &Path) -> Result<SuiteResult> {
    const TRIALS: usize = 200_000;
    let uniform2 = WeightVector::new(vec![0.5, 0.5])?;
    let optimal = WeightVector::new(vec![0.8, 0.2])?;
    let configs: Vec<(&str, f64, f64, Vec<f64>, WeightVector)> = vec![
        ("uniform-equal-noise", 1.0, 0.5, vec![1.0, 1.0], uniform2.clone()),
        ("uniform-skewed-noise", 2.0, 0.25, vec![0.5, 1.0], uniform2),
        ("inverse-variance", 1.0, 0.5, vec![1.0, 2.0], optimal),
    ];
    let mut csv =
        String::from("config,theta_j,epsilon,sigmas,weights,empirical,closed,stderr,tolerance,within\n");
    let mut passed = true;
    let mut detail = Vec::new();
    for (idx, (name, theta_j, eps, sigmas, weights)) in configs.into_iter().enumerate() {
        let params = NoiseModelParams::new(vec![theta_j], eps, sigmas.clone())?;
        let report = mc_mse(&params, &weights, TRIALS, mix_seed(seed, 3_000 + idx as u64))?;
        let empirical = report.empirical_mse[0];
        let closed = report.closed_form_mse[0];
        let stderr = report.mse_stderr[0];
        let tolerance = (0.03 * closed).max(5.0 * stderr);
        let within = (empirical - closed).abs() <= tolerance;
        passed &= within;
        csv.push_str(&format!(
            "{name},{theta_j},{eps},{},{},{empirical},{closed},{stderr},{tolerance},{within}\n",
            join_f64(&sigmas, ';'),
            join_f64(weights.as_slice(), ';')
        ));
        detail.push(format!("{name}: |{empirical:.6}-{closed}| vs tol {tolerance:.6}"));
    }
    write_csv(out_dir, "mse_closed_form.csv", &csv)?;
    Ok(SuiteResult {
        name: "mse-closed-form",
        passed,
        detail: detail.join("; "),
    })
}

/// Inverse-variance weights dominate uniform weights: paired Monte
/// Carlo repetitions plus an exact closed-form sweep over random
/// simplex weights.
fn suite_optimal_weights(seed: u64, out_dir: &Path) -> Result<SuiteResult> {
    const REPS: u64 = 5;
    const TRIALS: usize = 30_000;
    const SIMPLEX_DRAWS: usize = 1_000;
    let sigmas: Vec<f64> = vec![1.0, 2.0, 4.0];
    let inv_sq: Vec<f64> = sigmas.iter().map(|s| s.powi(-2)).collect();
    let total: f64 = inv_sq.iter().sum();
    let star = WeightVector::new(inv_sq.iter().map(|w| w / total).collect())?;
    let uniform = WeightVector::new(vec![1.0 / 3.0; 3])?;
    let params = NoiseModelParams::new(vec![1.0], 0.5, sigmas.clone())?;

    let mut csv = String::from("part,index,star_value,other_value,ok\n");
    let mut passed = true;

    for rep in 0..REPS {
        let mc_seed = mix_seed(seed, 4_000 + rep);
        let with_star = mc_mse(&params, &star, TRIALS, mc_seed)?.empirical_mse[0];
        let with_uniform = mc_mse(&params, &uniform, TRIALS, mc_seed)?.empirical_mse[0];
        let ok = with_star < with_uniform;
        passed &= ok;
        csv.push_str(&format!("paired-mc,{rep},{with_star},{with_uniform},{ok}\n"));
    }

    let variance_sum = |w: &[f64]| -> f64 {
        w.iter()
            .zip(&sigmas)
            .map(|(wi, si)| si * si * wi * wi)
            .sum()
    };
    let star_sum = variance_sum(star.as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 5_000));
    for i in 0..SIMPLEX_DRAWS {
        let raw: Vec<f64> = (0..sigmas.len())
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / sum).collect();
        let other_sum = variance_sum(&w);
        let ok = star_sum <= other_sum;
        passed &= ok;
        csv.push_str(&format!("simplex,{i},{star_sum},{other_sum},{ok}\n"));
    }

    write_csv(out_dir, "optimal_weights.csv", &csv)?;
    Ok(SuiteResult {
        name: "optimal-weights",
        passed,
        detail: format!(
            "{REPS} paired repetitions and {SIMPLEX_DRAWS} simplex draws against w*"
        ),
    })
}

/// Support recovery in a regime where the noise floor is estimable:
/// the threshold rule must reproduce the risk-optimal set in every
/// trial. `flip_noise_sign` corrupts the estimated noise floor to prove
/// the suite actually exercises the threshold.
fn suite_recovery(seed: u64, out_dir: &Path, flip_noise_sign: bool) -> Result<SuiteResult> {
    let config = RecoveryConfig {
        p: 128,
        support_size: 4,
        theta_magnitude: 2.0,
        epsilon: 0.3,
        sigmas: vec![1e-4; 4],
        trials: 50,
        seed: mix_seed(seed, 6_000),
    };
    let mut theta = vec![0.0; config.p];
    for t in theta.iter_mut().take(config.support_size) {
        *t = config.theta_magnitude;
    }
    let params = NoiseModelParams::new(theta, config.epsilon, config.sigmas.clone())?;
    let m = params.num_docs();
    let weights = WeightVector::new(vec![1.0 / m as f64; m])?;
    let optimal_set = oracle_select(params.theta(), params.epsilon())?.retained_indices();

    let mut csv = String::from("trial,noise_floor,selected,optimal,exact\n");
    let mut exact = 0usize;
    for trial in 0..config.trials {
        let draw = gen_draw(&params, mix_seed(config.seed, trial as u64));
        let u = kernel_dime(&draw.q, &draw.docs, &weights)?;
        let noise = estimate_noise(&draw.q, u.as_slice())?;
        let threshold = if flip_noise_sign {
            (-noise.raw).max(0.0)
        } else {
            noise.value
        };
        let selected = rdime_select_at(u.as_slice(), threshold)?.retained_indices();
        let is_exact = selected == optimal_set;
        if is_exact {
            exact += 1;
        }
        csv.push_str(&format!(
            "{trial},{threshold},{},{},{is_exact}\n",
            selected.len(),
            optimal_set.len()
        ));
    }
    write_csv(out_dir, "recovery.csv", &csv)?;

    // The faithful path must agree with the public experiment API.
    if !flip_noise_sign {
        let stats = recovery_experiment(&config)?;
        if stats.exact_matches != exact {
            return Err(Error::invalid(format!(
                "recovery suite disagrees with recovery_experiment: {exact} vs {}",
                stats.exact_matches
            )));
        }
    }

    Ok(SuiteResult {
        name: "recovery",
        passed: exact == config.trials,
        detail: format!("{exact}/{} trials recovered the optimal set exactly", config.trials),
    })
}

/// Runs every suite, writing CSV artifacts into `out_dir`. The result
/// lists one verdict per suite; `flip_noise_sign` is a test-only fault
/// injection that must make the recovery suite fail.
pub fn run_validate(seed: u64, out_dir: &Path, flip_noise_sign: bool) -> Result<ValidationReport> {
    let suites = vec![
        suite_threshold_optimality(seed, out_dir)?,
        suite_unbiasedness(seed, out_dir)?,
        suite_mse(seed, out_dir)?,
        suite_optimal_weights(seed, out_dir)?,
        suite_recovery(seed, out_dir, flip_noise_sign)?,
    ];
    let report = ValidationReport { suites };

    let mut summary = String::from("suite,passed,detail\n");
    for s in &report.suites {
        summary.push_str(&format!("{},{},\"{}\"\n", s.name, s.passed, s.detail));
    }
    write_csv(out_dir, "summary.csv", &summary)?;
    Ok(report)
}
