//! Monte Carlo studies of the estimator's large-sample behavior:
//! consistency, asymptotic normality, moment convergence, LLN scaling of the
//! likelihood-separation functional, and the identifiability curve.
//!
//! Every study is a pure function of (model, config, base_seed): replications
//! draw disjoint counter-derived streams and aggregation is order-independent.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimate::{estimate_mle, fisher_information};
use crate::filter::FilterState;
use crate::model::{gamma_rate, ParamModel};
use crate::rng::{stream_id, RngStream};
use crate::simulate::{sample_chain_path, sample_observations, ObsPath};
use crate::stats;
use crate::{Error, Result};

/// Which study produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Consistency,
    Normality,
    Moments,
    Lln,
    Identifiability,
}

/// One replication: its index, its stream seed, and named scalar results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub index: u64,
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
}

/// A named pass/fail verdict with the value and threshold that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

/// Configuration snapshot stored in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub theta0: f64,
    pub dt: f64,
    pub m: usize,
    pub t_list: Vec<f64>,
    pub base_seed: u64,
    pub extra: BTreeMap<String, f64>,
}

/// Monte Carlo study report: per-replication records plus derived aggregates
/// and verdicts (both recomputable from the records).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub kind: StudyKind,
    pub config: StudyConfig,
    pub records: Vec<RepRecord>,
    pub aggregates: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
}

// Stream-index namespaces; replicate indices must stay below 1 << 40.
const FISHER_SPACE: u64 = 1 << 48;
const PILOT_SPACE: u64 = 1 << 49;

/// MLE search defaults used by the studies.
pub const DEFAULT_GRID_SIZE: usize = 64;
pub const DEFAULT_REFINE_TOL: f64 = 1e-6;

fn rep_stream_index(t_idx: usize, m_idx: usize) -> u64 {
    ((t_idx as u64) << 32) | m_idx as u64
}

fn check_disjoint_streams(base_seed: u64, indices: &[u64]) {
    let ids: HashSet<u64> = indices.iter().map(|&i| stream_id(base_seed, i)).collect();
    assert_eq!(ids.len(), indices.len(), "stream id collision");
}

/// One (simulate -> estimate) replication under theta0.
fn replicate_mle(
    model: &ParamModel,
    theta0: f64,
    horizon: f64,
    dt: f64,
    base_seed: u64,
    index: u64,
) -> Result<RepRecord> {
    let wrap = |e: Error| Error::Replication {
        index: index as usize,
        source: Box::new(e),
    };
    let mut rng = RngStream::derive(base_seed, index);
    let path =
        sample_chain_path(&model.lambda(theta0), model.nu(), horizon, &mut rng).map_err(wrap)?;
    let obs = sample_observations(&path, model.h(), dt, &mut rng).map_err(wrap)?;
    let est = estimate_mle(model, &obs, DEFAULT_GRID_SIZE, DEFAULT_REFINE_TOL).map_err(wrap)?;
    let mut values = BTreeMap::new();
    values.insert("t".into(), horizon);
    values.insert("theta_hat".into(), est.theta_hat);
    values.insert("at_boundary".into(), if est.at_boundary { 1.0 } else { 0.0 });
    Ok(RepRecord {
        index,
        seed: stream_id(base_seed, index),
        values,
    })
}

fn run_replications(
    model: &ParamModel,
    theta0: f64,
    horizon: f64,
    dt: f64,
    base_seed: u64,
    indices: &[u64],
) -> Result<Vec<RepRecord>> {
    check_disjoint_streams(base_seed, indices);
    let results: Vec<Result<RepRecord>> = indices
        .par_iter()
        .map(|&i| replicate_mle(model, theta0, horizon, dt, base_seed, i))
        .collect();
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed * 100 > indices.len() {
        return Err(Error::StudyAborted {
            failed,
            total: indices.len(),
        });
    }
    results.into_iter().collect()
}

/// Pooled Fisher-information estimate from dedicated simulation runs.
fn pooled_fisher(
    model: &ParamModel,
    theta0: f64,
    horizon: f64,
    dt: f64,
    base_seed: u64,
    n_runs: usize,
) -> Result<f64> {
    let values: Vec<f64> = (0..n_runs)
        .into_par_iter()
        .map(|j| {
            let mut rng = RngStream::derive(base_seed, FISHER_SPACE + j as u64);
            fisher_information(model, theta0, horizon, dt, &mut rng).map(|f| f.value)
        })
        .collect::<Result<_>>()?;
    Ok(stats::mean(&values))
}

/// Consistency study: empirical exceedance probabilities
/// P(|theta_hat - theta0| >= eps) per horizon, for eps in {0.05, 0.1, 0.2}.
pub fn run_consistency_study(
    model: &ParamModel,
    theta0: f64,
    t_list: &[f64],
    m: usize,
    dt: f64,
    base_seed: u64,
) -> Result<McReport> {
    if m < 50 {
        return Err(Error::InvalidArgument(format!("M must be >= 50, got {m}")));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "T list must be non-empty and increasing".into(),
        ));
    }
    model.check_theta(theta0)?;

    let mut records = Vec::new();
    for (t_idx, &horizon) in t_list.iter().enumerate() {
        let indices: Vec<u64> = (0..m).map(|j| rep_stream_index(t_idx, j)).collect();
        records.extend(run_replications(model, theta0, horizon, dt, base_seed, &indices)?);
    }
    records.sort_by_key(|r| r.index);

    let eps_levels = [0.05, 0.1, 0.2];
    let mut aggregates = BTreeMap::new();
    let mut exceedance: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (t_idx, &horizon) in t_list.iter().enumerate() {
        let errs: Vec<f64> = records
            .iter()
            .filter(|r| r.index >> 32 == t_idx as u64)
            .map(|r| (r.values["theta_hat"] - theta0).abs())
            .collect();
        for &eps in &eps_levels {
            let p = errs.iter().filter(|e| **e >= eps).count() as f64 / errs.len() as f64;
            aggregates.insert(format!("exceed_eps{eps}_t{horizon}"), p);
            exceedance.entry(format!("{eps}")).or_default().push(p);
        }
    }

    // Weakly decreasing in T, allowing one inversion within 2 binomial SE.
    let mut verdicts = Vec::new();
    for (eps, ps) in &exceedance {
        let mut inversions = 0usize;
        let mut hard_fail = false;
        for w in ps.windows(2) {
            if w[1] > w[0] {
                let se = (w[0].max(1e-12) * (1.0 - w[0]).max(1e-12) / m as f64).sqrt();
                if w[1] - w[0] <= 2.0 * se {
                    inversions += 1;
                } else {
                    hard_fail = true;
                }
            }
        }
        verdicts.push(Verdict {
            name: format!("exceedance_weakly_decreasing_eps{eps}"),
            pass: !hard_fail && inversions <= 1,
            value: inversions as f64,
            threshold: 1.0,
        });
    }
    let final_p = exceedance["0.1"].last().copied().unwrap();
    verdicts.push(Verdict {
        name: "final_exceedance_eps0.1".into(),
        pass: final_p <= 0.15,
        value: final_p,
        threshold: 0.15,
    });

    Ok(McReport {
        kind: StudyKind::Consistency,
        config: StudyConfig {
            theta0,
            dt,
            m,
            t_list: t_list.to_vec(),
            base_seed,
            extra: BTreeMap::new(),
        },
        records,
        aggregates,
        verdicts,
    })
}

/// Normality study: KS test of sqrt(T)(theta_hat - theta0) sqrt(I_hat)
/// against the standard normal.
pub fn run_normality_study(
    model: &ParamModel,
    theta0: f64,
    horizon: f64,
    m: usize,
    dt: f64,
    base_seed: u64,
) -> Result<McReport> {
    if m < 200 {
        return Err(Error::InvalidArgument(format!("M must be >= 200, got {m}")));
    }
    model.check_theta(theta0)?;

    let fisher = pooled_fisher(model, theta0, horizon, dt, base_seed, 20)?;
    let indices: Vec<u64> = (0..m).map(|j| rep_stream_index(0, j)).collect();
    let mut records = run_replications(model, theta0, horizon, dt, base_seed, &indices)?;
    records.sort_by_key(|r| r.index);

    let scale = horizon.sqrt() * fisher.sqrt();
    for r in records.iter_mut() {
        let xi = scale * (r.values["theta_hat"] - theta0);
        r.values.insert("xi".into(), xi);
    }
    let xis: Vec<f64> = records.iter().map(|r| r.values["xi"]).collect();
    let ks = stats::ks_statistic(&xis, stats::normal_cdf);
    let ks_crit = stats::ks_critical(0.01, m)?;
    let xi_mean = stats::mean(&xis);
    let xi_var = stats::variance(&xis);
    let boundary_frac = records
        .iter()
        .filter(|r| r.values["at_boundary"] > 0.5)
        .count() as f64
        / m as f64;

    let mean_bound = 3.0 / (m as f64).sqrt();
    let verdicts = vec![
        Verdict {
            name: "ks_vs_standard_normal".into(),
            pass: ks <= ks_crit,
            value: ks,
            threshold: ks_crit,
        },
        Verdict {
            name: "xi_mean_near_zero".into(),
            pass: xi_mean.abs() <= mean_bound,
            value: xi_mean,
            threshold: mean_bound,
        },
        Verdict {
            name: "boundary_fraction".into(),
            pass: boundary_frac < 0.02,
            value: boundary_frac,
            threshold: 0.02,
        },
    ];

    let mut aggregates = BTreeMap::new();
    aggregates.insert("fisher_pooled".into(), fisher);
    aggregates.insert("ks_stat".into(), ks);
    aggregates.insert("ks_crit_01".into(), ks_crit);
    aggregates.insert("xi_mean".into(), xi_mean);
    aggregates.insert("xi_var".into(), xi_var);
    aggregates.insert("boundary_frac".into(), boundary_frac);

    Ok(McReport {
        kind: StudyKind::Normality,
        config: StudyConfig {
            theta0,
            dt,
            m,
            t_list: vec![horizon],
            base_seed,
            extra: BTreeMap::new(),
        },
        records,
        aggregates,
        verdicts,
    })
}

/// Moment-convergence study: standardized absolute moments per horizon
/// against the Gaussian reference values.
pub fn run_moment_study(
    model: &ParamModel,
    theta0: f64,
    t_list: &[f64],
    m: usize,
    p_list: &[u32],
    dt: f64,
    base_seed: u64,
) -> Result<McReport> {
    if m < 200 {
        return Err(Error::InvalidArgument(format!("M must be >= 200, got {m}")));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "T list must be non-empty and increasing".into(),
        ));
    }
    for &p in p_list {
        stats::gaussian_abs_moment(p)?;
    }
    model.check_theta(theta0)?;

    let t_max = *t_list.last().unwrap();
    let fisher = pooled_fisher(model, theta0, t_max, dt, base_seed, 20)?;

    let mut records = Vec::new();
    for (t_idx, &horizon) in t_list.iter().enumerate() {
        let indices: Vec<u64> = (0..m).map(|j| rep_stream_index(t_idx, j)).collect();
        records.extend(run_replications(model, theta0, horizon, dt, base_seed, &indices)?);
    }
    records.sort_by_key(|r| r.index);

    let mut aggregates = BTreeMap::new();
    aggregates.insert("fisher_pooled".into(), fisher);
    let mut ratios: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (t_idx, &horizon) in t_list.iter().enumerate() {
        let xis: Vec<f64> = records
            .iter()
            .filter(|r| r.index >> 32 == t_idx as u64)
            .map(|r| horizon.sqrt() * fisher.sqrt() * (r.values["theta_hat"] - theta0))
            .collect();
        for &p in p_list {
            let emp = stats::mean(&xis.iter().map(|x| x.abs().powi(p as i32)).collect::<Vec<_>>());
            let reference = stats::gaussian_abs_moment(p)?;
            let ratio = emp / reference;
            aggregates.insert(format!("moment_p{p}_t{horizon}"), emp);
            aggregates.insert(format!("ratio_p{p}_t{horizon}"), ratio);
            ratios.entry(p).or_default().push(ratio);
        }
    }

    let mut verdicts = Vec::new();
    if let Some(r2) = ratios.get(&2) {
        let final_ratio = *r2.last().unwrap();
        verdicts.push(Verdict {
            name: "p2_ratio_final".into(),
            pass: (0.7..=1.3).contains(&final_ratio),
            value: final_ratio,
            threshold: 0.3,
        });
    }
    for (&p, rs) in &ratios {
        let first = (rs[0] - 1.0).abs();
        let last = (rs.last().unwrap() - 1.0).abs();
        verdicts.push(Verdict {
            name: format!("p{p}_ratio_trend"),
            pass: last <= first + 0.1,
            value: last - first,
            threshold: 0.1,
        });
    }

    Ok(McReport {
        kind: StudyKind::Moments,
        config: StudyConfig {
            theta0,
            dt,
            m,
            t_list: t_list.to_vec(),
            base_seed,
            extra: p_list.iter().map(|&p| (format!("p{p}"), p as f64)).collect(),
        },
        records,
        aggregates,
        verdicts,
    })
}

/// Time average over one path of the squared drift gap between the filters
/// at theta0 and theta, both run from nu on the same observations.
fn drift_gap_time_average(
    model: &ParamModel,
    theta0: f64,
    theta: f64,
    obs: &ObsPath,
) -> Result<f64> {
    let mut f0 = FilterState::new(model, theta0, obs.dt(), model.nu(), false)?;
    let mut f1 = FilterState::new(model, theta, obs.dt(), model.nu(), false)?;
    let mut acc = 0.0;
    for &dx in obs.increments() {
        let gap = f0.predicted_drift() - f1.predicted_drift();
        acc += gap * gap * obs.dt();
        f0.step(dx)?;
        f1.step(dx)?;
    }
    Ok(acc / obs.horizon())
}

/// LLN scaling: variance of the centered time-average of the squared filter
/// drift gap, per horizon. The centering constant is estimated by a long
/// stationary pilot run.
pub fn lln_scaling_check(
    model: &ParamModel,
    theta0: f64,
    theta: f64,
    t_list: &[f64],
    m: usize,
    dt: f64,
    base_seed: u64,
) -> Result<McReport> {
    if theta == theta0 {
        return Err(Error::InvalidArgument(
            "theta must differ from theta0".into(),
        ));
    }
    model.check_theta(theta0)?;
    model.check_theta(theta)?;
    if t_list.is_empty() || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "T list must be non-empty and increasing".into(),
        ));
    }

    // Pilot estimate of g(theta0, theta). The pilot's own averaging error
    // enters V(T) as a floor, so it averages over at least 20x the largest
    // study horizon.
    let (t_burn, base_avg) = default_burn_avg(model, dt);
    let t_avg = base_avg.max(20.0 * t_list.last().unwrap());
    let mut pilot_rng = RngStream::derive(base_seed, PILOT_SPACE);
    let curve = identifiability_curve(
        model,
        theta0,
        &[theta],
        t_burn,
        t_avg,
        dt,
        &mut pilot_rng,
    )?;
    let g_hat = curve[0].1;

    let mut records = Vec::new();
    for (t_idx, &horizon) in t_list.iter().enumerate() {
        let indices: Vec<u64> = (0..m).map(|j| rep_stream_index(t_idx, j)).collect();
        check_disjoint_streams(base_seed, &indices);
        let batch: Vec<Result<RepRecord>> = indices
            .par_iter()
            .map(|&index| {
                let mut rng = RngStream::derive(base_seed, index);
                let path = sample_chain_path(&model.lambda(theta0), model.nu(), horizon, &mut rng)?;
                let obs = sample_observations(&path, model.h(), dt, &mut rng)?;
                let avg = drift_gap_time_average(model, theta0, theta, &obs)?;
                let mut values = BTreeMap::new();
                values.insert("t".into(), horizon);
                values.insert("time_average".into(), avg);
                values.insert("centered_sq".into(), (avg - g_hat).powi(2));
                Ok(RepRecord {
                    index,
                    seed: stream_id(base_seed, index),
                    values,
                })
            })
            .collect();
        let failed = batch.iter().filter(|r| r.is_err()).count();
        if failed * 100 > m {
            return Err(Error::StudyAborted { failed, total: m });
        }
        records.extend(batch.into_iter().collect::<Result<Vec<_>>>()?);
    }
    records.sort_by_key(|r| r.index);

    let mut aggregates = BTreeMap::new();
    aggregates.insert("g_hat".into(), g_hat);
    let mut vs = Vec::new();
    for (t_idx, &horizon) in t_list.iter().enumerate() {
        let v = stats::mean(
            &records
                .iter()
                .filter(|r| r.index >> 32 == t_idx as u64)
                .map(|r| r.values["centered_sq"])
                .collect::<Vec<_>>(),
        );
        aggregates.insert(format!("v_t{horizon}"), v);
        vs.push(v);
    }

    let mut verdicts = Vec::new();
    for (k, w) in vs.windows(2).enumerate() {
        let ratio = w[1] / w[0];
        verdicts.push(Verdict {
            name: format!("halving_ratio_{}_{}", t_list[k], t_list[k + 1]),
            pass: (0.35..=0.65).contains(&ratio),
            value: ratio,
            threshold: 0.65,
        });
    }

    Ok(McReport {
        kind: StudyKind::Lln,
        config: StudyConfig {
            theta0,
            dt,
            m,
            t_list: t_list.to_vec(),
            base_seed,
            extra: [("theta".to_string(), theta)].into_iter().collect(),
        },
        records,
        aggregates,
        verdicts,
    })
}

/// Burn-in and averaging horizons satisfying the identifiability-curve
/// preconditions for this model.
pub fn default_burn_avg(model: &ParamModel, _dt: f64) -> (f64, f64) {
    let (theta_min, _) = model.theta_interval();
    let gamma = gamma_rate(&model.lambda(theta_min));
    let t_burn = if gamma.is_finite() && gamma > 0.0 {
        (10.0 / gamma).max(1.0)
    } else {
        1.0
    };
    (t_burn, 10.0 * t_burn)
}

/// Estimate g(theta0, theta) over a grid of theta values by time-averaging
/// the squared filter drift gap on one long path after burn-in.
pub fn identifiability_curve(
    model: &ParamModel,
    theta0: f64,
    theta_grid: &[f64],
    t_burn: f64,
    t_avg: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Vec<(f64, f64)>> {
    model.check_theta(theta0)?;
    let (theta_min, _) = model.theta_interval();
    let gamma = gamma_rate(&model.lambda(theta_min));
    if gamma.is_finite() && gamma > 0.0 && t_burn < 10.0 / gamma {
        return Err(Error::InvalidArgument(format!(
            "t_burn = {t_burn} below contraction burn-in {}",
            10.0 / gamma
        )));
    }
    if t_avg < 10.0 * t_burn {
        return Err(Error::InvalidArgument(format!(
            "t_avg = {t_avg} must be >= 10 * t_burn = {}",
            10.0 * t_burn
        )));
    }
    let horizon = t_burn + t_avg;
    let path = sample_chain_path(&model.lambda(theta0), model.nu(), horizon, rng)?;
    let obs = sample_observations(&path, model.h(), dt, rng)?;
    let n_burn = (t_burn / dt).round() as usize;

    // Reference drift trajectory under theta0 computed once.
    let mut f0 = FilterState::new(model, theta0, dt, model.nu(), false)?;
    let mut ref_drift = Vec::with_capacity(obs.n_steps());
    for &dx in obs.increments() {
        ref_drift.push(f0.predicted_drift());
        f0.step(dx)?;
    }

    let curve: Vec<(f64, f64)> = theta_grid
        .par_iter()
        .map(|&theta| {
            model.check_theta(theta)?;
            let mut f = FilterState::new(model, theta, dt, model.nu(), false)?;
            let mut acc = 0.0;
            for (k, &dx) in obs.increments().iter().enumerate() {
                if k >= n_burn {
                    let gap = ref_drift[k] - f.predicted_drift();
                    acc += gap * gap * dt;
                }
                f.step(dx)?;
            }
            Ok((theta, acc / t_avg))
        })
        .collect::<Result<_>>()?;
    Ok(curve)
}
