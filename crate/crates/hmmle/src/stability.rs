//! Empirical checks of the filter-stability machinery: exponential
//! contraction of the filter in its initial condition, decay of tangent
//! vectors, robustness in the parameter, boundedness of inverse-simplex
//! moments, and coupling-time tails.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filter::{FilterState, TangentVec};
use crate::model::{gamma_rate, Generator, ParamModel, SimplexVec};
use crate::rng::RngStream;
use crate::simulate::{sample_chain_path, sample_coupled_chains, sample_observations, ObsPath};
use crate::stats;
use crate::{Error, Result};

/// Multiplicative slack on the pathwise contraction envelope, absorbing
/// discretization error of the Euler scheme.
pub const PATHWISE_SLACK: f64 = 0.05;

/// Fit window: values outside [1e-10, 1e-1] are excluded from rate fits to
/// avoid the initial transient and floor saturation.
const FIT_WINDOW: (f64, f64) = (1e-10, 1e-1);

/// Log-linear least-squares fit of a decaying positive time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Slope of the least-squares line through log values per unit time.
    pub fitted_rate: f64,
    pub r_squared: f64,
}

/// Fit over the window where values lie in [1e-10, 1e-1]. `None` when fewer
/// than two window points survive.
fn fit_decay(times: &[f64], values: &[f64]) -> Option<DecayFit> {
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if v >= FIT_WINDOW.0 && v <= FIT_WINDOW.1 {
            ts.push(t);
            vs.push(v);
        }
    }
    if ts.len() < 2 || ts[0] >= *ts.last().unwrap() {
        return None;
    }
    let logs: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    let (_, slope, r2) = stats::linear_fit(&ts, &logs).ok()?;
    Some(DecayFit {
        times: ts,
        values: vs,
        fitted_rate: slope,
        r_squared: r2,
    })
}

/// Result of a pathwise contraction check between two initializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub gamma: f64,
    /// True iff distance_k <= 2 exp(-gamma t_k) (1 + slack) at every grid time.
    pub pathwise: bool,
    pub fit: Option<DecayFit>,
}

/// Run two filters from `mu1` and `mu2` on the same observations and record
/// the l1 distance on the grid against the envelope `2 exp(-gamma t)`.
pub fn contraction_check(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    mu1: &SimplexVec,
    mu2: &SimplexVec,
) -> Result<ContractionReport> {
    let gamma = gamma_rate(&model.lambda(theta));
    let mut f1 = FilterState::new(model, theta, obs.dt(), mu1, false)?;
    let mut f2 = FilterState::new(model, theta, obs.dt(), mu2, false)?;
    let n = obs.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut distances = Vec::with_capacity(n + 1);
    let mut pathwise = true;
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    };
    for k in 0..=n {
        let t = k as f64 * obs.dt();
        let d = dist(f1.pi(), f2.pi());
        let envelope = if gamma.is_finite() {
            2.0 * (-gamma * t).exp()
        } else {
            f64::INFINITY
        };
        if d > envelope * (1.0 + PATHWISE_SLACK) {
            pathwise = false;
        }
        times.push(t);
        distances.push(d);
        if k < n {
            let dx = obs.increments()[k];
            f1.step(dx)?;
            f2.step(dx)?;
        }
    }
    let fit = fit_decay(&times, &distances);
    Ok(ContractionReport {
        times,
        distances,
        gamma,
        pathwise,
        fit,
    })
}

/// Decay of the tangent norm ||D pi_{0,t}(mu) v||_1 along one observation
/// path, fitted log-linearly.
pub fn tangent_decay_check(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    mu: &SimplexVec,
    v: &TangentVec,
) -> Result<DecayFit> {
    if v.l1_norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "tangent direction must be nonzero".into(),
        ));
    }
    let mut f = FilterState::new(model, theta, obs.dt(), mu, true)?;
    f.seed_tangent(v);
    let n = obs.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut norms = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let norm: f64 = f.sensitivity().unwrap().iter().map(|x| x.abs()).sum();
        times.push(k as f64 * obs.dt());
        norms.push(norm);
        if k < n {
            f.step(obs.increments()[k])?;
        }
    }
    fit_decay(&times, &norms).ok_or_else(|| {
        Error::InvalidArgument("tangent norm never entered the fit window".into())
    })
}

/// Per-theta summary of the parameter-robustness check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub theta: f64,
    /// sup over the time grid of E ||pi_theta0 - pi_theta||_1^m.
    pub sup_m1: f64,
    pub sup_m2: f64,
    /// sup_m divided by |theta - theta0|^m.
    pub ratio_m1: f64,
    pub ratio_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub theta0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_reps: usize,
    pub points: Vec<RobustnessPoint>,
}

/// Number of time-grid checkpoints used by the expectation estimates.
const N_CHECKPOINTS: usize = 100;

/// Monte Carlo estimate of sup_t E ||pi_theta0_t - pi_theta_t||_1^m for
/// m in {1, 2}, relative to |theta - theta0|^m. Paths are simulated under
/// theta0; both filters start from the model prior.
pub fn filter_robustness_check(
    model: &ParamModel,
    theta0: f64,
    theta_list: &[f64],
    horizon: f64,
    dt: f64,
    n_reps: usize,
    base_seed: u64,
) -> Result<RobustnessReport> {
    model.check_theta(theta0)?;
    if theta_list.is_empty() {
        return Err(Error::InvalidArgument("theta list is empty".into()));
    }
    for &theta in theta_list {
        model.check_theta(theta)?;
        if theta == theta0 {
            return Err(Error::InvalidArgument(
                "theta list must exclude theta0".into(),
            ));
        }
    }
    if n_reps == 0 {
        return Err(Error::InvalidArgument("M must be positive".into()));
    }

    let n = (horizon / dt).round() as usize;
    let stride = (n / N_CHECKPOINTS).max(1);
    let points: Vec<RobustnessPoint> = theta_list
        .iter()
        .enumerate()
        .map(|(ti, &theta)| {
            let sums: (Vec<f64>, Vec<f64>) = (0..n_reps)
                .into_par_iter()
                .map(|rep| {
                    let index = ((ti as u64) << 32) | rep as u64;
                    let mut rng = RngStream::derive(base_seed, index);
                    let path =
                        sample_chain_path(&model.lambda(theta0), model.nu(), horizon, &mut rng)?;
                    let obs = sample_observations(&path, model.h(), dt, &mut rng)?;
                    let mut f0 = FilterState::new(model, theta0, dt, model.nu(), false)?;
                    let mut f1 = FilterState::new(model, theta, dt, model.nu(), false)?;
                    let mut d1 = Vec::with_capacity(N_CHECKPOINTS);
                    let mut d2 = Vec::with_capacity(N_CHECKPOINTS);
                    for (k, &dx) in obs.increments().iter().enumerate() {
                        f0.step(dx)?;
                        f1.step(dx)?;
                        if (k + 1) % stride == 0 {
                            let d: f64 = f0
                                .pi()
                                .iter()
                                .zip(f1.pi())
                                .map(|(a, b)| (a - b).abs())
                                .sum();
                            d1.push(d);
                            d2.push(d * d);
                        }
                    }
                    Ok((d1, d2))
                })
                .collect::<Result<Vec<_>>>()?
                // Summed in replication order so results do not depend on
                // the worker count.
                .into_iter()
                .fold((Vec::new(), Vec::new()), |a, b| {
                    (add_vecs(a.0, &b.0), add_vecs(a.1, &b.1))
                });
            let sup_m1 = sums.0.iter().cloned().fold(0.0, f64::max) / n_reps as f64;
            let sup_m2 = sums.1.iter().cloned().fold(0.0, f64::max) / n_reps as f64;
            let gap = (theta - theta0).abs();
            Ok(RobustnessPoint {
                theta,
                sup_m1,
                sup_m2,
                ratio_m1: sup_m1 / gap,
                ratio_m2: sup_m2 / (gap * gap),
            })
        })
        .collect::<Result<_>>()?;

    Ok(RobustnessReport {
        theta0,
        horizon,
        dt,
        n_reps,
        points,
    })
}

fn add_vecs(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    if a.is_empty() {
        return b.to_vec();
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Time curve of an estimated inverse-simplex moment and its running max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub order: u32,
    pub times: Vec<f64>,
    /// E (1 / min_i pi_t,i)^order at each checkpoint.
    pub moments: Vec<f64>,
    pub running_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub theta: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_reps: usize,
    pub curves: Vec<MomentCurve>,
}

/// Monte Carlo estimate of E (1 / min_i pi_t,i)^m on a time grid, with the
/// running max over t, for each requested order m in {1, 2, 4}.
pub fn boundary_moment_check(
    model: &ParamModel,
    theta: f64,
    horizon: f64,
    dt: f64,
    n_reps: usize,
    m_list: &[u32],
    base_seed: u64,
) -> Result<BoundaryReport> {
    model.check_theta(theta)?;
    if m_list.is_empty() || m_list.iter().any(|m| ![1, 2, 4].contains(m)) {
        return Err(Error::InvalidArgument(format!(
            "moment orders must be a non-empty subset of {{1, 2, 4}}: {m_list:?}"
        )));
    }
    if n_reps == 0 {
        return Err(Error::InvalidArgument("M must be positive".into()));
    }

    let n = (horizon / dt).round() as usize;
    let stride = (n / N_CHECKPOINTS).max(1);
    let sums: Vec<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::derive(base_seed, rep as u64);
            let path = sample_chain_path(&model.lambda(theta), model.nu(), horizon, &mut rng)?;
            let obs = sample_observations(&path, model.h(), dt, &mut rng)?;
            let mut f = FilterState::new(model, theta, dt, model.nu(), false)?;
            let mut per_m: Vec<Vec<f64>> = vec![Vec::new(); m_list.len()];
            for (k, &dx) in obs.increments().iter().enumerate() {
                f.step(dx)?;
                if (k + 1) % stride == 0 {
                    let min = f.pi().iter().cloned().fold(f64::INFINITY, f64::min);
                    let inv = 1.0 / min;
                    for (slot, &m) in per_m.iter_mut().zip(m_list) {
                        slot.push(inv.powi(m as i32));
                    }
                }
            }
            Ok(per_m)
        })
        .collect::<Result<Vec<_>>>()?
        // Summed in replication order so results do not depend on the
        // worker count.
        .into_iter()
        .fold(vec![Vec::new(); m_list.len()], |a, b| {
            a.into_iter()
                .zip(&b)
                .map(|(x, y)| add_vecs(x, y))
                .collect()
        });

    let times: Vec<f64> = (0..sums[0].len())
        .map(|j| ((j + 1) * stride) as f64 * dt)
        .collect();
    let curves = m_list
        .iter()
        .zip(sums)
        .map(|(&order, sum)| {
            let moments: Vec<f64> = sum.iter().map(|s| s / n_reps as f64).collect();
            let mut running_max = Vec::with_capacity(moments.len());
            let mut max = f64::NEG_INFINITY;
            for &v in &moments {
                max = max.max(v);
                running_max.push(max);
            }
            MomentCurve {
                order,
                times: times.clone(),
                moments,
                running_max,
            }
        })
        .collect();

    Ok(BoundaryReport {
        theta,
        horizon,
        dt,
        n_reps,
        curves,
    })
}

/// Empirical coupling-time tail against the exponential reference law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// Finite coupling times, sorted.
    pub taus: Vec<f64>,
    /// Samples with no meeting before the horizon.
    pub censored: usize,
    /// Reference rate min over i != j of (lambda_ij + lambda_ji).
    pub rate: f64,
    pub ks_distance: f64,
    /// True for d > 2, where the reference law is only a conjectured match.
    pub exploratory: bool,
}

/// Sample N coupled chain pairs started from point masses at states 0 and
/// d-1 and compare the coupling-time law to Exponential(rate).
pub fn coupling_tail_check(
    g: &Generator,
    horizon: f64,
    n_samples: usize,
    base_seed: u64,
) -> Result<CouplingReport> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "N must be >= 1000, got {n_samples}"
        )));
    }
    let d = g.dim();
    if d < 2 {
        return Err(Error::InvalidArgument(
            "coupling check needs at least two states".into(),
        ));
    }
    let mut rate = f64::INFINITY;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                rate = rate.min(g.rate(i, j) + g.rate(j, i));
            }
        }
    }
    let nu_a = SimplexVec::point_mass(d, 0)?;
    let nu_b = SimplexVec::point_mass(d, d - 1)?;

    let samples: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::derive(base_seed, i as u64);
            sample_coupled_chains(g, &nu_a, &nu_b, horizon, &mut rng).map(|pair| pair.tau)
        })
        .collect::<Result<_>>()?;
    let mut taus: Vec<f64> = samples.iter().cloned().filter(|t| t.is_finite()).collect();
    let censored = n_samples - taus.len();
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // One-sample KS with right-censored mass kept in the denominator.
    let n = n_samples as f64;
    let mut ks = 0.0f64;
    for (i, &t) in taus.iter().enumerate() {
        let f = stats::exp_cdf(t, rate);
        ks = ks.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    if censored > 0 {
        ks = ks.max(stats::exp_cdf(horizon, rate) - taus.len() as f64 / n);
    }

    Ok(CouplingReport {
        taus,
        censored,
        rate,
        ks_distance: ks,
        exploratory: d > 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::two_state_model;

    fn two_state() -> ParamModel {
        two_state_model((0.1, 5.0), SimplexVec::uniform(2)).unwrap()
    }

    fn sample_obs(model: &ParamModel, theta: f64, horizon: f64, dt: f64, seed: u64) -> ObsPath {
        let mut rng = RngStream::from_seed(seed);
        let path = sample_chain_path(&model.lambda(theta), model.nu(), horizon, &mut rng).unwrap();
        sample_observations(&path, model.h(), dt, &mut rng).unwrap()
    }

    #[test]
    fn contraction_equal_inits_is_zero_and_pathwise() {
        let model = two_state();
        let obs = sample_obs(&model, 1.0, 5.0, 1e-3, 1);
        let mu = SimplexVec::new(vec![0.3, 0.7]).unwrap();
        let rep = contraction_check(&model, 1.0, &obs, &mu, &mu).unwrap();
        assert!(rep.pathwise);
        assert!(rep.distances.iter().all(|&d| d == 0.0));
        assert!(rep.fit.is_none());
    }

    #[test]
    fn contraction_decays_at_gamma() {
        let model = two_state();
        let obs = sample_obs(&model, 1.0, 8.0, 1e-3, 7);
        let mu1 = SimplexVec::new(vec![0.95, 0.05]).unwrap();
        let mu2 = SimplexVec::new(vec![0.05, 0.95]).unwrap();
        let rep = contraction_check(&model, 1.0, &obs, &mu1, &mu2).unwrap();
        assert!(rep.pathwise, "envelope violated");
        let fit = rep.fit.expect("fit window non-empty");
        assert!(
            fit.fitted_rate <= -1.8,
            "rate {} too slow",
            fit.fitted_rate
        );
        // Distinct initializations never collide exactly before the floor.
        assert!(rep
            .distances
            .iter()
            .take_while(|&&d| d > 1e-14)
            .all(|&d| d != 0.0));
    }

    #[test]
    fn tangent_decay_matches_gamma_and_is_linear() {
        let model = two_state();
        let obs = sample_obs(&model, 1.0, 8.0, 1e-3, 11);
        let mu = SimplexVec::uniform(2);
        let v = TangentVec::new(vec![0.05, -0.05]).unwrap();
        let fit = tangent_decay_check(&model, 1.0, &obs, &mu, &v).unwrap();
        assert!(fit.fitted_rate <= -1.8, "rate {}", fit.fitted_rate);

        let v10 = v.scale(10.0);
        let fit10 = tangent_decay_check(&model, 1.0, &obs, &mu, &v10).unwrap();
        // Scaling shifts the fit window in time but not the decay rate.
        assert!((fit10.fitted_rate - fit.fitted_rate).abs() < 1e-2);
    }

    #[test]
    fn tangent_zero_direction_rejected() {
        let model = two_state();
        let obs = sample_obs(&model, 1.0, 1.0, 1e-2, 3);
        let v = TangentVec::zero(2);
        assert!(tangent_decay_check(&model, 1.0, &obs, &SimplexVec::uniform(2), &v).is_err());
    }

    #[test]
    fn tangent_linearity_pointwise() {
        // Compare norms on the full grid directly, bypassing the fit window.
        let model = two_state();
        let obs = sample_obs(&model, 1.0, 2.0, 1e-2, 13);
        let mu = SimplexVec::uniform(2);
        let run = |v: &TangentVec| -> Vec<f64> {
            let mut f = FilterState::new(&model, 1.0, obs.dt(), &mu, true).unwrap();
            f.seed_tangent(v);
            let mut out = Vec::new();
            for &dx in obs.increments() {
                f.step(dx).unwrap();
                out.push(f.sensitivity().unwrap().iter().map(|x| x.abs()).sum());
            }
            out
        };
        let base = run(&TangentVec::new(vec![0.01, -0.01]).unwrap());
        let scaled = run(&TangentVec::new(vec![0.1, -0.1]).unwrap());
        for (a, b) in base.iter().zip(&scaled) {
            assert!((10.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn robustness_rejects_theta0_in_list() {
        let model = two_state();
        assert!(filter_robustness_check(&model, 1.0, &[1.0], 5.0, 1e-2, 4, 1).is_err());
    }

    #[test]
    fn robustness_ratios_finite_positive() {
        let model = two_state();
        let rep = filter_robustness_check(&model, 1.0, &[1.1, 1.2], 5.0, 1e-2, 8, 21).unwrap();
        for p in &rep.points {
            assert!(p.ratio_m1.is_finite() && p.ratio_m1 > 0.0);
            assert!(p.ratio_m2.is_finite() && p.ratio_m2 > 0.0);
            assert!(p.sup_m2 <= p.sup_m1 * 2.0, "l1 distance bounded by 2");
        }
    }

    #[test]
    fn boundary_moments_monotone_in_order() {
        let model = two_state();
        let rep = boundary_moment_check(&model, 1.0, 5.0, 1e-2, 8, &[1, 2], 31).unwrap();
        let m1 = &rep.curves[0];
        let m2 = &rep.curves[1];
        for (a, b) in m1.moments.iter().zip(&m2.moments) {
            assert!(*b >= *a, "m=2 moment {b} below m=1 moment {a}");
        }
        for c in &rep.curves {
            for w in c.running_max.windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn boundary_rejects_bad_order() {
        let model = two_state();
        assert!(boundary_moment_check(&model, 1.0, 1.0, 1e-2, 4, &[3], 1).is_err());
        assert!(boundary_moment_check(&model, 1.0, 1.0, 1e-2, 4, &[], 1).is_err());
    }

    #[test]
    fn coupling_tail_two_state() {
        let g = Generator::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]).unwrap();
        let rep = coupling_tail_check(&g, 20.0, 1000, 5).unwrap();
        assert!(!rep.exploratory);
        assert!((rep.rate - 2.0).abs() < 1e-12);
        assert!(rep.ks_distance <= 0.06, "ks {}", rep.ks_distance);
        assert!(rep.taus.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn coupling_rejects_small_n() {
        let g = Generator::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]).unwrap();
        assert!(coupling_tail_check(&g, 10.0, 10, 1).is_err());
    }
}
