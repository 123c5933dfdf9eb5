//! Maximum likelihood estimation over the parameter interval, Fisher
//! information, and local likelihood profiles.

use rayon::prelude::*;

use crate::filter::{log_likelihood, FilterState};
use crate::model::ParamModel;
use crate::rng::RngStream;
use crate::simulate::{sample_chain_path, sample_observations, ObsPath};
use crate::{Error, Result};

/// Result of an MLE search.
#[derive(Debug, Clone)]
pub struct MleResult {
    pub theta_hat: f64,
    pub loglik_at_hat: f64,
    pub n_evals: usize,
    pub at_boundary: bool,
    /// Grid evaluations (theta, log-likelihood relative to the reference
    /// parameter), in grid order.
    pub profile: Option<Vec<(f64, f64)>>,
}

/// A single Fisher-information estimate.
#[derive(Debug, Clone)]
pub struct FisherEstimate {
    pub value: f64,
    pub horizon: f64,
    pub dt: f64,
}

/// MLE by a deterministic grid scan of the likelihood-ratio objective
/// followed by golden-section refinement inside the bracketing neighbors.
///
/// The reference parameter of the ratio is the interval midpoint; any
/// reference gives the same maximizer since ratios at two references differ
/// by a constant in theta.
pub fn estimate_mle(
    model: &ParamModel,
    obs: &ObsPath,
    grid_size: usize,
    refine_tol: f64,
) -> Result<MleResult> {
    if grid_size < 8 {
        return Err(Error::InvalidArgument(format!(
            "grid_size must be >= 8, got {grid_size}"
        )));
    }
    if !(refine_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "refine_tol must be positive, got {refine_tol}"
        )));
    }
    let (lo, hi) = model.theta_interval();
    let eta = 0.5 * (lo + hi);
    let ref_loglik = log_likelihood(model, eta, obs, model.nu())?;
    let objective = |theta: f64| -> Result<f64> {
        let ll = log_likelihood(model, theta, obs, model.nu())? - ref_loglik;
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(Error::NonFiniteLikelihood { theta })
        }
    };

    let thetas: Vec<f64> = (0..grid_size)
        .map(|j| lo + (hi - lo) * j as f64 / (grid_size - 1) as f64)
        .collect();
    let values: Vec<f64> = thetas
        .par_iter()
        .map(|&theta| objective(theta))
        .collect::<Result<_>>()?;
    let mut n_evals = grid_size + 1;

    // Best grid point; ties toward smaller theta.
    let mut best = 0;
    for j in 1..grid_size {
        if values[j] > values[best] {
            best = j;
        }
    }

    let bracket_lo = if best == 0 { lo } else { thetas[best - 1] };
    let bracket_hi = if best == grid_size - 1 {
        hi
    } else {
        thetas[best + 1]
    };
    let (mut theta_hat, mut val_hat) = (thetas[best], values[best]);

    // Golden-section maximization; ties keep the left subinterval.
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (bracket_lo, bracket_hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    n_evals += 2;
    while b - a > refine_tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2)?;
        }
        n_evals += 1;
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > val_hat || (f == val_hat && x < theta_hat) {
            theta_hat = x;
            val_hat = f;
        }
    }

    let at_boundary = theta_hat - lo <= refine_tol || hi - theta_hat <= refine_tol;
    Ok(MleResult {
        theta_hat,
        loglik_at_hat: val_hat,
        n_evals,
        at_boundary,
        profile: Some(thetas.into_iter().zip(values).collect()),
    })
}

/// Estimate the Fisher information at theta0 by simulating one path under
/// theta0 and time-averaging the squared sensitivity drift.
pub fn fisher_information(
    model: &ParamModel,
    theta0: f64,
    horizon: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<FisherEstimate> {
    model.check_theta(theta0)?;
    let path = sample_chain_path(&model.lambda(theta0), model.nu(), horizon, rng)?;
    let obs = sample_observations(&path, model.h(), dt, rng)?;
    let mut state = FilterState::new(model, theta0, dt, model.nu(), true)?;
    // Left endpoints k = 0..n-1.
    let mut acc = 0.0;
    for &dx in obs.increments() {
        let drift = state.sensitivity_drift();
        acc += drift * drift * dt;
        state.step(dx)?;
    }
    Ok(FisherEstimate {
        value: acc / horizon,
        horizon,
        dt,
    })
}

/// Local likelihood profile: points `(u, log Z(u))` with
/// `log Z(u) = llr(theta0 + u/sqrt(T), theta0)`, plus the `u` values that
/// fell outside the closed parameter interval and were dropped.
#[derive(Debug, Clone)]
pub struct ProfileResult {
    pub points: Vec<(f64, f64)>,
    pub dropped: Vec<f64>,
}

pub fn likelihood_profile(
    model: &ParamModel,
    theta0: f64,
    obs: &ObsPath,
    u_grid: &[f64],
) -> Result<ProfileResult> {
    model.check_theta(theta0)?;
    let sqrt_t = obs.horizon().sqrt();
    let mut admissible = Vec::new();
    let mut dropped = Vec::new();
    for &u in u_grid {
        if model.contains(theta0 + u / sqrt_t) {
            admissible.push(u);
        } else {
            dropped.push(u);
        }
    }
    if admissible.is_empty() {
        return Err(Error::InvalidArgument(
            "no admissible points in u grid".into(),
        ));
    }
    let ref_loglik = log_likelihood(model, theta0, obs, model.nu())?;
    let points: Vec<(f64, f64)> = admissible
        .par_iter()
        .map(|&u| {
            let ll = log_likelihood(model, theta0 + u / sqrt_t, obs, model.nu())?;
            Ok((u, ll - ref_loglik))
        })
        .collect::<Result<_>>()?;
    Ok(ProfileResult { points, dropped })
}

/// Default profile grid: 21 points uniform on [-5, 5].
pub fn default_u_grid() -> Vec<f64> {
    (0..21).map(|i| -5.0 + 0.5 * i as f64).collect()
}

/// Quadratic coefficient c2 of the least-squares parabola through the
/// profile. For the limiting profile `log Z(u) = sqrt(I) zeta u - I u^2 / 2`
/// the Fisher information is recovered as `-2 * c2`.
pub fn fit_log_profile_curvature(profile: &[(f64, f64)]) -> Result<f64> {
    if profile.len() < 5 {
        return Err(Error::InvalidArgument(
            "profile curvature fit needs >= 5 points".into(),
        ));
    }
    let xs: Vec<f64> = profile.iter().map(|(u, _)| *u).collect();
    let ys: Vec<f64> = profile.iter().map(|(_, z)| *z).collect();
    let mut distinct = xs.clone();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidArgument(
            "degenerate profile: fewer than 3 distinct abscissae".into(),
        ));
    }
    let (_, _, c2) = crate::stats::parabola_fit(&xs, &ys)?;
    Ok(c2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::log_likelihood_ratio;
    use crate::model::{two_state_model, Family, ParamModel, SimplexVec};

    fn two_state() -> ParamModel {
        two_state_model((0.1, 5.0), SimplexVec::uniform(2)).unwrap()
    }

    fn seeded_obs(model: &ParamModel, theta0: f64, horizon: f64, dt: f64, seed: u64) -> ObsPath {
        let mut rng = RngStream::from_seed(seed);
        let path = sample_chain_path(&model.lambda(theta0), model.nu(), horizon, &mut rng).unwrap();
        sample_observations(&path, model.h(), dt, &mut rng).unwrap()
    }

    #[test]
    fn grid_refine_agrees_with_brute_force() {
        let model = two_state();
        for seed in 0..10u64 {
            let obs = seeded_obs(&model, 1.0, 20.0, 1e-2, 100 + seed);
            let refine_tol = 1e-4;
            let est = estimate_mle(&model, &obs, 64, refine_tol).unwrap();

            let fine = 4096;
            let (lo, hi) = model.theta_interval();
            let mut best_theta = lo;
            let mut best_val = f64::NEG_INFINITY;
            for j in 0..fine {
                let theta = lo + (hi - lo) * j as f64 / (fine - 1) as f64;
                let v = log_likelihood(&model, theta, &obs, model.nu()).unwrap();
                if v > best_val {
                    best_val = v;
                    best_theta = theta;
                }
            }
            let spacing = (hi - lo) / (fine - 1) as f64;
            let tol = refine_tol.max(spacing) * 1.5;
            assert!(
                (est.theta_hat - best_theta).abs() <= tol,
                "seed {seed}: {} vs brute {best_theta}",
                est.theta_hat
            );
        }
    }

    #[test]
    fn mle_is_deterministic() {
        let model = two_state();
        let obs = seeded_obs(&model, 1.0, 10.0, 1e-3, 61);
        let a = estimate_mle(&model, &obs, 32, 1e-6).unwrap();
        let b = estimate_mle(&model, &obs, 32, 1e-6).unwrap();
        assert_eq!(a.theta_hat.to_bits(), b.theta_hat.to_bits());
    }

    #[test]
    fn mle_dominates_profile() {
        let model = two_state();
        let obs = seeded_obs(&model, 1.0, 100.0, 1e-2, 67);
        let est = estimate_mle(&model, &obs, 32, 1e-6).unwrap();
        for &(theta, v) in est.profile.as_ref().unwrap() {
            assert!(
                est.loglik_at_hat >= v - 1e-9,
                "profile value at {theta} exceeds maximum"
            );
        }
        assert!(!est.at_boundary);
    }

    #[test]
    fn small_grid_rejected() {
        let model = two_state();
        let obs = seeded_obs(&model, 1.0, 1.0, 1e-3, 71);
        assert!(estimate_mle(&model, &obs, 4, 1e-6).is_err());
    }

    #[test]
    fn reference_parameter_does_not_move_the_ratio_shape() {
        // llr(theta, eta1) - llr(theta, eta2) must be constant in theta.
        let model = two_state();
        let obs = seeded_obs(&model, 1.0, 5.0, 1e-3, 73);
        let nu = model.nu();
        let thetas = [0.3, 0.9, 1.7, 3.2];
        let consts: Vec<f64> = thetas
            .iter()
            .map(|&t| {
                log_likelihood_ratio(&model, t, 0.8, &obs, nu).unwrap()
                    - log_likelihood_ratio(&model, t, 2.2, &obs, nu).unwrap()
            })
            .collect();
        for w in consts.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-10, "not constant: {consts:?}");
        }
    }

    #[test]
    fn fisher_is_zero_for_constant_h() {
        let family = Family::Affine {
            dim: 2,
            base: vec![-2.0, 2.0, 3.0, -3.0],
            slope: vec![-1.0, 1.0, 1.0, -1.0],
        };
        let model =
            ParamModel::new(family, vec![0.4, 0.4], (0.1, 1.0), SimplexVec::uniform(2)).unwrap();
        let mut rng = RngStream::from_seed(79);
        let est = fisher_information(&model, 0.5, 10.0, 1e-3, &mut rng).unwrap();
        assert!(est.value.abs() < 1e-16, "fisher {}", est.value);
    }

    #[test]
    fn fisher_is_zero_for_constant_family() {
        let family = Family::Affine {
            dim: 2,
            base: vec![-2.0, 2.0, 3.0, -3.0],
            slope: vec![0.0; 4],
        };
        let model =
            ParamModel::new(family, vec![0.0, 1.0], (0.1, 1.0), SimplexVec::uniform(2)).unwrap();
        let mut rng = RngStream::from_seed(83);
        let est = fisher_information(&model, 0.5, 10.0, 1e-3, &mut rng).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn profile_is_zero_at_origin_and_continuous() {
        let model = two_state();
        let obs = seeded_obs(&model, 1.0, 25.0, 1e-3, 89);
        let profile = likelihood_profile(&model, 1.0, &obs, &default_u_grid()).unwrap();
        let at_zero = profile
            .points
            .iter()
            .find(|(u, _)| *u == 0.0)
            .map(|(_, z)| *z)
            .unwrap();
        assert_eq!(at_zero, 0.0);
        // Coarse Hoelder check: increments bounded by a stable constant as the
        // grid refines.
        let coarse: Vec<f64> = (0..11).map(|i| -2.0 + 0.4 * i as f64).collect();
        let fine: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
        let slope_of = |grid: &[f64]| -> f64 {
            let pr = likelihood_profile(&model, 1.0, &obs, grid).unwrap();
            pr.points
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0f64, f64::max)
        };
        let c_coarse = slope_of(&coarse);
        let c_fine = slope_of(&fine);
        assert!(
            c_fine <= 2.0 * c_coarse + 1.0,
            "slope blew up: {c_coarse} -> {c_fine}"
        );
    }

    #[test]
    fn out_of_interval_u_values_are_dropped() {
        let model = two_state();
        let obs = seeded_obs(&model, 1.0, 4.0, 1e-3, 97);
        // sqrt(T) = 2, so u = 9 maps to theta = 5.5 which is outside.
        let profile = likelihood_profile(&model, 1.0, &obs, &[0.0, 1.0, 9.0]).unwrap();
        assert_eq!(profile.points.len(), 2);
        assert_eq!(profile.dropped, vec![9.0]);
        assert!(likelihood_profile(&model, 1.0, &obs, &[900.0]).is_err());
    }

    #[test]
    fn curvature_of_exact_parabola_and_line() {
        let xs: Vec<f64> = (-5..=5).map(|i| i as f64).collect();
        let parab: Vec<(f64, f64)> = xs.iter().map(|&u| (u, -0.5 * u * u)).collect();
        let c2 = fit_log_profile_curvature(&parab).unwrap();
        assert!((c2 + 0.5).abs() < 1e-10);
        assert!((-2.0 * c2 - 1.0).abs() < 1e-10);

        let line: Vec<(f64, f64)> = xs.iter().map(|&u| (u, u)).collect();
        assert!(fit_log_profile_curvature(&line).unwrap().abs() < 1e-10);

        let degenerate: Vec<(f64, f64)> = (0..6).map(|_| (1.0, 2.0)).collect();
        assert!(fit_log_profile_curvature(&degenerate).is_err());
        assert!(fit_log_profile_curvature(&parab[..3]).is_err());
    }
}
