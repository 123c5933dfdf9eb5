//! Trajectory sampling: hidden chain paths, discretized noisy observations,
//! and coupled chain pairs.
//!
//! All samplers are pure functions of their inputs and an explicit
//! [`RngStream`], so identical seeds give bit-identical paths.

use crate::model::{Generator, SimplexVec};
use crate::rng::RngStream;
use crate::{Error, Result};

/// A sampled trajectory of the hidden chain on [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    horizon: f64,
    jump_times: Vec<f64>,
    states: Vec<usize>, // one more entry than jump_times; starting state first
}

impl ChainPath {
    pub fn new(horizon: f64, jump_times: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        if states.len() != jump_times.len() + 1 {
            return Err(Error::InvalidArgument(
                "states must have one more entry than jump_times".into(),
            ));
        }
        let mut prev = 0.0;
        for (&t, w) in jump_times.iter().zip(states.windows(2)) {
            if t <= prev || t > horizon {
                return Err(Error::InvalidArgument(format!(
                    "jump time {t} out of order or beyond horizon"
                )));
            }
            if w[0] == w[1] {
                return Err(Error::InvalidArgument(
                    "consecutive states must differ".into(),
                ));
            }
            prev = t;
        }
        Ok(ChainPath {
            horizon,
            jump_times,
            states,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// State occupied at time t (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.jump_times.partition_point(|&s| s <= t);
        self.states[idx]
    }

    /// Exact integral of h(S_t) over [a, b], using the jump times.
    pub fn integrate_h(&self, h: &[f64], a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let mut acc = 0.0;
        let mut t = a;
        let mut idx = self.jump_times.partition_point(|&s| s <= a);
        while t < b {
            let seg_end = if idx < self.jump_times.len() {
                self.jump_times[idx].min(b)
            } else {
                b
            };
            acc += h[self.states[idx]] * (seg_end - t);
            t = seg_end;
            idx += 1;
        }
        acc
    }

    /// Fraction of [0, T] spent in the given state.
    pub fn occupation_fraction(&self, state: usize) -> f64 {
        let mut indicator = vec![0.0; self.states.iter().max().unwrap() + 1];
        indicator[state] = 1.0;
        self.integrate_h(&indicator, 0.0, self.horizon) / self.horizon
    }
}

/// Discretized observation increments on a uniform grid of step dt.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsPath {
    dt: f64,
    increments: Vec<f64>,
}

impl ObsPath {
    pub fn new(dt: f64, increments: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive: {dt}")));
        }
        Ok(ObsPath { dt, increments })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }

    /// The sub-path covering grid steps [s_index, t_index).
    pub fn segment(&self, s_index: usize, t_index: usize) -> Result<ObsPath> {
        if s_index > t_index || t_index > self.increments.len() {
            return Err(Error::InvalidArgument(format!(
                "invalid segment [{s_index}, {t_index})"
            )));
        }
        Ok(ObsPath {
            dt: self.dt,
            increments: self.increments[s_index..t_index].to_vec(),
        })
    }

    /// Aggregate consecutive increments by `factor`, doubling (etc.) the grid
    /// step while keeping the same underlying observation record.
    pub fn coarsen(&self, factor: usize) -> Result<ObsPath> {
        if factor == 0 || self.increments.len() % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by factor {factor}",
                self.increments.len()
            )));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().sum())
            .collect();
        ObsPath::new(self.dt * factor as f64, increments)
    }
}

/// A coupled pair of chain trajectories on a shared probability space.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub path_a: ChainPath,
    pub path_b: ChainPath,
    /// Coupling time; +inf when the chains never met before the horizon.
    pub tau: f64,
}

/// Sample a chain trajectory by the holding-time construction: initial state
/// from nu, holding time Exponential(-lambda_ii), next state j with
/// probability lambda_ij / (-lambda_ii).
pub fn sample_chain_path(
    g: &Generator,
    nu: &SimplexVec,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<ChainPath> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive: {horizon}"
        )));
    }
    if nu.dim() != g.dim() {
        return Err(Error::InvalidArgument(
            "initial law dimension mismatch".into(),
        ));
    }
    let mut state = sample_index(nu.entries(), rng);
    let mut t = 0.0;
    let mut jump_times = Vec::new();
    let mut states = vec![state];
    loop {
        let exit_rate = -g.rate(state, state);
        if exit_rate <= 0.0 {
            break; // absorbing state: path stays put
        }
        t += rng.exponential(exit_rate);
        if t > horizon {
            break;
        }
        state = sample_jump_target(g, state, rng);
        jump_times.push(t);
        states.push(state);
    }
    ChainPath::new(horizon, jump_times, states)
}

fn sample_index(weights: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn sample_jump_target(g: &Generator, from: usize, rng: &mut RngStream) -> usize {
    let d = g.dim();
    let exit_rate = -g.rate(from, from);
    let u = rng.uniform() * exit_rate;
    let mut acc = 0.0;
    let mut last = from;
    for j in 0..d {
        if j == from {
            continue;
        }
        let r = g.rate(from, j);
        if r <= 0.0 {
            continue;
        }
        acc += r;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// Observation increments on a grid of step dt:
/// dX_k = int h(S_t) dt over the cell (exact, using jump times) plus
/// sqrt(dt) times a standard normal draw.
pub fn sample_observations(
    path: &ChainPath,
    h: &[f64],
    dt: f64,
    rng: &mut RngStream,
) -> Result<ObsPath> {
    let horizon = path.horizon();
    let n_steps = (horizon / dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * dt - horizon).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} does not divide horizon {horizon}"
        )));
    }
    let sqrt_dt = dt.sqrt();
    let jumps = path.jump_times();
    let states = path.states();
    let mut increments = Vec::with_capacity(n_steps);
    // Sweep the jump segments once instead of re-searching per cell.
    let mut idx = 0usize;
    for k in 0..n_steps {
        let b = (k + 1) as f64 * dt;
        let mut t = k as f64 * dt;
        let mut drift = 0.0;
        while idx < jumps.len() && jumps[idx] <= b {
            drift += h[states[idx]] * (jumps[idx] - t);
            t = jumps[idx];
            idx += 1;
        }
        drift += h[states[idx]] * (b - t);
        increments.push(drift + sqrt_dt * rng.standard_normal());
    }
    ObsPath::new(dt, increments)
}

/// Sample a coupled pair of chains: independent exponential clocks until the
/// first meeting time tau, identical moves afterwards.
pub fn sample_coupled_chains(
    g: &Generator,
    nu_a: &SimplexVec,
    nu_b: &SimplexVec,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<CoupledPair> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive: {horizon}"
        )));
    }
    let mut sa = sample_index(nu_a.entries(), rng);
    let mut sb = sample_index(nu_b.entries(), rng);
    let mut t = 0.0;
    let mut jumps_a = Vec::new();
    let mut states_a = vec![sa];
    let mut jumps_b = Vec::new();
    let mut states_b = vec![sb];
    let mut tau = if sa == sb { 0.0 } else { f64::INFINITY };

    // Independent phase.
    while sa != sb && t <= horizon {
        let ra = -g.rate(sa, sa);
        let rb = -g.rate(sb, sb);
        if ra <= 0.0 && rb <= 0.0 {
            break;
        }
        let ta = if ra > 0.0 {
            rng.exponential(ra)
        } else {
            f64::INFINITY
        };
        let tb = if rb > 0.0 {
            rng.exponential(rb)
        } else {
            f64::INFINITY
        };
        if ta <= tb {
            if t + ta > horizon {
                break;
            }
            t += ta;
            sa = sample_jump_target(g, sa, rng);
            jumps_a.push(t);
            states_a.push(sa);
        } else {
            if t + tb > horizon {
                break;
            }
            t += tb;
            sb = sample_jump_target(g, sb, rng);
            jumps_b.push(t);
            states_b.push(sb);
        }
        if sa == sb {
            tau = t;
        }
    }

    // Coupled phase: one trajectory mirrored into both paths.
    if sa == sb {
        let mut state = sa;
        let mut tc = tau;
        loop {
            let rate = -g.rate(state, state);
            if rate <= 0.0 {
                break;
            }
            tc += rng.exponential(rate);
            if tc > horizon {
                break;
            }
            state = sample_jump_target(g, state, rng);
            jumps_a.push(tc);
            states_a.push(state);
            jumps_b.push(tc);
            states_b.push(state);
        }
    }

    Ok(CoupledPair {
        path_a: ChainPath::new(horizon, jumps_a, states_a)?,
        path_b: ChainPath::new(horizon, jumps_b, states_b)?,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{two_state_model, Generator, SimplexVec};
    use crate::stats;

    fn symmetric() -> Generator {
        Generator::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]).unwrap()
    }

    #[test]
    fn d1_path_has_no_jumps() {
        let g = Generator::new(1, vec![0.0]).unwrap();
        let nu = SimplexVec::new(vec![1.0]).unwrap();
        let mut rng = RngStream::from_seed(1);
        let p = sample_chain_path(&g, &nu, 5.0, &mut rng).unwrap();
        assert!(p.jump_times().is_empty());
        assert_eq!(p.states(), &[0]);
    }

    #[test]
    fn occupation_fraction_matches_stationary_law() {
        let g = symmetric();
        let nu = SimplexVec::uniform(2);
        let mut rng = RngStream::from_seed(7);
        let p = sample_chain_path(&g, &nu, 1e4, &mut rng).unwrap();
        let frac = p.occupation_fraction(1);
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn mean_holding_time_is_inverse_rate() {
        let g = symmetric();
        let nu = SimplexVec::uniform(2);
        let mut rng = RngStream::from_seed(3);
        let mut holds = Vec::new();
        while holds.len() < 10_000 {
            let p = sample_chain_path(&g, &nu, 200.0, &mut rng).unwrap();
            let mut prev = 0.0;
            for &t in p.jump_times() {
                holds.push(t - prev);
                prev = t;
            }
        }
        let m = stats::mean(&holds);
        assert!((m - 1.0).abs() < 0.05, "mean holding {m}");
    }

    #[test]
    fn paths_are_deterministic_in_the_stream() {
        let g = symmetric();
        let nu = SimplexVec::uniform(2);
        let a = sample_chain_path(&g, &nu, 50.0, &mut RngStream::derive(9, 4)).unwrap();
        let b = sample_chain_path(&g, &nu, 50.0, &mut RngStream::derive(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chain_marginal_matches_semigroup() {
        let g = Generator::from_rows(&[&[-2.0, 2.0], &[3.0, -3.0]]).unwrap();
        let nu = SimplexVec::point_mass(2, 0).unwrap();
        let t_probe = 0.7;
        let mut counts = [0usize; 2];
        let reps = 10_000;
        for i in 0..reps {
            let mut rng = RngStream::derive(11, i);
            let p = sample_chain_path(&g, &nu, 1.0, &mut rng).unwrap();
            counts[p.state_at(t_probe)] += 1;
        }
        let expected = crate::linalg::vec_mat(nu.entries(), &g.transition_matrix(t_probe), 2);
        let tv: f64 = (0..2)
            .map(|i| (counts[i] as f64 / reps as f64 - expected[i]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.03, "total variation {tv}");
    }

    #[test]
    fn pure_noise_observations() {
        let g = symmetric();
        let nu = SimplexVec::uniform(2);
        let mut rng = RngStream::from_seed(5);
        let p = sample_chain_path(&g, &nu, 100.0, &mut rng).unwrap();
        let obs = sample_observations(&p, &[0.0, 0.0], 1e-3, &mut rng).unwrap();
        assert_eq!(obs.n_steps(), 100_000);
        let m = stats::mean(obs.increments());
        let v = stats::variance(obs.increments());
        assert!(m.abs() < 3.0 * (1e-3f64 / 1e5).sqrt(), "mean {m}");
        assert!((v / 1e-3 - 1.0).abs() < 0.05, "variance ratio {}", v / 1e-3);
    }

    #[test]
    fn constant_path_observation_mean() {
        let path = ChainPath::new(10.0, vec![], vec![1]).unwrap();
        let mut rng = RngStream::from_seed(2);
        let h = [0.0, 0.7];
        let obs = sample_observations(&path, &h, 0.01, &mut rng).unwrap();
        let m = stats::mean(obs.increments());
        assert!((m - 0.007).abs() < 0.004, "mean {m}");
    }

    #[test]
    fn ergodic_observation_drift() {
        let model = two_state_model((0.1, 5.0), SimplexVec::uniform(2)).unwrap();
        let g = model.lambda(1.0);
        let mut rng = RngStream::from_seed(8);
        let p = sample_chain_path(&g, model.nu(), 100.0, &mut rng).unwrap();
        let obs = sample_observations(&p, model.h(), 1e-3, &mut rng).unwrap();
        let drift = stats::mean(obs.increments()) / 1e-3;
        assert!((drift - 0.5).abs() < 0.05, "drift {drift}");
    }

    #[test]
    fn exact_drift_integral_splits_jumps() {
        // One jump at t = 0.35 inside the cell [0.3, 0.4).
        let path = ChainPath::new(1.0, vec![0.35], vec![0, 1]).unwrap();
        let h = [0.0, 2.0];
        assert!((path.integrate_h(&h, 0.3, 0.4) - 2.0 * 0.05).abs() < 1e-15);
        assert!((path.integrate_h(&h, 0.0, 1.0) - 2.0 * 0.65).abs() < 1e-15);
    }

    #[test]
    fn bad_dt_rejected() {
        let path = ChainPath::new(1.0, vec![], vec![0]).unwrap();
        let mut rng = RngStream::from_seed(1);
        assert!(sample_observations(&path, &[0.0, 1.0], 0.3, &mut rng).is_err());
    }

    #[test]
    fn coupling_from_identical_states_is_immediate() {
        let g = symmetric();
        let nu = SimplexVec::point_mass(2, 0).unwrap();
        let mut rng = RngStream::from_seed(4);
        let pair = sample_coupled_chains(&g, &nu, &nu, 10.0, &mut rng).unwrap();
        assert_eq!(pair.tau, 0.0);
        assert_eq!(pair.path_a, pair.path_b);
    }

    #[test]
    fn coupling_tail_matches_first_flip_law() {
        let g = symmetric();
        let nu_a = SimplexVec::point_mass(2, 0).unwrap();
        let nu_b = SimplexVec::point_mass(2, 1).unwrap();
        let mut taus = Vec::with_capacity(10_000);
        for i in 0..10_000u64 {
            let mut rng = RngStream::derive(21, i);
            let pair = sample_coupled_chains(&g, &nu_a, &nu_b, 30.0, &mut rng).unwrap();
            assert!(pair.tau.is_finite());
            taus.push(pair.tau);
        }
        // First flip of either independent chain is Exponential(1 + 1).
        let ks = stats::ks_statistic(&taus, |x| stats::exp_cdf(x, 2.0));
        assert!(ks <= 0.05, "KS distance {ks}");
    }

    #[test]
    fn paths_coincide_after_tau() {
        let g = Generator::from_rows(&[&[-2.0, 2.0], &[3.0, -3.0]]).unwrap();
        let nu_a = SimplexVec::point_mass(2, 0).unwrap();
        let nu_b = SimplexVec::point_mass(2, 1).unwrap();
        for i in 0..100u64 {
            let mut rng = RngStream::derive(31, i);
            let pair = sample_coupled_chains(&g, &nu_a, &nu_b, 20.0, &mut rng).unwrap();
            if !pair.tau.is_finite() {
                continue;
            }
            let mut t = pair.tau;
            while t <= 20.0 {
                assert_eq!(pair.path_a.state_at(t), pair.path_b.state_at(t), "t = {t}");
                t += 0.05;
            }
        }
    }

    #[test]
    fn coupled_marginal_matches_semigroup() {
        let g = Generator::from_rows(&[&[-2.0, 2.0], &[3.0, -3.0]]).unwrap();
        let nu_a = SimplexVec::point_mass(2, 0).unwrap();
        let nu_b = SimplexVec::point_mass(2, 1).unwrap();
        let t_probe = 0.5;
        let reps = 10_000;
        let mut counts = [0usize; 2];
        for i in 0..reps {
            let mut rng = RngStream::derive(41, i);
            let pair = sample_coupled_chains(&g, &nu_a, &nu_b, 1.0, &mut rng).unwrap();
            counts[pair.path_b.state_at(t_probe)] += 1;
        }
        let expected = crate::linalg::vec_mat(nu_b.entries(), &g.transition_matrix(t_probe), 2);
        let tv: f64 = (0..2)
            .map(|i| (counts[i] as f64 / reps as f64 - expected[i]).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.03, "total variation {tv}");
    }

    #[test]
    fn coarsen_aggregates_increments() {
        let obs = ObsPath::new(0.5, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = obs.coarsen(2).unwrap();
        assert_eq!(c.dt(), 1.0);
        assert_eq!(c.increments(), &[3.0, 7.0]);
        assert!(obs.coarsen(3).is_err());
    }
}
