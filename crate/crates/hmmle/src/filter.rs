//! Euler-Maruyama discretization of the conditional-law SDE
//!
//!   d pi = Lambda^T pi dt + (diag(pi) - pi pi^T) h (dX - h^T pi dt)
//!
//! with per-step clamping to the simplex interior, Ito (left-endpoint)
//! log-likelihood accumulation, and exact differentiation of the discrete
//! recursion for parameter sensitivities and tangent propagation.

use crate::model::{ParamModel, SimplexVec, EPS_FLOOR};
use crate::simulate::ObsPath;
use crate::{Error, Result};

/// A zero-sum direction in which simplex states may be perturbed.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec(Vec<f64>);

impl TangentVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        let sum: f64 = entries.iter().sum();
        if sum.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "tangent vector entries sum to {sum}"
            )));
        }
        Ok(TangentVec(entries))
    }

    pub fn zero(d: usize) -> Self {
        TangentVec(vec![0.0; d])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|x| x.abs()).sum()
    }

    pub fn scale(&self, a: f64) -> Self {
        TangentVec(self.0.iter().map(|x| a * x).collect())
    }
}

/// Result of a filter run over an observation path.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub dt: f64,
    /// Conditional law at each grid time, length n_steps + 1.
    pub pis: Vec<SimplexVec>,
    /// Accumulated log-likelihood log L_T.
    pub loglik: f64,
    /// Innovation increments dX_k - h^T pi_k dt, length n_steps.
    pub innovations: Vec<f64>,
    /// d pi / d theta at each grid time, when the sensitivity recursion ran.
    pub sensitivity: Option<Vec<Vec<f64>>>,
    /// Number of grid steps at which some entry was clamped to the floor.
    pub clamp_events: usize,
}

/// One live filter recursion; `step` advances by one observation increment.
///
/// Used directly by the stability and asymptotics modules to stream over
/// long paths without storing trajectories.
pub(crate) struct FilterState {
    d: usize,
    dt: f64,
    lam_t: Vec<f64>,  // Lambda^T, row-major
    dlam_t: Vec<f64>, // (Lambda')^T, row-major
    h: Vec<f64>,
    p: Vec<f64>,
    q: Option<Vec<f64>>,
    raw: Vec<f64>,
    draw: Vec<f64>,
    pub loglik: f64,
    pub clamp_events: usize,
    steps_done: usize,
}

impl FilterState {
    pub fn new(
        model: &ParamModel,
        theta: f64,
        dt: f64,
        init: &SimplexVec,
        with_sensitivity: bool,
    ) -> Result<Self> {
        model.check_theta(theta)?;
        if init.dim() != model.dim() {
            return Err(Error::InvalidArgument(
                "filter init dimension mismatch".into(),
            ));
        }
        let d = model.dim();
        let g = model.lambda(theta);
        let lam_t = g.transposed_rates();
        let dlam = model.dlambda(theta);
        let mut dlam_t = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                dlam_t[j * d + i] = dlam[i * d + j];
            }
        }
        // Clamp only when actually needed so that restarting from a stored
        // filter state reproduces the continuation bit-exactly.
        let p = if init.min_entry() >= EPS_FLOOR {
            init.entries().to_vec()
        } else {
            init.clamp_interior().entries().to_vec()
        };
        Ok(FilterState {
            d,
            dt,
            lam_t,
            dlam_t,
            h: model.h().to_vec(),
            p,
            q: with_sensitivity.then(|| vec![0.0; d]),
            raw: vec![0.0; d],
            draw: vec![0.0; d],
            loglik: 0.0,
            clamp_events: 0,
            steps_done: 0,
        })
    }

    pub fn pi(&self) -> &[f64] {
        &self.p
    }

    pub fn sensitivity(&self) -> Option<&[f64]> {
        self.q.as_deref()
    }

    /// Predicted observation drift h^T pi at the current grid time.
    pub fn predicted_drift(&self) -> f64 {
        dot(&self.h, &self.p)
    }

    /// h^T (d pi / d theta) at the current grid time.
    pub fn sensitivity_drift(&self) -> f64 {
        self.q.as_ref().map_or(0.0, |q| dot(&self.h, q))
    }

    /// Seed the tangent slot with an explicit direction; afterwards `step`
    /// propagates it as a Jacobian-vector product (no parameter derivative).
    pub fn seed_tangent(&mut self, v: &TangentVec) {
        self.q = Some(v.entries().to_vec());
        // Zero the parameter-derivative source so only the initial direction
        // propagates.
        self.dlam_t.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Advance one grid step; returns the innovation increment.
    pub fn step(&mut self, dx: f64) -> Result<f64> {
        if !dx.is_finite() {
            return Err(Error::NonFiniteObservation {
                step: self.steps_done,
            });
        }
        let d = self.d;
        let dt = self.dt;
        let m = dot(&self.h, &self.p);
        let db = dx - m * dt;
        self.loglik += m * dx - 0.5 * m * m * dt;

        for i in 0..d {
            let mut drift = 0.0;
            for j in 0..d {
                drift += self.lam_t[i * d + j] * self.p[j];
            }
            self.raw[i] = self.p[i] + drift * dt + self.p[i] * (self.h[i] - m) * db;
        }

        if let Some(q) = &self.q {
            let md = dot(&self.h, q);
            for i in 0..d {
                let mut qdrift = 0.0;
                let mut pdrift = 0.0;
                for j in 0..d {
                    qdrift += self.lam_t[i * d + j] * q[j];
                    pdrift += self.dlam_t[i * d + j] * self.p[j];
                }
                self.draw[i] = q[i]
                    + (qdrift + pdrift) * dt
                    + q[i] * (self.h[i] - m) * db
                    - self.p[i] * md * db
                    - self.p[i] * (self.h[i] - m) * md * dt;
            }
        }

        let mut clamped = false;
        for i in 0..d {
            if self.raw[i] < EPS_FLOOR {
                self.raw[i] = EPS_FLOOR;
                self.draw[i] = 0.0;
                clamped = true;
            }
        }
        if clamped {
            self.clamp_events += 1;
        }

        let sum: f64 = self.raw.iter().sum();
        let inv = 1.0 / sum;
        for i in 0..d {
            self.p[i] = self.raw[i] * inv;
        }
        if let Some(q) = &mut self.q {
            let dsum: f64 = self.draw.iter().sum();
            for i in 0..d {
                q[i] = self.draw[i] * inv - self.p[i] * dsum * inv;
            }
        }

        self.steps_done += 1;
        Ok(db)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Run the filter over the whole observation path, recording the conditional
/// law at every grid time and the accumulated log-likelihood.
pub fn run_filter(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    init: &SimplexVec,
) -> Result<FilterRun> {
    run_impl(model, theta, obs, init, false)
}

/// As [`run_filter`], additionally propagating the exact derivative of the
/// discrete recursion with respect to theta (started from zero).
pub fn run_sensitivity_filter(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    init: &SimplexVec,
) -> Result<FilterRun> {
    run_impl(model, theta, obs, init, true)
}

fn run_impl(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    init: &SimplexVec,
    with_sensitivity: bool,
) -> Result<FilterRun> {
    let mut state = FilterState::new(model, theta, obs.dt(), init, with_sensitivity)?;
    let n = obs.n_steps();
    let mut pis = Vec::with_capacity(n + 1);
    let mut innovations = Vec::with_capacity(n);
    let mut sensitivity = with_sensitivity.then(|| Vec::with_capacity(n + 1));
    pis.push(SimplexVec::from_normalized(state.pi().to_vec()));
    if let Some(s) = &mut sensitivity {
        s.push(state.sensitivity().unwrap().to_vec());
    }
    for &dx in obs.increments() {
        innovations.push(state.step(dx)?);
        pis.push(SimplexVec::from_normalized(state.pi().to_vec()));
        if let Some(s) = &mut sensitivity {
            s.push(state.sensitivity().unwrap().to_vec());
        }
    }
    if !state.loglik.is_finite() {
        return Err(Error::NonFiniteLikelihood { theta });
    }
    Ok(FilterRun {
        dt: obs.dt(),
        pis,
        loglik: state.loglik,
        innovations,
        sensitivity,
        clamp_events: state.clamp_events,
    })
}

/// Log-likelihood only; no trajectory storage.
pub(crate) fn log_likelihood(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    init: &SimplexVec,
) -> Result<f64> {
    let mut state = FilterState::new(model, theta, obs.dt(), init, false)?;
    for &dx in obs.increments() {
        state.step(dx)?;
    }
    if !state.loglik.is_finite() {
        return Err(Error::NonFiniteLikelihood { theta });
    }
    Ok(state.loglik)
}

/// Log of the likelihood ratio between two parameter values on the same
/// observation path: both filters run in lockstep and the Ito sums are
/// differenced term by term.
pub fn log_likelihood_ratio(
    model: &ParamModel,
    theta: f64,
    eta: f64,
    obs: &ObsPath,
    init: &SimplexVec,
) -> Result<f64> {
    let mut num = FilterState::new(model, theta, obs.dt(), init, false)?;
    let mut den = FilterState::new(model, eta, obs.dt(), init, false)?;
    let dt = obs.dt();
    let mut acc = 0.0;
    for &dx in obs.increments() {
        let m1 = num.predicted_drift();
        let m2 = den.predicted_drift();
        acc += (m1 - m2) * dx - 0.5 * (m1 * m1 - m2 * m2) * dt;
        num.step(dx)?;
        den.step(dx)?;
    }
    if !acc.is_finite() {
        return Err(Error::NonFiniteLikelihood { theta });
    }
    Ok(acc)
}

/// Propagate the tangent direction `v` through the differentiated Euler
/// steps from grid index `s_index` to `t_index`, starting the filter at
/// `init`: a Jacobian-vector product of the discrete semiflow.
pub fn propagate_tangent(
    model: &ParamModel,
    theta: f64,
    obs: &ObsPath,
    init: &SimplexVec,
    v: &TangentVec,
    s_index: usize,
    t_index: usize,
) -> Result<TangentVec> {
    if s_index > t_index || t_index > obs.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "invalid index range [{s_index}, {t_index}]"
        )));
    }
    let mut state = FilterState::new(model, theta, obs.dt(), init, false)?;
    state.seed_tangent(v);
    for &dx in &obs.increments()[s_index..t_index] {
        state.step(dx)?;
    }
    Ok(TangentVec(state.sensitivity().unwrap().to_vec()))
}
