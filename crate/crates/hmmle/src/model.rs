//! Hidden Markov model families: rate matrices, probability vectors, and the
//! parametrized generator families the estimator works over.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Interior floor used when clamping probability vectors away from the
/// simplex boundary. Purely a numerical safeguard.
pub const EPS_FLOOR: f64 = 1e-12;

/// Absolute tolerance for generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// A d x d transition-rate matrix: nonnegative off-diagonals, zero row sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    dim: usize,
    rates: Vec<f64>, // row-major
}

impl Generator {
    /// Validating constructor.
    pub fn new(dim: usize, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != dim * dim {
            return Err(Error::InvalidGenerator(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                rates.len()
            )));
        }
        let g = Generator { dim, rates };
        let violations = validate_generator(&g);
        if violations.is_empty() {
            Ok(g)
        } else {
            Err(Error::InvalidGenerator(violations.join("; ")))
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut rates = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::InvalidGenerator("non-square rate matrix".into()));
            }
            rates.extend_from_slice(row);
        }
        Self::new(dim, rates)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.dim + j]
    }

    /// Row-major rate entries.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Transposed rates, row-major; the filter drift matrix.
    pub fn transposed_rates(&self) -> Vec<f64> {
        let d = self.dim;
        let mut t = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                t[j * d + i] = self.rates[i * d + j];
            }
        }
        t
    }

    /// Transition matrix exp(Lambda * t), row-major.
    pub fn transition_matrix(&self, t: f64) -> Vec<f64> {
        linalg::matrix_exp(&self.rates, self.dim, t)
    }
}

/// Check the generator invariants; an empty list means the matrix is valid.
pub fn validate_generator(g: &Generator) -> Vec<String> {
    let d = g.dim;
    let mut violations = Vec::new();
    if d == 0 {
        violations.push("dim must be >= 1".into());
        return violations;
    }
    for i in 0..d {
        let mut off_sum = 0.0;
        for j in 0..d {
            let v = g.rates[i * d + j];
            if !v.is_finite() {
                violations.push(format!("entry ({i},{j}) is not finite"));
            }
            if i != j {
                if v < 0.0 {
                    violations.push(format!("entry ({i},{j}) = {v} is negative"));
                }
                off_sum += v;
            }
        }
        let row_sum: f64 = g.rates[i * d..(i + 1) * d].iter().sum();
        if row_sum.abs() > ROW_SUM_TOL {
            violations.push(format!("row {i} sum = {row_sum}"));
        }
        let diag = g.rates[i * d + i];
        if (diag + off_sum).abs() > ROW_SUM_TOL {
            violations.push(format!(
                "diagonal ({i},{i}) = {diag} != negated off-diagonal sum {}",
                -off_sum
            ));
        }
    }
    violations
}

/// Contraction rate gamma = 2 min over unordered pairs p != q of
/// sqrt(lambda_pq * lambda_qp).
///
/// For d = 1 the filter is trivial and the rate is returned as the +inf
/// sentinel.
pub fn gamma_rate(g: &Generator) -> f64 {
    let d = g.dim;
    if d == 1 {
        return f64::INFINITY;
    }
    let mut min_prod = f64::INFINITY;
    for p in 0..d {
        for q in p + 1..d {
            min_prod = min_prod.min(g.rate(p, q) * g.rate(q, p));
        }
    }
    2.0 * min_prod.max(0.0).sqrt()
}

/// Stationary distribution mu of the chain: mu^T Lambda = 0, sum mu = 1.
pub fn chain_stationary_dist(g: &Generator) -> Result<SimplexVec> {
    let d = g.dim;
    if d == 1 {
        return SimplexVec::new(vec![1.0]);
    }
    // Solve Lambda^T mu = 0 with the last equation replaced by sum(mu) = 1.
    let mut a = g.transposed_rates();
    for j in 0..d {
        a[(d - 1) * d + j] = 1.0;
    }
    let mut b = vec![0.0; d];
    b[d - 1] = 1.0;
    let mu = linalg::solve(&a, &b, d)
        .ok_or_else(|| Error::NotUniquelyErgodic("singular balance system".into()))?;
    let residual = linalg::vec_mat(&mu, &g.rates, d)
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()));
    if residual > 1e-10 {
        return Err(Error::NotUniquelyErgodic(format!(
            "balance residual {residual}"
        )));
    }
    if mu.iter().any(|&x| x < -1e-12) {
        return Err(Error::NotUniquelyErgodic(
            "negative entry in balance solution".into(),
        ));
    }
    SimplexVec::new(mu.iter().map(|x| x.max(0.0)).collect())
}

// ---------------------------------------------------------------------------
// SimplexVec
// ---------------------------------------------------------------------------

/// A probability vector over the d states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexVec(Vec<f64>);

impl SimplexVec {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSimplex("empty vector".into()));
        }
        if entries.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidSimplex(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidSimplex(format!("entries sum to {sum}")));
        }
        Ok(SimplexVec(entries))
    }

    /// Uniform distribution over d states.
    pub fn uniform(d: usize) -> Self {
        SimplexVec(vec![1.0 / d as f64; d])
    }

    /// Point mass at the given state.
    pub fn point_mass(d: usize, state: usize) -> Result<Self> {
        if state >= d {
            return Err(Error::InvalidSimplex(format!(
                "state {state} out of range for dim {d}"
            )));
        }
        let mut v = vec![0.0; d];
        v[state] = 1.0;
        Ok(SimplexVec(v))
    }

    /// Clamp entries to the interior floor and renormalize.
    pub fn clamp_interior(&self) -> Self {
        let mut v: Vec<f64> = self.0.iter().map(|&x| x.max(EPS_FLOOR)).collect();
        let sum: f64 = v.iter().sum();
        for x in v.iter_mut() {
            *x /= sum;
        }
        SimplexVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// l1 distance to another simplex vector.
    pub fn l1_distance(&self, other: &SimplexVec) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub(crate) fn from_normalized(v: Vec<f64>) -> Self {
        SimplexVec(v)
    }
}

// ---------------------------------------------------------------------------
// ParamModel
// ---------------------------------------------------------------------------

/// Generator family: how the rate matrix depends on the scalar parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Family {
    /// Lambda(theta) = theta * [[-1, 1], [1, -1]], the symmetric two-state
    /// switching model.
    TwoState,
    /// Lambda(theta) = base + theta * slope, entrywise (row-major d x d).
    Affine {
        dim: usize,
        base: Vec<f64>,
        slope: Vec<f64>,
    },
}

impl Family {
    fn dim(&self) -> usize {
        match self {
            Family::TwoState => 2,
            Family::Affine { dim, .. } => *dim,
        }
    }

    fn rates_at(&self, theta: f64) -> Vec<f64> {
        match self {
            Family::TwoState => vec![-theta, theta, theta, -theta],
            Family::Affine { base, slope, .. } => base
                .iter()
                .zip(slope.iter())
                .map(|(b, s)| b + theta * s)
                .collect(),
        }
    }

    fn derivative(&self) -> Vec<f64> {
        match self {
            Family::TwoState => vec![-1.0, 1.0, 1.0, -1.0],
            Family::Affine { slope, .. } => slope.clone(),
        }
    }
}

/// A parametrized hidden Markov model: theta |-> Lambda(theta) with explicit
/// derivative, observation levels h, parameter interval, and initial law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamModel {
    family: Family,
    h: Vec<f64>,
    theta_min: f64,
    theta_max: f64,
    nu: SimplexVec,
}

impl ParamModel {
    /// Validating constructor. Checks that the family yields valid generators
    /// with strictly positive off-diagonals over a grid on the closed
    /// interval, that the supplied derivative has zero row sums, and that it
    /// is finite-difference consistent with the family.
    pub fn new(
        family: Family,
        h: Vec<f64>,
        theta_interval: (f64, f64),
        nu: SimplexVec,
    ) -> Result<Self> {
        let (theta_min, theta_max) = theta_interval;
        if !(theta_min < theta_max) {
            return Err(Error::InvalidModel(format!(
                "empty parameter interval ({theta_min}, {theta_max})"
            )));
        }
        let d = family.dim();
        if h.len() != d {
            return Err(Error::InvalidModel(format!(
                "h has {} entries, model dim is {d}",
                h.len()
            )));
        }
        if nu.dim() != d {
            return Err(Error::InvalidModel(format!(
                "nu has {} entries, model dim is {d}",
                nu.dim()
            )));
        }

        // Strong ergodicity over a closure grid (endpoints included).
        let grid = 33;
        for k in 0..grid {
            let theta = theta_min + (theta_max - theta_min) * k as f64 / (grid - 1) as f64;
            let g = Generator::new(d, family.rates_at(theta)).map_err(|e| {
                Error::InvalidModel(format!("invalid generator at theta = {theta}: {e}"))
            })?;
            if d > 1 {
                for i in 0..d {
                    for j in 0..d {
                        if i != j && g.rate(i, j) <= 0.0 {
                            return Err(Error::InvalidModel(format!(
                                "off-diagonal rate ({i},{j}) = {} at theta = {theta} \
                                 is not strictly positive",
                                g.rate(i, j)
                            )));
                        }
                    }
                }
            }
        }

        // Derivative row sums.
        let dlam = family.derivative();
        for i in 0..d {
            let row_sum: f64 = dlam[i * d..(i + 1) * d].iter().sum();
            if row_sum.abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "derivative row {i} sum = {row_sum}"
                )));
            }
        }

        // Finite-difference consistency at the interval midpoint.
        let theta = 0.5 * (theta_min + theta_max);
        let eps = 1e-6 * (theta_max - theta_min);
        let lo = family.rates_at(theta - eps);
        let hi = family.rates_at(theta + eps);
        for (k, dv) in dlam.iter().enumerate() {
            let fd = (hi[k] - lo[k]) / (2.0 * eps);
            if (fd - dv).abs() > 1e-6 * (1.0 + dv.abs()) {
                return Err(Error::InvalidModel(format!(
                    "derivative entry {k} inconsistent with finite difference: {dv} vs {fd}"
                )));
            }
        }

        Ok(ParamModel {
            family,
            h,
            theta_min,
            theta_max,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn theta_interval(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }

    pub fn nu(&self) -> &SimplexVec {
        &self.nu
    }

    /// Generator at the given parameter.
    pub fn lambda(&self, theta: f64) -> Generator {
        Generator {
            dim: self.family.dim(),
            rates: self.family.rates_at(theta),
        }
    }

    /// Entrywise derivative of the generator in theta (row-major).
    pub fn dlambda(&self, _theta: f64) -> Vec<f64> {
        self.family.derivative()
    }

    /// True iff theta lies in the closed parameter interval.
    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.theta_min && theta <= self.theta_max
    }

    pub(crate) fn check_theta(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::ParameterOutOfRange {
                theta,
                min: self.theta_min,
                max: self.theta_max,
            })
        }
    }
}

/// The canonical two-state switching model: Lambda(theta) = theta * K with
/// K = [[-1, 1], [1, -1]] and observation levels h = (0, 1).
pub fn two_state_model(theta_interval: (f64, f64), nu: SimplexVec) -> Result<ParamModel> {
    if theta_interval.0 <= 0.0 {
        return Err(Error::InvalidModel(format!(
            "two-state model requires theta_min > 0, got {}",
            theta_interval.0
        )));
    }
    ParamModel::new(Family::TwoState, vec![0.0, 1.0], theta_interval, nu)
}
