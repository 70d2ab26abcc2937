//! Continuous-time limit of all users running Exp3: the replicator field on
//! mixed profiles, its integration, and the stability of its fixed points.
//!
//! Expected interference is computed exactly: the number of other users on a
//! channel is Poisson-binomial and its law is obtained by convolution.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::congestion::is_pne;
use crate::error::{Error, Result};
use crate::game::{ActionProfile, GameSpec};

/// Field norm below which a trajectory is declared converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-9;
/// A row is pure when its largest entry is at least `1 - PURITY_TOLERANCE`.
pub const PURITY_TOLERANCE: f64 = 1e-6;
/// Eigenvalue real parts within this of zero count as zero.
pub const EIGEN_TOLERANCE: f64 = 1e-6;

const ROW_TOLERANCE: f64 = 1e-10;
const JACOBIAN_STEP: f64 = 1e-6;

/// Mixed strategies `p_ij`, one row per user.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixedProfile {
    num_users: usize,
    num_channels: usize,
    probs: Vec<f64>,
}

impl MixedProfile {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_users = rows.len();
        let num_channels = rows.first().map_or(0, Vec::len);
        if num_users == 0 || num_channels == 0 {
            return Err(Error::InvalidParam("empty mixed profile".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_channels {
                return Err(Error::InvalidParam(format!("row {i} has wrong length")));
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidParam(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidParam(format!("row {i} sums to {s}")));
            }
        }
        Ok(MixedProfile {
            num_users,
            num_channels,
            probs: rows.concat(),
        })
    }

    pub fn uniform(num_users: usize, num_channels: usize) -> Self {
        MixedProfile {
            num_users,
            num_channels,
            probs: vec![1.0 / num_channels as f64; num_users * num_channels],
        }
    }

    pub fn pure(profile: &ActionProfile, num_channels: usize) -> Self {
        let mut probs = vec![0.0; profile.num_users() * num_channels];
        for (i, &c) in profile.choices().iter().enumerate() {
            probs[i * num_channels + c] = 1.0;
        }
        MixedProfile {
            num_users: profile.num_users(),
            num_channels,
            probs,
        }
    }

    /// Rows drawn uniformly from the interior of the simplex.
    pub fn random_interior<R: Rng + ?Sized>(
        num_users: usize,
        num_channels: usize,
        rng: &mut R,
    ) -> Self {
        let mut probs = Vec::with_capacity(num_users * num_channels);
        for _ in 0..num_users {
            // normalized exponentials are uniform on the simplex
            let row: Vec<f64> = (0..num_channels)
                .map(|_| -rng.gen_range(f64::EPSILON..1.0).ln())
                .collect();
            let s: f64 = row.iter().sum();
            probs.extend(row.into_iter().map(|x| x / s));
        }
        MixedProfile {
            num_users,
            num_channels,
            probs,
        }
    }

    /// Unchecked constructor used for finite-difference probes, where entries
    /// may leave the simplex slightly.
    fn from_flat(num_users: usize, num_channels: usize, probs: Vec<f64>) -> Self {
        MixedProfile {
            num_users,
            num_channels,
            probs,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn get(&self, user: usize, channel: usize) -> f64 {
        self.probs[user * self.num_channels + channel]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.probs[user * self.num_channels..(user + 1) * self.num_channels]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    /// Clips negative entries and renormalizes every row.
    pub fn project(&mut self) {
        let n = self.num_channels;
        for row in self.probs.chunks_mut(n) {
            for p in row.iter_mut() {
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|p| *p /= s);
            } else {
                row.iter_mut().for_each(|p| *p = 1.0 / n as f64);
            }
        }
    }

    /// Largest deviation of any row from the probability simplex.
    pub fn simplex_violation(&self) -> f64 {
        self.probs
            .chunks(self.num_channels)
            .map(|row| {
                let neg = row.iter().fold(0.0f64, |m, &p| m.max(-p));
                neg.max((row.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// The pure profile each row is concentrated on, if every row is pure.
    pub fn as_pure(&self) -> Option<ActionProfile> {
        self.probs
            .chunks(self.num_channels)
            .map(|row| {
                let (c, &p) = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("nonempty row");
                (p >= 1.0 - PURITY_TOLERANCE).then_some(c)
            })
            .collect::<Option<Vec<_>>>()
            .map(ActionProfile)
    }
}

/// Law of a sum of independent Bernoulli variables with means `ps`.
pub fn poisson_binomial(ps: &[f64]) -> Vec<f64> {
    let mut dist = vec![0.0; ps.len() + 1];
    dist[0] = 1.0;
    for (m, &p) in ps.iter().enumerate() {
        for k in (1..=m + 1).rev() {
            dist[k] = dist[k] * (1.0 - p) + dist[k - 1] * p;
        }
        dist[0] *= 1.0 - p;
    }
    dist
}

/// `E[g_j(1 + K'_j(i))]` where `K'_j(i)` counts the other users on `channel`.
pub fn expected_interference(
    spec: &GameSpec,
    profile: &MixedProfile,
    user: usize,
    channel: usize,
) -> f64 {
    let others: Vec<f64> = (0..profile.num_users)
        .filter(|&m| m != user)
        .map(|m| profile.get(m, channel))
        .collect();
    poisson_binomial(&others)
        .iter()
        .enumerate()
        .map(|(k, pk)| pk * spec.interference(channel, k + 1))
        .sum()
}

/// `u_ij = mu_j E[g_j(1 + K'_j(i))]`, row-major.
pub fn expected_utilities(spec: &GameSpec, profile: &MixedProfile) -> Vec<f64> {
    let mut out = Vec::with_capacity(profile.probs.len());
    for i in 0..profile.num_users {
        for j in 0..profile.num_channels {
            out.push(spec.means()[j] * expected_interference(spec, profile, i, j));
        }
    }
    out
}

/// Which vector field to integrate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    /// `(1/N) p_ij sum_l p_il (u_ij - u_il)` with `u_ij = mu_j gbar_ij`: the
    /// expected per-step drift of Exp3 divided by its exploration rate.
    #[default]
    Exp3Limit,
    /// `(1/N) mu_j p_ij sum_l p_il (gbar_ij - gbar_il)`, with the channel mean
    /// factored outside the difference. Kept for comparison; it is not
    /// tangent to the simplex when means differ.
    MeanFactored,
}

/// Replicator field `xi_ij` of the Exp3 limit, row-major.
pub fn replicator_rhs(spec: &GameSpec, profile: &MixedProfile) -> Vec<f64> {
    field_rhs(spec, profile, Field::Exp3Limit)
}

pub fn field_rhs(spec: &GameSpec, profile: &MixedProfile, field: Field) -> Vec<f64> {
    let n = profile.num_channels;
    let mut out = vec![0.0; profile.probs.len()];
    for i in 0..profile.num_users {
        let gbar: Vec<f64> = (0..n)
            .map(|j| expected_interference(spec, profile, i, j))
            .collect();
        let row = profile.row(i);
        for j in 0..n {
            out[i * n + j] = match field {
                Field::Exp3Limit => {
                    let u = |c: usize| spec.means()[c] * gbar[c];
                    let s: f64 = (0..n).map(|l| row[l] * (u(j) - u(l))).sum();
                    row[j] * s / n as f64
                }
                Field::MeanFactored => {
                    let s: f64 = (0..n).map(|l| row[l] * (gbar[j] - gbar[l])).sum();
                    spec.means()[j] * row[j] * s / n as f64
                }
            };
        }
    }
    out
}

/// Expected Rosenthal potential `E[sum_j sum_{l <= K_j} mu_j g_j(l)]` under
/// independent mixed strategies.
pub fn expected_potential(spec: &GameSpec, profile: &MixedProfile) -> f64 {
    (0..profile.num_channels)
        .map(|j| {
            let ps: Vec<f64> = (0..profile.num_users).map(|i| profile.get(i, j)).collect();
            let dist = poisson_binomial(&ps);
            // P(K_j >= l), accumulated from the top.
            let mut tail = 0.0;
            let mut acc = 0.0;
            for l in (1..=profile.num_users).rev() {
                tail += dist[l];
                acc += spec.value(j, l) * tail;
            }
            acc
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitKind {
    PurePne,
    PureNonPne,
    Mixed,
    NotConverged,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryResult {
    pub final_profile: MixedProfile,
    pub converged: bool,
    pub limit_kind: LimitKind,
    /// Expected potential at the start and after every step.
    pub potential_trace: Vec<f64>,
    pub time: f64,
    pub steps: usize,
    /// Largest `|sum_j xi_ij|` seen along the trajectory, i.e. how far the
    /// unprojected field leaves the simplex.
    pub max_row_sum: f64,
    /// Largest simplex violation after projection.
    pub max_simplex_violation: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub step: f64,
    pub horizon: f64,
    pub field: Field,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            step: 1.0,
            horizon: 50_000.0,
            field: Field::Exp3Limit,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn row_sum_residual(xi: &[f64], n: usize) -> f64 {
    xi.chunks(n)
        .map(|r| r.iter().sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Fixed-step classical Runge-Kutta with projection onto the simplex after
/// every step. Stops once the field norm drops below
/// [`CONVERGENCE_TOLERANCE`] or the horizon is reached.
pub fn integrate(
    spec: &GameSpec,
    start: &MixedProfile,
    opts: IntegrateOptions,
) -> Result<TrajectoryResult> {
    if !(opts.step > 0.0) || !(opts.horizon >= 0.0) {
        return Err(Error::InvalidParam(
            "integration needs a positive step and nonnegative horizon".into(),
        ));
    }
    let (m, n) = (start.num_users, start.num_channels);
    let rhs = |p: &MixedProfile| field_rhs(spec, p, opts.field);
    let shifted = |base: &MixedProfile, k: &[f64], h: f64| {
        let probs = base.probs.iter().zip(k).map(|(p, d)| p + h * d).collect();
        MixedProfile::from_flat(m, n, probs)
    };

    let mut p = start.clone();
    let mut potential_trace = vec![expected_potential(spec, &p)];
    let mut time = 0.0;
    let mut steps = 0;
    let mut xi = rhs(&p);
    let mut max_row_sum = row_sum_residual(&xi, n);
    let mut max_simplex_violation = p.simplex_violation();
    let mut converged = max_abs(&xi) < CONVERGENCE_TOLERANCE;

    while !converged && time < opts.horizon {
        let h = opts.step.min(opts.horizon - time);
        let k1 = xi;
        let k2 = rhs(&shifted(&p, &k1, h / 2.0));
        let k3 = rhs(&shifted(&p, &k2, h / 2.0));
        let k4 = rhs(&shifted(&p, &k3, h));
        for (idx, prob) in p.probs.iter_mut().enumerate() {
            *prob += h / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
        time += h;
        steps += 1;
        if p.probs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { time });
        }
        p.project();
        max_simplex_violation = max_simplex_violation.max(p.simplex_violation());
        potential_trace.push(expected_potential(spec, &p));
        xi = rhs(&p);
        max_row_sum = max_row_sum.max(row_sum_residual(&xi, n));
        converged = max_abs(&xi) < CONVERGENCE_TOLERANCE;
    }

    let limit_kind = if !converged {
        LimitKind::NotConverged
    } else {
        match p.as_pure() {
            Some(pure) if is_pne(spec, &pure) => LimitKind::PurePne,
            Some(_) => LimitKind::PureNonPne,
            None => LimitKind::Mixed,
        }
    };
    Ok(TrajectoryResult {
        final_profile: p,
        converged,
        limit_kind,
        potential_trace,
        time,
        steps,
        max_row_sum,
        max_simplex_violation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    Degenerate,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub classification: Stability,
    /// Real parts of the Jacobian eigenvalues, descending.
    pub eigenvalue_real_parts: Vec<f64>,
}

/// Linear stability of the Exp3-limit field at a fixed point, restricted to
/// the product of simplices.
///
/// Each row is parametrized by every coordinate except its largest one, which
/// absorbs the remaining mass. The Jacobian in those coordinates is formed by
/// central differences and classified by its eigenvalues' real parts.
pub fn jacobian_stability(spec: &GameSpec, profile: &MixedProfile) -> StabilityReport {
    let (m, n) = (profile.num_users, profile.num_channels);
    let pivots: Vec<usize> = (0..m)
        .map(|i| {
            profile
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(c, _)| c)
                .expect("nonempty row")
        })
        .collect();
    let coords: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| {
            let pivot = pivots[i];
            (0..n).filter(move |&j| j != pivot).map(move |j| (i, j))
        })
        .collect();
    let dim = coords.len();
    if dim == 0 {
        return StabilityReport {
            classification: Stability::Stable,
            eigenvalue_real_parts: Vec::new(),
        };
    }

    let reduced_field = |probs: &[f64]| -> Vec<f64> {
        let xi = replicator_rhs(spec, &MixedProfile::from_flat(m, n, probs.to_vec()));
        coords.iter().map(|&(i, j)| xi[i * n + j]).collect()
    };
    let perturbed = |coord: usize, delta: f64| -> Vec<f64> {
        let (i, j) = coords[coord];
        let mut probs = profile.probs.clone();
        probs[i * n + j] += delta;
        probs[i * n + pivots[i]] -= delta;
        probs
    };

    let mut jac = DMatrix::<f64>::zeros(dim, dim);
    for col in 0..dim {
        let plus = reduced_field(&perturbed(col, JACOBIAN_STEP));
        let minus = reduced_field(&perturbed(col, -JACOBIAN_STEP));
        for row in 0..dim {
            jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * JACOBIAN_STEP);
        }
    }

    let mut real_parts: Vec<f64> = jac.complex_eigenvalues().iter().map(|z| z.re).collect();
    real_parts.sort_by(|a, b| b.total_cmp(a));
    let classification = if real_parts.iter().any(|&r| r > EIGEN_TOLERANCE) {
        Stability::Unstable
    } else if real_parts.iter().all(|&r| r < -EIGEN_TOLERANCE) {
        Stability::Stable
    } else {
        Stability::Degenerate
    };
    StabilityReport {
        classification,
        eigenvalue_real_parts: real_parts,
    }
}
