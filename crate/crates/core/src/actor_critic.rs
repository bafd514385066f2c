//! Score-function policy gradients for the logistic threshold family.
//!
//! The randomized policy stops with probability
//! `phi(1 | w) = 1 / (1 + exp(-xi (w - theta)))`, a smoothed version of the
//! rule `w >= theta`. Gradients of the eager objective are estimated per
//! episode, either with eligibility-weighted costs or with Q-weighted
//! scores, and fed to projected SGD with an optional natural-gradient gain.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{logistic, DetectorState};
use crate::error::{invalid, Error, Result};
use crate::real::Real;
use crate::rng::{child_seed, stream, StreamRng, Substream};
use crate::simulator::{chunked_episodes, stage_cost, ExperimentConfig, PathDriver};

/// Default sharpness of the logistic policy.
pub const DEFAULT_XI: f64 = 20.0;

/// `phi(u | w)` for the logistic policy with parameter `theta` and sharpness `xi`.
#[inline]
pub fn policy_prob<F: Real>(theta: F, xi: F, w: F, u: bool) -> F {
    let z = xi * (w - theta);
    if u {
        logistic(z)
    } else {
        logistic(-z)
    }
}

/// `d/dtheta log phi(u | w) = -xi u + xi phi(1 | w)`.
#[inline]
pub fn score<F: Real>(theta: F, xi: F, w: F, u: bool) -> F {
    let stop = if u { xi } else { F::zero() };
    -stop + xi * policy_prob(theta, xi, w, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct LogisticPolicy<F> {
    pub theta: F,
    pub xi: F,
}

impl<F: Real> LogisticPolicy<F> {
    pub fn new(theta: F, xi: F) -> Result<Self> {
        if !(xi > F::zero() && xi.is_finite()) {
            return Err(invalid("xi", xi.as_f64(), "sharpness must be finite and > 0"));
        }
        if !theta.is_finite() {
            return Err(invalid("theta", theta.as_f64(), "must be finite"));
        }
        Ok(Self { theta, xi })
    }

    #[inline]
    pub fn prob(&self, w: F, u: bool) -> F {
        policy_prob(self.theta, self.xi, w, u)
    }

    #[inline]
    pub fn score(&self, w: F, u: bool) -> F {
        score(self.theta, self.xi, w, u)
    }

    /// Draws the input at `w` with one uniform variate from `rng`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, w: F, rng: &mut R) -> bool {
        let v: f64 = rng.random();
        v < self.prob(w, true).as_f64()
    }

    pub fn with_theta(self, theta: F) -> Self {
        Self { theta, ..self }
    }
}

/// One step of an on-policy episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct AcStep<F> {
    pub state: DetectorState<F>,
    pub u: bool,
    pub cost: F,
    /// Score of the chosen input; zero for a stop forced by the horizon cap.
    pub score: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct AcEpisode<F> {
    pub policy: LogisticPolicy<F>,
    pub index: u64,
    pub change_time: u64,
    pub capped: bool,
    pub steps: Vec<AcStep<F>>,
}

impl<F: Real> AcEpisode<F> {
    pub fn total_cost(&self) -> F {
        self.steps.iter().map(|s| s.cost).sum()
    }
}

/// Runs episode `index` of `config` under the logistic policy, stepping the
/// detector until the policy stops (or the cap forces a stop).
pub fn run_ac_episode<F: Real>(
    config: &ExperimentConfig<F>,
    policy: &LogisticPolicy<F>,
    index: u64,
) -> Result<AcEpisode<F>> {
    let (mut path, mut rng) = PathDriver::new(config, index)?;
    let mut steps = Vec::new();
    let capped = loop {
        let state = path.state();
        let drawn = policy.sample(state.value, &mut rng);
        let forced = !drawn && path.at_cap();
        let u = drawn || forced;
        steps.push(AcStep {
            state,
            u,
            cost: stage_cost(u, path.k(), path.tau_a(), config.kappa),
            score: if forced { F::zero() } else { policy.score(state.value, u) },
        });
        if u {
            break forced;
        }
        path.advance()?;
    };
    Ok(AcEpisode {
        policy: *policy,
        index,
        change_time: path.tau_a(),
        capped,
        steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct GradientSample<F> {
    pub value: F,
    pub length: usize,
}

fn check_policy<F: Real>(ep: &AcEpisode<F>, policy: &LogisticPolicy<F>) -> Result<()> {
    if ep.policy != *policy {
        return Err(Error::ThetaMismatch {
            episode: ep.policy.theta.as_f64(),
            policy: policy.theta.as_f64(),
        });
    }
    Ok(())
}

/// `sum_k c_k S_k` with `S_k` the running sum of scores up to step `k`.
pub fn grad_episode_eligibility<F: Real>(ep: &AcEpisode<F>, policy: &LogisticPolicy<F>) -> Result<GradientSample<F>> {
    check_policy(ep, policy)?;
    let mut eligibility = F::zero();
    let mut value = F::zero();
    for s in &ep.steps {
        eligibility += s.score;
        value += s.cost * eligibility;
    }
    Ok(GradientSample {
        value,
        length: ep.steps.len(),
    })
}

/// `sum_k Q_k sigma_k` given one Q-value estimate per step.
pub fn grad_episode_qweighted<F: Real>(
    ep: &AcEpisode<F>,
    policy: &LogisticPolicy<F>,
    q: &[F],
) -> Result<GradientSample<F>> {
    check_policy(ep, policy)?;
    if q.len() != ep.steps.len() {
        return Err(Error::QEstimates {
            expected: ep.steps.len(),
            got: q.len(),
        });
    }
    let value = ep.steps.iter().zip(q).map(|(s, &qk)| qk * s.score).sum();
    Ok(GradientSample {
        value,
        length: ep.steps.len(),
    })
}

fn continuation_rngs(seed: u64, episode: u64, k: u64) -> [StreamRng; 3] {
    let base = ((episode << 24) | (k & 0xff_ffff)) * 4;
    [0, 1, 2].map(|j| stream(seed, Substream::Continuation, base + j))
}

/// Unbiased single-rollout estimates of `Q(Psi_k, U_k)`: the stage cost plus,
/// after a continue, the cost of an independent continuation from the same
/// detector state and change time.
pub fn q_rollout_estimates<F: Real>(config: &ExperimentConfig<F>, ep: &AcEpisode<F>) -> Result<Vec<F>> {
    let policy = ep.policy;
    let mut out = Vec::with_capacity(ep.steps.len());
    for (k, s) in ep.steps.iter().enumerate() {
        let k = k as u64;
        let mut q = s.cost;
        if !s.u {
            let [pre, post, mut rng] = continuation_rngs(config.seed, ep.index, k);
            let mut path = PathDriver::resume(config, ep.change_time, k, s.state, pre, post);
            loop {
                path.advance()?;
                let w = path.state().value;
                let u = policy.sample(w, &mut rng) || path.at_cap();
                q += stage_cost(u, path.k(), path.tau_a(), config.kappa);
                if u {
                    break;
                }
            }
        }
        out.push(q);
    }
    Ok(out)
}

/// `alpha_n = alpha0 n^(-rho)`, `n >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct StepSchedule<F> {
    pub alpha0: F,
    pub rho: F,
}

impl<F: Real> StepSchedule<F> {
    pub fn new(alpha0: F, rho: F) -> Result<Self> {
        if !(alpha0 > F::zero() && alpha0.is_finite()) {
            return Err(invalid("alpha0", alpha0.as_f64(), "must be finite and > 0"));
        }
        if !(rho > F::lit(0.5) && rho < F::one()) {
            return Err(invalid("rho_step", rho.as_f64(), "must lie in (1/2, 1)"));
        }
        Ok(Self { alpha0, rho })
    }

    #[inline]
    pub fn alpha(&self, n: u64) -> F {
        self.alpha0 * F::from_count(n.max(1)).powf(-self.rho)
    }
}

/// Running mean of an iterate stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct PolyakRuppert<F> {
    pub sum: F,
    pub n: u64,
}

impl<F: Real> PolyakRuppert<F> {
    pub fn push(&mut self, theta: F) {
        self.sum += theta;
        self.n += 1;
    }

    /// `None` before the first iterate.
    pub fn mean(&self) -> Option<F> {
        (self.n > 0).then(|| self.sum / F::from_count(self.n))
    }
}

/// Averages a finite iterate stream.
pub fn pr_average<F: Real>(iterates: &[F]) -> Result<F> {
    let mut pr = PolyakRuppert::default();
    iterates.iter().for_each(|&t| pr.push(t));
    pr.mean().ok_or(Error::TooFewInputs { need: 1, got: 0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct SgdState<F> {
    pub theta: F,
    pub n: u64,
    pub schedule: StepSchedule<F>,
    pub theta_max: F,
    pub rejected: u64,
    pub pr: PolyakRuppert<F>,
}

impl<F: Real> SgdState<F> {
    pub fn new(theta0: F, schedule: StepSchedule<F>, theta_max: F) -> Result<Self> {
        if !(theta_max > F::zero()) {
            return Err(invalid("theta_max", theta_max.as_f64(), "must be > 0"));
        }
        Ok(Self {
            theta: theta0.max(F::zero()).min(theta_max),
            n: 0,
            schedule,
            theta_max,
            rejected: 0,
            pr: PolyakRuppert::default(),
        })
    }
}

/// `theta <- Pi(theta - alpha_{n+1} G grad)` with projection onto
/// `[0, theta_max]`. A non-finite gradient or gain leaves the state unchanged
/// apart from the rejection counter.
pub fn sgd_step<F: Real>(state: SgdState<F>, grad: F, gain: F) -> SgdState<F> {
    let mut s = state;
    let step = s.schedule.alpha(s.n + 1) * gain * grad;
    if !step.is_finite() {
        s.rejected += 1;
        return s;
    }
    s.n += 1;
    s.theta = (s.theta - step).max(F::zero()).min(s.theta_max);
    s.pr.push(s.theta);
    s
}

/// `R <- R + beta (-R + sum_k sigma_k^2)`.
pub fn ngd_update<F: Real>(r_hat: F, scores: &[F], beta: F) -> F {
    let r: F = scores.iter().map(|&s| s * s).sum();
    r_hat + beta * (r - r_hat)
}

/// Natural-gradient gain `1 / (R + eps)`.
#[inline]
pub fn ngd_gain<F: Real>(r_hat: F, ridge: F) -> F {
    F::one() / (r_hat + ridge)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientEstimator {
    Eligibility,
    QWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct AcConfig<F> {
    pub xi: F,
    pub theta0: F,
    pub episodes: u64,
    /// Large-kappa threshold approximation; sets the step-size scale and
    /// `theta_max = 4 reference_threshold`.
    pub reference_threshold: F,
    pub rho_step: F,
    /// Fixed `alpha0`; `None` tunes it on a pilot batch.
    pub alpha0: Option<F>,
    pub pilot_episodes: u64,
    pub natural_gradient: bool,
    pub beta_rho: F,
    pub ridge: F,
}

impl<F: Real> AcConfig<F> {
    pub fn new(theta0: F, episodes: u64, reference_threshold: F) -> Self {
        Self {
            xi: F::lit(DEFAULT_XI),
            theta0,
            episodes,
            reference_threshold,
            rho_step: F::lit(0.7),
            alpha0: None,
            pilot_episodes: 200,
            natural_gradient: false,
            beta_rho: F::lit(0.6),
            ridge: F::lit(1e-6),
        }
    }

    pub fn theta_max(&self) -> F {
        F::lit(4.0) * self.reference_threshold
    }
}

/// `(n, theta_n, theta_PR_n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TraceRow<F> {
    pub n: u64,
    pub theta: F,
    pub theta_pr: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct AcTrace<F> {
    pub alpha0: F,
    pub rows: Vec<TraceRow<F>>,
    pub final_state: SgdState<F>,
}

impl<F: Real> AcTrace<F> {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn sample_gradient<F: Real>(
    config: &ExperimentConfig<F>,
    policy: &LogisticPolicy<F>,
    index: u64,
    estimator: GradientEstimator,
) -> Result<(F, AcEpisode<F>)> {
    let ep = run_ac_episode(config, policy, index)?;
    let g = match estimator {
        GradientEstimator::Eligibility => grad_episode_eligibility(&ep, policy)?,
        GradientEstimator::QWeighted => {
            let q = q_rollout_estimates(config, &ep)?;
            grad_episode_qweighted(&ep, policy, &q)?
        }
    };
    Ok((g.value, ep))
}

const PILOT_STREAM: u64 = 0x50_494c_4f54;

/// `alpha0` such that `alpha0 mean|G grad| = 0.1 reference_threshold` on a
/// pilot batch at `theta0` drawn from its own seed.
pub fn pilot_alpha0<F: Real>(config: &ExperimentConfig<F>, ac: &AcConfig<F>) -> Result<F> {
    let pilot_cfg = config.with_seed(child_seed(config.seed, PILOT_STREAM));
    let policy = LogisticPolicy::new(ac.theta0, ac.xi)?;
    let n = ac.pilot_episodes.max(1);
    let (mut sum_abs, mut sum_r) = (F::zero(), F::zero());
    for i in 0..n {
        let (g, ep) = sample_gradient(&pilot_cfg, &policy, i, GradientEstimator::Eligibility)?;
        sum_abs += g.abs();
        sum_r += ep.steps.iter().map(|s| s.score * s.score).sum();
    }
    let gain = if ac.natural_gradient {
        ngd_gain(sum_r / F::from_count(n), ac.ridge)
    } else {
        F::one()
    };
    let scale = gain * sum_abs / F::from_count(n);
    if !(scale > F::zero() && scale.is_finite()) {
        return Err(Error::DegenerateSamples("pilot gradients are all zero"));
    }
    Ok(F::lit(0.1) * ac.reference_threshold / scale)
}

/// Actor-critic SGD: one on-policy episode per iteration, eligibility
/// gradient, projected update, Polyak-Ruppert average.
pub fn train_ac<F: Real>(config: &ExperimentConfig<F>, ac: &AcConfig<F>) -> Result<AcTrace<F>> {
    let alpha0 = match ac.alpha0 {
        Some(a) => a,
        None => pilot_alpha0(config, ac)?,
    };
    let schedule = StepSchedule::new(alpha0, ac.rho_step)?;
    let mut state = SgdState::new(ac.theta0, schedule, ac.theta_max())?;
    let mut r_hat = F::zero();
    let mut rows = Vec::with_capacity(ac.episodes as usize);
    for i in 0..ac.episodes {
        let policy = LogisticPolicy::new(state.theta, ac.xi)?;
        let (g, ep) = sample_gradient(config, &policy, i, GradientEstimator::Eligibility)?;
        let gain = if ac.natural_gradient {
            let scores: Vec<F> = ep.steps.iter().map(|s| s.score).collect();
            let beta = F::from_count(i + 1).powf(-ac.beta_rho);
            r_hat = ngd_update(r_hat, &scores, beta);
            ngd_gain(r_hat, ac.ridge)
        } else {
            F::one()
        };
        state = sgd_step(state, g, gain);
        rows.push(TraceRow {
            n: i + 1,
            theta: state.theta,
            theta_pr: state.pr.mean().unwrap_or(state.theta),
        });
    }
    if ac.episodes > 0 && 2 * state.rejected > ac.episodes {
        return Err(Error::TooManyRejections {
            rejected: state.rejected,
            total: ac.episodes,
        });
    }
    Ok(AcTrace {
        alpha0,
        rows,
        final_state: state,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
struct Sums<F> {
    n: u64,
    sum: F,
    sum_sq: F,
}

impl<F: Real> Sums<F> {
    fn push(&mut self, x: F) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, o: Self) -> Self {
        Self {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn mean(&self) -> F {
        self.sum / F::from_count(self.n)
    }

    fn variance(&self) -> F {
        if self.n < 2 {
            return F::zero();
        }
        let n = F::from_count(self.n);
        let m = self.mean();
        ((self.sum_sq - n * m * m) / (n - F::one())).max(F::zero())
    }

    fn se(&self) -> F {
        (self.variance() / F::from_count(self.n)).sqrt()
    }
}

/// Monte-Carlo summary of one quantity at one `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ProfileRow<F> {
    pub theta: F,
    pub mean: F,
    pub variance: F,
    pub se: F,
}

impl<F: Real> ProfileRow<F> {
    fn from_sums(theta: F, s: &Sums<F>) -> Self {
        Self {
            theta,
            mean: s.mean(),
            variance: s.variance(),
            se: s.se(),
        }
    }
}

/// Gradient mean, variance and standard error at every `theta` in `grid`
/// from `n` episodes each. Episode `i` uses the same random streams at every
/// grid point.
pub fn gradient_profile<F: Real>(
    grid: &[F],
    config: &ExperimentConfig<F>,
    xi: F,
    n: u64,
    estimator: GradientEstimator,
) -> Result<Vec<ProfileRow<F>>> {
    if n < 2 {
        return Err(Error::TooFewInputs {
            need: 2,
            got: n as usize,
        });
    }
    grid.iter()
        .map(|&theta| {
            let policy = LogisticPolicy::new(theta, xi)?;
            let s = chunked_episodes(
                0,
                n,
                |range| {
                    let mut s = Sums::default();
                    for i in range {
                        s.push(sample_gradient(config, &policy, i, estimator)?.0);
                    }
                    Ok(s)
                },
                Sums::merge,
            )?;
            Ok(ProfileRow::from_sums(theta, &s))
        })
        .collect()
}

/// Monte-Carlo eager objective of the logistic policy at each `theta`.
pub fn objective_profile<F: Real>(
    grid: &[F],
    config: &ExperimentConfig<F>,
    xi: F,
    n: u64,
) -> Result<Vec<ProfileRow<F>>> {
    grid.iter()
        .map(|&theta| {
            let policy = LogisticPolicy::new(theta, xi)?;
            let s = chunked_episodes(
                0,
                n,
                |range| {
                    let mut s = Sums::default();
                    for i in range {
                        s.push(run_ac_episode(config, &policy, i)?.total_cost());
                    }
                    Ok(s)
                },
                Sums::merge,
            )?;
            Ok(ProfileRow::from_sums(theta, &s))
        })
        .collect()
}

/// Central finite difference `(J(theta + delta) - J(theta - delta)) / 2 delta`
/// of the Monte-Carlo objective with paired episodes; returns the estimate
/// and its standard error.
pub fn finite_difference_gradient<F: Real>(
    theta: F,
    delta: F,
    config: &ExperimentConfig<F>,
    xi: F,
    n: u64,
) -> Result<(F, F)> {
    let hi = LogisticPolicy::new(theta + delta, xi)?;
    let lo = LogisticPolicy::new(theta - delta, xi)?;
    let two_delta = F::lit(2.0) * delta;
    let s = chunked_episodes(
        0,
        n,
        |range| {
            let mut s = Sums::default();
            for i in range {
                let up = run_ac_episode(config, &hi, i)?.total_cost();
                let down = run_ac_episode(config, &lo, i)?.total_cost();
                s.push((up - down) / two_delta);
            }
            Ok(s)
        },
        Sums::merge,
    )?;
    Ok((s.mean(), s.se()))
}

/// Trapezoidal running integral of `grads` over the sorted grid `thetas`,
/// starting from `anchor` at `thetas[0]`.
pub fn integrate_gradient<F: Real>(thetas: &[F], grads: &[F], anchor: F) -> Result<Vec<F>> {
    if thetas.len() != grads.len() {
        return Err(Error::Dimension {
            expected: thetas.len(),
            got: grads.len(),
        });
    }
    if thetas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("grid", f64::NAN, "theta grid must be strictly increasing"));
    }
    let mut out = Vec::with_capacity(thetas.len());
    let mut acc = anchor;
    for j in 0..thetas.len() {
        if j > 0 {
            acc += F::lit(0.5) * (thetas[j] - thetas[j - 1]) * (grads[j] + grads[j - 1]);
        }
        out.push(acc);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ObjectiveRow<F> {
    pub theta: F,
    /// Integrated objective anchored at `kappa` at the first grid point.
    pub j_kappa: F,
    /// Integrated objective anchored at the Monte-Carlo objective there.
    pub j_mc: F,
}

/// Objective curves from a gradient profile, anchored both at `kappa` and at
/// `mc_anchor` (the Monte-Carlo objective at the first grid point).
pub fn objective_from_gradients<F: Real>(
    profile: &[ProfileRow<F>],
    kappa: F,
    mc_anchor: F,
) -> Result<Vec<ObjectiveRow<F>>> {
    let thetas: Vec<F> = profile.iter().map(|r| r.theta).collect();
    let grads: Vec<F> = profile.iter().map(|r| r.mean).collect();
    let a = integrate_gradient(&thetas, &grads, kappa)?;
    let b = integrate_gradient(&thetas, &grads, mc_anchor)?;
    Ok(thetas
        .into_iter()
        .zip(a.into_iter().zip(b))
        .map(|(theta, (j_kappa, j_mc))| ObjectiveRow { theta, j_kappa, j_mc })
        .collect())
}

/// Linear interpolation of the first sign change of `mean` from negative to
/// non-negative along the profile.
pub fn zero_crossing<F: Real>(profile: &[ProfileRow<F>]) -> Option<F> {
    profile.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.mean < F::zero() && b.mean >= F::zero())
            .then(|| a.theta + (b.theta - a.theta) * (-a.mean) / (b.mean - a.mean))
    })
}

pub fn write_rows_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Gradient samples at `theta` for episodes `0..n` in parallel, in episode
/// order.
pub fn gradient_samples<F: Real>(
    config: &ExperimentConfig<F>,
    policy: &LogisticPolicy<F>,
    n: u64,
    estimator: GradientEstimator,
) -> Result<Vec<F>> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_gradient(config, policy, i, estimator).map(|x| x.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{Detector, DetectorKind};
    use crate::models::{ChangeTimeLaw, Case, DensitySpec};
    use crate::simulator::ObservationModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ideal(kappa: f64, seed: u64) -> ExperimentConfig<f64> {
        let model = ObservationModel {
            pre: DensitySpec::gaussian(0.0, 1.0).unwrap(),
            post: DensitySpec::gaussian(0.5, 1.0).unwrap(),
            change_time: ChangeTimeLaw::Geometric { rho: 0.02 },
        };
        let det = Detector::new(DetectorKind::Cusum, Case::Ideal.score_function(0.5, 1.0).unwrap()).unwrap();
        ExperimentConfig::new(model, det, kappa, seed).unwrap()
    }

    #[test]
    fn policy_prob_examples() {
        assert_eq!(policy_prob(3.0, 20.0, 3.0, true), 0.5);
        assert_eq!(policy_prob(0.0, 20.0, 1e6, true), 1.0);
        assert_abs_diff_eq!(policy_prob(0.0, 20.0, 0.1, true), 1.0 / (1.0 + (-2.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(policy_prob(0.0, 20.0, 0.1, true), 0.8808, epsilon = 1e-4);
        assert_eq!(policy_prob(0.0, 20.0, -1e6, false), 1.0);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(2.0, 20.0, 2.0, true), -10.0);
        assert_eq!(score(2.0, 20.0, 2.0, false), 10.0);
    }

    #[test]
    fn invalid_sharpness() {
        assert!(LogisticPolicy::new(1.0, 0.0).is_err());
        assert!(LogisticPolicy::new(f64::NAN, 20.0).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_increase(theta in -50.0f64..50.0, xi in 0.01f64..100.0, w in -50.0f64..50.0, dw in 1e-3f64..5.0) {
            let p1 = policy_prob(theta, xi, w, true);
            prop_assert!((p1 + policy_prob(theta, xi, w, false) - 1.0).abs() < 1e-15);
            prop_assert!(policy_prob(theta, xi, w + dw, true) >= p1);
        }

        #[test]
        fn score_identity(theta in -50.0f64..50.0, xi in 0.01f64..100.0, w in -50.0f64..50.0) {
            let s = policy_prob(theta, xi, w, true) * score(theta, xi, w, true)
                + policy_prob(theta, xi, w, false) * score(theta, xi, w, false);
            prop_assert!(s.abs() <= 1e-12 * xi.max(1.0));
        }

        #[test]
        fn projection_keeps_theta_in_range(grads in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            let sched = StepSchedule::new(1.0, 0.7).unwrap();
            let mut s = SgdState::new(2.0, sched, 16.0).unwrap();
            for g in grads {
                s = sgd_step(s, g, 1.0);
                prop_assert!((0.0..=16.0).contains(&s.theta));
            }
        }
    }

    #[test]
    fn eligibility_gradient_edge_cases() {
        let cfg = ideal(0.0, 1);
        let policy = LogisticPolicy::new(-1e3, 20.0).unwrap();
        // stops at once with probability one and no cost when kappa = 0
        let ep = run_ac_episode(&cfg, &policy, 0).unwrap();
        assert_eq!(ep.steps.len(), 1);
        assert_eq!(grad_episode_eligibility(&ep, &policy).unwrap().value, 0.0);

        let cfg = ideal(27.0, 1);
        let policy = LogisticPolicy::new(-1e3, 20.0).unwrap();
        let ep = run_ac_episode(&cfg, &policy, 2).unwrap();
        let c0 = ep.steps[0].cost;
        assert_eq!(c0, 27.0 * ep.change_time as f64);
        let g = grad_episode_eligibility(&ep, &policy).unwrap();
        assert_eq!(g.value, c0 * policy.score(0.0, true));
        assert_eq!(grad_episode_qweighted(&ep, &policy, &[c0]).unwrap().value, g.value);
        assert_eq!(grad_episode_qweighted(&ep, &policy, &[0.0]).unwrap().value, 0.0);
        assert!(matches!(
            grad_episode_qweighted(&ep, &policy, &[]),
            Err(Error::QEstimates { expected: 1, got: 0 })
        ));
        let other = policy.with_theta(3.0);
        assert!(matches!(
            grad_episode_eligibility(&ep, &other),
            Err(Error::ThetaMismatch { .. })
        ));
    }

    #[test]
    fn episode_cost_matches_record() {
        let cfg = ideal(27.0, 3);
        let policy = LogisticPolicy::new(3.0, 20.0).unwrap();
        for i in 0..200 {
            let ep = run_ac_episode(&cfg, &policy, i).unwrap();
            let stop = ep.steps.len() as u64 - 1;
            let rec = crate::simulator::cost_record(ep.change_time, stop, 27.0);
            assert_eq!(ep.total_cost(), rec.eager_cost);
            assert!(ep.steps.last().unwrap().u);
        }
    }

    #[test]
    fn sgd_examples() {
        let sched = StepSchedule::new(0.1, 0.7).unwrap();
        let s = SgdState::new(1.0, sched, 10.0).unwrap();
        assert_eq!(sgd_step(s, 0.0, 1.0).theta, 1.0);
        assert_abs_diff_eq!(sgd_step(s, 2.0, 1.0).theta, 0.8, epsilon = 1e-15);
        let r = sgd_step(s, f64::NAN, 1.0);
        assert_eq!((r.theta, r.rejected, r.n), (1.0, 1, 0));
        assert!(StepSchedule::new(0.1, 0.5).is_err());
    }

    #[test]
    fn ngd_examples() {
        assert_eq!(ngd_update(4.0, &[1.0, 2.0], 1.0), 5.0);
        let mut r = 8.0;
        for _ in 0..50 {
            r = ngd_update(r, &[0.0], 0.5);
        }
        assert!(r < 1e-12);
        assert_abs_diff_eq!(ngd_gain(0.0, 1e-6), 1e6, epsilon = 1e-6);
        let mut r = 0.0;
        for _ in 0..200 {
            r = ngd_update(r, &[3.0f64.sqrt()], 0.1);
        }
        assert_abs_diff_eq!(r, 3.0, epsilon = 1e-8);
    }

    #[test]
    fn pr_examples() {
        assert_eq!(pr_average(&[2.5; 7]).unwrap(), 2.5);
        assert_eq!(pr_average(&[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(pr_average(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 0.0);
        assert!(pr_average::<f64>(&[]).is_err());
        let stream: Vec<f64> = (1..=100_000).map(|n| 3.0 + 1.0 / n as f64).collect();
        assert!((pr_average(&stream).unwrap() - 3.0).abs() < 2e-4);
    }

    #[test]
    fn integration_examples() {
        let thetas: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let zeros = vec![0.0; 11];
        assert!(integrate_gradient(&thetas, &zeros, 27.0).unwrap().iter().all(|&j| j == 27.0));
        let j = integrate_gradient(&thetas, &thetas, 27.0).unwrap();
        for (t, v) in thetas.iter().zip(j) {
            // trapezoids are exact on a linear integrand
            assert_abs_diff_eq!(v, 27.0 + t * t / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_profile_is_deterministic_and_zero_variance_for_identical_samples() {
        let cfg = ideal(27.0, 11);
        let a = gradient_profile(&[3.0], &cfg, 20.0, 300, GradientEstimator::Eligibility).unwrap();
        let b = gradient_profile(&[3.0], &cfg, 20.0, 300, GradientEstimator::Eligibility).unwrap();
        assert_eq!(a, b);
        let mut s = Sums::default();
        s.push(1.5);
        s.push(1.5);
        assert_eq!(s.variance(), 0.0);
        assert!(gradient_profile(&[3.0], &cfg, 20.0, 1, GradientEstimator::Eligibility).is_err());
    }

    #[test]
    fn estimators_agree_in_mean() {
        let cfg = ideal(27.0, 12);
        let policy = LogisticPolicy::new(3.0, 20.0).unwrap();
        let n = 3000;
        let a = gradient_samples(&cfg, &policy, n, GradientEstimator::Eligibility).unwrap();
        let b = gradient_samples(&cfg, &policy, n, GradientEstimator::QWeighted).unwrap();
        let (ma, va) = crate::numeric::mean_variance(&a);
        let (mb, vb) = crate::numeric::mean_variance(&b);
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let (md, vd) = crate::numeric::mean_variance(&diffs);
        let se = (vd / n as f64).sqrt();
        assert!(md.abs() <= 2.5 * se, "{ma} vs {mb} (se {se}, var {va} {vb})");
    }

    #[test]
    fn training_stays_projected_and_reproducible() {
        let cfg = ideal(27.0, 5);
        let mut ac = AcConfig::new(1.0, 300, 3.13);
        ac.pilot_episodes = 50;
        let a = train_ac(&cfg, &ac).unwrap();
        let b = train_ac(&cfg, &ac).unwrap();
        assert_eq!(a, b);
        assert!(a.rows.iter().all(|r| (0.0..=ac.theta_max()).contains(&r.theta)));
        ac.natural_gradient = true;
        let c = train_ac(&cfg, &ac).unwrap();
        assert!(c.rows.iter().all(|r| r.theta.is_finite()));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,theta,theta_pr\n"));
    }

    #[test]
    fn zero_crossing_interpolates() {
        let rows = [(1.0, -2.0), (2.0, -1.0), (3.0, 1.0)].map(|(theta, mean)| ProfileRow {
            theta,
            mean,
            variance: 0.0,
            se: 0.0,
        });
        assert_eq!(zero_crossing(&rows), Some(2.5));
    }
}
