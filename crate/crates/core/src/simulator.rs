//! Episode generation under the conditionally i.i.d. change model, cost
//! accounting for the eager and classic objectives, and Monte-Carlo threshold
//! evaluation.
//!
//! Episode `i` of an experiment with seed `s` always draws from the streams
//! keyed by `(s, i)`, so every estimator in this module is reproducible and
//! independent of the worker count. Threshold sweeps reuse one sample path
//! per episode for the whole grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{threshold_decision, Detector, DetectorState};
use crate::error::{invalid, Result};
use crate::models::{approx_cost, approx_threshold, ChangeTimeLaw, DensitySpec};
use crate::numeric::pairwise_reduce;
use crate::real::Real;
use crate::rng::{EpisodeStreams, StreamRng};

/// Episodes per parallel work item. Fixed so reductions do not depend on the
/// number of workers.
pub const CHUNK: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ObservationModel<F> {
    pub pre: DensitySpec<F>,
    pub post: DensitySpec<F>,
    pub change_time: ChangeTimeLaw<F>,
}

impl<F: Real> ObservationModel<F> {
    pub fn validate(&self) -> Result<()> {
        self.pre.validate()?;
        self.post.validate()?;
        self.change_time.validate()
    }
}

/// Draws a change time; see [`ChangeTimeLaw::sample`].
pub fn sample_change_time<F: Real>(law: &ChangeTimeLaw<F>, rng: &mut StreamRng) -> u64 {
    law.sample(rng)
}

/// Observation at step `k`: from `f0` on the pre-change stream when
/// `k < tau_a`, else from `f1` on the post-change stream.
pub fn sample_observation<F: Real>(
    k: u64,
    tau_a: u64,
    f0: &DensitySpec<F>,
    f1: &DensitySpec<F>,
    pre: &mut StreamRng,
    post: &mut StreamRng,
) -> F {
    if k < tau_a {
        f0.sample(pre)
    } else {
        f1.sample(post)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ExperimentConfig<F> {
    pub model: ObservationModel<F>,
    pub detector: Detector<F>,
    pub kappa: F,
    pub horizon_cap: u64,
    pub seed: u64,
}

impl<F: Real> ExperimentConfig<F> {
    /// Config with the default horizon cap `100 / rho` of the slowest
    /// geometric component.
    pub fn new(model: ObservationModel<F>, detector: Detector<F>, kappa: F, seed: u64) -> Result<Self> {
        let cap = default_horizon_cap(&model.change_time);
        Self::with_cap(model, detector, kappa, cap, seed)
    }

    pub fn with_cap(
        model: ObservationModel<F>,
        detector: Detector<F>,
        kappa: F,
        horizon_cap: u64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            model,
            detector,
            kappa,
            horizon_cap,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.detector.kind.validate()?;
        if !(self.kappa >= F::zero() && self.kappa.is_finite()) {
            return Err(invalid("kappa", self.kappa.as_f64(), "must be finite and >= 0"));
        }
        let mean = self.model.change_time.mean().as_f64();
        if (self.horizon_cap as f64) < 10.0 * mean {
            return Err(invalid(
                "horizon_cap",
                self.horizon_cap as f64,
                "must be at least 10 times the mean change time",
            ));
        }
        Ok(())
    }

    pub fn with_kappa(mut self, kappa: F) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub fn default_horizon_cap<F: Real>(law: &ChangeTimeLaw<F>) -> u64 {
    (100.0 / law.slowest_rate().as_f64()).ceil() as u64
}

/// Sample path of one episode: the hidden change time, the observation
/// streams and the detector state, advanced one step at a time.
pub struct PathDriver<'a, F: Real> {
    config: &'a ExperimentConfig<F>,
    pre: StreamRng,
    post: StreamRng,
    tau_a: u64,
    k: u64,
    y: F,
    state: DetectorState<F>,
}

impl<'a, F: Real> PathDriver<'a, F> {
    /// Path for `episode` of `config.seed`; also returns the policy stream.
    pub fn new(config: &'a ExperimentConfig<F>, episode: u64) -> Result<(Self, StreamRng)> {
        let EpisodeStreams {
            mut change_time,
            pre_change,
            post_change,
            policy,
        } = EpisodeStreams::new(config.seed, episode);
        let tau_a = sample_change_time(&config.model.change_time, &mut change_time);
        Ok((Self::from_parts(config, tau_a, pre_change, post_change)?, policy))
    }

    /// Path with a given change time and observation streams, e.g. a
    /// continuation from the middle of another episode.
    pub fn from_parts(
        config: &'a ExperimentConfig<F>,
        tau_a: u64,
        mut pre: StreamRng,
        mut post: StreamRng,
    ) -> Result<Self> {
        let m = &config.model;
        let y = sample_observation(0, tau_a, &m.pre, &m.post, &mut pre, &mut post);
        let state = config.detector.start(y)?;
        Ok(Self {
            config,
            pre,
            post,
            tau_a,
            k: 0,
            y,
            state,
        })
    }

    /// Continuation from step `k` in detector state `state`: the next
    /// observation drawn is `Y_{k+1}`.
    pub fn resume(
        config: &'a ExperimentConfig<F>,
        tau_a: u64,
        k: u64,
        state: DetectorState<F>,
        pre: StreamRng,
        post: StreamRng,
    ) -> Self {
        Self {
            config,
            pre,
            post,
            tau_a,
            k,
            y: F::nan(),
            state,
        }
    }

    #[inline]
    pub fn tau_a(&self) -> u64 {
        self.tau_a
    }

    #[inline]
    pub fn k(&self) -> u64 {
        self.k
    }

    #[inline]
    pub fn state(&self) -> DetectorState<F> {
        self.state
    }

    #[inline]
    pub fn observation(&self) -> F {
        self.y
    }

    #[inline]
    pub fn at_cap(&self) -> bool {
        self.k >= self.config.horizon_cap
    }

    /// Draws `Y_{k+1}` and steps the detector.
    #[inline]
    pub fn advance(&mut self) -> Result<()> {
        self.k += 1;
        let m = &self.config.model;
        self.y = sample_observation(self.k, self.tau_a, &m.pre, &m.post, &mut self.pre, &mut self.post);
        self.state = self.config.detector.step(self.state, self.y)?;
        Ok(())
    }
}

/// Input rule mapping the detector value to stop (`true`) or continue.
pub trait StoppingPolicy<F> {
    fn decide(&mut self, w: F, k: u64, rng: &mut StreamRng) -> bool;
}

impl<F, P: FnMut(F, u64, &mut StreamRng) -> bool> StoppingPolicy<F> for P {
    fn decide(&mut self, w: F, k: u64, rng: &mut StreamRng) -> bool {
        self(w, k, rng)
    }
}

/// Stops at the first `w >= h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdPolicy<F>(pub F);

impl<F: Real> StoppingPolicy<F> for ThresholdPolicy<F> {
    #[inline]
    fn decide(&mut self, w: F, _k: u64, _rng: &mut StreamRng) -> bool {
        threshold_decision(w, self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TrajectoryStep<F> {
    pub w: F,
    pub y: F,
    pub u: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Episode<F> {
    pub change_time: u64,
    pub stop_time: u64,
    pub capped: bool,
    pub saturated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryStep<F>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct CostRecord<F> {
    pub delay: u64,
    pub eagerness: u64,
    pub false_alarm: bool,
    pub eager_cost: F,
}

/// Delay, eagerness, false-alarm flag and eager cost `delay + kappa eagerness`.
pub fn cost_record<F: Real>(tau_a: u64, tau_s: u64, kappa: F) -> CostRecord<F> {
    let delay = tau_s.saturating_sub(tau_a);
    let eagerness = tau_a.saturating_sub(tau_s);
    CostRecord {
        delay,
        eagerness,
        false_alarm: tau_s < tau_a,
        eager_cost: F::from_count(delay) + kappa * F::from_count(eagerness),
    }
}

/// `delay + kappa 1{false alarm}`.
pub fn classic_cost<F: Real>(record: &CostRecord<F>, kappa: F) -> F {
    F::from_count(record.delay) + if record.false_alarm { kappa } else { F::zero() }
}

/// Per-step eager cost `(1 - u) 1{tau_a <= k} + kappa u (tau_a - k)_+`.
///
/// Summed over an episode this equals [`CostRecord::eager_cost`].
#[inline]
pub fn stage_cost<F: Real>(u: bool, k: u64, tau_a: u64, kappa: F) -> F {
    if u {
        kappa * F::from_count(tau_a.saturating_sub(k))
    } else if tau_a <= k {
        F::one()
    } else {
        F::zero()
    }
}

/// Runs one episode of `config` under `policy`.
///
/// The episode stops at the first `u = 1`; if the horizon cap is reached
/// first it is stopped there and flagged.
pub fn run_episode<F: Real, P: StoppingPolicy<F>>(
    config: &ExperimentConfig<F>,
    policy: &mut P,
    episode: u64,
    record_trajectory: bool,
) -> Result<(Episode<F>, CostRecord<F>)> {
    let (mut path, mut policy_rng) = PathDriver::new(config, episode)?;
    let mut trajectory = record_trajectory.then(Vec::new);
    let (stop_time, capped) = loop {
        let w = path.state().value;
        let mut u = policy.decide(w, path.k(), &mut policy_rng);
        let capped = !u && path.at_cap();
        u |= capped;
        if let Some(t) = trajectory.as_mut() {
            t.push(TrajectoryStep {
                w,
                y: path.observation(),
                u,
            });
        }
        if u {
            break (path.k(), capped);
        }
        path.advance()?;
    };
    let costs = cost_record(path.tau_a(), stop_time, config.kappa);
    Ok((
        Episode {
            change_time: path.tau_a(),
            stop_time,
            capped,
            saturated: path.state().saturated,
            trajectory,
        },
        costs,
    ))
}

/// Running sums for eagerness `e`, delay `d` and the false-alarm indicator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Moments<F> {
    pub n: u64,
    pub caps: u64,
    pub sum_e: F,
    pub sum_d: F,
    pub sum_fa: F,
    pub sum_ee: F,
    pub sum_dd: F,
    pub sum_ed: F,
}

impl<F: Real> Moments<F> {
    #[inline]
    pub fn push(&mut self, tau_a: u64, tau_s: u64, capped: bool) {
        let e = F::from_count(tau_a.saturating_sub(tau_s));
        let d = F::from_count(tau_s.saturating_sub(tau_a));
        self.n += 1;
        self.caps += capped as u64;
        self.sum_e += e;
        self.sum_d += d;
        if tau_s < tau_a {
            self.sum_fa += F::one();
        }
        self.sum_ee += e * e;
        self.sum_dd += d * d;
        self.sum_ed += e * d;
    }

    pub fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.caps += o.caps;
        self.sum_e += o.sum_e;
        self.sum_d += o.sum_d;
        self.sum_fa += o.sum_fa;
        self.sum_ee += o.sum_ee;
        self.sum_dd += o.sum_dd;
        self.sum_ed += o.sum_ed;
        self
    }

    fn count(&self) -> F {
        F::from_count(self.n)
    }

    pub fn mde(&self) -> F {
        self.sum_e / self.count()
    }

    pub fn mdd(&self) -> F {
        self.sum_d / self.count()
    }

    pub fn p_fa(&self) -> F {
        self.sum_fa / self.count()
    }

    /// Mean eager cost `MDD + kappa MDE`.
    pub fn cost(&self, kappa: F) -> F {
        self.mdd() + kappa * self.mde()
    }

    fn se_from(&self, sum: F, sum_sq: F) -> F {
        let n = self.count();
        if self.n < 2 {
            return F::zero();
        }
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - F::one())).max(F::zero());
        (var / n).sqrt()
    }

    pub fn se_mde(&self) -> F {
        self.se_from(self.sum_e, self.sum_ee)
    }

    pub fn se_mdd(&self) -> F {
        self.se_from(self.sum_d, self.sum_dd)
    }

    pub fn se_p_fa(&self) -> F {
        self.se_from(self.sum_fa, self.sum_fa)
    }

    /// Standard error of the mean of `d + kappa e`.
    pub fn se_cost(&self, kappa: F) -> F {
        let sum = self.sum_d + kappa * self.sum_e;
        let sum_sq = self.sum_dd + kappa * kappa * self.sum_ee + F::lit(2.0) * kappa * self.sum_ed;
        self.se_from(sum, sum_sq)
    }

    pub fn cap_fraction(&self) -> F {
        F::from_count(self.caps) / self.count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ThresholdEvaluation<F> {
    pub h: F,
    pub episodes: u64,
    pub mde: F,
    pub mdd: F,
    pub p_fa: F,
    pub cost: F,
    pub se_mde: F,
    pub se_mdd: F,
    pub se_p_fa: F,
    pub se_cost: F,
    pub cap_fraction: F,
}

impl<F: Real> ThresholdEvaluation<F> {
    fn from_moments(h: F, m: &Moments<F>, kappa: F) -> Self {
        Self {
            h,
            episodes: m.n,
            mde: m.mde(),
            mdd: m.mdd(),
            p_fa: m.p_fa(),
            cost: m.cost(kappa),
            se_mde: m.se_mde(),
            se_mdd: m.se_mdd(),
            se_p_fa: m.se_p_fa(),
            se_cost: m.se_cost(kappa),
            cap_fraction: m.cap_fraction(),
        }
    }
}

/// Maps `f` over episodes `first..first + n` in fixed-size chunks (in
/// parallel) and merges the chunk results as an ordered binary tree.
pub fn chunked_episodes<T, M, R>(first: u64, n: u64, map: M, merge: R) -> Result<T>
where
    T: Send,
    M: Fn(std::ops::Range<u64>) -> Result<T> + Sync,
    R: Fn(T, T) -> T + Copy,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = first + c * CHUNK;
            let hi = (lo + CHUNK).min(first + n);
            map(lo..hi)
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_reduce(parts, merge).expect("at least one chunk"))
}

/// Monte-Carlo estimates of MDE, MDD, false-alarm probability and eager
/// cost for the threshold rule `w >= h`, over episodes `0..n`.
pub fn evaluate_threshold<F: Real>(h: F, config: &ExperimentConfig<F>, n: u64) -> Result<ThresholdEvaluation<F>> {
    evaluate_policy(config, n, || ThresholdPolicy(h)).map(|mut e| {
        e.h = h;
        e
    })
}

/// Like [`evaluate_threshold`] for an arbitrary policy; `make` builds a fresh
/// policy per chunk.
pub fn evaluate_policy<F: Real, P: StoppingPolicy<F>, B: Fn() -> P + Sync>(
    config: &ExperimentConfig<F>,
    n: u64,
    make: B,
) -> Result<ThresholdEvaluation<F>> {
    if n == 0 {
        return Err(invalid("n", 0.0, "need at least one episode"));
    }
    let m = chunked_episodes(
        0,
        n,
        |range| {
            let mut policy = make();
            let mut m = Moments::default();
            for i in range {
                let (ep, _) = run_episode(config, &mut policy, i, false)?;
                m.push(ep.change_time, ep.stop_time, ep.capped);
            }
            Ok(m)
        },
        Moments::merge,
    )?;
    Ok(ThresholdEvaluation::from_moments(F::nan(), &m, config.kappa))
}

/// First-passage times of one sample path over an ascending threshold grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstPassages {
    pub change_time: u64,
    /// `stop_times[j]` is the first `k` with `W_k >= grid[j]`, or the cap.
    pub stop_times: Vec<u64>,
    /// Index of the first grid point never reached before the cap.
    pub first_capped: usize,
}

/// Simulates episode `episode` once and reads off the stopping time of every
/// threshold in `grid` (sorted ascending).
pub fn first_passage_times<F: Real>(
    config: &ExperimentConfig<F>,
    grid: &[F],
    episode: u64,
) -> Result<FirstPassages> {
    let (mut path, _) = PathDriver::new(config, episode)?;
    let mut stop_times = Vec::with_capacity(grid.len());
    loop {
        let w = path.state().value;
        while stop_times.len() < grid.len() && threshold_decision(w, grid[stop_times.len()]) {
            stop_times.push(path.k());
        }
        if stop_times.len() == grid.len() || path.at_cap() {
            break;
        }
        path.advance()?;
    }
    let first_capped = stop_times.len();
    stop_times.resize(grid.len(), path.k());
    Ok(FirstPassages {
        change_time: path.tau_a(),
        stop_times,
        first_capped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct SweepRow<F> {
    pub h: F,
    #[serde(rename = "MDE")]
    pub mde: F,
    #[serde(rename = "MDD")]
    pub mdd: F,
    #[serde(rename = "SE_MDE")]
    pub se_mde: F,
    #[serde(rename = "SE_MDD")]
    pub se_mdd: F,
}

/// MDE/MDD over a threshold grid, pooled over `repeats` batches of
/// `episodes` sample paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct SweepTable<F> {
    pub grid: Vec<F>,
    pub moments: Vec<Moments<F>>,
    pub episodes: u64,
    pub repeats: u64,
}

impl<F: Real> SweepTable<F> {
    pub fn rows(&self) -> Vec<SweepRow<F>> {
        self.grid
            .iter()
            .zip(&self.moments)
            .map(|(&h, m)| SweepRow {
                h,
                mde: m.mde(),
                mdd: m.mdd(),
                se_mde: m.se_mde(),
                se_mdd: m.se_mdd(),
            })
            .collect()
    }

    pub fn cost(&self, j: usize, kappa: F) -> F {
        self.moments[j].cost(kappa)
    }

    pub fn cost_se(&self, j: usize, kappa: F) -> F {
        self.moments[j].se_cost(kappa)
    }

    /// Fraction of sample paths that reached the cap before the largest
    /// grid threshold.
    pub fn cap_fraction(&self) -> F {
        self.moments.last().map_or(F::zero(), Moments::cap_fraction)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in self.rows() {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// MDE and MDD for every threshold in `grid` (ascending), from `repeats`
/// batches of `n` episodes. Each sample path is simulated once and shared by
/// all thresholds.
pub fn sweep_thresholds<F: Real>(
    grid: &[F],
    config: &ExperimentConfig<F>,
    n: u64,
    repeats: u64,
) -> Result<SweepTable<F>> {
    if grid.is_empty() {
        return Err(invalid("grid", 0.0, "threshold grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(invalid("grid", f64::NAN, "threshold grid must be sorted ascending"));
    }
    if n == 0 || repeats == 0 {
        return Err(invalid("n", n as f64, "need at least one episode and one repeat"));
    }
    let t = grid.len();
    let merge = |a: Vec<Moments<F>>, b: Vec<Moments<F>>| -> Vec<Moments<F>> {
        a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
    };
    let moments = chunked_episodes(
        0,
        n * repeats,
        |range| {
            let mut acc = vec![Moments::default(); t];
            for i in range {
                let fp = first_passage_times(config, grid, i)?;
                for (j, (m, &ts)) in acc.iter_mut().zip(&fp.stop_times).enumerate() {
                    m.push(fp.change_time, ts, j >= fp.first_capped);
                }
            }
            Ok(acc)
        },
        merge,
    )?;
    Ok(SweepTable {
        grid: grid.to_vec(),
        moments,
        episodes: n,
        repeats,
    })
}

/// Uniform grid of `t` points on `[lo, hi]`.
pub fn linear_grid<F: Real>(lo: F, hi: F, t: usize) -> Vec<F> {
    match t {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..t)
            .map(|i| lo + (hi - lo) * F::from_count(i as u64) / F::from_count(t as u64 - 1))
            .collect(),
    }
}

/// Grid on `[0, 1]` uniform in log-odds over `[z_lo, z_hi]`, with 0 and 1
/// appended. Used for posterior thresholds, whose optimum sits very close
/// to 1 when kappa is large.
pub fn posterior_grid<F: Real>(z_lo: F, z_hi: F, t: usize) -> Vec<F> {
    let mut g = vec![F::zero()];
    g.extend(
        linear_grid(z_lo, z_hi, t.saturating_sub(2))
            .into_iter()
            .map(crate::detectors::logistic),
    );
    g.push(F::one());
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct OptimalThreshold<F> {
    pub kappa: F,
    pub index: usize,
    pub h: F,
    pub cost: F,
    pub cost_se: F,
    /// Outermost thresholds whose estimated cost is within two standard
    /// errors of the minimum, linearly interpolated between grid points.
    pub band_lo: F,
    pub band_hi: F,
}

/// Grid minimiser of `kappa MDE(h) + MDD(h)`; ties go to the smaller `h`.
pub fn optimal_threshold<F: Real>(table: &SweepTable<F>, kappa: F) -> Result<OptimalThreshold<F>> {
    if table.grid.is_empty() {
        return Err(invalid("table", 0.0, "empty sweep table"));
    }
    let mut best = 0;
    for j in 1..table.grid.len() {
        if table.cost(j, kappa) < table.cost(best, kappa) {
            best = j;
        }
    }
    let cost = table.cost(best, kappa);
    let cost_se = table.cost_se(best, kappa);
    let limit = cost + F::lit(2.0) * cost_se;
    let within: Vec<usize> = (0..table.grid.len())
        .filter(|&j| table.cost(j, kappa) <= limit)
        .collect();
    let (first, last) = (*within.first().expect("contains best"), *within.last().expect("contains best"));
    // Interpolate where the cost curve crosses the limit between the outermost
    // included grid point and its excluded neighbour.
    let edge = |inside: usize, outside: usize| {
        let (ci, co) = (table.cost(inside, kappa), table.cost(outside, kappa));
        let t = if co > ci { (limit - ci) / (co - ci) } else { F::zero() };
        table.grid[inside] + t * (table.grid[outside] - table.grid[inside])
    };
    let band_lo = if first > 0 { edge(first, first - 1) } else { table.grid[first] };
    let band_hi = if last + 1 < table.grid.len() { edge(last, last + 1) } else { table.grid[last] };
    Ok(OptimalThreshold {
        kappa,
        index: best,
        h: table.grid[best],
        cost,
        cost_se,
        band_lo,
        band_hi,
    })
}

/// Large-kappa approximations shifted to pass through Monte-Carlo anchors
/// at `kappa = 100`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ShiftedCurves<F> {
    pub upsilon_plus: F,
    pub m1: F,
    pub anchor_kappa: F,
    pub anchor_h: F,
    pub anchor_cost: F,
}

impl<F: Real> ShiftedCurves<F> {
    pub fn new(upsilon_plus: F, m1: F, anchor_h: F, anchor_cost: F) -> Self {
        Self {
            upsilon_plus,
            m1,
            anchor_kappa: F::lit(100.0),
            anchor_h,
            anchor_cost,
        }
    }

    pub fn threshold(&self, kappa: F) -> F {
        approx_threshold(kappa, self.upsilon_plus) - approx_threshold(self.anchor_kappa, self.upsilon_plus)
            + self.anchor_h
    }

    pub fn cost(&self, kappa: F) -> F {
        approx_cost(kappa, self.upsilon_plus, self.m1) - approx_cost(self.anchor_kappa, self.upsilon_plus, self.m1)
            + self.anchor_cost
    }
}

/// Writes episodes as JSON lines.
pub fn write_episodes_jsonl<F: Real, W: Write>(episodes: &[Episode<F>], mut w: W) -> Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
