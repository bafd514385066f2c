use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::Basis;
use super::learner::{GainKind, Learner, StepSizes, Transition};
use crate::error::{invalid, Error, Result};
use crate::models::approx_threshold;
use crate::real::Real;
use crate::rng::{stream, StreamRng, Substream};
use crate::simulator::{stage_cost, ExperimentConfig, PathDriver};

/// Decaying exploration probability and the oblivious threshold interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ExplorationSchedule<F> {
    pub eps0: F,
    pub eps_f: F,
    /// Episodes over which `eps` decays from `eps0` to `eps_f`.
    pub n0: u64,
    pub eta: F,
    pub delta: F,
}

impl<F: Real> ExplorationSchedule<F> {
    pub fn new(eps0: F, eps_f: F, n0: u64, eta: F, delta: F) -> Result<Self> {
        let s = Self {
            eps0,
            eps_f,
            n0,
            eta,
            delta,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_f >= F::zero() && self.eps_f <= self.eps0 && self.eps0 <= F::one()) {
            return Err(invalid("eps_f", self.eps_f.as_f64(), "need 0 <= eps_f <= eps0 <= 1"));
        }
        if !(self.delta > self.eta && self.eta > F::zero()) {
            return Err(invalid("delta", self.delta.as_f64(), "need delta > eta > 0"));
        }
        Ok(())
    }
}

/// `max(eps_f, eps0 + (n / n0)(eps_f - eps0))`.
pub fn epsilon_schedule<F: Real>(n: u64, s: &ExplorationSchedule<F>) -> F {
    if n >= s.n0 {
        return s.eps_f;
    }
    let frac = F::from_count(n) / F::from_count(s.n0);
    (s.eps0 + frac * (s.eps_f - s.eps0)).max(s.eps_f)
}

/// Uniform draw from `[h + eta - delta, h + eta + delta]` with `h` the
/// large-kappa threshold approximation; the lower end is clipped at 0.
pub fn draw_oblivious_threshold<F: Real, R: Rng + ?Sized>(
    kappa: F,
    upsilon_plus: F,
    eta: F,
    delta: F,
    rng: &mut R,
) -> F {
    let centre = approx_threshold(kappa, upsilon_plus) + eta;
    let v: f64 = rng.random();
    let h = centre - delta + F::lit(2.0 * v) * delta;
    if h < F::zero() {
        log::warn!("oblivious threshold {h} clipped at 0");
        F::zero()
    } else {
        h
    }
}

/// Epsilon-greedy input: with probability `eps` the oblivious rule
/// `w >= h_obl`, otherwise the greedy input (ties stop). Always consumes one
/// uniform from `rng`.
pub fn behavior_input<F: Real, R: Rng + ?Sized>(
    basis: &Basis<F>,
    w: F,
    theta: &[F],
    eps: F,
    h_obl: F,
    rng: &mut R,
) -> bool {
    let v: f64 = rng.random();
    if v < eps.as_f64() {
        w >= h_obl
    } else {
        basis.greedy(theta, w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct QConfig<F> {
    pub basis: Basis<F>,
    pub gain: GainKind,
    pub schedule: ExplorationSchedule<F>,
    pub episodes: u64,
    /// Root used for the oblivious threshold interval.
    pub upsilon_plus: F,
    pub steps: StepSizes<F>,
    pub reset_bound: F,
    pub init_range: F,
    /// Overrides the random initial parameter.
    pub theta0: Option<Vec<F>>,
    /// Fraction of the episodes excluded from the Polyak-Ruppert average
    /// (default: the first half).
    pub pr_burn_in: F,
}

impl<F: Real> QConfig<F> {
    pub fn new(basis: Basis<F>, gain: GainKind, schedule: ExplorationSchedule<F>, episodes: u64, upsilon_plus: F) -> Self {
        Self {
            basis,
            gain,
            schedule,
            episodes,
            upsilon_plus,
            steps: StepSizes::default(),
            reset_bound: F::lit(5e3),
            init_range: F::lit(100.0),
            theta0: None,
            pr_burn_in: F::lit(0.5),
        }
    }
}

fn uniform_theta<F: Real>(d: usize, range: F, rng: &mut StreamRng) -> Vec<F> {
    (0..d)
        .map(|_| {
            let v: f64 = rng.random();
            F::lit(2.0 * v - 1.0) * range
        })
        .collect()
}

/// Per-episode trace row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct EpisodeTrace<F> {
    pub episode: u64,
    /// Strung step index after the episode.
    pub k: u64,
    pub theta: Vec<F>,
    pub theta_pr: Vec<F>,
    /// Largest `|theta|_inf` seen during the episode (before any reset).
    pub max_norm: F,
    pub resets: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct QTrace<F> {
    pub theta: Vec<F>,
    pub theta_pr: Vec<F>,
    /// Total strung transitions.
    pub steps: u64,
    pub resets: u64,
    /// Episode index of every reset.
    pub reset_episodes: Vec<u64>,
    pub rejected: u64,
    pub episodes: Vec<EpisodeTrace<F>>,
}

impl<F: Real> QTrace<F> {
    /// CSV with `episode, k, theta_0.., theta_pr_0.., max_norm, resets`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let d = self.theta.len();
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["episode".to_owned(), "k".to_owned()];
        header.extend((0..d).map(|i| format!("theta_{i}")));
        header.extend((0..d).map(|i| format!("theta_pr_{i}")));
        header.extend(["max_norm".to_owned(), "resets".to_owned()]);
        wtr.write_record(&header)?;
        for e in &self.episodes {
            let mut rec = vec![e.episode.to_string(), e.k.to_string()];
            rec.extend(e.theta.iter().map(|v| v.to_string()));
            rec.extend(e.theta_pr.iter().map(|v| v.to_string()));
            rec.extend([e.max_norm.to_string(), e.resets.to_string()]);
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Streams of episode `i`: the oblivious threshold, then one uniform per
/// step for the epsilon mixing.
fn exploration_rng(seed: u64, episode: u64) -> StreamRng {
    stream(seed, Substream::Exploration, episode)
}

/// Generates the transitions of one episode under the epsilon-greedy
/// behavior around the current parameter, calling `sink` after each.
///
/// `sink` may change the parameter used for later decisions.
fn run_episode<F: Real, S>(
    config: &ExperimentConfig<F>,
    q: &QConfig<F>,
    episode: u64,
    theta: &mut Vec<F>,
    mut sink: S,
) -> Result<()>
where
    S: FnMut(&Transition<F>, &mut Vec<F>) -> Result<()>,
{
    let (mut path, _) = PathDriver::new(config, episode)?;
    let mut rng = exploration_rng(config.seed, episode);
    let s = &q.schedule;
    let h_obl = draw_oblivious_threshold(config.kappa, q.upsilon_plus, s.eta, s.delta, &mut rng);
    let eps = epsilon_schedule(episode, s);
    loop {
        let x = path.state().value;
        let u = behavior_input(&q.basis, x, theta, eps, h_obl, &mut rng) || path.at_cap();
        let cost = stage_cost(u, path.k(), path.tau_a(), config.kappa);
        let next = if u {
            None
        } else {
            path.advance()?;
            Some(path.state().value)
        };
        sink(&Transition { x, u, cost, next }, theta)?;
        if u {
            return Ok(());
        }
    }
}

/// Q-learning over `q.episodes` episodes strung into one transition stream.
///
/// Whenever `|theta|_inf` exceeds the reset bound the parameter is redrawn
/// uniformly from `[-init_range, init_range]^d`.
pub fn train<F: Real>(config: &ExperimentConfig<F>, q: &QConfig<F>) -> Result<QTrace<F>> {
    q.schedule.validate()?;
    if q.episodes == 0 {
        return Err(invalid("episodes", 0.0, "need at least one episode"));
    }
    let d = q.basis.dim();
    let mut init_rng = stream(config.seed, Substream::Init, 0);
    let theta0 = match &q.theta0 {
        Some(t) => t.clone(),
        None => uniform_theta(d, q.init_range, &mut init_rng),
    };
    let mut learner = Learner::new(q.basis.clone(), theta0, q.gain, q.steps)?;
    let mut reset_rng = stream(config.seed, Substream::Init, 1);

    let mut pr_sum = vec![F::zero(); d];
    let mut pr_n = 0u64;
    let mut resets = 0u64;
    let mut reset_episodes = Vec::new();
    let mut episodes = Vec::with_capacity(q.episodes as usize);
    // The PR window is fixed by episode index so the trace is a pure
    // function of the inputs.
    let burn = (q.pr_burn_in.as_f64() * q.episodes as f64).floor() as u64;

    let mut theta = learner.theta.clone();
    for i in 0..q.episodes {
        let mut max_norm = F::zero();
        run_episode(config, q, i, &mut theta, |tr, theta| {
            learner.observe(tr)?;
            let norm = learner.max_norm();
            max_norm = max_norm.max(norm);
            if !(norm <= q.reset_bound) {
                learner.theta = uniform_theta(d, q.init_range, &mut reset_rng);
                resets += 1;
                reset_episodes.push(i);
            }
            if i >= burn {
                pr_sum.iter_mut().zip(&learner.theta).for_each(|(s, &t)| *s += t);
                pr_n += 1;
            }
            theta.clone_from(&learner.theta);
            Ok(())
        })?;
        if learner.k >= 100 && 2 * learner.rejected > learner.k {
            return Err(Error::TooManyRejections {
                rejected: learner.rejected,
                total: learner.k,
            });
        }
        let theta_pr = pr_mean(&pr_sum, pr_n, &learner.theta);
        episodes.push(EpisodeTrace {
            episode: i,
            k: learner.k,
            theta: learner.theta.clone(),
            theta_pr,
            max_norm,
            resets,
        });
    }
    Ok(QTrace {
        theta: learner.theta.clone(),
        theta_pr: pr_mean(&pr_sum, pr_n, &learner.theta),
        steps: learner.k,
        resets,
        reset_episodes,
        rejected: learner.rejected,
        episodes,
    })
}

fn pr_mean<F: Real>(sum: &[F], n: u64, fallback: &[F]) -> Vec<F> {
    if n == 0 {
        return fallback.to_vec();
    }
    sum.iter().map(|&s| s / F::from_count(n)).collect()
}

/// Transitions of episodes `first..first + n` under the epsilon-greedy
/// behavior at the fixed parameter `theta`.
pub fn collect_transitions<F: Real>(
    config: &ExperimentConfig<F>,
    q: &QConfig<F>,
    theta: &[F],
    first: u64,
    n: u64,
) -> Result<Vec<Transition<F>>> {
    q.basis.check_dim(theta)?;
    let mut out = Vec::new();
    let mut t = theta.to_vec();
    for i in first..first + n {
        run_episode(config, q, i, &mut t, |tr, _| {
            out.push(*tr);
            Ok(())
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{Detector, DetectorKind};
    use crate::models::{Case, ChangeTimeLaw, DensitySpec};
    use crate::simulator::ObservationModel;
    use approx::assert_abs_diff_eq;

    fn schedule(eps0: f64, eps_f: f64, n0: u64) -> ExplorationSchedule<f64> {
        ExplorationSchedule::new(eps0, eps_f, n0, 0.5, 1.5).unwrap()
    }

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
    fn epsilon_examples() {
        let s = schedule(0.5, 0.1, 1000);
        assert_eq!(epsilon_schedule(0, &s), 0.5);
        assert_eq!(epsilon_schedule(1000, &s), 0.1);
        assert_eq!(epsilon_schedule(5000, &s), 0.1);
        assert_abs_diff_eq!(epsilon_schedule(500, &s), 0.3, epsilon = 1e-15);
        assert!(ExplorationSchedule::new(0.1, 0.5, 10, 0.5, 1.5).is_err());
        assert!(ExplorationSchedule::new(0.5, 0.1, 10, 1.5, 0.5).is_err());
    }

    #[test]
    fn oblivious_threshold_interval() {
        let mut rng = stream(3, Substream::Misc, 0);
        let up = 1.14031;
        let h = draw_oblivious_threshold(100.0, up, 0.5, 1e-300, &mut rng);
        assert_abs_diff_eq!(h, 100f64.ln() / up + 0.5, epsilon = 1e-12);
        let draws: Vec<f64> = (0..10_000).map(|_| draw_oblivious_threshold(100.0, up, 0.5, 1.5, &mut rng)).collect();
        let (lo, hi) = (100f64.ln() / up - 1.0, 100f64.ln() / up + 2.0);
        assert!((3.03..3.05).contains(&lo) && (6.03..6.05).contains(&hi));
        assert!(draws.iter().all(|&h| h >= lo && h <= hi));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let se = 3.0 / 12f64.sqrt() / 100.0;
        assert!((mean - 0.5 * (lo + hi)).abs() < 3.0 * se);
        // interval below zero is clipped
        assert!(draw_oblivious_threshold(1.0, up, 0.5, 10.0, &mut stream(1, Substream::Misc, 1)) >= 0.0);
    }

    #[test]
    fn behavior_rules() {
        let b = Basis::smooth(4.0).unwrap();
        let mut rng = stream(4, Substream::Misc, 0);
        let theta = [1.0, 0.0, 1.0, 0.0, 0.0]; // greedy threshold at 1
        assert!(!behavior_input(&b, 3.0, &theta, 1.0, 5.0, &mut rng));
        assert!(behavior_input(&b, 3.0, &[0.0; 5], 0.0, 5.0, &mut rng));
        // at w = 3 the rules disagree: oblivious continues, greedy stops
        let n = 10_000;
        let continues = (0..n).filter(|_| !behavior_input(&b, 3.0, &theta, 0.1, 5.0, &mut rng)).count();
        let p = continues as f64 / n as f64;
        assert!((p - 0.1).abs() < 3.0 * (0.09f64 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn training_is_reproducible_and_resets_bounded() {
        let cfg = ideal(27.0, 7);
        let q = QConfig::new(Basis::smooth(3.0).unwrap(), GainKind::Zap, schedule(1.0, 0.1, 50), 100, 1.14031);
        let a = train(&cfg, &q).unwrap();
        let b = train(&cfg, &q).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes.len(), 100);
        assert!(a.steps >= 100);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("episode,k,theta_0,"));

        let mut q1 = q.clone();
        q1.episodes = 1;
        q1.schedule = schedule(1.0, 1.0, 0);
        let s = train(&cfg, &q1).unwrap();
        assert_eq!(s, train(&cfg, &q1).unwrap());
    }

    #[test]
    fn resets_redraw_within_init_range() {
        let cfg = ideal(27.0, 9);
        let mut q = QConfig::new(Basis::smooth(3.0).unwrap(), GainKind::Scalar, schedule(1.0, 1.0, 0), 20, 1.14031);
        q.reset_bound = 1.0;
        q.init_range = 0.5;
        let t = train(&cfg, &q).unwrap();
        assert!(t.resets > 0);
        assert!(t.episodes.iter().all(|e| crate::numeric::max_abs(&e.theta) <= 1.0));
    }

    #[test]
    fn oblivious_streams_ignore_theta() {
        let cfg = ideal(27.0, 10);
        let q = QConfig::new(Basis::smooth(3.0).unwrap(), GainKind::Zap, schedule(1.0, 1.0, 0), 1, 1.14031);
        let a = collect_transitions(&cfg, &q, &[0.0; 5], 0, 50).unwrap();
        let b = collect_transitions(&cfg, &q, &[50.0, -3.0, 7.0, 1.0, -80.0], 0, 50).unwrap();
        assert_eq!(a, b);
    }
}
