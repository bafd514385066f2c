//! Experiment configuration. Every field has a named default, so an empty
//! file is a valid desk-scale configuration.

use serde::{Deserialize, Serialize};

use qcd_core::actor_critic::GradientEstimator;
use qcd_core::models::{Case, ChangeTimeLaw};
use qcd_core::qlearn::{BinLayout, GainKind, DEFAULT_B_Q};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Cost of a false alarm relative to one step of delay.
    pub kappa: f64,
    /// Grid for the approximation curves and the per-kappa optima.
    pub kappas: Vec<f64>,
    pub model: ModelConfig,
    pub sweep: SweepConfig,
    pub ac: AcSection,
    pub q: QSection,
    pub eval: EvalSection,
    pub diagnose: DiagnoseSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            kappa: 27.0,
            kappas: vec![2.0, 5.0, 10.0, 20.0, 27.0, 30.0, 50.0, 100.0],
            model: ModelConfig::default(),
            sweep: SweepConfig::default(),
            ac: AcSection::default(),
            q: QSection::default(),
            eval: EvalSection::default(),
            diagnose: DiagnoseSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Detector design: `case1` (ideal), `case2` (Laplace), `case3` (Cauchy).
    pub case: Case,
    pub mu1: f64,
    pub sigma: f64,
    pub change_law: ChangeLaw,
    /// Geometric hazard.
    pub rho: f64,
    /// `[p, rho_slow, rho_fast]`: the slow component with probability `p`.
    pub mixture: [f64; 3],
    /// Episode horizon cap; `100 / rho` of the slowest component when unset.
    pub horizon_cap: Option<u64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            case: Case::Ideal,
            mu1: 0.5,
            sigma: 1.0,
            change_law: ChangeLaw::Geometric,
            rho: 0.02,
            mixture: [0.05, 0.02, 0.2],
            horizon_cap: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChangeLaw {
    Geometric,
    Mixture,
}

impl ModelConfig {
    pub fn change_time(&self) -> ChangeTimeLaw<f64> {
        match self.change_law {
            ChangeLaw::Geometric => ChangeTimeLaw::Geometric { rho: self.rho },
            ChangeLaw::Mixture => {
                let [p, rho_slow, rho_fast] = self.mixture;
                ChangeTimeLaw::Mixture { p, rho_slow, rho_fast }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Sample paths per repeat.
    pub episodes: u64,
    pub repeats: u64,
    /// Number of thresholds.
    pub thresholds: usize,
    /// CUSUM / Shiryaev-Roberts grid `[0, h_max]`.
    pub h_max: f64,
    /// Log-odds range of the posterior grid.
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            episodes: 2_000,
            repeats: 20,
            thresholds: 200,
            h_max: 16.0,
            z_min: -4.0,
            z_max: 12.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcSection {
    pub xi: f64,
    pub theta0: f64,
    pub episodes: u64,
    pub rho_step: f64,
    /// Fixed initial step size; tuned on a pilot batch when unset.
    pub alpha0: Option<f64>,
    pub pilot_episodes: u64,
    pub natural_gradient: bool,
    pub estimator: GradientEstimator,
    /// Gradient profile grid.
    pub profile_min: f64,
    pub profile_max: f64,
    pub profile_points: usize,
    /// Episodes per profile point.
    pub profile_episodes: u64,
    pub profile_estimators: Vec<GradientEstimator>,
}

impl Default for AcSection {
    fn default() -> Self {
        Self {
            xi: 20.0,
            theta0: 1.0,
            episodes: 5_000,
            rho_step: 0.7,
            alpha0: None,
            pilot_episodes: 200,
            natural_gradient: false,
            estimator: GradientEstimator::Eligibility,
            profile_min: 1.0,
            profile_max: 9.0,
            profile_points: 33,
            profile_episodes: 10_000,
            profile_estimators: vec![GradientEstimator::Eligibility],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Smooth,
    Binned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QSection {
    pub basis: BasisKind,
    pub b_q: f64,
    pub edges: Vec<f64>,
    pub layout: BinLayout,
    pub gain: GainKind,
    pub eps0: f64,
    /// Final exploration probability; 0.1 for Zap and 1e-4 for the scalar
    /// gain when unset.
    pub eps_f: Option<f64>,
    /// Fraction of the episodes over which exploration decays.
    pub decay_fraction: f64,
    pub eta: f64,
    pub delta: f64,
    pub episodes: u64,
    pub reset_bound: f64,
    /// Initial parameters and resets are uniform on `[-init_range, init_range]^d`.
    pub init_range: f64,
    pub pr_burn_in: f64,
    /// Policy-extraction grid `[0, policy_max]`.
    pub policy_max: f64,
    pub policy_points: usize,
    /// Episodes of behavior data for the Jacobian diagnostic; 0 skips it.
    pub jacobian_episodes: u64,
    pub jacobian_step: f64,
}

impl QSection {
    pub fn eps_final(&self) -> f64 {
        self.eps_f.unwrap_or(match self.gain {
            GainKind::Zap => 0.1,
            GainKind::Scalar => 1e-4,
        })
    }
}

impl Default for QSection {
    fn default() -> Self {
        Self {
            basis: BasisKind::Smooth,
            b_q: DEFAULT_B_Q,
            edges: (0..=12).map(|i| i as f64 * 0.5).collect(),
            layout: BinLayout::OpenLast,
            gain: GainKind::Zap,
            eps0: 1.0,
            eps_f: None,
            decay_fraction: 0.1,
            eta: 0.5,
            delta: 1.5,
            episodes: 10_000,
            reset_bound: 5e3,
            init_range: 100.0,
            pr_burn_in: 0.5,
            policy_max: 20.0,
            policy_points: 2001,
            jacobian_episodes: 2_000,
            jacobian_step: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Episodes used to evaluate the learned threshold.
    pub episodes: u64,
    /// Threshold to evaluate; trained with the `[q]` settings when unset.
    pub threshold: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: 40_000,
            threshold: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub replicas: usize,
    /// Training lengths (episodes) compared by the stability report.
    pub run_lengths: Vec<u64>,
    /// Histogram bins; Sturges' rule when unset.
    pub bins: Option<usize>,
    /// Parameter coordinate (0-based) compared against the threshold.
    pub coordinate: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self {
            replicas: 50,
            run_lengths: vec![10_000, 30_000],
            bins: None,
            coordinate: 3,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replaces the desk-scale sample sizes with the ones used in the
    /// published experiments (or, where none is given, the closest scale
    /// that is).
    pub fn paper_scale(mut self) -> Self {
        self.sweep.episodes = 20_000;
        self.sweep.repeats = 200;
        self.sweep.thresholds = 1_000;
        self.sweep.h_max = 20.0;
        self.ac.episodes = 100_000;
        self.ac.profile_episodes = 10_000;
        self.q.episodes = 1_000_000;
        self.eval.episodes = 400_000;
        self.diagnose.replicas = 400;
        self.diagnose.run_lengths = vec![100_000, 300_000, 1_000_000];
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("`{name}` must be positive and finite, got {v}"))
            }
        };
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(format!("`kappa` must be non-negative, got {}", self.kappa));
        }
        if let Some(k) = self.kappas.iter().find(|k| !(**k >= 1.0 && k.is_finite())) {
            return Err(format!("`kappas` entries must be >= 1, got {k}"));
        }
        positive("model.sigma", self.model.sigma)?;
        positive("model.mu1", self.model.mu1)?;
        self.model.change_time().validate().map_err(|e| e.to_string())?;
        positive("sweep.h_max", self.sweep.h_max)?;
        positive("ac.xi", self.ac.xi)?;
        positive("q.b_q", self.q.b_q)?;
        if self.sweep.episodes == 0 || self.sweep.repeats == 0 || self.sweep.thresholds < 2 {
            return Err("sweep needs episodes, repeats >= 1 and at least two thresholds".into());
        }
        if self.sweep.z_min >= self.sweep.z_max {
            return Err("`sweep.z_min` must be below `sweep.z_max`".into());
        }
        if self.ac.profile_points < 2 || self.ac.profile_min >= self.ac.profile_max {
            return Err("gradient profile needs an increasing grid of at least two points".into());
        }
        if !(0.0..1.0).contains(&self.q.pr_burn_in) {
            return Err(format!("`q.pr_burn_in` must lie in [0, 1), got {}", self.q.pr_burn_in));
        }
        if !(self.q.decay_fraction > 0.0 && self.q.decay_fraction <= 1.0) {
            return Err(format!("`q.decay_fraction` must lie in (0, 1], got {}", self.q.decay_fraction));
        }
        if self.q.policy_points < 2 {
            return Err("`q.policy_points` must be at least 2".into());
        }
        if self.diagnose.run_lengths.len() < 2 {
            return Err("`diagnose.run_lengths` needs at least two entries".into());
        }
        if self.diagnose.replicas < 2 {
            return Err("`diagnose.replicas` must be at least 2".into());
        }
        Ok(())
    }
}
