//! Surrogate information-state recursions and the threshold stopping rule.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{DensitySpec, ScoreFunction};
use crate::real::Real;

/// Shiryaev-Roberts values are clamped here.
pub const SR_SATURATION: f64 = 1e300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "F: Real")]
pub enum DetectorKind<F> {
    Cusum,
    ShiryaevRoberts,
    /// Posterior probability of a change for a geometric prior with hazard `rho`.
    ShiryaevPosterior { rho: F },
}

impl<F: Real> DetectorKind<F> {
    pub fn validate(&self) -> Result<()> {
        if let Self::ShiryaevPosterior { rho } = *self {
            if !(rho > F::zero() && rho < F::one()) {
                return Err(invalid("rho", rho.as_f64(), "posterior prior hazard must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cusum => "cusum",
            Self::ShiryaevRoberts => "shiryaev-roberts",
            Self::ShiryaevPosterior { .. } => "shiryaev-posterior",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct DetectorState<F> {
    pub value: F,
    /// Set once a Shiryaev-Roberts value has hit [`SR_SATURATION`].
    pub saturated: bool,
}

/// `max(0, w + l)`
#[inline]
pub fn cusum_step<F: Real>(w: F, l: F) -> F {
    (w + l).max(F::zero())
}

/// `exp(l) (w + 1)`, clamped at [`SR_SATURATION`]. Returns the new value and
/// whether it saturated.
#[inline]
pub fn sr_step<F: Real>(w: F, l: F) -> (F, bool) {
    let cap = F::lit(SR_SATURATION);
    let v = l.exp() * (w + F::one());
    if v.is_nan() || v >= cap {
        (cap.min(F::max_value()), true)
    } else {
        (v, false)
    }
}

/// One Bayes step of the change posterior given the log-likelihood ratio `l`
/// of the new observation: predict with the geometric hazard, then update.
///
/// `p' = g e^l / (g e^l + 1 - g)` with `g = p + (1 - p) rho`, evaluated on
/// the log-odds scale.
pub fn posterior_step_llr<F: Real>(p: F, l: F, rho: F) -> Result<F> {
    if l.is_nan() {
        return Err(Error::DetectorUpdate("likelihood ratio undefined (both densities vanish)"));
    }
    let g = p + (F::one() - p) * rho;
    if g >= F::one() {
        return Ok(F::one());
    }
    if g <= F::zero() {
        return Ok(F::zero());
    }
    let log_odds = g.ln() - (F::one() - g).ln() + l;
    Ok(logistic(log_odds))
}

/// [`posterior_step_llr`] with the likelihood ratio of `y` under `(f0, f1)`.
pub fn posterior_step<F: Real>(p: F, y: F, rho: F, f0: &DensitySpec<F>, f1: &DensitySpec<F>) -> Result<F> {
    let l = crate::models::llr_eval(f0, f1, y);
    posterior_step_llr(p, l, rho)
}

#[inline]
pub(crate) fn logistic<F: Real>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Stopping input: `true` (stop, `u = 1`) iff `w >= h`.
#[inline]
pub fn threshold_decision<F: Real>(w: F, h: F) -> bool {
    w >= h
}

/// A detector statistic driven by a score function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Detector<F> {
    pub kind: DetectorKind<F>,
    pub score: ScoreFunction<F>,
}

impl<F: Real> Detector<F> {
    pub fn new(kind: DetectorKind<F>, score: ScoreFunction<F>) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, score })
    }

    /// State at step 0 after observing `y0`.
    ///
    /// CUSUM and Shiryaev-Roberts start from 0 regardless of `y0`; the
    /// posterior is `P{tau_a <= 0 | y0}`.
    pub fn start(&self, y0: F) -> Result<DetectorState<F>> {
        match self.kind {
            DetectorKind::Cusum | DetectorKind::ShiryaevRoberts => Ok(DetectorState::default()),
            DetectorKind::ShiryaevPosterior { .. } => self.step(DetectorState::default(), y0),
        }
    }

    pub fn step(&self, state: DetectorState<F>, y: F) -> Result<DetectorState<F>> {
        let l = self.score.llr(y);
        Ok(match self.kind {
            DetectorKind::Cusum => DetectorState {
                value: cusum_step(state.value, l),
                saturated: false,
            },
            DetectorKind::ShiryaevRoberts => {
                let (value, sat) = sr_step(state.value, l);
                DetectorState {
                    value,
                    saturated: state.saturated || sat,
                }
            }
            DetectorKind::ShiryaevPosterior { rho } => DetectorState {
                value: posterior_step_llr(state.value, l, rho)?,
                saturated: false,
            },
        })
    }
}
