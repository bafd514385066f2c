//! Probability models: observation densities, change-time laws, score
//! functions with their drift means and log moment generating functions, and
//! the large-threshold approximations of the CUSUM optimal threshold and cost.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{bisect, brent, integrate_line, QuadTolerance};
use crate::real::Real;

/// Marginal law of one observation.
///
/// `scale` is the standard deviation for the Gaussian, the diversity `b` for
/// the Laplace and the half-width `gamma` for the Cauchy. `Bernoulli` puts
/// mass `p` on 1 and `1 - p` on 0; it exists for small exactly-enumerable
/// models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", bound = "F: Real")]
pub enum DensitySpec<F> {
    Gaussian { location: F, scale: F },
    Laplace { location: F, scale: F },
    Cauchy { location: F, scale: F },
    Bernoulli { p: F },
}

impl<F: Real> DensitySpec<F> {
    pub fn gaussian(location: F, scale: F) -> Result<Self> {
        Self::Gaussian { location, scale }.validated()
    }

    pub fn laplace(location: F, scale: F) -> Result<Self> {
        Self::Laplace { location, scale }.validated()
    }

    pub fn cauchy(location: F, scale: F) -> Result<Self> {
        Self::Cauchy { location, scale }.validated()
    }

    pub fn bernoulli(p: F) -> Result<Self> {
        Self::Bernoulli { p }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { location, scale }
            | Self::Laplace { location, scale }
            | Self::Cauchy { location, scale } => {
                if !location.is_finite() {
                    return Err(invalid("location", location.as_f64(), "must be finite"));
                }
                if !(scale > F::zero() && scale.is_finite()) {
                    return Err(invalid("scale", scale.as_f64(), "must be positive and finite"));
                }
            }
            Self::Bernoulli { p } => {
                if !(p > F::zero() && p < F::one()) {
                    return Err(invalid("p", p.as_f64(), "must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Bernoulli { .. })
    }

    pub fn ln_pdf(&self, y: F) -> F {
        match *self {
            Self::Gaussian { location, scale } => {
                let z = (y - location) / scale;
                -F::lit(0.5) * z * z - scale.ln() - F::lit(0.5) * F::TAU().ln()
            }
            Self::Laplace { location, scale } => {
                -(y - location).abs() / scale - (F::lit(2.0) * scale).ln()
            }
            Self::Cauchy { location, scale } => {
                let z = (y - location) / scale;
                -(F::PI() * scale * (F::one() + z * z)).ln()
            }
            Self::Bernoulli { p } => {
                if y == F::one() {
                    p.ln()
                } else if y == F::zero() {
                    (F::one() - p).ln()
                } else {
                    F::neg_infinity()
                }
            }
        }
    }

    pub fn pdf(&self, y: F) -> F {
        self.ln_pdf(y).exp()
    }

    /// Mean, when it exists.
    pub fn mean(&self) -> Option<F> {
        match *self {
            Self::Gaussian { location, .. } | Self::Laplace { location, .. } => Some(location),
            Self::Cauchy { .. } => None,
            Self::Bernoulli { p } => Some(p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> F {
        match *self {
            Self::Gaussian { location, scale } => {
                let z: f64 = StandardNormal.sample(rng);
                location + scale * F::lit(z)
            }
            Self::Laplace { location, scale } => {
                // inverse cdf on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let tail = -(1.0 - 2.0 * u.abs()).ln();
                location + scale * F::lit(u.signum() * tail)
            }
            Self::Cauchy { location, scale } => {
                let u: f64 = rng.random::<f64>();
                location + scale * F::lit((std::f64::consts::PI * (u - 0.5)).tan())
            }
            Self::Bernoulli { p } => {
                if rng.random::<f64>() < p.as_f64() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }

    fn anchor_points(&self) -> Vec<f64> {
        match *self {
            Self::Gaussian { location, scale }
            | Self::Laplace { location, scale }
            | Self::Cauchy { location, scale } => {
                let (m, s) = (location.as_f64(), scale.as_f64());
                vec![m - 4.0 * s, m - s, m, m + s, m + 4.0 * s]
            }
            Self::Bernoulli { .. } => vec![0.0, 1.0],
        }
    }

    /// `E[g(Y)]`, exact for discrete laws and by adaptive quadrature
    /// otherwise. `extra_breaks` should name kinks of `g`.
    pub fn expect<G: FnMut(f64) -> f64>(
        &self,
        mut g: G,
        extra_breaks: &[f64],
        integrand: &str,
    ) -> Result<f64> {
        if let Self::Bernoulli { p } = *self {
            let p = p.as_f64();
            let v = (1.0 - p) * g(0.0) + p * g(1.0);
            return if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Quadrature {
                    integrand: integrand.to_owned(),
                    estimate: v,
                    error: f64::INFINITY,
                })
            };
        }
        let mut breaks = self.anchor_points();
        breaks.extend_from_slice(extra_breaks);
        let this = *self;
        integrate_line(
            |x| {
                let lp = this.ln_pdf(F::lit(x)).as_f64();
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    g(x) * lp.exp()
                }
            },
            &breaks,
            QuadTolerance::default(),
            integrand,
        )
    }

    /// `E[exp(h(Y))]`, with `h` combined with the log-density before
    /// exponentiating so that far tails neither overflow nor produce `inf * 0`.
    pub fn expect_exp<G: FnMut(f64) -> f64>(
        &self,
        mut log_g: G,
        extra_breaks: &[f64],
        integrand: &str,
    ) -> Result<f64> {
        if self.is_discrete() {
            return self.expect(|y| log_g(y).exp(), extra_breaks, integrand);
        }
        let mut breaks = self.anchor_points();
        breaks.extend_from_slice(extra_breaks);
        let this = *self;
        integrate_line(
            |x| {
                let lp = this.ln_pdf(F::lit(x)).as_f64();
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    (log_g(x) + lp).exp()
                }
            },
            &breaks,
            QuadTolerance::default(),
            integrand,
        )
    }
}

/// Law of the change time on `{0, 1, 2, ...}`.
///
/// Each geometric component has `P{tau = k} = rho (1 - rho)^k`. In the
/// mixture the slow component is selected with probability `p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase", bound = "F: Real")]
pub enum ChangeTimeLaw<F> {
    Geometric { rho: F },
    Mixture { p: F, rho_slow: F, rho_fast: F },
}

fn check_rate<F: Real>(name: &'static str, rho: F) -> Result<()> {
    if rho > F::zero() && rho < F::one() {
        Ok(())
    } else {
        Err(invalid(name, rho.as_f64(), "must lie in (0, 1)"))
    }
}

fn sample_geometric<F: Real, R: Rng + ?Sized>(rho: F, rng: &mut R) -> u64 {
    Geometric::new(rho.as_f64())
        .expect("validated rate")
        .sample(rng)
}

impl<F: Real> ChangeTimeLaw<F> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Geometric { rho } => check_rate("rho", rho),
            Self::Mixture {
                p,
                rho_slow,
                rho_fast,
            } => {
                if !(p >= F::zero() && p <= F::one()) {
                    return Err(invalid("p", p.as_f64(), "must lie in [0, 1]"));
                }
                check_rate("rho_slow", rho_slow)?;
                check_rate("rho_fast", rho_fast)
            }
        }
    }

    pub fn mean(&self) -> F {
        let geo_mean = |rho: F| (F::one() - rho) / rho;
        match *self {
            Self::Geometric { rho } => geo_mean(rho),
            Self::Mixture {
                p,
                rho_slow,
                rho_fast,
            } => p * geo_mean(rho_slow) + (F::one() - p) * geo_mean(rho_fast),
        }
    }

    /// Smallest per-step hazard among the components with positive weight.
    pub fn slowest_rate(&self) -> F {
        match *self {
            Self::Geometric { rho } => rho,
            Self::Mixture {
                p,
                rho_slow,
                rho_fast,
            } => {
                if p == F::zero() {
                    rho_fast
                } else if p == F::one() {
                    rho_slow
                } else {
                    rho_slow.min(rho_fast)
                }
            }
        }
    }

    /// `P{tau >= n}`.
    pub fn survival(&self, n: u64) -> F {
        let surv = |rho: F| (F::one() - rho).powf(F::from_count(n));
        match *self {
            Self::Geometric { rho } => surv(rho),
            Self::Mixture {
                p,
                rho_slow,
                rho_fast,
            } => p * surv(rho_slow) + (F::one() - p) * surv(rho_fast),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            Self::Geometric { rho } => sample_geometric(rho, rng),
            Self::Mixture {
                p,
                rho_slow,
                rho_fast,
            } => {
                let slow = rng.random::<f64>() < p.as_f64();
                sample_geometric(if slow { rho_slow } else { rho_fast }, rng)
            }
        }
    }

    /// Exact tail rate `-lim (1/n) log P{tau >= n}`.
    pub fn tail_rate(&self) -> TailRate<F> {
        TailRate(-(F::one() - self.slowest_rate()).ln())
    }
}

/// Exponential decay rate of `P{tau >= n}`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct TailRate<F>(pub F);

impl<F: Real> TailRate<F> {
    pub fn value(self) -> F {
        self.0
    }
}

/// Estimates the tail rate from change-time samples.
///
/// Fits the slope of `log P{tau >= n}` by weighted least squares (weights
/// are the survivor counts) over the upper half of the range where at least
/// 50 samples survive; the lower half is where mixture components other than
/// the slowest still matter.
pub fn estimate_tail_rate<F: Real>(samples: &[u64]) -> Result<F> {
    const MIN_SAMPLES: usize = 1000;
    const MIN_SURVIVORS: u64 = 50;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewInputs {
            need: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let first = samples[0];
    if samples.iter().all(|&s| s == first) {
        return Err(Error::DegenerateSamples("all change times are equal"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as u64;
    // survivors(n) = #{tau >= n}
    let survivors = |n: u64| total - sorted.partition_point(|&t| t < n) as u64;
    let mut n_hi = 0u64;
    while survivors(n_hi + 1) >= MIN_SURVIVORS {
        n_hi += 1;
    }
    let n_lo = n_hi / 2;
    if n_hi < n_lo + 2 {
        return Err(Error::DegenerateSamples("survival curve too short to fit"));
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for n in n_lo..=n_hi {
        let c = survivors(n);
        let w = c as f64;
        let x = n as f64;
        let y = (c as f64 / total as f64).ln();
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let denom = sw * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::DegenerateSamples("no spread in fit range"));
    }
    let slope = (sw * sxy - sx * sy) / denom;
    Ok(F::lit(-slope))
}

/// Score function `F = log(f1 / f0)` built from the detector's assumed
/// densities, with its drift means under the true observation densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ScoreFunction<F> {
    pub assumed_pre: DensitySpec<F>,
    pub assumed_post: DensitySpec<F>,
    /// Mean of the score under the true pre-change law.
    pub m0: F,
    /// Mean of the score under the true post-change law.
    pub m1: F,
}

impl<F: Real> ScoreFunction<F> {
    /// Builds the score function and checks `m0 < 0 < m1`.
    pub fn calibrate(
        assumed_pre: DensitySpec<F>,
        assumed_post: DensitySpec<F>,
        truth_pre: &DensitySpec<F>,
        truth_post: &DensitySpec<F>,
    ) -> Result<Self> {
        assumed_pre.validate()?;
        assumed_post.validate()?;
        let (m0, m1) = drift_means(&assumed_pre, &assumed_post, truth_pre, truth_post)?;
        if !(m0 < F::zero() && m1 > F::zero()) {
            return Err(Error::DriftSign {
                m0: m0.as_f64(),
                m1: m1.as_f64(),
            });
        }
        Ok(Self {
            assumed_pre,
            assumed_post,
            m0,
            m1,
        })
    }

    #[inline]
    pub fn llr(&self, y: F) -> F {
        llr_eval(&self.assumed_pre, &self.assumed_post, y)
    }

    /// `Lambda(upsilon) = log E[exp(upsilon F(Y))]` with `Y ~ truth`.
    pub fn log_mgf(&self, truth: &DensitySpec<F>, upsilon: F) -> Result<F> {
        if let (Some((slope, intercept)), DensitySpec::Gaussian { location, scale }) =
            (affine_llr(&self.assumed_pre, &self.assumed_post), *truth)
        {
            let mean = slope * location + intercept;
            let var = slope * slope * scale * scale;
            return Ok(upsilon * mean + F::lit(0.5) * upsilon * upsilon * var);
        }
        self.log_mgf_numeric(truth, upsilon)
    }

    /// Numerical route for [`Self::log_mgf`], available for every family.
    pub fn log_mgf_numeric(&self, truth: &DensitySpec<F>, upsilon: F) -> Result<F> {
        if upsilon == F::zero() {
            return Ok(F::zero());
        }
        let u = upsilon.as_f64();
        let this = *self;
        let breaks = kinks(&self.assumed_pre, &self.assumed_post);
        let mgf = truth
            .expect_exp(
                |y| u * this.llr(F::lit(y)).as_f64(),
                &breaks,
                "exp(upsilon * F(y)) f(y)",
            )
            .map_err(|_| Error::OutsideFiniteness { upsilon: u })?;
        if !(mgf > 0.0 && mgf.is_finite()) {
            return Err(Error::OutsideFiniteness { upsilon: u });
        }
        Ok(F::lit(mgf.ln()))
    }

    /// Roots `upsilon_0` and `upsilon_+` of the pre-change log-MGF.
    pub fn upsilon_roots(&self, truth_pre: &DensitySpec<F>, rho_a: TailRate<F>) -> Result<UpsilonRoots<F>> {
        solve_upsilon_plus(|u| self.log_mgf(truth_pre, u), rho_a.value())
    }
}

/// `log f1(y) - log f0(y)`, evaluated in log space.
pub fn llr_eval<F: Real>(f0: &DensitySpec<F>, f1: &DensitySpec<F>, y: F) -> F {
    if let Some((slope, intercept)) = affine_llr(f0, f1) {
        return slope * y + intercept;
    }
    f1.ln_pdf(y) - f0.ln_pdf(y)
}

/// Slope and intercept when the log-likelihood ratio is affine, i.e. for two
/// Gaussians with a common scale.
pub fn affine_llr<F: Real>(f0: &DensitySpec<F>, f1: &DensitySpec<F>) -> Option<(F, F)> {
    match (*f0, *f1) {
        (
            DensitySpec::Gaussian {
                location: a,
                scale: s0,
            },
            DensitySpec::Gaussian {
                location: b,
                scale: s1,
            },
        ) if s0 == s1 => {
            let var = s0 * s0;
            Some(((b - a) / var, (a * a - b * b) / (F::lit(2.0) * var)))
        }
        _ => None,
    }
}

fn kinks<F: Real>(f0: &DensitySpec<F>, f1: &DensitySpec<F>) -> Vec<f64> {
    [f0, f1]
        .iter()
        .filter_map(|d| match **d {
            DensitySpec::Laplace { location, .. } | DensitySpec::Cauchy { location, .. } => {
                Some(location.as_f64())
            }
            _ => None,
        })
        .collect()
}

/// Means `(m0, m1)` of the score `log(assumed_post / assumed_pre)` under the
/// true pre- and post-change laws.
pub fn drift_means<F: Real>(
    assumed_pre: &DensitySpec<F>,
    assumed_post: &DensitySpec<F>,
    truth_pre: &DensitySpec<F>,
    truth_post: &DensitySpec<F>,
) -> Result<(F, F)> {
    let mean_under = |truth: &DensitySpec<F>, label: &str| -> Result<F> {
        if let (Some((slope, intercept)), Some(mu)) = (affine_llr(assumed_pre, assumed_post), truth.mean()) {
            if !truth.is_discrete() {
                return Ok(slope * mu + intercept);
            }
        }
        let breaks = kinks(assumed_pre, assumed_post);
        let v = truth.expect(
            |y| llr_eval(assumed_pre, assumed_post, F::lit(y)).as_f64(),
            &breaks,
            label,
        )?;
        Ok(F::lit(v))
    };
    Ok((
        mean_under(truth_pre, "F(y) f0(y) [drift mean m0]")?,
        mean_under(truth_post, "F(y) f1(y) [drift mean m1]")?,
    ))
}

/// Positive root of the pre-change log-MGF and the root of
/// `Lambda_0 = rho_a` above it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct UpsilonRoots<F> {
    pub upsilon0: F,
    pub upsilon_plus: F,
}

const MAX_DOUBLINGS: usize = 64;

/// Solves `Lambda_0(upsilon_+) = rho_a` for `upsilon_+ > upsilon_0`, where
/// `upsilon_0 > 0` is the non-trivial root of the convex `Lambda_0`.
pub fn solve_upsilon_plus<F: Real, G: FnMut(F) -> Result<F>>(
    mut lambda0: G,
    rho_a: F,
) -> Result<UpsilonRoots<F>> {
    if !(rho_a > F::zero() && rho_a.is_finite()) {
        return Err(invalid("rho_a", rho_a.as_f64(), "must be positive"));
    }
    let unsat = |detail| Error::TailUnsatisfiable {
        rho_a: rho_a.as_f64(),
        detail,
    };
    let two = F::lit(2.0);

    // Bracket upsilon_0 by doubling from 1.
    let mut hi = F::one();
    let mut lo = F::zero();
    let mut f_hi = lambda0(hi)?;
    let mut steps = 0;
    while f_hi <= F::zero() {
        lo = hi;
        hi *= two;
        f_hi = lambda0(hi)?;
        steps += 1;
        if steps > MAX_DOUBLINGS {
            return Err(unsat("Lambda_0 has no positive root"));
        }
    }
    if lo == F::zero() {
        lo = hi;
        steps = 0;
        loop {
            lo /= two;
            if lambda0(lo)? < F::zero() {
                break;
            }
            steps += 1;
            if steps > MAX_DOUBLINGS {
                return Err(unsat("Lambda_0 is not negative near the origin (m0 >= 0)"));
            }
        }
    }
    let tiny = F::lit(1e-15);
    let upsilon0 = brent(&mut lambda0, lo, hi, tiny, F::zero(), 300)?;

    // Bracket upsilon_+ above upsilon_0.
    let mut lo = upsilon0;
    let mut hi = upsilon0 * two;
    steps = 0;
    while lambda0(hi)? <= rho_a {
        lo = hi;
        hi *= two;
        steps += 1;
        if steps > MAX_DOUBLINGS {
            return Err(unsat("Lambda_0 stays below rho_a"));
        }
    }
    let upsilon_plus = brent(|u| Ok(lambda0(u)? - rho_a), lo, hi, tiny, F::lit(1e-13), 300)?;
    if upsilon_plus <= upsilon0 {
        return Err(unsat("upsilon_+ not above upsilon_0"));
    }
    Ok(UpsilonRoots {
        upsilon0,
        upsilon_plus,
    })
}

/// Large-kappa approximation of the CUSUM optimal threshold, `log(kappa) / upsilon_+`.
pub fn approx_threshold<F: Real>(kappa: F, upsilon_plus: F) -> F {
    kappa.ln() / upsilon_plus
}

/// Large-kappa approximation of the CUSUM optimal cost, `log(kappa) / (m1 upsilon_+)`.
pub fn approx_cost<F: Real>(kappa: F, upsilon_plus: F, m1: F) -> F {
    kappa.ln() / (m1 * upsilon_plus)
}

/// Standard normal cdf.
pub fn normal_cdf<F: Real>(x: F) -> F {
    F::lit(0.5 * libm::erfc(-x.as_f64() / std::f64::consts::SQRT_2))
}

/// Scales of the mismatched detector densities matched to `N(0, sigma^2)`:
/// the Laplace diversity with the same variance and the Cauchy half-width
/// whose cdf agrees with the Gaussian cdf at `sigma`.
pub fn match_scales<F: Real>(sigma: F) -> Result<(F, F)> {
    if !(sigma > F::zero() && sigma.is_finite()) {
        return Err(invalid("sigma", sigma.as_f64(), "must be positive"));
    }
    let b = (sigma * sigma / F::lit(2.0)).sqrt();
    let target = normal_cdf(F::one());
    let gamma = bisect(
        |g: F| F::lit(0.5) + (sigma / g).atan() / F::PI() - target,
        sigma * F::lit(1e-6),
        sigma * F::lit(1e3),
        sigma * F::lit(1e-14),
    );
    Ok((b, gamma))
}

/// The three detector designs compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Detector uses the true Gaussian log-likelihood ratio.
    #[serde(rename = "case1")]
    Ideal,
    /// Laplace densities with variance matched to the Gaussian.
    #[serde(rename = "case2")]
    Laplace,
    /// Cauchy densities with cdf matched at one standard deviation.
    #[serde(rename = "case3")]
    Cauchy,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Ideal, Case::Laplace, Case::Cauchy];

    pub fn name(self) -> &'static str {
        match self {
            Case::Ideal => "case1",
            Case::Laplace => "case2",
            Case::Cauchy => "case3",
        }
    }

    /// Detector densities `(f0, f1)` for a Gaussian model `N(0, sigma^2)` /
    /// `N(mu1, sigma^2)`.
    pub fn assumed_densities<F: Real>(self, mu1: F, sigma: F) -> Result<(DensitySpec<F>, DensitySpec<F>)> {
        let (b, gamma) = match_scales(sigma)?;
        Ok(match self {
            Case::Ideal => (
                DensitySpec::gaussian(F::zero(), sigma)?,
                DensitySpec::gaussian(mu1, sigma)?,
            ),
            Case::Laplace => (
                DensitySpec::laplace(F::zero(), b)?,
                DensitySpec::laplace(mu1, b)?,
            ),
            Case::Cauchy => (
                DensitySpec::cauchy(F::zero(), gamma)?,
                DensitySpec::cauchy(mu1, gamma)?,
            ),
        })
    }

    /// Score function of this case against the Gaussian truth.
    pub fn score_function<F: Real>(self, mu1: F, sigma: F) -> Result<ScoreFunction<F>> {
        let (a0, a1) = self.assumed_densities(mu1, sigma)?;
        ScoreFunction::calibrate(
            a0,
            a1,
            &DensitySpec::gaussian(F::zero(), sigma)?,
            &DensitySpec::gaussian(mu1, sigma)?,
        )
    }
}

impl std::str::FromStr for Case {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "case1" | "ideal" => Ok(Case::Ideal),
            "case2" | "laplace" => Ok(Case::Laplace),
            "case3" | "cauchy" => Ok(Case::Cauchy),
            other => Err(format!("unknown case `{other}` (expected case1, case2 or case3)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Substream};
    use approx::assert_abs_diff_eq;

    fn truth() -> (DensitySpec<f64>, DensitySpec<f64>) {
        (
            DensitySpec::gaussian(0.0, 1.0).unwrap(),
            DensitySpec::gaussian(0.5, 1.0).unwrap(),
        )
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in [
            DensitySpec::gaussian(0.3, 1.7).unwrap(),
            DensitySpec::laplace(0.5, 0.5f64.sqrt()).unwrap(),
            DensitySpec::cauchy(0.5, 0.545).unwrap(),
        ] {
            let total = d.expect(|_| 1.0, &[], "pdf").unwrap();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn invalid_scale_is_rejected() {
        assert!(DensitySpec::gaussian(0.0, 0.0).is_err());
        assert!(DensitySpec::laplace(0.0, -1.0).is_err());
        assert!(DensitySpec::bernoulli(1.0).is_err());
    }

    #[test]
    fn llr_examples() {
        let (f0, f1) = truth();
        assert_abs_diff_eq!(llr_eval(&f0, &f1, 1.0), 0.375, epsilon = 1e-15);
        assert_eq!(llr_eval(&f0, &f0, 3.3), 0.0);
        let b = 0.5f64.sqrt();
        let (l0, l1) = (DensitySpec::laplace(0.0, b).unwrap(), DensitySpec::laplace(0.5, b).unwrap());
        assert_abs_diff_eq!(llr_eval(&l0, &l1, 0.0), (0.0 - 0.5) / b, epsilon = 1e-14);
        let (c0, c1) = (DensitySpec::cauchy(0.0, 0.5).unwrap(), DensitySpec::cauchy(0.0, 0.5).unwrap());
        assert_eq!(llr_eval(&c0, &c1, -2.0), 0.0);
    }

    #[test]
    fn llr_stays_finite_far_in_the_tails() {
        let (f0, f1) = truth();
        let b = 0.5f64.sqrt();
        let (l0, l1) = (DensitySpec::laplace(0.0, b).unwrap(), DensitySpec::laplace(0.5, b).unwrap());
        for y in [-1e6, 1e6] {
            assert!(llr_eval(&f0, &f1, y).is_finite());
            assert_abs_diff_eq!(llr_eval(&l0, &l1, y), y.signum() * 0.5 / b, epsilon = 1e-6);
        }
    }

    #[test]
    fn ideal_drift_means_closed_form() {
        let (f0, f1) = truth();
        let sf = ScoreFunction::calibrate(f0, f1, &f0, &f1).unwrap();
        assert_abs_diff_eq!(sf.m1, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.m0, -0.125, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_drift_means_match_analytic() {
        // Gaussian truth with a shifted-scale Gaussian detector forces quadrature.
        let (f0, f1) = truth();
        let a0 = DensitySpec::gaussian(0.0, 1.0).unwrap();
        let a1 = DensitySpec::gaussian(0.5, 1.0 + 1e-9).unwrap();
        let (m0, m1) = drift_means(&a0, &a1, &f0, &f1).unwrap();
        assert_abs_diff_eq!(m0, -0.125, epsilon = 1e-7);
        assert_abs_diff_eq!(m1, 0.125, epsilon = 1e-7);
    }

    #[test]
    fn identical_detector_densities_are_rejected() {
        let (f0, f1) = truth();
        let err = ScoreFunction::calibrate(f0, f0, &f0, &f1).unwrap_err();
        assert!(matches!(err, Error::DriftSign { .. }));
    }

    #[test]
    fn mismatched_cases_have_correct_drift_signs() {
        for case in Case::ALL {
            let sf = case.score_function(0.5, 1.0).unwrap();
            assert!(sf.m0 < 0.0 && sf.m1 > 0.0, "{case:?}: {sf:?}");
        }
    }

    #[test]
    fn non_integrable_drift_names_integrand() {
        let a0 = DensitySpec::gaussian(0.0, 1.0).unwrap();
        let a1 = DensitySpec::gaussian(0.5, 2.0).unwrap();
        let c = DensitySpec::cauchy(0.0, 1.0).unwrap();
        let err = drift_means(&a0, &a1, &c, &c).unwrap_err();
        assert!(err.to_string().contains("drift mean m0"), "{err}");
    }

    #[test]
    fn ideal_log_mgf_values() {
        let (f0, f1) = truth();
        let sf = ScoreFunction::calibrate(f0, f1, &f0, &f1).unwrap();
        assert_eq!(sf.log_mgf(&f0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sf.log_mgf(&f0, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sf.log_mgf(&f0, 0.5).unwrap(), -0.03125, epsilon = 1e-15);
        // quadrature route agrees with the closed form
        for u in [-1.0, 0.3, 1.0, 2.5] {
            let closed = sf.log_mgf(&f0, u).unwrap();
            let numeric = sf.log_mgf_numeric(&f0, u).unwrap();
            assert_abs_diff_eq!(closed, numeric, epsilon = 1e-10);
            let closed1 = sf.log_mgf(&f1, u).unwrap();
            assert_abs_diff_eq!(closed1, 0.125 * u * (u + 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn log_mgf_is_convex_for_all_cases() {
        let (f0, _) = truth();
        for case in Case::ALL {
            let sf = case.score_function(0.5, 1.0).unwrap();
            let grid: Vec<f64> = (0..25).map(|i| -1.0 + 0.2 * i as f64).collect();
            let vals: Vec<f64> = grid.iter().map(|&u| sf.log_mgf(&f0, u).unwrap()).collect();
            for w in vals.windows(3) {
                assert!(w[1] <= 0.5 * (w[0] + w[2]) + 1e-8, "{case:?}");
            }
        }
    }

    #[test]
    fn divergent_log_mgf_reports_upsilon() {
        let a0 = DensitySpec::gaussian(0.0, 1.0).unwrap();
        let a1 = DensitySpec::gaussian(0.5, 1.0).unwrap();
        let c = DensitySpec::cauchy(0.0, 1.0).unwrap();
        let sf = ScoreFunction {
            assumed_pre: a0,
            assumed_post: a1,
            m0: -1.0,
            m1: 1.0,
        };
        match sf.log_mgf(&c, 0.7) {
            Err(Error::OutsideFiniteness { upsilon }) => assert_abs_diff_eq!(upsilon, 0.7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn upsilon_plus_ideal_closed_form() {
        let m1 = 0.125;
        let rho: f64 = 0.02;
        let roots = solve_upsilon_plus(|u: f64| Ok(m1 * u * (u - 1.0)), rho).unwrap();
        let expected = (1.0 + (1.0 + 4.0 * rho / m1).sqrt()) / 2.0;
        assert_abs_diff_eq!(roots.upsilon_plus, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(roots.upsilon_plus, 1.14031, epsilon = 1e-5);
        assert_abs_diff_eq!(roots.upsilon0, 1.0, epsilon = 1e-12);
        let small = solve_upsilon_plus(|u: f64| Ok(m1 * u * (u - 1.0)), 1e-9).unwrap();
        assert_abs_diff_eq!(small.upsilon_plus, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn upsilon_plus_laplace_matches_grid_bracketing() {
        let (f0, _) = truth();
        let sf = Case::Laplace.score_function(0.5, 1.0).unwrap();
        let rho = 0.02;
        let roots = sf.upsilon_roots(&f0, TailRate(rho)).unwrap();
        assert!((sf.log_mgf(&f0, roots.upsilon_plus).unwrap() - rho).abs() <= 1e-10);
        // brute force: dense tabulation, first crossing above upsilon_0
        let step = 1e-4;
        let mut u = roots.upsilon0 + step;
        let mut prev = sf.log_mgf(&f0, u).unwrap();
        loop {
            let next = sf.log_mgf(&f0, u + step).unwrap();
            if prev <= rho && next > rho {
                break;
            }
            prev = next;
            u += step;
            assert!(u < 20.0);
        }
        assert!(roots.upsilon_plus >= u - 1e-9 && roots.upsilon_plus <= u + step + 1e-9);
    }

    #[test]
    fn unsatisfiable_tail_condition() {
        // Lambda_0 increasing from the origin: no positive root.
        let err = solve_upsilon_plus(|u: f64| Ok(u * u + u), 0.02).unwrap_err();
        assert!(matches!(err, Error::TailUnsatisfiable { .. }));
        // Lambda_0 negative everywhere.
        let err = solve_upsilon_plus(|u: f64| Ok(-u), 0.02).unwrap_err();
        assert!(matches!(err, Error::TailUnsatisfiable { .. }));
    }

    #[test]
    fn tail_rate_examples() {
        let geo = ChangeTimeLaw::Geometric { rho: 0.02 };
        assert_abs_diff_eq!(geo.tail_rate().value(), 0.020203, epsilon = 1e-6);
        let mix = ChangeTimeLaw::Mixture {
            p: 0.05,
            rho_slow: 0.02,
            rho_fast: 0.2,
        };
        assert_abs_diff_eq!(mix.tail_rate().value(), 0.020203, epsilon = 1e-6);
        let tiny = ChangeTimeLaw::Geometric { rho: 1e-12 };
        assert!(tiny.tail_rate().value() < 1e-11);
    }

    #[test]
    fn tail_rate_estimates() {
        let mut rng = stream(11, Substream::Misc, 0);
        let geo = ChangeTimeLaw::Geometric { rho: 0.02 };
        let samples: Vec<u64> = (0..100_000).map(|_| geo.sample(&mut rng)).collect();
        let est: f64 = estimate_tail_rate(&samples).unwrap();
        assert!((est - 0.0202).abs() < 0.002, "{est}");
        let exact = geo.tail_rate().value();
        assert!((est - exact).abs() / exact < 0.10);

        let mix = ChangeTimeLaw::Mixture {
            p: 0.05,
            rho_slow: 0.02,
            rho_fast: 0.2,
        };
        let samples: Vec<u64> = (0..400_000).map(|_| mix.sample(&mut rng)).collect();
        let est: f64 = estimate_tail_rate(&samples).unwrap();
        assert!((est - 0.0202).abs() < 0.004, "{est}");

        assert!(estimate_tail_rate::<f64>(&vec![5; 2000]).is_err());
        assert!(estimate_tail_rate::<f64>(&[1, 2, 3]).is_err());
    }

    #[test]
    fn approximation_examples() {
        assert_eq!(approx_threshold(1.0, 1.14031), 0.0);
        assert_abs_diff_eq!(approx_threshold(100.0, 1.14031), 4.0385, epsilon = 1e-4);
        assert_abs_diff_eq!(approx_cost(100.0, 1.14031, 0.125), 32.31, epsilon = 5e-3);
    }

    #[test]
    fn matched_scales() {
        let (b, gamma) = match_scales(1.0f64).unwrap();
        assert_abs_diff_eq!(b, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        // closed form of the cdf matching equation
        let phi1 = statrs::function::erf::erfc(-std::f64::consts::FRAC_1_SQRT_2) / 2.0;
        let closed = 1.0 / (std::f64::consts::PI * (phi1 - 0.5)).tan();
        assert_abs_diff_eq!(gamma, closed, epsilon = 1e-10);
        assert_abs_diff_eq!(gamma, 0.545, epsilon = 1e-3);
        let (b2, _) = match_scales(2f64.sqrt()).unwrap();
        assert_abs_diff_eq!(b2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn generic_over_f32() {
        let f0 = DensitySpec::gaussian(0.0f32, 1.0).unwrap();
        let f1 = DensitySpec::gaussian(0.5f32, 1.0).unwrap();
        let sf = ScoreFunction::calibrate(f0, f1, &f0, &f1).unwrap();
        assert!((sf.llr(1.0) - 0.375).abs() < 1e-6);
        let roots = sf.upsilon_roots(&f0, TailRate(0.02)).unwrap();
        assert!((roots.upsilon_plus - 1.14031).abs() < 1e-4);
    }

    #[test]
    fn sample_means() {
        let mut rng = stream(3, Substream::Misc, 0);
        let mix = ChangeTimeLaw::Mixture {
            p: 0.05,
            rho_slow: 0.02,
            rho_fast: 0.2,
        };
        let n = 1_000_000;
        let mean = (0..n).map(|_| mix.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mix.mean(), 6.25, epsilon = 1e-12);
        assert!((mean - 6.25).abs() < 0.1, "{mean}");
        let lap = DensitySpec::laplace(0.5, 2.0).unwrap();
        let m = (0..n).map(|_| lap.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.015);
    }
}
