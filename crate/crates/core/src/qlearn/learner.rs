use serde::{Deserialize, Serialize};

use super::basis::Basis;
use crate::error::{invalid, Error, Result};
use crate::numeric::{max_abs, Matrix};
use crate::real::Real;

/// One observed transition `(W_k, u_k, c_k, W_{k+1})`; `next` is `None`
/// after a stop, which ends the cost flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Transition<F> {
    pub x: F,
    pub u: bool,
    pub cost: F,
    pub next: Option<F>,
}

/// Temporal difference `-Q(x, u) + c + min_u' Q(x', u')`.
#[inline]
pub fn temporal_difference<F: Real>(basis: &Basis<F>, theta: &[F], tr: &Transition<F>) -> F {
    let next = tr.next.map_or(F::zero(), |x| basis.min_q(theta, x));
    -basis.q_value(theta, tr.x, tr.u) + tr.cost + next
}

/// `theta <- theta + alpha G zeta D` with `zeta = psi(x, u)`. `gain` is the
/// matrix `G`, or the identity when `None`. Returns `false` (and leaves
/// `theta` untouched) when the update is not finite.
pub fn td_update<F: Real>(
    basis: &Basis<F>,
    theta: &mut [F],
    gain: Option<&Matrix<F>>,
    tr: &Transition<F>,
    alpha: F,
) -> bool {
    let d = temporal_difference(basis, theta, tr);
    let zeta = basis.features(tr.x, tr.u);
    let step: Vec<F> = match gain {
        None => zeta.iter().map(|&z| alpha * z * d).collect(),
        Some(g) => {
            let zd: Vec<F> = zeta.iter().map(|&z| z * d).collect();
            g.mul_vec(&zd).into_iter().map(|v| alpha * v).collect()
        }
    };
    if !d.is_finite() || step.iter().any(|v| !v.is_finite()) {
        return false;
    }
    theta.iter_mut().zip(step).for_each(|(t, s)| *t += s);
    true
}

/// `A = zeta (psi(x', greedy(x')) - zeta)'`, with the next-state term absent
/// after a stop.
pub fn zap_sample<F: Real>(basis: &Basis<F>, theta: &[F], tr: &Transition<F>) -> Matrix<F> {
    let d = basis.dim();
    let zeta = basis.features(tr.x, tr.u);
    let mut diff: Vec<F> = zeta.iter().map(|&z| -z).collect();
    if let Some(x) = tr.next {
        let next = basis.features(x, basis.greedy(theta, x));
        diff.iter_mut().zip(next).for_each(|(a, b)| *a += b);
    }
    let mut a = Matrix::zeros(d, d);
    a.add_outer(F::one(), &zeta, &diff);
    a
}

/// `A_hat <- A_hat + beta (A - A_hat)`.
pub fn zap_gain_update<F: Real>(a_hat: &mut Matrix<F>, basis: &Basis<F>, theta: &[F], tr: &Transition<F>, beta: F) {
    let a = zap_sample(basis, theta, tr);
    a_hat.scale(F::one() - beta);
    let d = a.rows();
    for i in 0..d {
        for j in 0..d {
            a_hat[(i, j)] += beta * a[(i, j)];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainKind {
    Scalar,
    Zap,
}

/// `alpha_k = (k + k0)^(-rho_alpha)`, `beta_k = (k + k0)^(-rho_beta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct StepSizes<F> {
    pub k0: F,
    pub rho_alpha: F,
    pub rho_beta: F,
}

impl<F: Real> Default for StepSizes<F> {
    fn default() -> Self {
        Self {
            k0: F::lit(100.0),
            rho_alpha: F::lit(0.8),
            rho_beta: F::lit(0.6),
        }
    }
}

impl<F: Real> StepSizes<F> {
    #[inline]
    pub fn alpha(&self, k: u64) -> F {
        (F::from_count(k) + self.k0).powf(-self.rho_alpha)
    }

    #[inline]
    pub fn beta(&self, k: u64) -> F {
        (F::from_count(k) + self.k0).powf(-self.rho_beta)
    }
}

/// Q-learning recursion over a strung transition stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct Learner<F> {
    pub basis: Basis<F>,
    pub theta: Vec<F>,
    pub gain: GainKind,
    pub steps: StepSizes<F>,
    /// Zap mean-flow estimate; starts at `-I`.
    pub a_hat: Matrix<F>,
    /// Ridge of the Zap inversion `-(A_hat - ridge I)^(-1)`.
    pub ridge: F,
    /// Transitions seen, `k`.
    pub k: u64,
    pub rejected: u64,
    pub ridge_increases: u64,
}

impl<F: Real> Learner<F> {
    pub fn new(basis: Basis<F>, theta0: Vec<F>, gain: GainKind, steps: StepSizes<F>) -> Result<Self> {
        basis.check_dim(&theta0)?;
        if theta0.iter().any(|t| !t.is_finite()) {
            return Err(invalid("theta0", f64::NAN, "initial parameter must be finite"));
        }
        let d = basis.dim();
        let mut a_hat = Matrix::identity(d);
        a_hat.scale(-F::one());
        Ok(Self {
            basis,
            theta: theta0,
            gain,
            steps,
            a_hat,
            ridge: F::lit(1e-6) * F::from_count(d as u64),
            k: 0,
            rejected: 0,
            ridge_increases: 0,
        })
    }

    /// Processes one transition; returns whether the step was accepted.
    pub fn observe(&mut self, tr: &Transition<F>) -> Result<bool> {
        self.k += 1;
        let alpha = self.steps.alpha(self.k);
        let ok = match self.gain {
            GainKind::Scalar => td_update(&self.basis, &mut self.theta, None, tr, alpha),
            GainKind::Zap => {
                zap_gain_update(&mut self.a_hat, &self.basis, &self.theta, tr, self.steps.beta(self.k));
                self.zap_step(tr, alpha)?
            }
        };
        if !ok {
            self.rejected += 1;
        }
        Ok(ok)
    }

    fn zap_step(&mut self, tr: &Transition<F>, alpha: F) -> Result<bool> {
        let d = temporal_difference(&self.basis, &self.theta, tr);
        if !d.is_finite() || !self.a_hat.is_finite() {
            return Ok(false);
        }
        let rhs: Vec<F> = self.basis.features(tr.x, tr.u).into_iter().map(|z| z * d).collect();
        // G zeta D = -(A_hat - ridge I)^(-1) zeta D
        let v = loop {
            match self.a_hat.solve_shifted(-self.ridge, &rhs) {
                Ok(v) => break v,
                Err(Error::Singular) => {
                    self.ridge *= F::lit(10.0);
                    self.ridge_increases += 1;
                    log::warn!("singular Zap matrix; ridge raised to {}", self.ridge);
                    if !self.ridge.is_finite() {
                        return Err(Error::Singular);
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let step: Vec<F> = v.into_iter().map(|x| -alpha * x).collect();
        if step.iter().any(|s| !s.is_finite()) {
            return Ok(false);
        }
        self.theta.iter_mut().zip(step).for_each(|(t, s)| *t += s);
        Ok(true)
    }

    /// Current gain matrix `G`: identity for the scalar gain.
    pub fn gain_matrix(&self) -> Result<Matrix<F>> {
        let d = self.basis.dim();
        match self.gain {
            GainKind::Scalar => Ok(Matrix::identity(d)),
            GainKind::Zap => {
                let mut g = Matrix::zeros(d, d);
                for j in 0..d {
                    let mut e = vec![F::zero(); d];
                    e[j] = -F::one();
                    let col = self.a_hat.solve_shifted(-self.ridge, &e)?;
                    for i in 0..d {
                        g[(i, j)] = col[i];
                    }
                }
                Ok(g)
            }
        }
    }

    pub fn max_norm(&self) -> F {
        max_abs(&self.theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlearn::basis::BinLayout;
    use approx::assert_abs_diff_eq;

    fn one_bin() -> Basis<f64> {
        Basis::binned(vec![0.0], BinLayout::OpenLast).unwrap()
    }

    /// Alternates a continue (cost 1) and a stop (cost 2).
    fn toy_stream(n: usize) -> impl Iterator<Item = Transition<f64>> {
        (0..n).map(|k| {
            if k % 2 == 0 {
                Transition {
                    x: 0.5,
                    u: false,
                    cost: 1.0,
                    next: Some(0.5),
                }
            } else {
                Transition {
                    x: 0.5,
                    u: true,
                    cost: 2.0,
                    next: None,
                }
            }
        })
    }

    #[test]
    fn zero_theta_gives_cost_step() {
        let b = Basis::smooth(2.0).unwrap();
        let mut theta = vec![0.0; 5];
        let tr = Transition {
            x: 1.5,
            u: true,
            cost: 3.0,
            next: Some(2.0),
        };
        assert_eq!(temporal_difference(&b, &theta, &tr), 3.0);
        assert!(td_update(&b, &mut theta, None, &tr, 0.1));
        let want: Vec<f64> = b.features(1.5, true).iter().map(|z| 0.1 * z * 3.0).collect();
        for (a, w) in theta.iter().zip(want) {
            assert_abs_diff_eq!(*a, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn fixed_point_leaves_theta() {
        let b = one_bin();
        let mut theta = vec![4.0, 4.0];
        let tr = Transition {
            x: 0.3,
            u: false,
            cost: 0.0,
            next: Some(0.7),
        };
        assert_eq!(temporal_difference(&b, &theta, &tr), 0.0);
        assert!(td_update(&b, &mut theta, None, &tr, 0.5));
        assert_eq!(theta, vec![4.0, 4.0]);
    }

    #[test]
    fn non_finite_step_rejected() {
        let b = one_bin();
        let mut learner = Learner::new(b, vec![0.0, 0.0], GainKind::Scalar, StepSizes::default()).unwrap();
        let tr = Transition {
            x: 0.0,
            u: true,
            cost: f64::NAN,
            next: None,
        };
        assert!(!learner.observe(&tr).unwrap());
        assert_eq!(learner.rejected, 1);
        assert_eq!(learner.theta, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_gain_solves_toy_chain() {
        let mut learner = Learner::new(one_bin(), vec![0.0, 0.0], GainKind::Scalar, StepSizes::default()).unwrap();
        for tr in toy_stream(400_000) {
            learner.observe(&tr).unwrap();
        }
        // projected Bellman equation: theta_1 = 2, theta_0 = 1 + min(theta) = 3
        assert_abs_diff_eq!(learner.theta[0], 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(learner.theta[1], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn zap_tracks_mean_flow_jacobian() {
        let mut learner = Learner::new(one_bin(), vec![0.0, 0.0], GainKind::Zap, StepSizes::default()).unwrap();
        for tr in toy_stream(400_000) {
            learner.observe(&tr).unwrap();
        }
        let want = [[-0.5, 0.5], [0.0, -0.5]];
        for (i, row) in want.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                assert_abs_diff_eq!(learner.a_hat[(i, j)], *w, epsilon = 0.05 * 0.5);
            }
        }
        assert_abs_diff_eq!(learner.theta[0], 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(learner.theta[1], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn zap_examples() {
        let b = one_bin();
        let theta = [3.0, 2.0];
        let tr = Transition {
            x: 0.5,
            u: false,
            cost: 1.0,
            next: Some(0.5),
        };
        let mut a_hat = Matrix::identity(2);
        zap_gain_update(&mut a_hat, &b, &theta, &tr, 1.0);
        assert_eq!(a_hat, zap_sample(&b, &theta, &tr));
        // constant features: A = 0, A_hat decays to zero
        let flat = Basis::binned(vec![0.0], BinLayout::OpenLast).unwrap();
        let same = Transition {
            x: 0.5,
            u: false,
            cost: 0.0,
            next: Some(0.5),
        };
        let a = zap_sample(&flat, &[0.0, 1.0], &same);
        assert_eq!(a, Matrix::zeros(2, 2));
        let mut a_hat = Matrix::identity(2);
        for _ in 0..100 {
            zap_gain_update(&mut a_hat, &flat, &[0.0, 1.0], &same, 0.5);
        }
        assert!(crate::numeric::max_abs(&a_hat.diagonal()) < 1e-12);
    }

    #[test]
    fn step_sizes() {
        let s = StepSizes::<f64>::default();
        assert_abs_diff_eq!(s.alpha(0), 100f64.powf(-0.8), epsilon = 1e-15);
        assert!(s.beta(1000) > s.alpha(1000));
    }
}
