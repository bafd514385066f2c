use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::dot;
use crate::real::Real;

/// How the region beyond the last bin edge is treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinLayout {
    /// Every edge opens a bin and the last bin is `[e_last, inf)`:
    /// `d = 2 * edges`.
    OpenLast,
    /// Edges delimit `edges - 1` bins and points beyond the last edge fall
    /// into the final bin: `d = 2 * (edges - 1)`.
    MergedLast,
}

/// Linear function class `Q(x, u) = theta' psi(x, u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound = "F: Real")]
pub enum Basis<F> {
    /// `psi(x, 0) = [x, q(x), 0, 0, 0]`, `psi(x, 1) = [0, 0, 1, x, q(x)]`
    /// with `q(x) = x exp(-x / b_q)`.
    Smooth { b_q: F },
    /// Indicators `1{x in S_j, u = u'}`, one block per input.
    Binned { edges: Vec<F>, layout: BinLayout },
}

/// Default `b_q` for the smooth basis.
pub const DEFAULT_B_Q: f64 = 2.0;

impl<F: Real> Basis<F> {
    pub fn smooth(b_q: F) -> Result<Self> {
        if !(b_q > F::zero() && b_q.is_finite()) {
            return Err(invalid("b_q", b_q.as_f64(), "must be finite and > 0"));
        }
        Ok(Self::Smooth { b_q })
    }

    pub fn binned(edges: Vec<F>, layout: BinLayout) -> Result<Self> {
        let need = match layout {
            BinLayout::OpenLast => 1,
            BinLayout::MergedLast => 2,
        };
        if edges.len() < need {
            return Err(Error::TooFewInputs {
                need,
                got: edges.len(),
            });
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
            return Err(invalid("edges", f64::NAN, "bin edges must be finite and strictly increasing"));
        }
        Ok(Self::Binned { edges, layout })
    }

    fn bins(&self) -> usize {
        match self {
            Self::Smooth { .. } => 0,
            Self::Binned { edges, layout } => match layout {
                BinLayout::OpenLast => edges.len(),
                BinLayout::MergedLast => edges.len() - 1,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Smooth { .. } => 5,
            Self::Binned { .. } => 2 * self.bins(),
        }
    }

    /// Bin index of `x`; points below the first edge go to bin 0 and points
    /// beyond the last edge to the final bin.
    pub fn bin_of(&self, x: F) -> usize {
        match self {
            Self::Smooth { .. } => 0,
            Self::Binned { edges, .. } => {
                let above = edges.partition_point(|&e| e <= x);
                above.saturating_sub(1).min(self.bins() - 1)
            }
        }
    }

    /// Writes `psi(x, u)` into `out` (length [`Self::dim`]).
    pub fn features_into(&self, x: F, u: bool, out: &mut [F]) {
        out.fill(F::zero());
        match self {
            Self::Smooth { b_q } => {
                let q = x * (-x / *b_q).exp();
                if u {
                    out[2] = F::one();
                    out[3] = x;
                    out[4] = q;
                } else {
                    out[0] = x;
                    out[1] = q;
                }
            }
            Self::Binned { .. } => {
                let offset = if u { self.bins() } else { 0 };
                out[offset + self.bin_of(x)] = F::one();
            }
        }
    }

    pub fn features(&self, x: F, u: bool) -> Vec<F> {
        let mut v = vec![F::zero(); self.dim()];
        self.features_into(x, u, &mut v);
        v
    }

    #[inline]
    pub fn q_value(&self, theta: &[F], x: F, u: bool) -> F {
        match self {
            Self::Smooth { b_q } => {
                let q = x * (-x / *b_q).exp();
                if u {
                    theta[2] + theta[3] * x + theta[4] * q
                } else {
                    theta[0] * x + theta[1] * q
                }
            }
            Self::Binned { .. } => {
                let offset = if u { self.bins() } else { 0 };
                theta[offset + self.bin_of(x)]
            }
        }
    }

    /// Greedy input: stop (`true`) iff `Q(x, 1) <= Q(x, 0)`.
    #[inline]
    pub fn greedy(&self, theta: &[F], x: F) -> bool {
        self.q_value(theta, x, true) <= self.q_value(theta, x, false)
    }

    /// `min_u Q(x, u)`.
    #[inline]
    pub fn min_q(&self, theta: &[F], x: F) -> F {
        self.q_value(theta, x, true).min(self.q_value(theta, x, false))
    }

    pub fn check_dim(&self, theta: &[F]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// Generic `theta' psi(x, u)` through the feature vector; agrees with
/// [`Basis::q_value`].
pub fn q_from_features<F: Real>(basis: &Basis<F>, theta: &[F], x: F, u: bool) -> F {
    dot(theta, &basis.features(x, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn smooth_features() {
        let b = Basis::smooth(2.0).unwrap();
        assert_eq!(b.features(0.0, false), vec![0.0; 5]);
        assert_eq!(b.features(0.0, true), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let f = b.features(2.0, false);
        assert_eq!(f[0], 2.0);
        assert_abs_diff_eq!(f[1], 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.7358, epsilon = 1e-4);
        assert_eq!(&f[2..], &[0.0; 3]);
        assert!(Basis::smooth(0.0).is_err());
    }

    #[test]
    fn binned_layouts() {
        let open = Basis::binned(vec![0.0, 1.0, 2.0], BinLayout::OpenLast).unwrap();
        assert_eq!(open.dim(), 6);
        assert_eq!(open.bin_of(0.5), 0);
        assert_eq!(open.bin_of(1.0), 1);
        assert_eq!(open.bin_of(7.0), 2);
        assert_eq!(open.features(1.5, true), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

        let merged = Basis::binned(vec![0.0, 1.0, 2.0], BinLayout::MergedLast).unwrap();
        assert_eq!(merged.dim(), 4);
        assert_eq!(merged.bin_of(1.5), 1);
        // beyond the last edge: final bin
        assert_eq!(merged.bin_of(9.0), 1);
        assert!(Basis::binned(vec![1.0, 0.5], BinLayout::OpenLast).is_err());
        assert!(Basis::binned(vec![0.0], BinLayout::MergedLast).is_err());
    }

    #[test]
    fn ties_stop() {
        let b = Basis::smooth(2.0).unwrap();
        assert!(b.greedy(&[0.0; 5], 3.0));
    }

    proptest! {
        #[test]
        fn q_is_linear_in_theta(
            t1 in proptest::collection::vec(-100.0f64..100.0, 5),
            t2 in proptest::collection::vec(-100.0f64..100.0, 5),
            x in 0.0f64..20.0, u: bool,
        ) {
            let b = Basis::smooth(3.0).unwrap();
            let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, c)| a + c).collect();
            let lhs = b.q_value(&sum, x, u);
            let rhs = b.q_value(&t1, x, u) + b.q_value(&t2, x, u);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            prop_assert!((q_from_features(&b, &t1, x, u) - b.q_value(&t1, x, u)).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
