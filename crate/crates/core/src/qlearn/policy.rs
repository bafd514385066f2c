use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::Basis;
use super::learner::{temporal_difference, Transition};
use crate::error::{invalid, Error, Result};
use crate::numeric::{bisect, Matrix};
use crate::real::Real;

/// Greedy policy read off a parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ExtractedPolicy<F> {
    pub is_threshold: bool,
    /// Threshold `h_theta`; `None` when the policy never stops on the grid.
    /// For a non-threshold policy this is the smallest crossing.
    pub h: Option<F>,
    /// Every located crossing in increasing order.
    pub crossings: Vec<F>,
}

/// Scans `Q(x, 0) - Q(x, 1)` over `grid` (ascending, starting at 0).
///
/// A single continue-to-stop switch gives a threshold policy with `h_theta`
/// located by bisection to 1e-8. Stopping everywhere gives `h = 0`;
/// continuing everywhere gives `h = None` (infinite).
pub fn extract_policy<F: Real>(theta: &[F], basis: &Basis<F>, grid: &[F]) -> Result<ExtractedPolicy<F>> {
    basis.check_dim(theta)?;
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("grid", grid.len() as f64, "need an increasing grid of at least two points"));
    }
    let stops: Vec<bool> = grid.iter().map(|&x| basis.greedy(theta, x)).collect();
    let mut crossings = Vec::new();
    let mut up_switches = 0usize;
    let mut down_switches = 0usize;
    for j in 1..grid.len() {
        if stops[j] == stops[j - 1] {
            continue;
        }
        if stops[j] {
            up_switches += 1;
        } else {
            down_switches += 1;
        }
        let (lo_stop, a, b) = (stops[j - 1], grid[j - 1], grid[j]);
        let x = bisect(
            |x| {
                // negative on the side matching `lo_stop`
                if basis.greedy(theta, x) == lo_stop {
                    -F::one()
                } else {
                    F::one()
                }
            },
            a,
            b,
            F::lit(1e-8),
        );
        crossings.push(x);
    }
    let policy = match (up_switches, down_switches) {
        (0, 0) if stops[0] => ExtractedPolicy {
            is_threshold: true,
            h: Some(grid[0]),
            crossings,
        },
        (0, 0) => ExtractedPolicy {
            is_threshold: false,
            h: None,
            crossings,
        },
        (1, 0) => ExtractedPolicy {
            is_threshold: true,
            h: Some(crossings[0]),
            crossings,
        },
        _ => ExtractedPolicy {
            is_threshold: false,
            h: crossings.first().copied(),
            crossings,
        },
    };
    Ok(policy)
}

/// Mean flow `f(theta) = mean_k zeta_k D_{k+1}(theta)` over fixed transitions,
/// with the componentwise standard error.
pub fn mean_flow<F: Real>(basis: &Basis<F>, theta: &[F], transitions: &[Transition<F>]) -> Result<(Vec<F>, Vec<F>)> {
    basis.check_dim(theta)?;
    let n = transitions.len();
    if n < 2 {
        return Err(Error::TooFewInputs { need: 2, got: n });
    }
    let d = basis.dim();
    let mut sum = vec![F::zero(); d];
    let mut sum_sq = vec![F::zero(); d];
    let mut zeta = vec![F::zero(); d];
    for tr in transitions {
        let dk = temporal_difference(basis, theta, tr);
        basis.features_into(tr.x, tr.u, &mut zeta);
        for i in 0..d {
            let v = zeta[i] * dk;
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }
    let nf = F::from_count(n as u64);
    let mean: Vec<F> = sum.iter().map(|&s| s / nf).collect();
    let se = sum_sq
        .iter()
        .zip(&mean)
        .map(|(&s2, &m)| (((s2 - nf * m * m) / (nf - F::one())).max(F::zero()) / nf).sqrt())
        .collect();
    Ok((mean, se))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct JacobianEstimate<F> {
    pub matrix: Matrix<F>,
    pub eigenvalues: Vec<(f64, f64)>,
    /// Some eigenvalue has a positive real part.
    pub rhp: bool,
    pub flow: Vec<F>,
    pub flow_se: Vec<F>,
    /// Some component of the flow has standard error above its magnitude.
    pub unreliable: bool,
}

/// Central finite-difference Jacobian of [`mean_flow`] at `theta` with step
/// `delta`, every perturbation evaluated on the same transitions.
pub fn mean_flow_jacobian<F: Real>(
    basis: &Basis<F>,
    theta: &[F],
    transitions: &[Transition<F>],
    delta: F,
) -> Result<JacobianEstimate<F>> {
    if !(delta > F::zero()) {
        return Err(invalid("delta", delta.as_f64(), "finite-difference step must be > 0"));
    }
    let (flow, flow_se) = mean_flow(basis, theta, transitions)?;
    let d = basis.dim();
    let columns: Vec<Vec<F>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[j] += delta;
            down[j] -= delta;
            let (fu, _) = mean_flow(basis, &up, transitions)?;
            let (fd, _) = mean_flow(basis, &down, transitions)?;
            Ok(fu.iter().zip(&fd).map(|(&a, &b)| (a - b) / (F::lit(2.0) * delta)).collect())
        })
        .collect::<Result<_>>()?;
    let mut matrix = Matrix::zeros(d, d);
    for (j, col) in columns.iter().enumerate() {
        for i in 0..d {
            matrix[(i, j)] = col[i];
        }
    }
    let eigenvalues = matrix.eigenvalues();
    let rhp = eigenvalues.iter().any(|&(re, _)| re > 0.0);
    let unreliable = flow.iter().zip(&flow_se).any(|(m, s)| *s > m.abs());
    if unreliable {
        log::warn!("Jacobian unreliable: mean-flow standard error exceeds its magnitude");
    }
    Ok(JacobianEstimate {
        matrix,
        eigenvalues,
        rhp,
        flow,
        flow_se,
        unreliable,
    })
}

/// JSON record for an extracted policy and its Jacobian spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct PolicyReport<F> {
    pub theta: Vec<F>,
    pub h_theta: Option<F>,
    pub is_threshold: bool,
    pub eigenvalues_re: Vec<f64>,
    pub eigenvalues_im: Vec<f64>,
    pub rhp_flag: bool,
}

impl<F: Real> PolicyReport<F> {
    pub fn new(theta: &[F], policy: &ExtractedPolicy<F>, jacobian: Option<&JacobianEstimate<F>>) -> Self {
        let eig = jacobian.map(|j| j.eigenvalues.clone()).unwrap_or_default();
        Self {
            theta: theta.to_vec(),
            h_theta: policy.h,
            is_threshold: policy.is_threshold,
            eigenvalues_re: eig.iter().map(|e| e.0).collect(),
            eigenvalues_im: eig.iter().map(|e| e.1).collect(),
            rhp_flag: jacobian.is_some_and(|j| j.rhp),
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}
