//! Cross-replica statistics: batch-means covariance of Polyak-Ruppert
//! estimates, stability of those estimates across run lengths, histograms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean_variance, Matrix};
use crate::qlearn::{extract_policy, train, QConfig};
use crate::real::Real;
use crate::rng::child_seed;
use crate::simulator::ExperimentConfig;

/// Outcome of one independent training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ReplicaResult<F> {
    pub theta_pr: Vec<F>,
    /// Total strung samples behind `theta_pr`.
    pub xi: u64,
    /// Extracted threshold, `None` when the greedy policy never stops.
    pub h: Option<F>,
}

/// Runs `m` independent Q-learning replicas (seeds derived from
/// `config.seed`) and extracts the threshold of each PR estimate on `grid`.
pub fn run_replicas<F: Real>(
    config: &ExperimentConfig<F>,
    q: &QConfig<F>,
    m: usize,
    grid: &[F],
) -> Result<Vec<ReplicaResult<F>>> {
    (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = config.with_seed(child_seed(config.seed, i));
            let trace = train(&cfg, q)?;
            let policy = extract_policy(&trace.theta_pr, &q.basis, grid)?;
            Ok(ReplicaResult {
                xi: trace.steps,
                h: policy.h,
                theta_pr: trace.theta_pr,
            })
        })
        .collect()
}

/// Scaled deviations `Z^i = sqrt(xi^i) (theta_pr^i - mean_j theta_pr^j)`.
pub fn batch_means_samples<F: Real>(replicas: &[ReplicaResult<F>]) -> Result<Vec<Vec<F>>> {
    let m = replicas.len();
    if m < 2 {
        return Err(Error::TooFewInputs { need: 2, got: m });
    }
    let d = replicas[0].theta_pr.len();
    if let Some(r) = replicas.iter().find(|r| r.theta_pr.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: r.theta_pr.len(),
        });
    }
    let mf = F::from_count(m as u64);
    let mean: Vec<F> = (0..d)
        .map(|j| replicas.iter().fold(F::zero(), |s, r| s + r.theta_pr[j]) / mf)
        .collect();
    Ok(replicas
        .iter()
        .map(|r| {
            let s = F::from_count(r.xi).sqrt();
            r.theta_pr.iter().zip(&mean).map(|(&t, &c)| s * (t - c)).collect()
        })
        .collect())
}

/// Empirical covariance (normalized by `M - 1`) of the [`batch_means_samples`].
pub fn batch_means_covariance<F: Real>(replicas: &[ReplicaResult<F>]) -> Result<Matrix<F>> {
    let zs = batch_means_samples(replicas)?;
    let (m, d) = (zs.len(), zs[0].len());
    let mf = F::from_count(m as u64);
    let zbar: Vec<F> = (0..d)
        .map(|j| zs.iter().fold(F::zero(), |s, z| s + z[j]) / mf)
        .collect();
    let mut cov = Matrix::zeros(d, d);
    let mut dev = vec![F::zero(); d];
    for z in &zs {
        dev.iter_mut().zip(z.iter().zip(&zbar)).for_each(|(o, (&a, &b))| *o = a - b);
        cov.add_outer(F::one(), &dev, &dev);
    }
    cov.scale(F::one() / F::from_count(m as u64 - 1));
    Ok(cov)
}

/// Ratio of one diagonal entry between two run lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n_a: u64,
    pub n_b: u64,
    pub index: usize,
    pub ratio: f64,
    /// Ratio outside `[0.5, 2]`.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// Pairwise ratios `Sigma_a(i,i) / Sigma_b(i,i)` for every pair of the
/// requested run lengths `ns`; each must have an entry in `estimates`.
pub fn covariance_stability_report<F: Real>(
    estimates: &[(u64, Matrix<F>)],
    ns: &[u64],
) -> Result<StabilityReport> {
    if ns.len() < 2 {
        return Err(Error::TooFewInputs { need: 2, got: ns.len() });
    }
    let lookup = |n: u64| {
        estimates
            .iter()
            .find(|(k, _)| *k == n)
            .map(|(_, m)| m)
            .ok_or(Error::MissingRunLength(n))
    };
    let mut rows = Vec::new();
    for (a, &na) in ns.iter().enumerate() {
        for &nb in &ns[a + 1..] {
            let (ca, cb) = (lookup(na)?, lookup(nb)?);
            if ca.rows() != cb.rows() {
                return Err(Error::Dimension {
                    expected: ca.rows(),
                    got: cb.rows(),
                });
            }
            for (index, (x, y)) in ca.diagonal().into_iter().zip(cb.diagonal()).enumerate() {
                let (x, y) = (x.as_f64(), y.as_f64());
                let ratio = if x == y { 1.0 } else { x / y };
                rows.push(StabilityRow {
                    n_a: na,
                    n_b: nb,
                    index,
                    ratio,
                    flagged: !(0.5..=2.0).contains(&ratio),
                });
            }
        }
    }
    Ok(StabilityReport { rows })
}

/// Sample variances of the extracted thresholds and of one parameter
/// coordinate over a replica set; replicas without a threshold are skipped
/// for the former.
pub fn threshold_parameter_variances<F: Real>(replicas: &[ReplicaResult<F>], coordinate: usize) -> Result<(F, F)> {
    let hs: Vec<F> = replicas.iter().filter_map(|r| r.h).collect();
    let ts: Vec<F> = replicas
        .iter()
        .map(|r| {
            r.theta_pr.get(coordinate).copied().ok_or(Error::Dimension {
                expected: coordinate + 1,
                got: r.theta_pr.len(),
            })
        })
        .collect::<Result<_>>()?;
    if hs.len() < 2 || ts.len() < 2 {
        return Err(Error::TooFewInputs {
            need: 2,
            got: hs.len().min(ts.len()),
        });
    }
    Ok((mean_variance(&hs).1, mean_variance(&ts).1))
}

/// `ceil(log2 n) + 1`.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        (n as f64).log2().ceil() as usize + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub left: f64,
    pub count: u64,
}

/// Equal-width histogram over the sample range (Sturges' rule when `bins`
/// is `None`); the maximum falls into the last bin.
pub fn histogram<F: Real>(samples: &[F], bins: Option<usize>) -> Result<Vec<HistogramRow>> {
    if samples.is_empty() {
        return Err(Error::TooFewInputs { need: 1, got: 0 });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSamples("non-finite histogram sample"));
    }
    let bins = bins.unwrap_or_else(|| sturges_bins(samples.len())).max(1);
    let lo = samples.iter().map(|x| x.as_f64()).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0u64; bins];
    for x in samples {
        let j = (((x.as_f64() - lo) / width) as usize).min(bins - 1);
        counts[j] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(j, count)| HistogramRow {
            left: lo + j as f64 * width,
            count,
        })
        .collect())
}

/// Writes [`histogram`] as CSV with columns `left,count`.
pub fn histogram_export<F: Real, W: Write>(samples: &[F], bins: Option<usize>, w: W) -> Result<Vec<HistogramRow>> {
    let rows = histogram(samples, bins)?;
    let mut out = csv::Writer::from_writer(w);
    for r in &rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(rows)
}
