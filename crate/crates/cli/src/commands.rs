use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qcd_core::actor_critic::{
    gradient_profile, objective_from_gradients, objective_profile, train_ac, write_rows_csv, zero_crossing,
    AcConfig, GradientEstimator,
};
use qcd_core::detectors::{Detector, DetectorKind};
use qcd_core::diagnostics::{
    batch_means_covariance, batch_means_samples, covariance_stability_report, histogram_export, run_replicas,
    threshold_parameter_variances,
};
use qcd_core::models::{approx_cost, approx_threshold, DensitySpec, ScoreFunction, UpsilonRoots};
use qcd_core::qlearn::{
    collect_transitions, extract_policy, mean_flow_jacobian, train, Basis, ExplorationSchedule, PolicyReport,
    QConfig,
};
use qcd_core::rng::child_seed;
use qcd_core::simulator::{
    evaluate_threshold, linear_grid, optimal_threshold, posterior_grid, sweep_thresholds, ExperimentConfig,
    ObservationModel, OptimalThreshold, ShiftedCurves, SweepTable,
};

use crate::config::{BasisKind, Config};
use crate::error::CliError;

/// What a subcommand produced, for the manifest.
#[derive(Default)]
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<String>,
    pub cap_fraction: Option<f64>,
    pub resets: Option<u64>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            ..Self::default()
        }
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let f = File::create(self.dir.join(name)).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::Io(e.to_string()))?;
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let w = self.create(name)?;
        write_rows_csv(rows, w)?;
        Ok(())
    }

    fn max_cap(&mut self, f: f64) {
        self.cap_fraction = Some(self.cap_fraction.map_or(f, |c| c.max(f)));
    }
}

fn score_function(cfg: &Config) -> Result<ScoreFunction<f64>, CliError> {
    Ok(cfg.model.case.score_function(cfg.model.mu1, cfg.model.sigma)?)
}

fn observation_model(cfg: &Config) -> Result<ObservationModel<f64>, CliError> {
    Ok(ObservationModel {
        pre: DensitySpec::gaussian(0.0, cfg.model.sigma)?,
        post: DensitySpec::gaussian(cfg.model.mu1, cfg.model.sigma)?,
        change_time: cfg.model.change_time(),
    })
}

fn experiment(cfg: &Config, kind: DetectorKind<f64>, seed: u64) -> Result<ExperimentConfig<f64>, CliError> {
    let model = observation_model(cfg)?;
    let detector = Detector::new(kind, score_function(cfg)?)?;
    Ok(match cfg.model.horizon_cap {
        Some(cap) => ExperimentConfig::with_cap(model, detector, cfg.kappa, cap, seed)?,
        None => ExperimentConfig::new(model, detector, cfg.kappa, seed)?,
    })
}

fn roots(cfg: &Config) -> Result<(UpsilonRoots<f64>, f64), CliError> {
    let sf = score_function(cfg)?;
    let model = observation_model(cfg)?;
    let r = sf.upsilon_roots(&model.pre, model.change_time.tail_rate())?;
    Ok((r, sf.m1))
}

fn posterior_kind(cfg: &Config) -> DetectorKind<f64> {
    // the posterior recursion uses the hazard of the slowest component
    let rate = cfg.model.change_time().slowest_rate();
    DetectorKind::ShiryaevPosterior { rho: rate }
}

fn cusum_sweep(cfg: &Config, seed: u64) -> Result<SweepTable<f64>, CliError> {
    let e = experiment(cfg, DetectorKind::Cusum, seed)?;
    let grid = linear_grid(0.0, cfg.sweep.h_max, cfg.sweep.thresholds);
    Ok(sweep_thresholds(&grid, &e, cfg.sweep.episodes, cfg.sweep.repeats)?)
}

fn posterior_sweep(cfg: &Config, seed: u64) -> Result<SweepTable<f64>, CliError> {
    let e = experiment(cfg, posterior_kind(cfg), seed)?;
    let grid = posterior_grid(cfg.sweep.z_min, cfg.sweep.z_max, cfg.sweep.thresholds);
    Ok(sweep_thresholds(&grid, &e, cfg.sweep.episodes, cfg.sweep.repeats)?)
}

#[derive(Serialize)]
struct ApproxRow {
    kappa: f64,
    threshold: f64,
    cost: f64,
    upsilon_plus: f64,
    m1: f64,
}

pub fn approx(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let (r, m1) = roots(cfg)?;
    let up = r.upsilon_plus;
    let rows: Vec<_> = cfg
        .kappas
        .iter()
        .map(|&kappa| ApproxRow {
            kappa,
            threshold: approx_threshold(kappa, up),
            cost: approx_cost(kappa, up, m1),
            upsilon_plus: up,
            m1,
        })
        .collect();
    out.csv("approx.csv", &rows)
}

#[derive(Serialize)]
struct ShiftedRow {
    kappa: f64,
    h_shifted: f64,
    cost_shifted: f64,
    h_mc: f64,
    cost_mc: f64,
    cost_se: f64,
    band_lo: f64,
    band_hi: f64,
}

pub fn sweep(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let table = cusum_sweep(cfg, cfg.seed)?;
    out.max_cap(table.cap_fraction());
    let w = out.create("sweep.csv")?;
    table.write_csv(w)?;

    let optima: Vec<OptimalThreshold<f64>> = cfg
        .kappas
        .iter()
        .map(|&k| optimal_threshold(&table, k))
        .collect::<Result<_, _>>()?;
    out.json("optimal.json", &optima)?;

    let (r, m1) = roots(cfg)?;
    let anchor = optimal_threshold(&table, 100.0)?;
    let curves = ShiftedCurves::new(r.upsilon_plus, m1, anchor.h, anchor.cost);
    let rows: Vec<_> = optima
        .iter()
        .map(|o| ShiftedRow {
            kappa: o.kappa,
            h_shifted: curves.threshold(o.kappa),
            cost_shifted: curves.cost(o.kappa),
            h_mc: o.h,
            cost_mc: o.cost,
            cost_se: o.cost_se,
            band_lo: o.band_lo,
            band_hi: o.band_hi,
        })
        .collect();
    out.csv("shifted.csv", &rows)
}

fn ac_config(cfg: &Config) -> Result<AcConfig<f64>, CliError> {
    let (r, _) = roots(cfg)?;
    let mut ac = AcConfig::new(cfg.ac.theta0, cfg.ac.episodes, approx_threshold(cfg.kappa, r.upsilon_plus));
    ac.xi = cfg.ac.xi;
    ac.rho_step = cfg.ac.rho_step;
    ac.alpha0 = cfg.ac.alpha0;
    ac.pilot_episodes = cfg.ac.pilot_episodes;
    ac.natural_gradient = cfg.ac.natural_gradient;
    Ok(ac)
}

#[derive(Serialize)]
struct AcSummary {
    alpha0: f64,
    theta_final: f64,
    theta_pr: Option<f64>,
    episodes: u64,
}

pub fn train_actor_critic(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let e = experiment(cfg, DetectorKind::Cusum, cfg.seed)?;
    let ac = ac_config(cfg)?;
    let trace = train_ac(&e, &ac)?;
    let w = out.create("ac_trace.csv")?;
    trace.write_csv(w)?;
    let last = trace.rows.last();
    out.json(
        "ac_summary.json",
        &AcSummary {
            alpha0: trace.alpha0,
            theta_final: last.map_or(ac.theta0, |r| r.theta),
            theta_pr: last.map(|r| r.theta_pr),
            episodes: ac.episodes,
        },
    )
}

fn estimator_name(e: GradientEstimator) -> &'static str {
    match e {
        GradientEstimator::Eligibility => "eligibility",
        GradientEstimator::QWeighted => "q-weighted",
    }
}

#[derive(Serialize)]
struct ProfileSummary {
    estimator: &'static str,
    zero_crossing: Option<f64>,
    mc_anchor: f64,
}

pub fn profile_actor_critic(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let e = experiment(cfg, DetectorKind::Cusum, cfg.seed)?;
    let grid = linear_grid(cfg.ac.profile_min, cfg.ac.profile_max, cfg.ac.profile_points);
    let n = cfg.ac.profile_episodes;
    let anchor = objective_profile(&grid[..1], &e, cfg.ac.xi, n)?[0].mean;
    let mut summaries = Vec::new();
    for &est in &cfg.ac.profile_estimators {
        let name = estimator_name(est);
        let profile = gradient_profile(&grid, &e, cfg.ac.xi, n, est)?;
        out.csv(&format!("profile_{name}.csv"), &profile)?;
        let objective = objective_from_gradients(&profile, cfg.kappa, anchor)?;
        out.csv(&format!("objective_{name}.csv"), &objective)?;
        summaries.push(ProfileSummary {
            estimator: name,
            zero_crossing: zero_crossing(&profile),
            mc_anchor: anchor,
        });
    }
    out.json("profile_summary.json", &summaries)
}

fn q_config(cfg: &Config, episodes: u64) -> Result<QConfig<f64>, CliError> {
    let (r, _) = roots(cfg)?;
    let s = &cfg.q;
    let basis = match s.basis {
        BasisKind::Smooth => Basis::smooth(s.b_q)?,
        BasisKind::Binned => Basis::binned(s.edges.clone(), s.layout)?,
    };
    let n0 = ((episodes as f64 * s.decay_fraction).round() as u64).max(1);
    let schedule = ExplorationSchedule::new(s.eps0, s.eps_final(), n0, s.eta, s.delta)?;
    let mut q = QConfig::new(basis, s.gain, schedule, episodes, r.upsilon_plus);
    q.reset_bound = s.reset_bound;
    q.init_range = s.init_range;
    q.pr_burn_in = s.pr_burn_in;
    Ok(q)
}

fn policy_grid(cfg: &Config) -> Vec<f64> {
    linear_grid(0.0, cfg.q.policy_max, cfg.q.policy_points)
}

pub fn train_q(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let e = experiment(cfg, DetectorKind::Cusum, cfg.seed)?;
    let q = q_config(cfg, cfg.q.episodes)?;
    let trace = train(&e, &q)?;
    out.resets = Some(trace.resets);
    let w = out.create("q_trace.csv")?;
    trace.write_csv(w)?;

    let policy = extract_policy(&trace.theta_pr, &q.basis, &policy_grid(cfg))?;
    let jacobian = if cfg.q.jacobian_episodes > 0 {
        // fresh episodes, after the training ones
        let transitions = collect_transitions(&e, &q, &trace.theta_pr, q.episodes, cfg.q.jacobian_episodes)?;
        Some(mean_flow_jacobian(&q.basis, &trace.theta_pr, &transitions, cfg.q.jacobian_step)?)
    } else {
        None
    };
    let report = PolicyReport::new(&trace.theta_pr, &policy, jacobian.as_ref());
    out.json("policy.json", &report)
}

#[derive(Serialize)]
struct EvalRow {
    kappa: f64,
    h_q: f64,
    cost_q: f64,
    se_q: f64,
    h_cusum: f64,
    cost_cusum: f64,
    se_cusum: f64,
    p_shiryaev: f64,
    cost_shiryaev: f64,
    se_shiryaev: f64,
    ratio_to_cusum: f64,
}

pub fn eval_policy(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let e = experiment(cfg, DetectorKind::Cusum, cfg.seed)?;
    let h = match cfg.eval.threshold {
        Some(h) => h,
        None => {
            let q = q_config(cfg, cfg.q.episodes)?;
            let trace = train(&e, &q)?;
            out.resets = Some(trace.resets);
            let policy = extract_policy(&trace.theta_pr, &q.basis, &policy_grid(cfg))?;
            match policy.h {
                Some(h) if policy.is_threshold => h,
                _ => {
                    return Err(CliError::Numeric(format!(
                        "learned policy is not of threshold form (crossings {:?})",
                        policy.crossings
                    )))
                }
            }
        }
    };
    let eval = evaluate_threshold(h, &e.with_seed(child_seed(cfg.seed, 1)), cfg.eval.episodes)?;
    out.max_cap(eval.cap_fraction);
    let cusum_table = cusum_sweep(cfg, child_seed(cfg.seed, 2))?;
    let post_table = posterior_sweep(cfg, child_seed(cfg.seed, 2))?;
    out.max_cap(cusum_table.cap_fraction());
    out.max_cap(post_table.cap_fraction());
    let c = optimal_threshold(&cusum_table, cfg.kappa)?;
    let s = optimal_threshold(&post_table, cfg.kappa)?;
    let row = EvalRow {
        kappa: cfg.kappa,
        h_q: h,
        cost_q: eval.cost,
        se_q: eval.se_cost,
        h_cusum: c.h,
        cost_cusum: c.cost,
        se_cusum: c.cost_se,
        p_shiryaev: s.h,
        cost_shiryaev: s.cost,
        se_shiryaev: s.cost_se,
        ratio_to_cusum: eval.cost / c.cost,
    };
    out.csv("eval.csv", &[row])
}

#[derive(Serialize)]
struct VarianceRow {
    run_length: u64,
    replicas: usize,
    with_threshold: usize,
    var_threshold: f64,
    coordinate: usize,
    var_coordinate: f64,
}

pub fn diagnose(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let e = experiment(cfg, DetectorKind::Cusum, cfg.seed)?;
    let grid = policy_grid(cfg);
    let bins = cfg.diagnose.bins;
    let mut estimates = Vec::new();
    let mut variances = Vec::new();
    for &n in &cfg.diagnose.run_lengths {
        let q = q_config(cfg, n)?;
        let reps = run_replicas(&e.with_seed(child_seed(cfg.seed, n)), &q, cfg.diagnose.replicas, &grid)?;
        out.json(&format!("replicas_N{n}.json"), &reps)?;
        let cov = batch_means_covariance(&reps)?;
        out.json(&format!("covariance_N{n}.json"), &cov.to_rows())?;

        let zs = batch_means_samples(&reps)?;
        for j in 0..zs[0].len() {
            let col: Vec<f64> = zs.iter().map(|z| z[j]).collect();
            let w = out.create(&format!("z_hist_N{n}_{j}.csv"))?;
            histogram_export(&col, bins, w)?;
        }
        let hs: Vec<f64> = reps.iter().filter_map(|r| r.h).collect();
        if !hs.is_empty() {
            let w = out.create(&format!("threshold_hist_N{n}.csv"))?;
            histogram_export(&hs, bins, w)?;
        }
        let c = cfg.diagnose.coordinate;
        let coords: Vec<f64> = reps.iter().filter_map(|r| r.theta_pr.get(c).copied()).collect();
        let w = out.create(&format!("theta{c}_hist_N{n}.csv"))?;
        histogram_export(&coords, bins, w)?;

        let (vh, vt) = threshold_parameter_variances(&reps, c)?;
        variances.push(VarianceRow {
            run_length: n,
            replicas: reps.len(),
            with_threshold: hs.len(),
            var_threshold: vh,
            coordinate: c,
            var_coordinate: vt,
        });
        estimates.push((n, cov));
    }
    let report = covariance_stability_report(&estimates, &cfg.diagnose.run_lengths)?;
    out.json("stability.json", &report)?;
    out.csv("variances.csv", &variances)
}
