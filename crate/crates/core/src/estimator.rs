//! Estimation pipeline, performance metrics and repeated experiments.
//!
//! An estimate runs the least-squares solve, the auxiliary sequence and
//! parameter extraction. Experiments repeat this over a shot-count grid with
//! per-run seeds `base + splitmix64(splitmix64(n) ^ rep)` (wrapping).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_choi, model_by_id, AffineChoiModel, SOLVER_CPTP_TOL};
use crate::error::{Error, Result};
use crate::qcore::{fidelity, hs_norm, ChoiMatrix, DensityMatrix};
use crate::solver::{
    build_objective, solve_auxiliary_sequence, solve_main, SolverOptions, StageRecord,
};
use crate::tomography::{
    exact_frequencies, relative_frequencies, simulate_record, standard_configs_per_setting,
    FrequencyTable, MeasurementRecord, TomographyConfiguration,
};

/// Environment variable capping the number of parallel repetitions.
pub const THREADS_ENV: &str = "CHOITOMO_THREADS";

/// Perturbation, relative to the box width, used by the identifiability check.
const IDENTIFIABILITY_STEP: f64 = 1e-4;
const IDENTIFIABILITY_FLOOR: f64 = 1e-8;
const EMPTY_COLUMN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            starts: 50,
            max_iterations: 500,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatorOptions {
    pub solver: SolverOptions,
    pub multistart: MultistartOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub theta: Vec<f64>,
    /// `Σ_{l∈I} (h*_l − h_l(θ))²` over the independent variables.
    pub residual: f64,
    /// Indices of parameters that the data cannot determine.
    pub unidentifiable: Vec<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub main_objective: f64,
    pub min_choi_eig: f64,
    pub tp_deviation: f64,
    pub extraction_residual: f64,
    pub extraction_converged: bool,
    /// Parameters moved back into the box after extraction.
    pub clamped_params: Vec<String>,
    /// Variables with an all-zero design column.
    pub unidentifiable_variables: Vec<String>,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub h_star: Vec<f64>,
    pub choi_star: ChoiMatrix,
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    pub unidentifiable_params: Vec<String>,
    pub diagnostics: Diagnostics,
}

fn independent_residual(model: &AffineChoiModel, h_star: &[f64], theta: &[f64]) -> f64 {
    let h = (model.h_of_theta)(theta);
    model
        .independent_set
        .iter()
        .map(|&l| (h_star[l] - h[l]).powi(2))
        .sum()
}

fn clamp_to_box(model: &AffineChoiModel, theta: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .zip(&model.param_box)
        .map(|(&t, &(lo, hi))| t.clamp(lo, hi))
        .collect()
}

/// Largest change of each independent variable when each parameter moves
/// by a small fraction of its box width, `[param][variable]`.
fn sensitivities(model: &AffineChoiModel, theta: &[f64]) -> Vec<Vec<f64>> {
    let base = (model.h_of_theta)(theta);
    (0..theta.len())
        .map(|i| {
            let (lo, hi) = model.param_box[i];
            let delta = IDENTIFIABILITY_STEP * (hi - lo);
            let mut moved = theta.to_vec();
            moved[i] = if theta[i] + delta <= hi { theta[i] + delta } else { theta[i] - delta };
            let h = (model.h_of_theta)(&moved);
            model
                .independent_set
                .iter()
                .map(|&l| (h[l] - base[l]).abs())
                .collect()
        })
        .collect()
}

/// Parameters that move no independent variable beyond the floor.
fn insensitive_params(model: &AffineChoiModel, theta: &[f64]) -> Vec<usize> {
    sensitivities(model, theta)
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(|&s| s <= IDENTIFIABILITY_FLOOR))
        .map(|(i, _)| i)
        .collect()
}

/// Downhill simplex minimization; returns the best vertex, its value and
/// whether the simplex collapsed before the iteration cap.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    steps: &[f64],
    max_iterations: usize,
) -> (Vec<f64>, f64, bool) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut converged = false;
    for _ in 0..max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= 1e-24 + 1e-14 * values[0].abs() && diameter <= 1e-10 {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let reflected = along(1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let p = along(0.5);
                let fp = f(&p);
                (p, fp)
            } else {
                let p = along(-0.5);
                let fp = f(&p);
                (p, fp)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(x, b)| b + 0.5 * (x - b))
                        .collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is nonempty");
    (simplex[best].clone(), values[best], converged)
}

/// Multistart simplex fit of `θ` to the independent variables of `h*`.
pub fn extract_numeric(
    model: &AffineChoiModel,
    h_star: &[f64],
    opts: &MultistartOptions,
) -> Result<Extraction> {
    let objective = |theta: &[f64]| -> f64 {
        let inside = clamp_to_box(model, theta);
        let outside: f64 = theta.iter().zip(&inside).map(|(a, b)| (a - b).powi(2)).sum();
        independent_residual(model, h_star, &inside) + outside
    };
    let steps: Vec<f64> = model.param_box.iter().map(|(lo, hi)| 0.05 * (hi - lo)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(opts.starts);
    let mut attempts = 0;
    while starts.len() < opts.starts && attempts < 100 * opts.starts.max(1) {
        attempts += 1;
        let theta: Vec<f64> = model
            .param_box
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect();
        if (model.cp_condition)(&theta) {
            starts.push(theta);
        }
    }
    if starts.is_empty() {
        return Err(Error::InvalidModel(format!(
            "no CP-feasible start found in the box of {}",
            model.id
        )));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for start in &starts {
        let (theta, value, converged) = nelder_mead(&objective, start, &steps, opts.max_iterations);
        any_converged |= converged;
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((theta, value));
        }
    }
    let (theta, _) = best.expect("at least one start");
    let theta = clamp_to_box(model, &theta);
    Ok(Extraction {
        residual: independent_residual(model, h_star, &theta),
        unidentifiable: insensitive_params(model, &theta),
        theta,
        converged: any_converged,
    })
}

/// Closed form when the model supplies one, otherwise multistart.
pub fn extract_parameters(
    model: &AffineChoiModel,
    h_star: &[f64],
    opts: &MultistartOptions,
) -> Result<Extraction> {
    if h_star.len() != model.num_variables() {
        return Err(Error::LengthMismatch {
            what: "affine variables",
            expected: model.num_variables(),
            found: h_star.len(),
        });
    }
    if h_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    match model.extract_closed_form {
        Some(extract) => {
            let closed = extract(h_star);
            Ok(Extraction {
                residual: independent_residual(model, h_star, &closed.theta),
                theta: closed.theta,
                unidentifiable: closed.unidentifiable,
                converged: true,
            })
        }
        None => extract_numeric(model, h_star, opts),
    }
}

/// Runs the full pipeline on relative frequencies.
pub fn estimate_from_frequencies(
    model: &AffineChoiModel,
    configs: &[TomographyConfiguration],
    freqs: &FrequencyTable,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let objective = build_objective(model, configs, freqs)?;
    let main = solve_main(model, &objective, &opts.solver)?;
    let refined = solve_auxiliary_sequence(model, &objective, &main, &opts.solver)?;
    let extraction = extract_parameters(model, &refined.h_star, &opts.multistart)?;

    let choi_star = model.evaluate_choi(&refined.h_star)?;
    let min_eig = choi_star.min_eigenvalue();
    if min_eig < -SOLVER_CPTP_TOL {
        return Err(Error::NotPsd { min_eig });
    }
    let tp = choi_star.tp_deviation();
    if tp > SOLVER_CPTP_TOL {
        return Err(Error::NotTracePreserving { deviation: tp });
    }

    let theta_hat = clamp_to_box(model, &extraction.theta);
    let clamped_params = theta_hat
        .iter()
        .zip(&extraction.theta)
        .zip(&model.param_names)
        .filter(|((a, b), _)| a != b)
        .map(|(_, name)| name.clone())
        .collect();

    let empty = objective.empty_columns(EMPTY_COLUMN_TOL);
    let mut unidentifiable = extraction.unidentifiable.clone();
    if !empty.is_empty() {
        // A parameter is unidentifiable if every variable it moves lacks data.
        for (i, row) in sensitivities(model, &theta_hat).iter().enumerate() {
            let moved: Vec<usize> = model
                .independent_set
                .iter()
                .zip(row)
                .filter(|(_, &s)| s > IDENTIFIABILITY_FLOOR)
                .map(|(&l, _)| l)
                .collect();
            if !moved.is_empty() && moved.iter().all(|l| empty.contains(l)) {
                unidentifiable.push(i);
            }
        }
    }
    unidentifiable.sort_unstable();
    unidentifiable.dedup();

    Ok(EstimationResult {
        objective: refined.objective_value,
        unidentifiable_params: unidentifiable
            .iter()
            .map(|&i| model.param_names[i].clone())
            .collect(),
        diagnostics: Diagnostics {
            main_objective: main.objective_value,
            min_choi_eig: min_eig,
            tp_deviation: tp,
            extraction_residual: extraction.residual,
            extraction_converged: extraction.converged,
            clamped_params,
            unidentifiable_variables: empty
                .iter()
                .map(|&l| model.variable_names[l].clone())
                .collect(),
            stages: refined.stages.clone(),
        },
        h_star: refined.h_star,
        choi_star,
        theta_hat,
    })
}

/// Runs the full pipeline on a measurement record.
pub fn estimate(
    model: &AffineChoiModel,
    record: &MeasurementRecord,
    configs: &[TomographyConfiguration],
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    if record.counts().len() != configs.len() {
        return Err(Error::LengthMismatch {
            what: "record configurations",
            expected: configs.len(),
            found: record.counts().len(),
        });
    }
    for (g, (row, cfg)) in record.counts().iter().zip(configs).enumerate() {
        if row.len() != cfg.povm.num_outcomes() {
            return Err(Error::MissingFrequencies(g));
        }
    }
    let freqs = relative_frequencies(record)?;
    estimate_from_frequencies(model, configs, &freqs, opts)
}

/// `F(Ê(ρ), E(ρ))` for a probe state `ρ`.
pub fn metric_output_fidelity(
    model: &AffineChoiModel,
    theta_true: &[f64],
    result: &EstimationResult,
    probe: &DensityMatrix,
) -> Result<f64> {
    let x_true = model.choi_from_theta(theta_true)?;
    fidelity(&apply_choi(&result.choi_star, probe)?, &apply_choi(&x_true, probe)?)
}

/// `‖X̂ − X‖` in Hilbert–Schmidt norm.
pub fn metric_hs_error(x_hat: &ChoiMatrix, x_true: &ChoiMatrix) -> Result<f64> {
    if x_hat.dim() != x_true.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("channel on dimension {}", x_true.dim()),
            found: format!("dimension {}", x_hat.dim()),
        });
    }
    Ok(hs_norm(&(x_hat.matrix() - x_true.matrix())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mean: Vec<f64>,
    /// Unbiased, divisor `R − 1`.
    pub variance: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

pub fn metric_param_stats(samples: &[Vec<f64>]) -> Result<ParamStats> {
    let r = samples.len();
    if r < 2 {
        return Err(Error::InsufficientRepetitions(r));
    }
    let p = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != p) {
        return Err(Error::LengthMismatch {
            what: "parameter vector",
            expected: p,
            found: bad.len(),
        });
    }
    let mean: Vec<f64> = (0..p)
        .map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / r as f64)
        .collect();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    samples
                        .iter()
                        .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]))
                        .sum::<f64>()
                        / (r - 1) as f64
                })
                .collect()
        })
        .collect();
    let variance = (0..p).map(|i| covariance[i][i]).collect();
    Ok(ParamStats {
        mean,
        variance,
        covariance,
    })
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sampling seed of repetition `rep` at per-configuration shot count `n`.
pub fn repetition_seed(base_seed: u64, n: u64, rep: usize) -> u64 {
    base_seed.wrapping_add(splitmix64(splitmix64(n) ^ rep as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub model: String,
    pub theta_true: Vec<f64>,
    /// Shots per configuration.
    pub n_grid: Vec<u64>,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Use exact probabilities instead of sampled counts; yields one entry.
    pub exact: bool,
    /// Defaults to the configuration input state.
    pub probe: Option<DensityMatrix>,
    /// Caps worker threads; falls back to `CHOITOMO_THREADS`, then rayon's default.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionEntry {
    /// Shots per configuration; `None` in exact mode.
    pub n: Option<u64>,
    pub rep: usize,
    pub seed: Option<u64>,
    pub theta_hat: Vec<f64>,
    pub h_star: Vec<f64>,
    pub fidelity: f64,
    pub hs_error: f64,
    pub objective: f64,
    pub min_choi_eig: f64,
    pub unidentifiable: Vec<String>,
    pub clamped: Vec<String>,
    #[serde(skip)]
    pub solver_log: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: Option<u64>,
    pub repetitions: usize,
    pub mean_fidelity: f64,
    pub mean_hs_error: f64,
    pub mean_theta: Vec<f64>,
    pub variance: Option<Vec<f64>>,
    /// Present only for models whose measurements separate the parameters.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    pub param_names: Vec<String>,
    pub theta_true: Vec<f64>,
    pub n_grid: Vec<u64>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub exact_mode: bool,
    pub entries: Vec<RepetitionEntry>,
    pub aggregates: Vec<Aggregate>,
}

fn format_n(n: Option<u64>) -> String {
    n.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

impl ExperimentReport {
    /// One row per entry: `n,rep,<params>,fidelity,hs_error,objective`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "n,rep,{},fidelity,hs_error,objective",
            self.param_names.join(",")
        )?;
        for e in &self.entries {
            let theta: Vec<String> = e.theta_hat.iter().map(f64::to_string).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                format_n(e.n),
                e.rep,
                theta.join(","),
                e.fidelity,
                e.hs_error,
                e.objective
            )?;
        }
        Ok(())
    }

    /// Per-stage solver log of every entry.
    pub fn write_solver_log<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,rep,pass,mu,newton_steps,objective,min_eig")?;
        for e in &self.entries {
            for s in &e.solver_log {
                writeln!(
                    out,
                    "{},{},{},{:e},{},{:e},{:e}",
                    format_n(e.n),
                    e.rep,
                    s.pass,
                    s.mu,
                    s.newton_steps,
                    s.objective,
                    s.min_eig
                )?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Groups entries by shot count, in order of first appearance.
pub fn aggregate_entries(entries: &[RepetitionEntry], independent_measurements: bool) -> Result<Vec<Aggregate>> {
    let mut keys: Vec<Option<u64>> = Vec::new();
    for e in entries {
        if !keys.contains(&e.n) {
            keys.push(e.n);
        }
    }
    keys.into_iter()
        .map(|n| {
            let group: Vec<&RepetitionEntry> = entries.iter().filter(|e| e.n == n).collect();
            let count = group.len() as f64;
            let thetas: Vec<Vec<f64>> = group.iter().map(|e| e.theta_hat.clone()).collect();
            let p = thetas[0].len();
            let mean_theta = (0..p)
                .map(|i| thetas.iter().map(|t| t[i]).sum::<f64>() / count)
                .collect();
            let (variance, covariance, note) = match metric_param_stats(&thetas) {
                Ok(stats) if independent_measurements => {
                    (Some(stats.variance), Some(stats.covariance), None)
                }
                Ok(stats) => (
                    Some(stats.variance),
                    None,
                    Some("correlated: covariance matrix not diagonal".to_string()),
                ),
                Err(Error::InsufficientRepetitions(_)) => (
                    None,
                    None,
                    Some("variance undefined for fewer than 2 repetitions".to_string()),
                ),
                Err(e) => return Err(e),
            };
            Ok(Aggregate {
                n,
                repetitions: group.len(),
                mean_fidelity: group.iter().map(|e| e.fidelity).sum::<f64>() / count,
                mean_hs_error: group.iter().map(|e| e.hs_error).sum::<f64>() / count,
                mean_theta,
                variance,
                covariance,
                note,
            })
        })
        .collect()
}

fn thread_cap(plan: &ExperimentPlan) -> Result<Option<usize>> {
    if let Some(t) = plan.threads {
        return Ok(Some(t.max(1)));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|t| Some(t.max(1)))
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Simulates and estimates every `(n, repetition)` pair of the plan.
pub fn run_experiment(plan: &ExperimentPlan, opts: &EstimatorOptions) -> Result<ExperimentReport> {
    let model = model_by_id(&plan.model)?;
    model.check_theta(&plan.theta_true)?;
    if !model.is_cp(&plan.theta_true) || !model.in_box(&plan.theta_true) {
        return Err(Error::CpViolation(plan.theta_true.clone()));
    }
    if !plan.exact {
        if plan.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if let Some(&n) = plan.n_grid.iter().find(|&&n| n == 0) {
            return Err(Error::ZeroShots(n as usize));
        }
    }
    if plan.repetitions == 0 {
        return Err(Error::InsufficientRepetitions(0));
    }
    let x_true = model.choi_from_theta(&plan.theta_true)?;

    let tasks: Vec<(Option<u64>, usize)> = if plan.exact {
        vec![(None, 0)]
    } else {
        plan.n_grid
            .iter()
            .flat_map(|&n| (0..plan.repetitions).map(move |r| (Some(n), r)))
            .collect()
    };

    let run_one = |&(n, rep): &(Option<u64>, usize)| -> Result<RepetitionEntry> {
        let configs = standard_configs_per_setting(model.d, n.unwrap_or(1))?;
        let (freqs, seed) = match n {
            None => (exact_frequencies(&x_true, &configs)?, None),
            Some(n) => {
                let seed = repetition_seed(plan.base_seed, n, rep);
                let record = simulate_record(&x_true, &configs, seed)?;
                (relative_frequencies(&record)?, Some(seed))
            }
        };
        let result = estimate_from_frequencies(&model, &configs, &freqs, opts)?;
        let probe = plan.probe.clone().unwrap_or_else(|| configs[0].rho.clone());
        Ok(RepetitionEntry {
            n,
            rep,
            seed,
            fidelity: metric_output_fidelity(&model, &plan.theta_true, &result, &probe)?,
            hs_error: metric_hs_error(&result.choi_star, &x_true)?,
            objective: result.objective,
            min_choi_eig: result.diagnostics.min_choi_eig,
            unidentifiable: result.unidentifiable_params.clone(),
            clamped: result.diagnostics.clamped_params.clone(),
            solver_log: result.diagnostics.stages.clone(),
            theta_hat: result.theta_hat,
            h_star: result.h_star,
        })
    };

    let entries: Vec<RepetitionEntry> = match thread_cap(plan)? {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| tasks.par_iter().map(run_one).collect::<Result<_>>())?,
        None => tasks.par_iter().map(run_one).collect::<Result<_>>()?,
    };

    Ok(ExperimentReport {
        model: model.id.clone(),
        param_names: model.param_names.clone(),
        theta_true: plan.theta_true.clone(),
        n_grid: if plan.exact { vec![] } else { plan.n_grid.clone() },
        repetitions: if plan.exact { 1 } else { plan.repetitions },
        base_seed: plan.base_seed,
        exact_mode: plan.exact,
        aggregates: aggregate_entries(&entries, model.independent_measurements)?,
        entries,
    })
}
