//! Command-line front end: `run`, `validate` and `list-models`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 solver failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::channels::{model_by_id, MODEL_IDS};
use crate::error::Error;
use crate::estimator::{run_experiment, EstimatorOptions, ExperimentPlan, ExperimentReport};
use crate::qcore::{c, ComplexVector, DensityMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "choitomo", version, about = "Parameter estimation for structured quantum channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write reports and plots.
    Run(RunArgs),
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the registered channel models.
    ListModels,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use exact probabilities instead of sampled counts.
    #[arg(long)]
    pub exact: bool,
    /// Also write the per-stage solver log.
    #[arg(long)]
    pub verbose: bool,
}

/// Probe state for the output-fidelity metric.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    /// Qubit Bloch vector.
    Bloch([f64; 3]),
    /// Pure state amplitudes as `[re, im]` pairs, normalized on load.
    Pure(Vec<[f64; 2]>),
}

impl ProbeSpec {
    pub fn to_state(&self) -> crate::Result<DensityMatrix> {
        match self {
            Self::Bloch(r) => DensityMatrix::from_bloch(*r),
            Self::Pure(amps) => {
                let psi = ComplexVector::from_iterator(amps.len(), amps.iter().map(|[re, im]| c(*re, *im)));
                let norm = psi.norm();
                if !(norm > 1e-12) {
                    return Err(Error::Config("probe: zero state vector".into()));
                }
                DensityMatrix::from_pure(&psi.unscale(norm))
            }
        }
    }
}

fn default_repetitions() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("choitomo-out")
}

/// Experiment configuration file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: String,
    pub theta_true: Vec<f64>,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub exact_mode: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Schema checks beyond what deserialization enforces.
    pub fn validate(&self) -> crate::Result<()> {
        let model = model_by_id(&self.model)?;
        if self.theta_true.len() != model.num_params() {
            return Err(Error::Config(format!(
                "theta_true: model {} expects {} parameters ({}), found {}",
                model.id,
                model.num_params(),
                model.param_names.join(", "),
                self.theta_true.len()
            )));
        }
        if self.theta_true.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("theta_true: values must be finite".into()));
        }
        if !model.in_box(&self.theta_true) || !model.is_cp(&self.theta_true) {
            return Err(Error::Config(format!(
                "theta_true: {:?} is outside the CP region of {}",
                self.theta_true, model.id
            )));
        }
        if !self.exact_mode && self.n_grid.is_empty() {
            return Err(Error::Config("n_grid: must be nonempty unless exact_mode is set".into()));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid: shot counts must be positive".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions: must be at least 1".into()));
        }
        if let Some(probe) = &self.probe {
            let state = probe
                .to_state()
                .map_err(|e| Error::Config(format!("probe: {e}")))?;
            if state.dim() != model.d {
                return Err(Error::Config(format!(
                    "probe: dimension {} does not match model dimension {}",
                    state.dim(),
                    model.d
                )));
            }
        }
        Ok(())
    }

    pub fn plan(&self) -> crate::Result<ExperimentPlan> {
        Ok(ExperimentPlan {
            model: self.model.clone(),
            theta_true: self.theta_true.clone(),
            n_grid: self.n_grid.clone(),
            repetitions: self.repetitions,
            base_seed: self.seed,
            exact: self.exact_mode,
            probe: self.probe.as_ref().map(ProbeSpec::to_state).transpose()?,
            threads: None,
        })
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Config(_)
        | Error::Json(_)
        | Error::UnknownModel(_)
        | Error::CpViolation(_)
        | Error::LengthMismatch { .. }
        | Error::ZeroShots(_)
        | Error::InsufficientRepetitions(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

/// Tabulates every registered model.
pub fn list_models() -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:<28} {:<44} relations", "id", "params", "box");
    for id in MODEL_IDS {
        let model = model_by_id(id).expect("registered model");
        let bounds: Vec<String> = model
            .param_box
            .iter()
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect();
        let _ = writeln!(
            out,
            "{:<12} {:<28} {:<44} {}",
            model.id,
            model.param_names.join(", "),
            bounds.join(" x "),
            model.convex_relations.len()
        );
    }
    out
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match cli.command {
        Command::ListModels => {
            let _ = write!(out, "{}", list_models());
            EXIT_OK
        }
        Command::Validate { config } => match ExperimentSpec::load(&config).and_then(|s| s.validate()) {
            Ok(()) => {
                let _ = writeln!(out, "{}: ok", config.display());
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(err, "{}: {e}", config.display());
                EXIT_CONFIG
            }
        },
        Command::Run(args) => run_command(&args, out, err),
    }
}

fn run_command(args: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut spec = match ExperimentSpec::load(&args.config) {
        Ok(spec) => spec,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.exact {
        spec.exact_mode = true;
    }
    if let Some(dir) = &args.out {
        spec.output_dir = dir.clone();
    }
    let plan = match spec.validate().and_then(|()| spec.plan()) {
        Ok(plan) => plan,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let report = match run_experiment(&plan, &EstimatorOptions::default()) {
        Ok(report) => report,
        Err(e) => {
            let _ = writeln!(err, "experiment failed: {e}");
            return exit_code(&e);
        }
    };
    match write_outputs(&report, &spec.output_dir, args.verbose) {
        Ok(files) => {
            let _ = writeln!(
                out,
                "{} rows written to {} ({})",
                report.entries.len(),
                spec.output_dir.display(),
                files.join(", ")
            );
            if args.verbose {
                for a in &report.aggregates {
                    let n = a.n.map_or_else(|| "inf".into(), |n| n.to_string());
                    let _ = writeln!(
                        out,
                        "n={n} fidelity={} hs_error={} mean={:?}",
                        a.mean_fidelity, a.mean_hs_error, a.mean_theta
                    );
                }
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "cannot write outputs to {}: {e}", spec.output_dir.display());
            EXIT_IO
        }
    }
}

/// Writes reports and plots; returns the file names.
pub fn write_outputs(report: &ExperimentReport, dir: &Path, verbose: bool) -> crate::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> crate::Result<()> {
        fs::write(dir.join(name), bytes)?;
        files.push(name.to_string());
        Ok(())
    };
    put("report.json", report.to_json()?.as_bytes())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    put("report.csv", &csv)?;
    for (name, svg) in plots(report) {
        put(name, svg.as_bytes())?;
    }
    if verbose {
        let mut log = Vec::new();
        report.write_solver_log(&mut log)?;
        put("solver_log.csv", &log)?;
    }
    Ok(files)
}

type Series = (String, Vec<(f64, f64)>);

fn plots(report: &ExperimentReport) -> Vec<(&'static str, String)> {
    let names = &report.param_names;
    let point = |a: &crate::estimator::Aggregate, y: f64| a.n.map(|n| (n as f64, y));
    let fidelity: Vec<Series> = vec![(
        "fidelity".into(),
        report.aggregates.iter().filter_map(|a| point(a, a.mean_fidelity)).collect(),
    )];
    let hs: Vec<Series> = vec![(
        "hs_error".into(),
        report.aggregates.iter().filter_map(|a| point(a, a.mean_hs_error)).collect(),
    )];
    let mut mean: Vec<Series> = Vec::new();
    let mut variance: Vec<Series> = Vec::new();
    for (i, name) in names.iter().enumerate() {
        mean.push((
            name.clone(),
            report.aggregates.iter().filter_map(|a| point(a, a.mean_theta[i])).collect(),
        ));
        variance.push((
            name.clone(),
            report
                .aggregates
                .iter()
                .filter_map(|a| a.variance.as_ref().and_then(|v| point(a, v[i])))
                .collect(),
        ));
    }
    let note = report.exact_mode.then_some("exact probabilities: no shot-count axis");
    vec![
        ("fidelity.svg", line_chart("Output fidelity", "fidelity", &fidelity, note)),
        ("mean.svg", line_chart("Mean estimate", "mean", &mean, note)),
        ("variance.svg", line_chart("Estimate variance", "variance", &variance, note)),
        ("hs_error.svg", line_chart("Hilbert-Schmidt error", "hs_error", &hs, note)),
    ]
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with a log-scaled shot-count axis.
pub fn line_chart(title: &str, y_label: &str, series: &[Series], note: Option<&str>) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|(x, y)| *x > 0.0 && y.is_finite())
        .collect();
    if let Some(text) = note.or(points.is_empty().then_some("no data")) {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0,
            escape(text)
        );
        svg.push_str("</svg>\n");
        return svg;
    }

    let (plot_w, plot_h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let lx: Vec<f64> = points.iter().map(|(x, _)| x.log10()).collect();
    let (mut x0, mut x1) = (lx.iter().copied().fold(f64::INFINITY, f64::min), lx.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (mut y0, mut y1) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, y)| (lo.min(*y), hi.max(*y)));
    let pad = if y1 - y0 > 0.0 { 0.05 * (y1 - y0) } else { 0.05 * y0.abs().max(1e-3) };
    y0 -= pad;
    y1 += pad;
    let px = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let mut decade = x0.ceil() as i32;
    while f64::from(decade) <= x1 + 1e-9 {
        let x = LEFT + (f64::from(decade) - x0) / (x1 - x0) * plot_w;
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{decade}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0
        );
        decade += 1;
    }
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let yy = py(y);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{yy:.2}" x2="{LEFT}" y2="{yy:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            yy + 4.0,
            fmt_num(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">shots per configuration</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|(x, y)| *x > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if coords.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
        }
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx0 = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx0}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx0 + 20.0,
            lx0 + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_models_rows() {
        let text = list_models();
        for id in MODEL_IDS {
            assert!(text.lines().any(|l| l.starts_with(id)), "{id}");
        }
        let gad = text.lines().find(|l| l.starts_with("gad ")).unwrap();
        assert!(gad.contains("gamma, p") && gad.trim_end().ends_with('1'));
        let gp = text.lines().find(|l| l.starts_with("gen_pauli_3")).unwrap();
        assert!(gp.contains("lambda1, lambda2, lambda3, lambda4"));
    }

    #[test]
    fn config_parsing_and_validation() {
        let spec = ExperimentSpec::from_json(
            r#"{"model":"gad","theta_true":[0.7,0.3],"n_grid":[100],"seed":1}"#,
        )
        .unwrap();
        assert_eq!(spec.repetitions, 5);
        assert!(!spec.exact_mode && spec.probe.is_none());
        spec.validate().unwrap();

        let bad = ExperimentSpec::from_json(
            r#"{"model":"gad","theta_true":[0.7,0.3,0.1],"n_grid":[100],"seed":1}"#,
        )
        .unwrap();
        assert!(bad.validate().unwrap_err().to_string().contains("theta_true"));

        assert!(ExperimentSpec::from_json(
            r#"{"model":"gad","theta_true":[0.7,0.3],"seed":1,"colour":"red"}"#
        )
        .is_err());

        let unknown = ExperimentSpec::from_json(r#"{"model":"xyz","theta_true":[],"seed":1}"#).unwrap();
        assert!(matches!(unknown.validate(), Err(Error::UnknownModel(_))));

        let no_grid = ExperimentSpec::from_json(r#"{"model":"gad","theta_true":[0.7,0.3],"seed":1}"#).unwrap();
        assert!(no_grid.validate().unwrap_err().to_string().contains("n_grid"));
    }

    #[test]
    fn probe_specs() {
        let spec = ExperimentSpec::from_json(
            r#"{"model":"pauli_t","theta_true":[0,0,0],"seed":1,"exact_mode":true,"probe":{"bloch":[0,0,1]}}"#,
        )
        .unwrap();
        spec.validate().unwrap();
        let wrong_dim = ExperimentSpec::from_json(
            r#"{"model":"gen_pauli_3","theta_true":[0,0,0,0],"seed":1,"exact_mode":true,"probe":{"pure":[[1,0],[0,1]]}}"#,
        )
        .unwrap();
        assert!(wrong_dim.validate().unwrap_err().to_string().contains("probe"));
        let pure = ProbeSpec::Pure(vec![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).to_state().unwrap();
        assert!((pure.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chart_contains_series() {
        let svg = line_chart(
            "t",
            "y",
            &[("a".into(), vec![(100.0, 0.5), (1000.0, 0.7)]), ("b<c".into(), vec![(100.0, 0.1)])],
            None,
        );
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("b&lt;c") && svg.contains("1e2") && svg.contains("1e3"));
        let empty = line_chart("t", "y", &[], Some("exact"));
        assert!(empty.contains("exact") && !empty.contains("<polyline"));
    }

    #[test]
    fn parse_errors_exit_with_config_code() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_cli(["choitomo", "frobnicate"], &mut out, &mut err), EXIT_CONFIG);
        assert_eq!(run_cli(["choitomo", "list-models"], &mut out, &mut err), EXIT_OK);
        assert!(String::from_utf8(out).unwrap().contains("pauli_t"));
    }
}
