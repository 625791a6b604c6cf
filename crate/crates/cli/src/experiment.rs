//! The four commands: design, evaluate, simulate and sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use secdetect::designers::{
    design_known, design_known_attenuated, design_sparse, design_subspace_fixed,
    design_subspace_free, sparse_capture_range, worst_case_subspace, AttenuationMode, DesignError,
    DesignOutcome,
};
use secdetect::linalg_frames::{
    frame_metrics, gram_schmidt_basis, FrameMetrics, MeasurementMatrix,
};
use secdetect::matrix_file::{format_matrix, parse_matrix, read_matrix};
use secdetect::secrecy_model::{
    moment_oracle_deflection, moment_oracle_fc, tau_serde, MixtureView,
};
use secdetect::simulator::{roc_curve, Detector, RocResult, SimulationConfig};
use secdetect::tolerance;

use crate::config::{BasisSource, ExperimentConfig, Mode, SweepParam, SweepSpec, VectorSource};
use crate::error::CliError;
use crate::run_dir::{content_hash, RunDir};

pub const MATRIX_FILE: &str = "matrix.txt";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const ROC_FILE: &str = "roc.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_CSV_HEADER: &str = "param,value,theta,achieved_delta,d_fc,d_ev,constraint_ok,error";

/// Sub-seed purposes; every random draw comes from the top-level seed.
const SEED_DESIGN: u64 = 1;
const SEED_SIGNAL: u64 = 2;
const SEED_BASIS: u64 = 3;
const SEED_SIMULATION: u64 = 4;

pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Design,
    Evaluate,
    Simulate,
    Sweep,
}

/// A parsed command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub matrix: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sweep_param: Option<SweepParam>,
    pub sweep_values: Option<Vec<f64>>,
}

/// Signal and basis after reading files and drawing seeded values.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub signal: Option<DVector<f64>>,
    pub basis: Option<DMatrix<f64>>,
}

fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split([',', ' ', '\t']))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| format!("bad value '{t}': {e}"))
        })
        .collect()
}

pub fn resolve_inputs(config: &ExperimentConfig, base: &Path) -> Result<Inputs, CliError> {
    let n = config.n;
    let signal = match &config.signal {
        None => None,
        Some(VectorSource::Inline(v)) => Some(DVector::from_column_slice(v)),
        Some(VectorSource::File(p)) => {
            let path = resolve_path(base, p);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let values = parse_vector(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if values.len() != n {
                return Err(CliError::Config(format!(
                    "{}: signal has {} entries, n = {n}",
                    path.display(),
                    values.len()
                )));
            }
            Some(DVector::from_vec(values))
        }
        Some(VectorSource::Random { norm }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_SIGNAL));
            let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            Some(v.normalize() * *norm)
        }
    };
    if let Some(s) = &signal {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("signal has non-finite entries".into()));
        }
    }
    let k = config.k.unwrap_or(0);
    let basis = match &config.basis {
        None => None,
        Some(BasisSource::Inline(rows)) => Some(DMatrix::from_fn(n, k, |i, j| rows[i][j])),
        Some(BasisSource::File(p)) => {
            let path = resolve_path(base, p);
            let d = read_matrix(&path)?;
            if d.shape() != (n, k) {
                return Err(CliError::Config(format!(
                    "{}: basis is {}x{}, expected {n}x{k}",
                    path.display(),
                    d.nrows(),
                    d.ncols()
                )));
            }
            Some(d)
        }
        Some(BasisSource::Random {}) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SEED_BASIS));
            let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            Some(g.qr().q())
        }
    };
    Ok(Inputs { signal, basis })
}

pub fn run_design(config: &ExperimentConfig, inputs: &Inputs) -> Result<DesignOutcome, CliError> {
    let scenario = &config.scenario;
    let seed = derive_seed(config.seed, SEED_DESIGN);
    let k = config.k.unwrap_or(0);
    let outcome = match config.mode {
        Mode::Known => {
            let s = inputs.signal.as_ref().expect("validated");
            match design_known(s, config.m, scenario) {
                Err(DesignError::NoDiscardedDirection) => {
                    design_known_attenuated(s, config.m, scenario)?
                }
                other => other?,
            }
        }
        Mode::SubspaceFree => design_subspace_free(config.n, config.m, k, scenario, seed)?.outcome,
        Mode::SubspaceFixed => design_subspace_fixed(
            inputs.basis.as_ref().expect("validated"),
            config.m,
            scenario,
        )?,
        Mode::Sparse => design_sparse(config.n, config.m, k, scenario, seed)?,
    };
    Ok(outcome)
}

/// Signal attenuation a design implies for the sensors.
pub fn design_attenuation(outcome: &DesignOutcome) -> f64 {
    match outcome.attenuation_mode {
        AttenuationMode::InMatrix => 1.0,
        AttenuationMode::SignalPrecoding => outcome.attenuation,
    }
}

/// Re-evaluation of a matrix against a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub attenuation: f64,
    /// Capture of the (worst-case) unit signal before attenuation; for known
    /// signals, of the signal itself.
    pub raw_capture: f64,
    pub capture: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_support: Option<Vec<usize>>,
    #[serde(with = "tau_serde")]
    pub tau: f64,
    #[serde(with = "tau_serde")]
    pub budget_delta: f64,
    pub d_fc: f64,
    pub d_ev: f64,
    pub oracle_d_fc: f64,
    pub oracle_d_ev: f64,
    pub constraint_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameMetrics>,
}

fn min_eigenvector(m: DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m);
    let idx = eig.eigenvalues.imin();
    eig.eigenvectors.column(idx).into_owned()
}

/// Evaluates `matrix` and returns the signal that attains the reported
/// capture, already attenuated.
pub fn evaluate(
    config: &ExperimentConfig,
    inputs: &Inputs,
    matrix: &MeasurementMatrix,
    attenuation: f64,
) -> Result<(Evaluation, DVector<f64>), CliError> {
    if matrix.n() != config.n || matrix.m() != config.m {
        return Err(CliError::Config(format!(
            "matrix is {}x{}, config expects {}x{}",
            matrix.m(),
            matrix.n(),
            config.m,
            config.n
        )));
    }
    let n = config.n;
    let projector = matrix.projector();
    let mut worst_support = None;
    let (raw, signal) = match config.mode {
        Mode::Known => {
            let s = inputs.signal.clone().expect("validated");
            (projector.capture(&s), s)
        }
        Mode::SubspaceFree | Mode::SubspaceFixed => {
            let d = match config.mode {
                Mode::SubspaceFixed => inputs.basis.clone().expect("validated"),
                _ => {
                    let rows: Vec<DVector<f64>> = matrix
                        .as_matrix()
                        .row_iter()
                        .map(|r| r.transpose())
                        .collect();
                    gram_schmidt_basis(n, &rows)?
                        .columns(0, config.k.expect("validated"))
                        .into_owned()
                }
            };
            let raw = worst_case_subspace(matrix, &d)?;
            let restricted = d.transpose() * projector.as_matrix() * &d;
            let beta = min_eigenvector((&restricted + restricted.transpose()) * 0.5);
            (raw, d * beta)
        }
        Mode::Sparse => {
            let range = sparse_capture_range(matrix, config.k.expect("validated"))?;
            let support = range.min_support.clone();
            let p = projector.as_matrix();
            let sub = DMatrix::from_fn(support.len(), support.len(), |i, j| {
                p[(support[i], support[j])]
            });
            let local = min_eigenvector(sub);
            let mut s = DVector::zeros(n);
            for (i, &idx) in support.iter().enumerate() {
                s[idx] = local[i];
            }
            worst_support = Some(support);
            (range.min, s)
        }
    };
    let scenario = &config.scenario;
    let capture = attenuation * attenuation * raw;
    let effective = &signal * attenuation;
    let d_fc = scenario.deflection_fc(capture);
    let d_ev = scenario.deflection_ev(capture);
    let sigma2 = scenario.sigma2();
    let profile = scenario.profile();
    let oracle_d_fc = moment_oracle_fc(matrix, &effective, sigma2, profile)?;
    let oracle_d_ev = moment_oracle_deflection(
        matrix,
        &effective,
        sigma2,
        MixtureView::Eavesdropper,
        profile,
    )?;
    let evaluation = Evaluation {
        mode: config.mode,
        n,
        m: config.m,
        k: config.k,
        attenuation,
        raw_capture: raw,
        capture,
        worst_support,
        tau: scenario.tau(),
        budget_delta: scenario.budget().delta,
        d_fc,
        d_ev,
        oracle_d_fc,
        oracle_d_ev,
        constraint_ok: d_ev <= scenario.tau() + tolerance::DESIGN,
        frame: frame_metrics(matrix).ok(),
    };
    Ok((evaluation, effective))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub trials: usize,
    pub nodes: usize,
    pub injecting_nodes: usize,
    pub empirical_d_fc: f64,
    pub empirical_d_ev: f64,
    pub predicted_d_fc: f64,
    pub predicted_d_ev: f64,
    pub auc_fc: f64,
    pub auc_ev: f64,
    pub pd_fc_at_pfa_0_1: f64,
    pub pd_ev_at_pfa_0_1: f64,
}

impl From<&RocResult> for SimulationSummary {
    fn from(r: &RocResult) -> Self {
        Self {
            trials: r.trials,
            nodes: r.nodes,
            injecting_nodes: r.injecting_nodes,
            empirical_d_fc: r.empirical_d_fc,
            empirical_d_ev: r.empirical_d_ev,
            predicted_d_fc: r.predicted_d_fc,
            predicted_d_ev: r.predicted_d_ev,
            auc_fc: r.auc_fc,
            auc_ev: r.auc_ev,
            pd_fc_at_pfa_0_1: r.pd_at_pfa(Detector::FusionCenter, 0.1),
            pd_ev_at_pfa_0_1: r.pd_at_pfa(Detector::Eavesdropper, 0.1),
        }
    }
}

pub fn simulation_config(
    config: &ExperimentConfig,
    matrix: &MeasurementMatrix,
    signal: DVector<f64>,
) -> SimulationConfig {
    SimulationConfig {
        nodes: config.nodes,
        matrix: matrix.clone(),
        signal,
        sigma2: config.scenario.sigma2(),
        profile: *config.scenario.profile(),
        trials: config.simulation.trials,
        seed: derive_seed(config.seed, SEED_SIMULATION),
        thresholds: config.simulation.thresholds.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub theta: Option<f64>,
    pub achieved_delta: Option<f64>,
    pub d_fc: Option<f64>,
    pub d_ev: Option<f64>,
    pub constraint_ok: Option<bool>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.param.name(),
            r.value,
            opt(r.theta),
            opt(r.achieved_delta),
            opt(r.d_fc),
            opt(r.d_ev),
            r.constraint_ok.map(|b| b.to_string()).unwrap_or_default(),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    out
}

/// Machine-readable record of one command.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub command: Command,
    pub config: ExperimentConfig,
    pub run_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepRow>>,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

fn report_name(command: Command) -> &'static str {
    match command {
        Command::Design => "design_report.json",
        Command::Evaluate => "evaluate_report.json",
        Command::Simulate => "simulate_report.json",
        Command::Sweep => "sweep_report.json",
    }
}

/// Runs one command end to end and writes its artifacts.
pub fn execute(inv: &Invocation) -> Result<ExperimentReport, CliError> {
    let mut config = ExperimentConfig::load(&inv.config)?;
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    if let Some(out) = &inv.out {
        config.out = out.clone();
    }
    if inv.sweep_param.is_some() || inv.sweep_values.is_some() {
        let base = config.sweep.clone();
        let param = inv
            .sweep_param
            .or(base.as_ref().map(|s| s.param))
            .ok_or_else(|| CliError::Config("--values needs --param or a sweep section".into()))?;
        let values = inv
            .sweep_values
            .clone()
            .or(base.as_ref().map(|s| s.values.clone()))
            .ok_or_else(|| CliError::Config("--param needs --values or a sweep section".into()))?;
        config.sweep = Some(SweepSpec {
            param,
            values,
            simulate: base.is_some_and(|s| s.simulate),
        });
    }
    config.validate()?;
    let base_dir = inv
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let matrix_text = match &inv.matrix {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?),
        None => None,
    };
    let mut hashed = config.clone();
    hashed.out = PathBuf::new();
    let hash = content_hash(&[
        hashed.to_json().as_bytes(),
        matrix_text.as_deref().unwrap_or("").as_bytes(),
    ]);
    let run = RunDir::create(&config.out, &hash, config.seed)?;
    let mut timer = Timer(BTreeMap::new());
    let mut artifacts = BTreeMap::new();
    let inputs = timer.time("inputs", || resolve_inputs(&config, &base_dir))?;

    let supplied = match &matrix_text {
        Some(text) => Some(MeasurementMatrix::new(parse_matrix(text)?)?),
        None => None,
    };

    let mut report = ExperimentReport {
        command: inv.command,
        config: config.clone(),
        run_dir: run.path().to_path_buf(),
        design: None,
        evaluation: None,
        simulation: None,
        sweep: None,
        artifacts: BTreeMap::new(),
        timings_ms: BTreeMap::new(),
    };

    // design, and simulate without a matrix, start from a fresh design.
    let designed = match (inv.command, &supplied) {
        (Command::Design, _) | (Command::Simulate, None) => {
            let outcome = timer.time("design", || run_design(&config, &inputs))?;
            let text = format_matrix(outcome.matrix.as_matrix());
            artifacts.insert("matrix".into(), run.write_artifact(MATRIX_FILE, &text)?);
            let mut resolved = config.clone();
            resolved.attenuation = Some(design_attenuation(&outcome));
            resolved.sweep = None;
            artifacts.insert(
                "resolved_config".into(),
                run.write_artifact(RESOLVED_CONFIG_FILE, &resolved.to_json())?,
            );
            // Evaluate what was written, not the in-memory matrix.
            let matrix = MeasurementMatrix::new(parse_matrix(&text)?)?;
            Some((outcome, matrix))
        }
        _ => None,
    };

    match inv.command {
        Command::Design => {
            let (outcome, matrix) = designed.expect("designed above");
            let attenuation = design_attenuation(&outcome);
            let (evaluation, _) = timer.time("evaluate", || {
                evaluate(&config, &inputs, &matrix, attenuation)
            })?;
            report.design = Some(outcome);
            report.evaluation = Some(evaluation);
        }
        Command::Evaluate => {
            let matrix =
                supplied.ok_or_else(|| CliError::Config("evaluate needs --matrix".into()))?;
            let attenuation = config.attenuation.unwrap_or(1.0);
            let (evaluation, _) = timer.time("evaluate", || {
                evaluate(&config, &inputs, &matrix, attenuation)
            })?;
            report.evaluation = Some(evaluation);
        }
        Command::Simulate => {
            let (matrix, attenuation) = match (supplied, designed) {
                (Some(m), _) => (m, config.attenuation.unwrap_or(1.0)),
                (None, Some((outcome, m))) => {
                    let a = design_attenuation(&outcome);
                    report.design = Some(outcome);
                    (m, a)
                }
                (None, None) => unreachable!("simulate designs when no matrix is given"),
            };
            let (evaluation, signal) = timer.time("evaluate", || {
                evaluate(&config, &inputs, &matrix, attenuation)
            })?;
            let sim = simulation_config(&config, &matrix, signal);
            let roc = timer.time("simulate", || roc_curve(&sim))?;
            artifacts.insert("roc".into(), run.write_artifact(ROC_FILE, &roc.to_csv())?);
            report.evaluation = Some(evaluation);
            report.simulation = Some(SimulationSummary::from(&roc));
        }
        Command::Sweep => {
            let spec = config.sweep.clone().ok_or_else(|| {
                CliError::Config("sweep needs a sweep section or --param/--values".into())
            })?;
            let rows = timer.time("sweep", || run_sweep(&config, &inputs, &spec, &run))?;
            for (i, r) in rows.iter().enumerate() {
                if r.simulation.is_some() {
                    artifacts.insert(format!("roc_{i:03}"), run.path().join(roc_point_file(i)));
                }
            }
            artifacts.insert(
                "sweep".into(),
                run.write_artifact(SWEEP_FILE, &sweep_csv(&rows))?,
            );
            report.sweep = Some(rows);
        }
    }

    report.artifacts = artifacts;
    report.timings_ms = timer.0;
    let path = run.path().join(report_name(inv.command));
    report.artifacts.insert("report".into(), path);
    run.write_report(report_name(inv.command), &report.to_json())?;
    Ok(report)
}

fn roc_point_file(index: usize) -> String {
    format!("roc_{index:03}.csv")
}

/// One design + evaluate (+ simulate) per value, in parallel, rows in input
/// order. Point failures become rows with an error message.
pub fn run_sweep(
    config: &ExperimentConfig,
    inputs: &Inputs,
    spec: &SweepSpec,
    run: &RunDir,
) -> Result<Vec<SweepRow>, CliError> {
    let results: Vec<(SweepRow, Option<String>)> = spec
        .values
        .par_iter()
        .map(|&value| {
            let mut row = SweepRow {
                param: spec.param,
                value,
                theta: None,
                achieved_delta: None,
                d_fc: None,
                d_ev: None,
                constraint_ok: None,
                error: None,
                simulation: None,
            };
            match sweep_point(config, inputs, spec, &mut row) {
                Ok(csv) => (row, csv),
                Err(e) => {
                    row.error = Some(format!("{}: {e}", e.kind()));
                    (row, None)
                }
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for (index, (row, csv)) in results.into_iter().enumerate() {
        if let Some(csv) = csv {
            run.write_artifact(&roc_point_file(index), &csv)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn sweep_point(
    config: &ExperimentConfig,
    inputs: &Inputs,
    spec: &SweepSpec,
    row: &mut SweepRow,
) -> Result<Option<String>, CliError> {
    let cfg = config.with_param(spec.param, row.value)?;
    let outcome = run_design(&cfg, inputs)?;
    let attenuation = design_attenuation(&outcome);
    let (evaluation, signal) = evaluate(&cfg, inputs, &outcome.matrix, attenuation)?;
    row.theta = Some(outcome.theta);
    row.achieved_delta = Some(evaluation.capture);
    row.d_fc = Some(evaluation.d_fc);
    row.d_ev = Some(evaluation.d_ev);
    row.constraint_ok = Some(evaluation.constraint_ok);
    if !spec.simulate {
        return Ok(None);
    }
    let roc = roc_curve(&simulation_config(&cfg, &outcome.matrix, signal))?;
    row.simulation = Some(SimulationSummary::from(&roc));
    Ok(Some(roc.to_csv()))
}
