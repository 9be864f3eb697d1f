//! Scenario orchestration: assemble, solve kernels, build gains, simulate, diagnose, write.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hyperbolic_backstepping::backstepping::{
    assemble_direct_kernel_problem, assemble_inverse_kernel_problem, assemble_q0_kernel_problem,
    build_linear_spec, check_natural_compatibility, init_extension, inverse_transform, ControllerGains,
    CoordinateScaling, VolterraTransform, Q_MIN,
};
use hyperbolic_backstepping::diagnostics::{fit_decay_rate, lyapunov_v1, v1_series, write_diagnostics_csv, LyapunovWeights};
use hyperbolic_backstepping::goursat::{picard_solve, GoursatProblem, KernelSet, PicardOptions, SubSamples};
use hyperbolic_backstepping::model::{
    scalar_fn, LinearSystemSpec, MatrixFn, NormRecord, QuasilinearSystemSpec, ScalarFn, SimulationTrace,
    StateField, TriangularGrid, VectorFn,
};
use hyperbolic_backstepping::simulator::{
    simulate_linear, simulate_quasilinear, write_state_csv, write_trace_csv, SchemeConfig, TargetSolution,
};
use hyperbolic_backstepping::Error;
use thiserror::Error as ThisError;

use crate::config::{ConfigError, Horizon, InitCoordinates, ScenarioConfig, SystemConfig};
use crate::expr::{Env, Expr};

/// Natural compatibility residuals above this are reported as a note.
pub const COMPATIBILITY_NOTE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    KernelAssembly,
    KernelSolve,
    Gains,
    Simulation,
    Diagnostics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::KernelAssembly => "kernel-assembly",
            Stage::KernelSolve => "kernel-solve",
            Stage::Gains => "gains",
            Stage::Simulation => "simulation",
            Stage::Diagnostics => "diagnostics",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, ThisError)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{source}")]
    Numerical {
        stage: Stage,
        #[source]
        source: Error,
    },
    #[error("{path}: {source}")]
    Io {
        stage: Stage,
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Variant name of a library error.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::GridTooCoarse { .. } => "GridTooCoarse",
        Error::NonPositiveSpeed { .. } => "NonPositiveSpeed",
        Error::NonFiniteCoefficient { .. } => "NonFiniteCoefficient",
        Error::HyperbolicityViolation { .. } => "HyperbolicityViolation",
        Error::NotAnEquilibrium(_) => "NotAnEquilibrium",
        Error::QNearZero { .. } => "QNearZero",
        Error::NoConvergence { .. } => "NoConvergence",
        Error::DegenerateRates { .. } => "DegenerateRates",
        Error::UnstableStep { .. } => "UnstableStep",
        Error::HyperbolicitySignChange { .. } => "HyperbolicitySignChange",
        Error::SmallDenominator { .. } => "SmallDenominator",
        Error::NonPositiveNorm { .. } => "NonPositiveNorm",
        Error::LinearizationMismatch { .. } => "LinearizationMismatch",
        Error::InvalidArgument(_) => "InvalidArgument",
    }
}

impl RunError {
    pub fn stage(&self) -> Stage {
        match self {
            RunError::Config(_) => Stage::Config,
            RunError::Numerical { stage, .. } | RunError::Io { stage, .. } => *stage,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(e) => e.kind(),
            RunError::Numerical { source, .. } => error_kind(source),
            RunError::Io { .. } => "Io",
        }
    }

    /// 2 for configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io { stage: Stage::Config, .. } => 2,
            _ => 3,
        }
    }

    /// One line, `error stage=<stage> kind=<variant> message="<text>"`.
    pub fn machine_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"");
        format!("error stage={} kind={} message=\"{}\"", self.stage(), self.kind(), msg)
    }
}

fn at(stage: Stage) -> impl Fn(Error) -> RunError {
    move |source| RunError::Numerical { stage, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stop after the kernels are solved and written.
    SolveKernels,
    Simulate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub norm: &'static str,
    pub window: (f64, f64),
    pub rate: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub kind: String,
    pub t_f: f64,
    pub picard_iterations: Option<usize>,
    pub picard_final_increment: Option<f64>,
    pub final_time: Option<f64>,
    pub final_norms: Option<NormRecord>,
    pub fit: Option<DecayFit>,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind = {}", self.kind)?;
        writeln!(f, "t_F = {:?}", self.t_f)?;
        if let Some(it) = self.picard_iterations {
            writeln!(f, "picard_iterations = {it}")?;
        }
        if let Some(inc) = self.picard_final_increment {
            writeln!(f, "picard_final_increment = {inc:e}")?;
        }
        if let Some(t) = self.final_time {
            writeln!(f, "final_time = {t:?}")?;
        }
        if let Some(n) = &self.final_norms {
            writeln!(f, "final_L2 = {:e}", n.l2)?;
            writeln!(f, "final_H1 = {:e}", n.h1)?;
            writeln!(f, "final_H2 = {:e}", n.h2)?;
            writeln!(f, "final_sup = {:e}", n.sup)?;
        }
        if let Some(fit) = &self.fit {
            writeln!(f, "fitted_rate_norm = {}", fit.norm)?;
            writeln!(f, "fitted_rate_window = {:?},{:?}", fit.window.0, fit.window.1)?;
            writeln!(f, "fitted_rate = {:?}", fit.rate)?;
            writeln!(f, "fitted_r2 = {:?}", fit.r2)?;
        }
        for p in &self.files {
            writeln!(f, "wrote = {}", p.display())?;
        }
        for n in &self.notes {
            writeln!(f, "note = {n}")?;
        }
        Ok(())
    }
}

fn x_fn(e: &Expr) -> ScalarFn {
    let e = e.clone();
    scalar_fn(move |x| e.eval_or_nan(&Env::x(x)))
}

fn linear_spec(eps1: &Expr, eps2: &Expr, c1: Option<&Expr>, c2: Option<&Expr>, q: f64) -> Result<LinearSystemSpec, RunError> {
    let zero = Expr::Num(0.0);
    LinearSystemSpec::new(
        x_fn(eps1),
        x_fn(eps2),
        x_fn(c1.unwrap_or(&zero)),
        x_fn(c2.unwrap_or(&zero)),
        q,
    )
    .map_err(at(Stage::KernelAssembly))
}

fn quasilinear_spec(lambda: &[Expr; 4], f1: &Expr, f2: &Expr, g0: &Expr) -> Result<QuasilinearSystemSpec, RunError> {
    let l = lambda.clone();
    let lam: MatrixFn = Arc::new(move |z, x| {
        let env = Env { x, z1: z[0], z2: z[1] };
        [
            [l[0].eval_or_nan(&env), l[1].eval_or_nan(&env)],
            [l[2].eval_or_nan(&env), l[3].eval_or_nan(&env)],
        ]
    });
    let (f1, f2) = (f1.clone(), f2.clone());
    let f: VectorFn = Arc::new(move |z, x| {
        let env = Env { x, z1: z[0], z2: z[1] };
        [f1.eval_or_nan(&env), f2.eval_or_nan(&env)]
    });
    let g0 = g0.clone();
    let g: ScalarFn = scalar_fn(move |v| g0.eval_or_nan(&Env { z2: v, ..Env::default() }));
    QuasilinearSystemSpec::new(lam, f, g).map_err(at(Stage::KernelAssembly))
}

fn picard_options(cfg: &ScenarioConfig) -> PicardOptions {
    PicardOptions {
        tol: cfg.kernel.tol,
        max_iter: cfg.kernel.max_iter,
        sub_samples: cfg.kernel.sub_samples.map_or(SubSamples::GridMatched, SubSamples::AtLeast),
        ..PicardOptions::default()
    }
}

fn solve(p: &GoursatProblem, n: usize, opts: PicardOptions) -> Result<KernelSet, RunError> {
    let grid = TriangularGrid::new(n).map_err(at(Stage::KernelSolve))?;
    picard_solve(p, grid, opts).map_err(at(Stage::KernelSolve))
}

fn horizon(cfg: &ScenarioConfig, t_f: f64) -> f64 {
    match cfg.scheme.horizon {
        Horizon::Absolute(t) => t,
        Horizon::Relative(k) => k * t_f,
    }
}

fn scheme(cfg: &ScenarioConfig, t_end: f64) -> Result<SchemeConfig, RunError> {
    SchemeConfig::new(cfg.scheme.m, cfg.scheme.cfl, t_end, cfg.scheme.stride).map_err(at(Stage::Simulation))
}

fn initial_field(cfg: &ScenarioConfig) -> Result<StateField, RunError> {
    let (a, b) = (x_fn(&cfg.scheme.init1), x_fn(&cfg.scheme.init2));
    StateField::from_fns(cfg.scheme.m, |x| a(x), |x| b(x)).map_err(at(Stage::Simulation))
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let err = |source| RunError::Io {
            stage: Stage::Output,
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(err)?;
        let mut out = BufWriter::new(File::create(&path).map_err(err)?);
        body(&mut out).map_err(err)?;
        out.flush().map_err(err)?;
        self.files.push(path);
        Ok(())
    }
}

/// `V1` of the direct-transformed snapshots, with a one-sample trailing rate.
fn v1_rows(
    sys: &LinearSystemSpec,
    cfg: &ScenarioConfig,
    trace: &SimulationTrace,
    transform: Option<&VolterraTransform>,
    scaling: &CoordinateScaling,
) -> Result<Vec<(f64, f64, Option<f64>)>, RunError> {
    let weights =
        LyapunovWeights::from_rates(sys, cfg.control.lambda1, cfg.control.lambda2).map_err(at(Stage::Diagnostics))?;
    let mut v1 = Vec::with_capacity(trace.len());
    for s in &trace.snapshots {
        let w = StateField::new(
            (0..s.m()).map(|k| scaling.phi1(s.x(k)) * s.first()[k]).collect(),
            (0..s.m()).map(|k| scaling.phi2(s.x(k)) * s.second()[k]).collect(),
        )
        .map_err(at(Stage::Diagnostics))?;
        let gamma = match transform {
            Some(t) => t.apply(&w).map_err(at(Stage::Diagnostics))?,
            None => w,
        };
        v1.push(lyapunov_v1(&weights, sys, &gamma));
    }
    Ok(v1_series(&trace.times, &v1, 1))
}

fn decay_fit(trace: &SimulationTrace, norm: &'static str, window: (f64, f64), notes: &mut Vec<String>) -> Option<DecayFit> {
    let values: Vec<f64> = trace
        .norms
        .iter()
        .map(|n| if norm == "H2" { n.h2 } else { n.l2 })
        .collect();
    match fit_decay_rate(&trace.times, &values, window.0, window.1) {
        Ok((rate, r2)) => Some(DecayFit { norm, window, rate, r2 }),
        Err(e) => {
            notes.push(format!("no decay fit: {e}"));
            None
        }
    }
}

fn finish_summary(summary: &mut Summary, trace: &SimulationTrace) {
    summary.final_time = trace.times.last().copied();
    summary.final_norms = trace.norms.last().copied();
}

/// Runs the pipeline described by `cfg`, writes its CSV outputs and returns the summary.
pub fn run_scenario(cfg: &ScenarioConfig, mode: Mode, overrides: &Overrides) -> Result<Summary, RunError> {
    let n = overrides.grid_n.unwrap_or(cfg.kernel.n);
    let mut writer = Writer::new(overrides.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone()));
    let mut summary = Summary {
        kind: cfg.system.kind().to_string(),
        ..Summary::default()
    };
    match &cfg.system {
        SystemConfig::Linear { eps1, eps2, c1, c2, q } => {
            let sys = linear_spec(eps1, eps2, Some(c1), Some(c2), *q)?;
            summary.t_f = TargetSolution::new(&sys).map_err(at(Stage::KernelAssembly))?.t_f();
            run_linear(cfg, mode, n, &sys, &mut writer, &mut summary)?;
        }
        SystemConfig::Quasilinear { lambda, f1, f2, g0 } => {
            let q = quasilinear_spec(lambda, f1, f2, g0)?;
            run_quasilinear(cfg, mode, n, &q, &mut writer, &mut summary)?;
        }
        SystemConfig::TargetExact { eps1, eps2, q } => {
            if mode == Mode::SolveKernels {
                return Err(ConfigError::InvalidValue {
                    key: "system.kind".into(),
                    msg: "target-exact scenarios have no kernels to solve".into(),
                }
                .into());
            }
            let sys = linear_spec(eps1, eps2, None, None, *q)?;
            run_target(cfg, &sys, &mut writer, &mut summary)?;
        }
    }
    summary.files = writer.files;
    Ok(summary)
}

fn run_linear(
    cfg: &ScenarioConfig,
    mode: Mode,
    n: usize,
    sys: &LinearSystemSpec,
    writer: &mut Writer,
    summary: &mut Summary,
) -> Result<(), RunError> {
    let q0_branch = sys.q().abs() < Q_MIN;
    let target_init = cfg.scheme.init_coordinates == InitCoordinates::Target;
    let (problem, inverse_problem) = if q0_branch {
        if target_init {
            return Err(RunError::Numerical {
                stage: Stage::KernelAssembly,
                source: Error::InvalidArgument("init_coordinates = target needs a nonzero q".into()),
            });
        }
        let h_free = cfg.control.h_free.as_ref().map(x_fn);
        summary
            .notes
            .push("q below threshold: kernels from the zero-reflection problem".into());
        (assemble_q0_kernel_problem(sys, h_free).problem, None)
    } else {
        let inv = target_init
            .then(|| assemble_inverse_kernel_problem(sys))
            .transpose()
            .map_err(at(Stage::KernelAssembly))?;
        (assemble_direct_kernel_problem(sys).map_err(at(Stage::KernelAssembly))?, inv)
    };
    let opts = picard_options(cfg);
    let k = solve(&problem, n, opts)?;
    summary.picard_iterations = Some(k.iterations);
    summary.picard_final_increment = Some(k.final_increment);
    let l = inverse_problem.map(|p| solve(&p, n, opts)).transpose()?;
    if mode == Mode::SolveKernels {
        writer.write(&cfg.output.kernels, |o| k.write_csv(o))?;
        return Ok(());
    }

    let m = cfg.scheme.m;
    let gains = ControllerGains::from_kernels(&k, m).map_err(at(Stage::Gains))?;
    let sch = scheme(cfg, horizon(cfg, summary.t_f))?;
    let init = initial_field(cfg)?;
    let w0 = match &l {
        Some(l) => inverse_transform(l, &init).map_err(at(Stage::Simulation))?,
        None => init,
    };
    let trace = simulate_linear(sys, cfg.control.closed_loop.then_some(&gains), &w0, &sch).map_err(at(Stage::Simulation))?;

    let transform = VolterraTransform::direct(&k, m).map_err(at(Stage::Diagnostics))?;
    let rows = v1_rows(sys, cfg, &trace, Some(&transform), &CoordinateScaling::identity())?;
    let window = cfg.control.fit_window.unwrap_or((0.0, summary.t_f.min(sch.t_end)));
    summary.fit = decay_fit(&trace, "L2", window, &mut summary.notes);
    finish_summary(summary, &trace);

    writer.write(&cfg.output.kernels, |o| k.write_csv(o))?;
    writer.write(&cfg.output.gains, |o| gains.write_csv(o))?;
    writer.write(&cfg.output.trace, |o| write_trace_csv(&trace, o))?;
    writer.write(&cfg.output.diagnostics, |o| write_diagnostics_csv(&rows, o))?;
    if let Some(last) = trace.snapshots.last() {
        writer.write(&cfg.output.final_state, |o| write_state_csv(last, o))?;
    }
    Ok(())
}

fn run_quasilinear(
    cfg: &ScenarioConfig,
    mode: Mode,
    n: usize,
    q: &QuasilinearSystemSpec,
    writer: &mut Writer,
    summary: &mut Summary,
) -> Result<(), RunError> {
    let plant = build_linear_spec(q).map_err(at(Stage::KernelAssembly))?;
    let sys = &plant.linear;
    summary.t_f = TargetSolution::new(sys).map_err(at(Stage::KernelAssembly))?.t_f();
    let problem = assemble_direct_kernel_problem(sys).map_err(at(Stage::KernelAssembly))?;
    let k = solve(&problem, n, picard_options(cfg))?;
    summary.picard_iterations = Some(k.iterations);
    summary.picard_final_increment = Some(k.final_increment);
    if mode == Mode::SolveKernels {
        writer.write(&cfg.output.kernels, |o| k.write_csv(o))?;
        return Ok(());
    }

    let m = cfg.scheme.m;
    let gains = ControllerGains::with_scaling(&k, m, &plant.scaling).map_err(at(Stage::Gains))?;
    let z0 = initial_field(cfg)?;
    let (r0, r1) = check_natural_compatibility(q, &z0).map_err(at(Stage::Gains))?;
    if r0.max(r1) > COMPATIBILITY_NOTE_TOL {
        summary.notes.push(format!(
            "initial data violate the boundary compatibility at x = 0: residuals {r0:e}, {r1:e}"
        ));
    }
    // Presence of both rates is checked by the parser for quasilinear scenarios.
    let (d1, d2) = (cfg.control.d1.unwrap_or(1.0), cfg.control.d2.unwrap_or(2.0));
    let ext = init_extension(q, &gains, &z0, d1, d2).map_err(at(Stage::Gains))?;
    let sch = scheme(cfg, horizon(cfg, summary.t_f))?;
    let trace = simulate_quasilinear(q, &gains, &ext, &z0, &sch).map_err(at(Stage::Simulation))?;

    let transform = VolterraTransform::direct(&k, m).map_err(at(Stage::Diagnostics))?;
    let rows = v1_rows(sys, cfg, &trace, Some(&transform), &plant.scaling)?;
    let window = cfg
        .control
        .fit_window
        .unwrap_or((summary.t_f, (3.0 * summary.t_f).min(sch.t_end)));
    summary.fit = decay_fit(&trace, "H2", window, &mut summary.notes);
    finish_summary(summary, &trace);

    writer.write(&cfg.output.kernels, |o| k.write_csv(o))?;
    writer.write(&cfg.output.gains, |o| gains.write_csv(o))?;
    writer.write(&cfg.output.trace, |o| write_trace_csv(&trace, o))?;
    writer.write(&cfg.output.diagnostics, |o| write_diagnostics_csv(&rows, o))?;
    if let Some(last) = trace.snapshots.last() {
        writer.write(&cfg.output.final_state, |o| write_state_csv(last, o))?;
    }
    Ok(())
}

/// Samples the explicit target solution at the times the upwind scheme would visit.
fn run_target(cfg: &ScenarioConfig, sys: &LinearSystemSpec, writer: &mut Writer, summary: &mut Summary) -> Result<(), RunError> {
    let target = TargetSolution::new(sys).map_err(at(Stage::KernelAssembly))?;
    summary.t_f = target.t_f();
    let sch = scheme(cfg, horizon(cfg, summary.t_f))?;
    let (a0, b0) = (x_fn(&cfg.scheme.init1), x_fn(&cfg.scheme.init2));
    let v_max = (0..=200)
        .map(|k| k as f64 / 200.0)
        .fold(0.0f64, |acc, x| acc.max(sys.eps1(x)).max(sys.eps2(x)));
    let dt = sch.cfl * sch.h() / v_max;
    let steps = (sch.t_end / dt).ceil().max(0.0) as usize;
    let mut trace = SimulationTrace::default();
    for step in 0..=steps {
        if step % sch.snapshot_stride != 0 && step != steps {
            continue;
        }
        let t = (step as f64 * dt).min(sch.t_end);
        if trace.times.last().is_some_and(|&last| t <= last) {
            continue;
        }
        let s = target.field(&|x| a0(x), &|x| b0(x), sch.m, t).map_err(at(Stage::Simulation))?;
        let u = s.second()[sch.m - 1];
        trace.push(t, s, 0.0, 0.0, u).map_err(at(Stage::Simulation))?;
    }
    let rows = v1_rows(sys, cfg, &trace, None, &CoordinateScaling::identity())?;
    let window = cfg.control.fit_window.unwrap_or((0.0, 0.9 * summary.t_f.min(sch.t_end)));
    summary.fit = decay_fit(&trace, "L2", window, &mut summary.notes);
    finish_summary(summary, &trace);

    writer.write(&cfg.output.trace, |o| write_trace_csv(&trace, o))?;
    writer.write(&cfg.output.diagnostics, |o| write_diagnostics_csv(&rows, o))?;
    if let Some(last) = trace.snapshots.last() {
        writer.write(&cfg.output.final_state, |o| write_state_csv(last, o))?;
    }
    Ok(())
}

/// Reads a configuration file; I/O failures count as configuration errors.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io {
        stage: Stage::Config,
        path: path.to_path_buf(),
        source,
    })?;
    Ok(ScenarioConfig::parse(&text)?)
}

/// Summary of a trace CSV written by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub rows: usize,
    pub t_first: f64,
    pub t_last: f64,
    pub first: [f64; 4],
    pub last: [f64; 4],
    pub l2_fit: Option<(f64, f64)>,
    pub h2_fit: Option<(f64, f64)>,
}

const NORM_NAMES: [&str; 4] = ["L2", "H1", "H2", "sup"];

impl fmt::Display for TraceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows = {}", self.rows)?;
        writeln!(f, "t_range = {:?},{:?}", self.t_first, self.t_last)?;
        for (k, name) in NORM_NAMES.iter().enumerate() {
            writeln!(f, "{name}_first = {:e}", self.first[k])?;
            writeln!(f, "{name}_last = {:e}", self.last[k])?;
        }
        for (name, fit) in [("L2", self.l2_fit), ("H2", self.h2_fit)] {
            match fit {
                Some((rate, r2)) => writeln!(f, "{name}_rate = {rate:?} (r2 = {r2:?})")?,
                None => writeln!(f, "{name}_rate = n/a")?,
            }
        }
        Ok(())
    }
}

/// Parses the `t,L2,H1,H2,sup,a,b,U` table and fits decay rates over its whole span.
pub fn report_trace(text: &str) -> Result<TraceReport, ConfigError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != "t,L2,H1,H2,sup,a,b,U" {
        return Err(ConfigError::Syntax {
            line: 1,
            msg: format!("expected header `t,L2,H1,H2,sup,a,b,U`, found `{header}`"),
        });
    }
    let mut times = Vec::new();
    let mut norms: [Vec<f64>; 4] = Default::default();
    for (idx, line) in lines {
        let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let vals = match vals {
            Ok(v) if v.len() == 8 => v,
            _ => {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    msg: "expected 8 numeric columns".into(),
                })
            }
        };
        times.push(vals[0]);
        for k in 0..4 {
            norms[k].push(vals[k + 1]);
        }
    }
    if times.is_empty() {
        return Err(ConfigError::Syntax {
            line: 2,
            msg: "trace has no rows".into(),
        });
    }
    let (t0, t1) = (times[0], *times.last().unwrap());
    let fit = |v: &[f64]| fit_decay_rate(&times, v, t0, t1).ok();
    Ok(TraceReport {
        rows: times.len(),
        t_first: t0,
        t_last: t1,
        first: std::array::from_fn(|k| norms[k][0]),
        last: std::array::from_fn(|k| *norms[k].last().unwrap()),
        l2_fit: fit(&norms[0]),
        h2_fit: fit(&norms[2]),
    })
}
