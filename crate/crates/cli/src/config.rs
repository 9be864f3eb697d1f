//! Scenario configuration: flat `key = value` lines grouped under section headers.
//!
//! ```text
//! # comment
//! [system]
//! kind = linear
//! eps1 = 1
//! ```
//!
//! Expression keys accept the grammar of [`crate::expr`]. Unknown sections and keys are
//! rejected so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::expr::{parse_expression, Env, Expr, ExprError, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{key}`: {msg}")]
    InvalidValue { key: String, msg: String },
    #[error("field `{key}`: {source}")]
    Expression { key: String, source: ExprError },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("decay rates must be positive and distinct: d1 = {d1}, d2 = {d2}")]
    DegenerateRates { d1: f64, d2: f64 },
    #[error("field `{key}` is not positive at x = {x}: value {value}")]
    NonPositiveSpeed { key: String, x: f64, value: f64 },
    #[error("field `{key}` is not finite at x = {x}")]
    NonFiniteValue { key: String, x: f64 },
}

impl ConfigError {
    /// Variant name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "Syntax",
            ConfigError::MissingField(_) => "MissingField",
            ConfigError::InvalidValue { .. } => "InvalidValue",
            ConfigError::Expression {
                source: ExprError::SyntaxError(..),
                ..
            } => "SyntaxError",
            ConfigError::Expression {
                source: ExprError::UnknownIdentifier(_),
                ..
            } => "UnknownIdentifier",
            ConfigError::UnknownField(_) => "UnknownField",
            ConfigError::DegenerateRates { .. } => "DegenerateRates",
            ConfigError::NonPositiveSpeed { .. } => "NonPositiveSpeed",
            ConfigError::NonFiniteValue { .. } => "NonFiniteValue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Linear,
    Quasilinear,
    TargetExact,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Linear => "linear",
            ScenarioKind::Quasilinear => "quasilinear",
            ScenarioKind::TargetExact => "target-exact",
        })
    }
}

/// Which coordinates `init1`, `init2` describe for a linear run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitCoordinates {
    Plant,
    Target,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemConfig {
    Linear {
        eps1: Expr,
        eps2: Expr,
        c1: Expr,
        c2: Expr,
        q: f64,
    },
    Quasilinear {
        /// Row-major entries of Λ(z, x).
        lambda: [Expr; 4],
        f1: Expr,
        f2: Expr,
        g0: Expr,
    },
    TargetExact {
        eps1: Expr,
        eps2: Expr,
        q: f64,
    },
}

impl SystemConfig {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            SystemConfig::Linear { .. } => ScenarioKind::Linear,
            SystemConfig::Quasilinear { .. } => ScenarioKind::Quasilinear,
            SystemConfig::TargetExact { .. } => ScenarioKind::TargetExact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub n: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub sub_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Absolute(f64),
    /// Multiple of the finite-time horizon of the target system.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSection {
    pub m: usize,
    pub cfl: f64,
    pub horizon: Horizon,
    pub stride: usize,
    pub init1: Expr,
    pub init2: Expr,
    pub init_coordinates: InitCoordinates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub closed_loop: bool,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub h_free: Option<Expr>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub fit_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub kernels: String,
    pub gains: String,
    pub trace: String,
    pub diagnostics: String,
    pub final_state: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub kernel: KernelConfig,
    pub scheme: SchemeSection,
    pub control: ControlConfig,
    pub output: OutputConfig,
}

const SECTIONS: [&str; 5] = ["system", "kernel", "scheme", "control", "output"];

const KNOWN_KEYS: &[&str] = &[
    "system.kind",
    "system.eps1",
    "system.eps2",
    "system.c1",
    "system.c2",
    "system.q",
    "system.lambda11",
    "system.lambda12",
    "system.lambda21",
    "system.lambda22",
    "system.f1",
    "system.f2",
    "system.g0",
    "kernel.n",
    "kernel.tol",
    "kernel.max_iter",
    "kernel.sub_samples",
    "scheme.m",
    "scheme.cfl",
    "scheme.t_end",
    "scheme.t_end_tf",
    "scheme.stride",
    "scheme.init1",
    "scheme.init2",
    "scheme.init_coordinates",
    "control.feedback",
    "control.d1",
    "control.d2",
    "control.h_free",
    "control.lambda1",
    "control.lambda2",
    "control.fit_start",
    "control.fit_end",
    "output.dir",
    "output.kernels",
    "output.gains",
    "output.trace",
    "output.diagnostics",
    "output.final_state",
];

/// Raw `section.key -> (line, value)` table.
fn tokenize(text: &str, errors: &mut Vec<ConfigError>) -> BTreeMap<String, (usize, String)> {
    let mut table = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                errors.push(ConfigError::Syntax {
                    line: line_no,
                    msg: "unterminated section header".into(),
                });
                continue;
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                errors.push(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("unknown section `[{name}]`"),
                });
                section = None;
                continue;
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError::Syntax {
                line: line_no,
                msg: "expected `key = value`".into(),
            });
            continue;
        };
        let Some(sec) = &section else {
            errors.push(ConfigError::Syntax {
                line: line_no,
                msg: "key outside of a section".into(),
            });
            continue;
        };
        let full = format!("{sec}.{}", key.trim());
        if !KNOWN_KEYS.contains(&full.as_str()) {
            errors.push(ConfigError::UnknownField(full));
            continue;
        }
        if table.contains_key(&full) {
            errors.push(ConfigError::Syntax {
                line: line_no,
                msg: format!("duplicate field `{full}`"),
            });
            continue;
        }
        table.insert(full, (line_no, value.trim().to_string()));
    }
    table
}

struct Fields<'a> {
    table: &'a BTreeMap<String, (usize, String)>,
    errors: &'a mut Vec<ConfigError>,
}

impl Fields<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.table.get(key).map(|(_, v)| v.as_str())
    }

    fn require_raw(&mut self, key: &str) -> Option<String> {
        let v = self.raw(key).map(str::to_string);
        if v.is_none() {
            self.errors.push(ConfigError::MissingField(key.into()));
        }
        v
    }

    fn number(&mut self, key: &str) -> Option<f64> {
        let raw = self.raw(key)?.to_string();
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.errors.push(ConfigError::InvalidValue {
                    key: key.into(),
                    msg: format!("`{raw}` is not a finite number"),
                });
                None
            }
        }
    }

    fn integer(&mut self, key: &str) -> Option<usize> {
        let raw = self.raw(key)?.to_string();
        match raw.parse::<usize>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(ConfigError::InvalidValue {
                    key: key.into(),
                    msg: format!("`{raw}` is not a non-negative integer"),
                });
                None
            }
        }
    }

    fn expr_from(&mut self, key: &str, raw: &str, allowed: &[Var]) -> Option<Expr> {
        match parse_expression(raw) {
            Ok(e) => {
                if let Some(bad) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
                    self.errors.push(ConfigError::Expression {
                        key: key.into(),
                        source: ExprError::UnknownIdentifier(bad.name().into()),
                    });
                    return None;
                }
                Some(e)
            }
            Err(source) => {
                self.errors.push(ConfigError::Expression { key: key.into(), source });
                None
            }
        }
    }

    fn expr(&mut self, key: &str, allowed: &[Var]) -> Option<Expr> {
        let raw = self.require_raw(key)?;
        self.expr_from(key, &raw, allowed)
    }

    fn expr_or(&mut self, key: &str, default: &str, allowed: &[Var]) -> Option<Expr> {
        let raw = self.raw(key).unwrap_or(default).to_string();
        self.expr_from(key, &raw, allowed)
    }

    fn check(&mut self, key: &str, ok: bool, msg: &str) {
        if !ok {
            self.errors.push(ConfigError::InvalidValue {
                key: key.into(),
                msg: msg.into(),
            });
        }
    }
}

const X_ONLY: &[Var] = &[Var::X];
const STATE: &[Var] = &[Var::X, Var::Z1, Var::Z2];

fn parse_system(f: &mut Fields<'_>) -> Option<SystemConfig> {
    let kind = f.require_raw("system.kind")?;
    match kind.as_str() {
        "linear" => {
            let eps1 = f.expr("system.eps1", X_ONLY);
            let eps2 = f.expr("system.eps2", X_ONLY);
            let c1 = f.expr("system.c1", X_ONLY);
            let c2 = f.expr("system.c2", X_ONLY);
            if f.raw("system.q").is_none() {
                f.errors.push(ConfigError::MissingField("system.q".into()));
            }
            let q = f.number("system.q");
            Some(SystemConfig::Linear {
                eps1: eps1?,
                eps2: eps2?,
                c1: c1?,
                c2: c2?,
                q: q?,
            })
        }
        "target-exact" => {
            let eps1 = f.expr("system.eps1", X_ONLY);
            let eps2 = f.expr("system.eps2", X_ONLY);
            if f.raw("system.q").is_none() {
                f.errors.push(ConfigError::MissingField("system.q".into()));
            }
            let q = f.number("system.q");
            Some(SystemConfig::TargetExact {
                eps1: eps1?,
                eps2: eps2?,
                q: q?,
            })
        }
        "quasilinear" => {
            let l11 = f.expr("system.lambda11", STATE);
            let l12 = f.expr_or("system.lambda12", "0", STATE);
            let l21 = f.expr_or("system.lambda21", "0", STATE);
            let l22 = f.expr("system.lambda22", STATE);
            let f1 = f.expr("system.f1", STATE);
            let f2 = f.expr("system.f2", STATE);
            let g0 = f.expr("system.g0", &[Var::Z2]);
            Some(SystemConfig::Quasilinear {
                lambda: [l11?, l12?, l21?, l22?],
                f1: f1?,
                f2: f2?,
                g0: g0?,
            })
        }
        other => {
            f.errors.push(ConfigError::InvalidValue {
                key: "system.kind".into(),
                msg: format!("`{other}` is not one of linear, quasilinear, target-exact"),
            });
            None
        }
    }
}

fn parse_kernel(f: &mut Fields<'_>) -> Option<KernelConfig> {
    let n = f.integer("kernel.n").unwrap_or(101);
    f.check("kernel.n", n >= 5, "grid must have at least 5 points");
    let tol = f.number("kernel.tol").unwrap_or(1e-10);
    f.check("kernel.tol", tol > 0.0, "tolerance must be positive");
    let max_iter = f.integer("kernel.max_iter").unwrap_or(200);
    f.check("kernel.max_iter", max_iter >= 1, "need at least one iteration");
    let sub_samples = f.integer("kernel.sub_samples");
    if let Some(s) = sub_samples {
        f.check("kernel.sub_samples", s >= 4, "need at least 4 sub-samples");
    }
    Some(KernelConfig {
        n,
        tol,
        max_iter,
        sub_samples,
    })
}

fn parse_scheme(f: &mut Fields<'_>) -> Option<SchemeSection> {
    if f.raw("scheme.m").is_none() {
        f.errors.push(ConfigError::MissingField("scheme.m".into()));
    }
    let m = f.integer("scheme.m");
    if let Some(m) = m {
        f.check("scheme.m", m >= 8, "need at least 8 grid points");
    }
    let cfl = f.number("scheme.cfl").unwrap_or(0.9);
    f.check("scheme.cfl", cfl > 0.0 && cfl <= 1.0, "CFL number must lie in (0, 1]");
    let horizon = match (f.raw("scheme.t_end").is_some(), f.raw("scheme.t_end_tf").is_some()) {
        (true, false) => f.number("scheme.t_end").map(Horizon::Absolute),
        (false, true) => f.number("scheme.t_end_tf").map(Horizon::Relative),
        (false, false) => {
            f.errors.push(ConfigError::MissingField("scheme.t_end".into()));
            None
        }
        (true, true) => {
            f.errors.push(ConfigError::InvalidValue {
                key: "scheme.t_end".into(),
                msg: "give either t_end or t_end_tf, not both".into(),
            });
            None
        }
    };
    if let Some(Horizon::Absolute(t) | Horizon::Relative(t)) = horizon {
        f.check("scheme.t_end", t >= 0.0, "horizon must be non-negative");
    }
    let stride = f.integer("scheme.stride").unwrap_or(1);
    f.check("scheme.stride", stride >= 1, "stride must be at least 1");
    let init1 = f.expr("scheme.init1", X_ONLY);
    let init2 = f.expr("scheme.init2", X_ONLY);
    let init_coordinates = match f.raw("scheme.init_coordinates").unwrap_or("plant") {
        "plant" => InitCoordinates::Plant,
        "target" => InitCoordinates::Target,
        other => {
            let msg = format!("`{other}` is not one of plant, target");
            f.errors.push(ConfigError::InvalidValue {
                key: "scheme.init_coordinates".into(),
                msg,
            });
            InitCoordinates::Plant
        }
    };
    Some(SchemeSection {
        m: m?,
        cfl,
        horizon: horizon?,
        stride,
        init1: init1?,
        init2: init2?,
        init_coordinates,
    })
}

fn parse_control(f: &mut Fields<'_>) -> Option<ControlConfig> {
    let closed_loop = match f.raw("control.feedback").unwrap_or("closed") {
        "closed" => true,
        "open" => false,
        other => {
            let msg = format!("`{other}` is not one of closed, open");
            f.errors.push(ConfigError::InvalidValue {
                key: "control.feedback".into(),
                msg,
            });
            true
        }
    };
    let d1 = f.number("control.d1");
    let d2 = f.number("control.d2");
    let h_free = match f.raw("control.h_free").map(str::to_string) {
        Some(raw) => Some(f.expr_from("control.h_free", &raw, X_ONLY)?),
        None => None,
    };
    let lambda1 = f.number("control.lambda1").unwrap_or(1.0);
    let lambda2 = f.number("control.lambda2").unwrap_or(1.0);
    f.check("control.lambda1", lambda1 > 0.0, "weight rate must be positive");
    f.check("control.lambda2", lambda2 > 0.0, "weight rate must be positive");
    let fit_window = match (f.number("control.fit_start"), f.number("control.fit_end")) {
        (Some(a), Some(b)) => {
            f.check("control.fit_end", b > a && a >= 0.0, "need 0 <= fit_start < fit_end");
            Some((a, b))
        }
        (None, None) => None,
        _ => {
            f.errors.push(ConfigError::InvalidValue {
                key: "control.fit_start".into(),
                msg: "fit_start and fit_end must be given together".into(),
            });
            None
        }
    };
    Some(ControlConfig {
        closed_loop,
        d1,
        d2,
        h_free,
        lambda1,
        lambda2,
        fit_window,
    })
}

fn parse_output(f: &mut Fields<'_>) -> OutputConfig {
    let get = |key: &str, default: &str| f.raw(key).unwrap_or(default).to_string();
    OutputConfig {
        dir: PathBuf::from(get("output.dir", ".")),
        kernels: get("output.kernels", "kernels.csv"),
        gains: get("output.gains", "gains.csv"),
        trace: get("output.trace", "trace.csv"),
        diagnostics: get("output.diagnostics", "diagnostics.csv"),
        final_state: get("output.final_state", "final_state.csv"),
    }
}

/// Parses everything it can and returns all problems found along the way.
pub fn parse_collect(text: &str) -> (Option<ScenarioConfig>, Vec<ConfigError>) {
    let mut errors = Vec::new();
    let table = tokenize(text, &mut errors);
    let mut f = Fields {
        table: &table,
        errors: &mut errors,
    };
    let system = parse_system(&mut f);
    let kernel = parse_kernel(&mut f);
    let scheme = parse_scheme(&mut f);
    let control = parse_control(&mut f);
    let output = parse_output(&mut f);
    if matches!(system, Some(SystemConfig::Quasilinear { .. })) {
        for key in ["control.d1", "control.d2"] {
            if f.raw(key).is_none() {
                f.errors.push(ConfigError::MissingField(key.into()));
            }
        }
    }
    let cfg = match (system, kernel, scheme, control) {
        (Some(system), Some(kernel), Some(scheme), Some(control)) if errors.is_empty() => Some(ScenarioConfig {
            system,
            kernel,
            scheme,
            control,
            output,
        }),
        _ => None,
    };
    (cfg, errors)
}

impl ScenarioConfig {
    /// Strict parse: the first problem found is returned as the error.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (cfg, mut errors) = parse_collect(text);
        match cfg {
            Some(cfg) => Ok(cfg),
            None => Err(errors.remove(0)),
        }
    }
}

/// Number of samples used for the positivity checks.
pub const VALIDATION_SAMPLES: usize = 201;

fn sample_positive(key: &str, e: &Expr, out: &mut Vec<ConfigError>) {
    for k in 0..VALIDATION_SAMPLES {
        let x = k as f64 / (VALIDATION_SAMPLES - 1) as f64;
        match e.eval(&Env::x(x)) {
            Ok(v) if !v.is_finite() => {
                out.push(ConfigError::NonFiniteValue { key: key.into(), x });
                return;
            }
            Ok(v) if v <= 0.0 => {
                out.push(ConfigError::NonPositiveSpeed {
                    key: key.into(),
                    x,
                    value: v,
                });
                return;
            }
            Ok(_) => {}
            Err(_) => {
                out.push(ConfigError::NonFiniteValue { key: key.into(), x });
                return;
            }
        }
    }
}

fn sample_finite(key: &str, e: &Expr, out: &mut Vec<ConfigError>) {
    for k in 0..VALIDATION_SAMPLES {
        let x = k as f64 / (VALIDATION_SAMPLES - 1) as f64;
        if !e.eval(&Env::x(x)).is_ok_and(f64::is_finite) {
            out.push(ConfigError::NonFiniteValue { key: key.into(), x });
            return;
        }
    }
}

/// Full report for a configuration text: parse problems, range problems and sampled
/// positivity of the transport speeds. Empty means the configuration is usable.
pub fn validate_config(text: &str) -> Vec<ConfigError> {
    let (cfg, mut report) = parse_collect(text);
    let Some(cfg) = cfg else {
        return report;
    };
    match &cfg.system {
        SystemConfig::Linear { eps1, eps2, c1, c2, .. } => {
            sample_positive("system.eps1", eps1, &mut report);
            sample_positive("system.eps2", eps2, &mut report);
            sample_finite("system.c1", c1, &mut report);
            sample_finite("system.c2", c2, &mut report);
        }
        SystemConfig::TargetExact { eps1, eps2, .. } => {
            sample_positive("system.eps1", eps1, &mut report);
            sample_positive("system.eps2", eps2, &mut report);
        }
        SystemConfig::Quasilinear { lambda, .. } => {
            for k in 0..VALIDATION_SAMPLES {
                let x = k as f64 / (VALIDATION_SAMPLES - 1) as f64;
                let env = Env { x, z1: 0.0, z2: 0.0 };
                let l1 = lambda[0].eval(&env).unwrap_or(f64::NAN);
                let l2 = lambda[3].eval(&env).unwrap_or(f64::NAN);
                if !(l1 > 0.0) {
                    report.push(ConfigError::NonPositiveSpeed {
                        key: "system.lambda11".into(),
                        x,
                        value: l1,
                    });
                    break;
                }
                if !(-l2 > 0.0) {
                    report.push(ConfigError::NonPositiveSpeed {
                        key: "system.lambda22 (negated)".into(),
                        x,
                        value: -l2,
                    });
                    break;
                }
            }
        }
    }
    sample_finite("scheme.init1", &cfg.scheme.init1, &mut report);
    sample_finite("scheme.init2", &cfg.scheme.init2, &mut report);
    if let (Some(d1), Some(d2)) = (cfg.control.d1, cfg.control.d2) {
        if d1 <= 0.0 || d2 <= 0.0 || (d1 - d2).abs() <= 1e-9 {
            report.push(ConfigError::DegenerateRates { d1, d2 });
        }
    }
    report
}
