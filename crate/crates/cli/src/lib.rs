//! Configuration-driven front end: coefficient expressions, scenario files and the
//! pipeline that turns them into kernel, gain, trace and diagnostic CSVs.

pub mod config;
pub mod expr;
pub mod run;

pub use config::{validate_config, ConfigError, ScenarioConfig};
pub use expr::{parse_expression, Env, Expr, ExprError};
pub use run::{load_config, report_trace, run_scenario, Mode, Overrides, RunError, Stage, Summary};
