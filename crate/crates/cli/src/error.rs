use std::process::ExitCode;

use cvcal_core::io::IoError;
use cvcal_core::{CalibrationError, LcpError, ModelError};
use serde_json::{json, Map, Value};

/// Everything a subcommand can fail with, mapped to a distinct exit status
/// and a JSON payload on stderr.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(IoError),
    Model(ModelError),
    Calibration(CalibrationError),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(m) => Failure::Model(m),
            e => Failure::Io(e),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Model(e)
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Model(m) => Failure::Model(m),
            e => Failure::Calibration(e),
        }
    }
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_MODEL: u8 = 4;
pub const EXIT_SOLVER: u8 = 5;
pub const EXIT_NO_CONVERGENCE: u8 = 6;
pub const EXIT_DATA: u8 = 7;

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.status())
    }

    pub fn status(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_INPUT,
            Failure::Model(m) => model_status(m),
            Failure::Calibration(e) => match e {
                CalibrationError::InvalidConfig(_) => EXIT_USAGE,
                CalibrationError::MaxIterationsExceeded { .. } => EXIT_NO_CONVERGENCE,
                CalibrationError::SolverFailure { .. } => EXIT_SOLVER,
                CalibrationError::Model(m) => model_status(m),
                _ => EXIT_DATA,
            },
        }
    }

    /// Machine-readable description: `error` names the kind, `message` is
    /// the human-readable text, remaining keys carry the details.
    pub fn payload(&self) -> Value {
        let mut out = Map::new();
        let (kind, details) = match self {
            Failure::Usage(_) => ("Usage", json!({})),
            Failure::Io(e) => match e {
                IoError::Read { path, .. } => ("ReadError", json!({ "path": path })),
                IoError::Write { path, .. } => ("WriteError", json!({ "path": path })),
                IoError::Parse {
                    path, line, column, ..
                } => (
                    "ParseError",
                    json!({ "path": path, "line": line, "column": column }),
                ),
                IoError::Schema { path, field, .. } => {
                    ("SchemaError", json!({ "path": path, "field": field }))
                }
                IoError::Model(m) => model_payload(m),
            },
            Failure::Model(m) => model_payload(m),
            Failure::Calibration(e) => match e {
                CalibrationError::MaxIterationsExceeded { iterations, .. } => {
                    ("MaxIterationsExceeded", json!({ "iterations": iterations }))
                }
                CalibrationError::SolverFailure {
                    stage,
                    iteration,
                    source,
                    ..
                } => (
                    "SolverFailure",
                    json!({ "stage": stage, "iteration": iteration, "cause": model_payload(source).0 }),
                ),
                CalibrationError::NoActiveTraderAt { node, period } => (
                    "NoActiveTraderAt",
                    json!({ "node": node, "period": period }),
                ),
                CalibrationError::PricePinning {
                    node,
                    period,
                    deviation,
                } => (
                    "PricePinning",
                    json!({ "node": node, "period": period, "deviation": deviation }),
                ),
                CalibrationError::ZeroSales => ("ZeroSales", json!({})),
                CalibrationError::ZeroPrice => ("ZeroPrice", json!({})),
                CalibrationError::NoActiveTrader => ("NoActiveTrader", json!({})),
                CalibrationError::AllSalesZero => ("AllSalesZero", json!({})),
                CalibrationError::InvalidInput(_) => ("InvalidInput", json!({})),
                CalibrationError::InconsistentData(_) => ("InconsistentData", json!({})),
                CalibrationError::InvalidConfig(_) => ("InvalidConfig", json!({})),
                CalibrationError::Model(m) => model_payload(m),
            },
        };
        out.insert("error".into(), kind.into());
        out.insert("message".into(), self.to_string().into());
        if let Value::Object(d) = details {
            out.extend(d);
        }
        Value::Object(out)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m.trim_end()),
            Failure::Io(e) => e.fmt(f),
            Failure::Model(e) => e.fmt(f),
            Failure::Calibration(e) => e.fmt(f),
        }
    }
}

fn model_status(m: &ModelError) -> u8 {
    match m {
        ModelError::Solver(_) => EXIT_SOLVER,
        _ => EXIT_MODEL,
    }
}

fn model_payload(m: &ModelError) -> (&'static str, Value) {
    match m {
        ModelError::InvariantViolation { field, .. } => {
            ("InvariantViolation", json!({ "field": field }))
        }
        ModelError::UnreachableService { trader, service } => (
            "UnreachableService",
            json!({ "trader": trader, "service": service }),
        ),
        ModelError::InvalidAnchor { s0, lambda0, eta } => (
            "InvalidAnchor",
            json!({ "s0": s0, "lambda0": lambda0, "eta": eta }),
        ),
        ModelError::MissingAnchor { node, period } => {
            ("MissingAnchor", json!({ "node": node, "period": period }))
        }
        ModelError::InfeasibleBounds { node, period, .. } => (
            "InfeasibleBounds",
            json!({ "node": node, "period": period }),
        ),
        ModelError::InvalidTheta {
            trader,
            node,
            period,
            value,
        } => (
            "InvalidTheta",
            json!({ "trader": trader, "node": node, "period": period, "value": value }),
        ),
        ModelError::DimensionMismatch(_) => ("DimensionMismatch", json!({})),
        ModelError::Solver(e) => (
            match e {
                LcpError::RayTermination { .. } => "RayTermination",
                LcpError::PivotLimit(_) => "PivotLimit",
                LcpError::ToleranceNotMet { .. } => "ToleranceNotMet",
                LcpError::SingularFreeBlock { .. } => "SingularFreeBlock",
                LcpError::InvalidTolerance(_) => "InvalidTolerance",
                LcpError::DimensionMismatch(_) => "DimensionMismatch",
            },
            json!({}),
        ),
    }
}
