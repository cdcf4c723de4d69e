//! Scenario runner library behind the `kgreen` binary: configuration
//! loading, task execution, and exit-code mapping.

pub mod config;
pub mod summary;
pub mod tasks;

use thiserror::Error;

use kgreen_core::green::GreenError;
use kgreen_core::medium::MediumError;
use kgreen_core::propagate::PropagateError;

/// Exit codes: 2 config, 3 solver, 4 truncation, 1 failed checks.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("io error: {0}")]
    Io(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Truncation(_) => 4,
            AppError::Io(_) => 1,
        }
    }

    pub fn from_green(e: GreenError) -> Self {
        match e {
            GreenError::Divergence { .. }
            | GreenError::NotConverged { .. }
            | GreenError::Singular
            | GreenError::IllConditioned { .. }
            | GreenError::SingularT { .. }
            | GreenError::Pole { .. }
            | GreenError::ResidualExceeded { .. } => AppError::Solver(e.to_string()),
            GreenError::MissingSplit | GreenError::NotHomogeneous => {
                AppError::Config(e.to_string())
            }
        }
    }

    pub fn from_medium(e: MediumError) -> Self {
        match e {
            // a pole on a quadrature node is cured by a larger regulator
            MediumError::PoleAtNode { .. } => AppError::Truncation(e.to_string()),
            other => AppError::Config(other.to_string()),
        }
    }

    pub fn from_propagate(e: PropagateError) -> Self {
        match e {
            PropagateError::Truncation { .. }
            | PropagateError::TailBound { .. }
            | PropagateError::TruncationWindow { .. } => AppError::Truncation(e.to_string()),
            PropagateError::Green(g) => AppError::from_green(g),
            PropagateError::Medium(m) => AppError::from_medium(m),
            other => AppError::Config(other.to_string()),
        }
    }
}

/// Bundled scenarios compiled into the binary, addressable as
/// `--config bundled:NAME`.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    match name {
        "vacuum" => Some(include_str!("../scenarios/vacuum.json")),
        "lorentz" => Some(include_str!("../scenarios/lorentz.json")),
        "born_weak" => Some(include_str!("../scenarios/born_weak.json")),
        "conductor" => Some(include_str!("../scenarios/conductor.json")),
        _ => None,
    }
}

pub const BUNDLED_NAMES: [&str; 4] = ["vacuum", "lorentz", "born_weak", "conductor"];
