//! Scenario configuration: JSON schema, dot-path overrides, and resolution
//! into the concrete engine inputs.

use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use kgreen_core::grid::{GridSpec, PolarizationTriad, ReciprocalGrid};
use kgreen_core::linalg::CVector;
use kgreen_core::medium::{CouplingModel, MediumSpec};
use kgreen_core::propagate::{InitialData, OscillatorBank, PropagationConfig, SolverChoice};
use kgreen_core::scalar::Constants;

use crate::AppError;

pub type R = f64;
pub type C = Complex<f64>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitsSpec {
    pub c: f64,
    pub eps0: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpecJson {
    pub extent: [f64; 3],
    pub shape: [usize; 3],
}

/// The medium either comes from a file, is written inline, or is absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MediumRef {
    Name(String), // "vacuum"
    Path { path: String },
    Inline { inline: MediumSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SolverSpec {
    Name(String), // "homogeneous" | "direct"
    Born { born: BornSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BornSpec {
    pub tol: f64,
    pub n_max: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSpec {
    pub omega_max: f64,
    pub n_nodes: usize,
    #[serde(default = "default_recovery_tol")]
    pub recovery_tol: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_recovery_tol() -> f64 {
    1e-4
}

fn default_margin() -> f64 {
    1.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSpec {
    pub t_max: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialFieldSpec {
    pub k_index: usize,
    /// Complex amplitude along the first transverse basis vector.
    #[serde(default)]
    pub e1: Option<[f64; 2]>,
    /// Complex amplitude along the second transverse basis vector.
    #[serde(default)]
    pub e2: Option<[f64; 2]>,
    /// Raw complex field vector (validated transverse).
    #[serde(default)]
    pub e: Option<[[f64; 2]; 3]>,
    #[serde(default)]
    pub b: Option<[[f64; 2]; 3]>,
    /// Derive B = k x E / (c|k|): a traveling plane-wave pairing.
    #[serde(default)]
    pub traveling: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OscillatorSpec {
    Zero,
    Gaussian {
        seed: u64,
        /// Amplitudes for the X, Q, Y, Pi draws.
        sigma: [f64; 4],
    },
    Explicit {
        entries: Vec<OscillatorEntrySpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillatorEntrySpec {
    pub iw: usize,
    pub ik: usize,
    #[serde(default)]
    pub x: Option<[[f64; 2]; 3]>,
    #[serde(default)]
    pub q: Option<[[f64; 2]; 3]>,
    #[serde(default)]
    pub y: Option<[[f64; 2]; 3]>,
    #[serde(default)]
    pub pi: Option<[[f64; 2]; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialSpec {
    #[serde(default)]
    pub fields: Vec<InitialFieldSpec>,
    pub oscillators: OscillatorSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    #[serde(default = "default_domain")]
    pub domain: String, // "laplace" | "time"
}

fn default_domain() -> String {
    "laplace".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckTolerances {
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
    #[serde(default = "default_maxwell_tol")]
    pub maxwell_tol: f64,
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
}

fn default_leak_tol() -> f64 {
    1e-4
}

fn default_maxwell_tol() -> f64 {
    1e-3
}

fn default_energy_tol() -> f64 {
    1e-3
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            leak_tol: default_leak_tol(),
            maxwell_tol: default_maxwell_tol(),
            energy_tol: default_energy_tol(),
        }
    }
}

/// The scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub units: Option<UnitsSpec>,
    pub grid: GridSpecJson,
    pub medium: MediumRef,
    pub solver: SolverSpec,
    #[serde(default)]
    pub eta: Option<f64>,
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub time: Option<TimeSpec>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: Option<CheckTolerances>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, AppError> {
        serde_json::from_str(text).map_err(|e| AppError::Config(format!("scenario: {e}")))
    }
}

/// Parse, apply `--override key=value` dot paths, and deserialize.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ScenarioSpec, AppError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| AppError::Config(format!("scenario: {e}")))?;
    for ov in overrides {
        let (path, raw) = ov
            .split_once('=')
            .ok_or_else(|| AppError::Config(format!("override `{ov}` is not KEY=VALUE")))?;
        let new: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut slot = &mut value;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            match slot {
                serde_json::Value::Object(map) => {
                    if last {
                        map.insert((*part).to_string(), new.clone());
                        break;
                    }
                    slot = map
                        .entry((*part).to_string())
                        .or_insert(serde_json::Value::Object(Default::default()));
                }
                serde_json::Value::Array(arr) => {
                    let idx: usize = part.parse().map_err(|_| {
                        AppError::Config(format!("override index `{part}` is not a number"))
                    })?;
                    if idx >= arr.len() {
                        return Err(AppError::Config(format!(
                            "override index {idx} out of range"
                        )));
                    }
                    if last {
                        arr[idx] = new.clone();
                        break;
                    }
                    slot = &mut arr[idx];
                }
                _ => {
                    return Err(AppError::Config(format!(
                        "override path `{path}` does not address an object"
                    )))
                }
            }
        }
    }
    serde_json::from_value(value).map_err(|e| AppError::Config(format!("scenario: {e}")))
}

/// Fully resolved scenario: engine inputs plus the config echo.
pub struct Resolved {
    pub grid: ReciprocalGrid<R>,
    pub model: CouplingModel<R>,
    pub constants: Constants<R>,
    pub solver: SolverChoice<R>,
    pub propagation: Option<PropagationConfig<R>>,
    pub eta: R,
    pub initial: InitialData<R>,
    pub bank: OscillatorBank<R>,
    pub scan: Option<ScanSpec>,
    pub task: String,
    pub seed: u64,
    pub checks: CheckTolerances,
    /// Single-line JSON echo of the resolved scenario.
    pub echo: String,
}

pub fn resolve(spec: &ScenarioSpec, base_dir: &Path) -> Result<Resolved, AppError> {
    let grid = ReciprocalGrid::<R>::build(&GridSpec {
        extent: spec.grid.extent.map(R::from),
        shape: spec.grid.shape,
    })
    .map_err(|e| AppError::Config(format!("grid: {e}")))?;

    // medium and constants; when both the scenario and the medium file give
    // constants they must agree
    let medium_spec = match &spec.medium {
        MediumRef::Name(name) if name == "vacuum" => None,
        MediumRef::Name(other) => {
            return Err(AppError::Config(format!("unknown medium `{other}`")))
        }
        MediumRef::Path { path } => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|e| {
                AppError::Config(format!("medium file {}: {e}", full.display()))
            })?;
            Some(MediumSpec::from_json(&text).map_err(|e| AppError::Config(e.to_string()))?)
        }
        MediumRef::Inline { inline } => Some(inline.clone()),
    };
    let constants = match (&spec.units, &medium_spec) {
        (Some(u), maybe_medium) => {
            let c = Constants {
                c: u.c,
                eps0: u.eps0,
                mu0: u.mu0,
            };
            if let Some(ms) = maybe_medium {
                let agree = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
                if !(agree(ms.constants.c, u.c)
                    && agree(ms.constants.eps0, u.eps0)
                    && agree(ms.constants.mu0, u.mu0))
                {
                    return Err(AppError::Config(
                        "scenario units disagree with the medium file constants".into(),
                    ));
                }
            }
            c
        }
        (None, Some(ms)) => Constants {
            c: ms.constants.c,
            eps0: ms.constants.eps0,
            mu0: ms.constants.mu0,
        },
        (None, None) => {
            return Err(AppError::Config(
                "physical constants required: give `units` in the scenario or a medium file".into(),
            ))
        }
    };
    if !constants.is_consistent() {
        return Err(AppError::Config(format!(
            "inconsistent constants: |c^2 eps0 mu0 - 1| = {:.3e}",
            constants.consistency()
        )));
    }

    let model = match medium_spec {
        Some(ms) => CouplingModel::<R>::from_spec(&ms, grid.len())
            .map_err(|e| AppError::Config(format!("medium: {e}")))?,
        None => CouplingModel::<R>::vacuum(constants, grid.len()),
    };

    let solver = match &spec.solver {
        SolverSpec::Name(n) if n == "homogeneous" => {
            if !model.is_homogeneous() {
                return Err(AppError::Config(
                    "solver `homogeneous` requires a translationally invariant medium".into(),
                ));
            }
            SolverChoice::Homogeneous
        }
        SolverSpec::Name(n) if n == "direct" => SolverChoice::Direct,
        SolverSpec::Name(other) => {
            return Err(AppError::Config(format!("unknown solver `{other}`")))
        }
        SolverSpec::Born { born } => SolverChoice::Born {
            tol: born.tol,
            n_max: born.n_max,
        },
    };

    // default regulator: 1e-3 of the largest resonance / light-line scale
    let mut omega_scale: f64 = 0.0;
    for k in grid.points() {
        omega_scale = omega_scale.max(constants.c * k.norm());
    }
    if let Some(w) = model.omega().max_node() {
        omega_scale = omega_scale.max(w);
    }
    let eta = spec.eta.unwrap_or(1e-3 * omega_scale);
    if !(eta > 0.0) {
        return Err(AppError::Config("eta must be positive".into()));
    }

    let propagation = spec.time.as_ref().map(|t| PropagationConfig {
        eta,
        omega_max: spec.spectral.omega_max,
        n_nodes: spec.spectral.n_nodes,
        t_max: t.t_max,
        n_steps: t.n_steps,
        solver,
        recovery_tol: spec.spectral.recovery_tol,
        margin: spec.spectral.margin,
    });

    // initial data
    let mut initial = InitialData::zero(grid.len());
    if let Some(init) = &spec.initial {
        for f in &init.fields {
            if f.k_index >= grid.len() {
                return Err(AppError::Config(format!(
                    "initial field k_index {} out of range",
                    f.k_index
                )));
            }
            let k = grid.point(f.k_index);
            let triad = PolarizationTriad::for_wavevector(&k)
                .map_err(|e| AppError::Config(e.to_string()))?;
            let mut e = CVector::<R>::zeros();
            if let Some([re, im]) = f.e1 {
                e += triad.e1.map(|x| Complex::new(x, 0.0)) * Complex::new(re, im);
            }
            if let Some([re, im]) = f.e2 {
                e += triad.e2.map(|x| Complex::new(x, 0.0)) * Complex::new(re, im);
            }
            if let Some(raw) = f.e {
                e += cvec(raw);
            }
            let mut b = f.b.map(cvec).unwrap_or_else(CVector::<R>::zeros);
            if f.traveling {
                let omega = constants.c * k.norm();
                b += kgreen_core::linalg::complexify(&kgreen_core::linalg::cross_matrix(&k)) * e
                    / Complex::new(omega, 0.0);
            }
            initial.e_transverse[f.k_index] += e;
            initial.b[f.k_index] += b;
        }
    }

    // oscillator bank
    let n_omega = model.omega().len();
    let bank = match spec.initial.as_ref().map(|i| &i.oscillators) {
        None | Some(OscillatorSpec::Zero) => OscillatorBank::zero(n_omega, grid.len()),
        Some(OscillatorSpec::Gaussian { seed, sigma }) => {
            OscillatorBank::gaussian(n_omega, grid.len(), *sigma, *seed)
        }
        Some(OscillatorSpec::Explicit { entries }) => {
            let mut bank = OscillatorBank::zero(n_omega, grid.len());
            for e in entries {
                if e.iw >= n_omega || e.ik >= grid.len() {
                    return Err(AppError::Config(format!(
                        "oscillator entry ({},{}) out of range",
                        e.iw, e.ik
                    )));
                }
                if let Some(v) = e.x {
                    bank.x0[e.iw][e.ik] = cvec(v);
                }
                if let Some(v) = e.q {
                    bank.q0[e.iw][e.ik] = cvec(v);
                }
                if let Some(v) = e.y {
                    bank.y0[e.iw][e.ik] = cvec(v);
                }
                if let Some(v) = e.pi {
                    bank.pi0[e.iw][e.ik] = cvec(v);
                }
            }
            bank
        }
    };
    bank.validate(&model)
        .map_err(|e| AppError::Config(format!("oscillators: {e}")))?;

    let echo = serde_json::to_string(spec).expect("scenario reserializes");
    Ok(Resolved {
        grid,
        model,
        constants,
        solver,
        propagation,
        eta,
        initial,
        bank,
        scan: spec.scan.clone(),
        task: spec.task.clone(),
        seed: spec.seed,
        checks: spec.checks.clone().unwrap_or_default(),
        echo,
    })
}

fn cvec(raw: [[f64; 2]; 3]) -> CVector<R> {
    Vector3::new(
        Complex::new(raw[0][0], raw[0][1]),
        Complex::new(raw[1][0], raw[1][1]),
        Complex::new(raw[2][0], raw[2][1]),
    )
}
