//! The four scenario tasks: selftest, kernel-scan, dispersion, propagate.

use std::fs;
use std::path::Path;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kgreen_core::assembly::assemble;
use kgreen_core::export;
use kgreen_core::green::{self, solve_born, solve_direct, solve_homogeneous};
use kgreen_core::grid::mirror_extend;
use kgreen_core::linalg::block_norm;
use kgreen_core::medium::{FieldKind, GaugeMixing, MediumMode};
use kgreen_core::propagate::{
    energy_trajectory, field_time, maxwell_residual, SolverChoice, Trajectory,
};

use crate::config::{Resolved, C, R};
use crate::summary::{Check, Summary};
use crate::AppError;

pub fn run(resolved: &Resolved, out_dir: &Path) -> Result<Summary, AppError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| AppError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut summary = match resolved.task.as_str() {
        "selftest" => selftest(resolved, out_dir)?,
        "kernel-scan" => kernel_scan(resolved, out_dir)?,
        "dispersion" => dispersion(resolved, out_dir)?,
        "propagate" => propagate(resolved, out_dir)?,
        other => return Err(AppError::Config(format!("unknown task `{other}`"))),
    };
    summary.finish();
    let path = out_dir.join("summary.json");
    fs::write(&path, summary.to_json())
        .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    summary.outputs.push("summary.json".into());
    Ok(summary)
}

fn write_output(
    summary: &mut Summary,
    out_dir: &Path,
    name: &str,
    bytes: Vec<u8>,
) -> Result<(), AppError> {
    let path = out_dir.join(name);
    fs::write(&path, bytes).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    summary.outputs.push(name.to_string());
    Ok(())
}

/// A well-conditioned sample frequency for kernel and solver checks.
fn sample_s(resolved: &Resolved) -> C {
    let mut scale: f64 = 0.0;
    for k in resolved.grid.points() {
        scale = scale.max(resolved.constants.c * k.norm());
    }
    if let Some(w) = resolved.model.omega().max_node() {
        scale = scale.max(w);
    }
    Complex::new(0.31 * scale, -0.73 * scale)
}

fn solve_at(
    resolved: &Resolved,
    s: C,
) -> Result<(kgreen_core::medium::ResponseKernel<R>, kgreen_core::green::GreenTensor<R>), AppError>
{
    let response = resolved
        .model
        .response_at(s, &resolved.grid)
        .map_err(AppError::from_medium)?;
    let green = match resolved.solver {
        SolverChoice::Homogeneous => {
            solve_homogeneous(&response, resolved.grid.points()).map_err(AppError::from_green)?
        }
        SolverChoice::Direct => solve_direct(&assemble(&response, resolved.grid.points()))
            .map_err(AppError::from_green)?,
        SolverChoice::Born { tol, n_max } => {
            solve_born(&assemble(&response, resolved.grid.points()), tol, n_max)
                .map_err(AppError::from_green)?
        }
    };
    Ok((response, green))
}

fn selftest(resolved: &Resolved, out_dir: &Path) -> Result<Summary, AppError> {
    let mut summary = Summary::new("selftest", &resolved.echo);
    let grid = &resolved.grid;
    let model = &resolved.model;

    // grid invariants
    let mut ortho: f64 = 0.0;
    let mut complete: f64 = 0.0;
    for t in grid.triads() {
        ortho = ortho.max(t.orthonormality_defect());
        complete = complete.max(t.completeness_defect());
    }
    summary.push(Check::leq("grid.triad_orthonormality", ortho, 1e-14));
    summary.push(Check::leq("grid.triad_completeness", complete, 1e-14));

    // quadrature weight equals the represented half-space volume (cells are
    // uniform, so the oracle is the cell count times the cell volume)
    let covered: f64 = grid.weights().iter().sum();
    let cell = grid.weight(0);
    let oracle = cell * grid.len() as f64;
    summary.push(Check::leq(
        "grid.weight_volume",
        (covered - oracle).abs() / oracle,
        1e-12,
    ));

    // mirror extension round trip, exact
    let probe: Vec<C> = (0..grid.len())
        .map(|i| Complex::new(0.3 + i as f64, -0.7 * i as f64))
        .collect();
    let full = mirror_extend(grid, &probe).map_err(|e| AppError::Config(e.to_string()))?;
    let back = full.restrict();
    let mirror_dev = probe
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    summary.push(Check::leq("grid.mirror_round_trip", mirror_dev, 0.0));

    // causality: the time kernel vanishes identically for t <= 0
    let mut causality: f64 = 0.0;
    for &t in &[-1.0, -1e-9, 0.0] {
        for kind in [FieldKind::Electric, FieldKind::Magnetic] {
            causality =
                causality.max(block_norm(&model.susceptibility_time(kind, 0, 0, t, grid)));
        }
    }
    summary.push(Check::leq("medium.causality_zero", causality, 0.0));

    // coupling pair spectrum is Hermitian PSD
    let mut min_eig: f64 = 0.0;
    for iw in 0..model.omega().len() {
        for ik in 0..grid.len() {
            let f = model.pair_spectrum(FieldKind::Electric, iw, ik, ik, grid.weights());
            for ev in f.symmetric_eigen().eigenvalues.iter() {
                min_eig = min_eig.min(*ev);
            }
        }
    }
    summary.push(Check::leq("medium.pair_spectrum_psd", -min_eig, 1e-12));

    // single-response bookkeeping
    if model.mode() == MediumMode::SingleResponse {
        let zero = model.coupling(FieldKind::Magnetic).is_zero();
        summary.push(Check::leq(
            "medium.single_response_g_zero",
            if zero { 0.0 } else { 1.0 },
            0.0,
        ));
    }

    // gauge invariance under a random orthogonal mixing
    if !model.omega().is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed ^ 0x6761756765);
        let mixing = GaugeMixing::random_orthogonal(model.omega().len(), grid.weights(), &mut rng);
        let transformed = model
            .gauge_transform(&mixing, grid)
            .map_err(AppError::from_medium)?;
        let s = sample_s(resolved);
        let mut dev: f64 = 0.0;
        for ik in 0..grid.len() {
            for iq in 0..grid.len() {
                let a = model
                    .susceptibility_laplace(FieldKind::Electric, ik, iq, s, grid)
                    .map_err(AppError::from_medium)?;
                let b = transformed
                    .susceptibility_laplace(FieldKind::Electric, ik, iq, s, grid)
                    .map_err(AppError::from_medium)?;
                dev = dev.max(block_norm(&(a - b)));
            }
        }
        summary.push(Check::leq("medium.gauge_invariance", dev, 1e-12));
    }

    // kernel assembly invariants and the defining residual of the solver
    let s = sample_s(resolved);
    let (response, green_tensor) = solve_at(resolved, s)?;
    let lambda = assemble(&response, grid.points());
    let (free, medium_part) = lambda.split().expect("assemble stores the split");
    let mut resum: f64 = 0.0;
    let mut free_sym: f64 = 0.0;
    for k in 0..grid.len() {
        for q in 0..grid.len() {
            let total = lambda.blocks().get(k, q);
            let parts = free.get(k, q) + medium_part.get(k, q);
            resum = resum.max(block_norm(&(total - parts)));
        }
        let l = free.get(k, k);
        free_sym = free_sym.max(block_norm(&(l - l.transpose())));
    }
    summary.push(Check::leq("assembly.split_resum", resum, 0.0));
    summary.push(Check::leq("assembly.free_part_symmetric", free_sym, 1e-14));
    summary.push(Check::leq(
        "green.defining_residual",
        green_tensor.residual,
        match resolved.solver {
            SolverChoice::Born { tol, .. } => 10.0 * tol,
            _ => 1e-10,
        },
    ));

    // short propagation self-test when the scenario configures time data
    if let Some(cfg) = &resolved.propagation {
        let mut quick = *cfg;
        quick.n_steps = cfg.n_steps.min(50);
        quick.t_max = cfg.t_max * quick.n_steps as f64 / cfg.n_steps as f64;
        let traj = field_time(model, grid, &resolved.bank, &resolved.initial, &quick)
            .map_err(AppError::from_propagate)?;
        summary.push(Check::leq(
            "propagate.t0_recovery",
            traj.diagnostics.recovery_error,
            quick.recovery_tol,
        ));
        summary.push(Check::leq(
            "propagate.backward_leak",
            traj.diagnostics.backward_leak,
            resolved.checks.leak_tol,
        ));
        summary.push(Check::leq(
            "propagate.forward_leak_negative",
            traj.diagnostics.forward_leak_negative,
            resolved.checks.leak_tol,
        ));
        let scale = traj.diagnostics.field_scale.max(1e-300);
        let mut gauge: f64 = 0.0;
        let mut displacement: f64 = 0.0;
        for st in &traj.states {
            gauge = gauge.max(st.gauge_defect(grid));
            displacement = displacement.max(st.displacement_defect(resolved.constants.eps0));
        }
        summary.push(Check::leq("propagate.coulomb_gauge", gauge / scale, 1e-10));
        summary.push(Check::leq(
            "propagate.displacement_relation",
            displacement / scale,
            1e-12,
        ));
    }

    let grid_csv = render(|w| export::write_grid_table(w, grid, &resolved.echo))?;
    write_output(&mut summary, out_dir, "grid.csv", grid_csv)?;
    Ok(summary)
}

fn kernel_scan(resolved: &Resolved, out_dir: &Path) -> Result<Summary, AppError> {
    let mut summary = Summary::new("kernel-scan", &resolved.echo);
    let scan = resolved
        .scan
        .as_ref()
        .ok_or_else(|| AppError::Config("kernel-scan requires a `scan` section".into()))?;
    if scan.n < 2 {
        return Err(AppError::Config("scan.n must be at least 2".into()));
    }
    let grid = &resolved.grid;
    let model = &resolved.model;
    let mut rows_e = Vec::new();
    let mut rows_m = Vec::new();
    let mut causality_dev: f64 = 0.0;
    for i in 0..scan.n {
        let x = scan.min + (scan.max - scan.min) * i as f64 / (scan.n - 1) as f64;
        match scan.domain.as_str() {
            "laplace" => {
                // forward shifted axis s = eta - i w
                let s = Complex::new(resolved.eta, -x);
                let r = model.response_at(s, grid).map_err(AppError::from_medium)?;
                rows_e.extend(export::kernel_rows(&r, FieldKind::Electric));
                rows_m.extend(export::kernel_rows(&r, FieldKind::Magnetic));
            }
            "time" => {
                for ik in 0..grid.len() {
                    for iq in 0..grid.len() {
                        if model.is_homogeneous() && ik != iq {
                            continue;
                        }
                        let be = model.susceptibility_time(FieldKind::Electric, ik, iq, x, grid);
                        let bm = model.susceptibility_time(FieldKind::Magnetic, ik, iq, x, grid);
                        if x <= 0.0 {
                            causality_dev = causality_dev.max(block_norm(&be)).max(block_norm(&bm));
                        }
                        let tag = Complex::new(x, 0.0);
                        rows_e.push((tag, ik, iq, be));
                        rows_m.push((tag, ik, iq, bm));
                    }
                }
            }
            other => {
                return Err(AppError::Config(format!("unknown scan domain `{other}`")));
            }
        }
    }
    if scan.domain == "time" {
        summary.push(Check::leq("kernel.causality_zero", causality_dev, 0.0));
    }
    let e_csv = render(|w| export::write_kernel_table(w, "chi_e", &rows_e, &resolved.echo))?;
    write_output(&mut summary, out_dir, "chi_e.csv", e_csv)?;
    let m_csv = render(|w| export::write_kernel_table(w, "chi_m", &rows_m, &resolved.echo))?;
    write_output(&mut summary, out_dir, "chi_m.csv", m_csv)?;
    Ok(summary)
}

fn dispersion(resolved: &Resolved, out_dir: &Path) -> Result<Summary, AppError> {
    let mut summary = Summary::new("dispersion", &resolved.echo);
    let scan = resolved
        .scan
        .as_ref()
        .ok_or_else(|| AppError::Config("dispersion requires a `scan` section".into()))?;
    if !resolved.model.is_homogeneous() {
        return Err(AppError::Config(
            "dispersion scans require a translationally invariant medium".into(),
        ));
    }
    let grid = &resolved.grid;
    let mut rows = Vec::new();
    let mut minima = Vec::new();
    for (ik, k) in grid.points().iter().enumerate() {
        let (omega_min, samples) = green::transverse_resonance_scan(
            |s| resolved.model.response_at(s, grid),
            ik,
            k,
            (scan.min, scan.max),
            scan.n,
            resolved.eta,
        )
        .map_err(AppError::from_medium)?;
        for (omega, det) in &samples {
            rows.push((ik, k.norm(), *omega, *det));
        }
        minima.push(Check {
            name: format!("dispersion.argmin_k{ik}"),
            value: omega_min,
            tolerance: f64::INFINITY,
            pass: true,
        });
    }
    let csv = render(|w| export::write_dispersion_table(w, &rows, &resolved.echo))?;
    write_output(&mut summary, out_dir, "dispersion.csv", csv)?;
    for c in minima {
        summary.push(c);
    }
    Ok(summary)
}

fn propagate(resolved: &Resolved, out_dir: &Path) -> Result<Summary, AppError> {
    let mut summary = Summary::new("propagate", &resolved.echo);
    let cfg = resolved
        .propagation
        .ok_or_else(|| AppError::Config("propagate requires a `time` section".into()))?;
    let traj: Trajectory<R> = field_time(
        &resolved.model,
        &resolved.grid,
        &resolved.bank,
        &resolved.initial,
        &cfg,
    )
    .map_err(AppError::from_propagate)?;

    summary.push(Check::leq(
        "propagate.t0_recovery",
        traj.diagnostics.recovery_error,
        cfg.recovery_tol,
    ));
    summary.push(Check::leq(
        "propagate.backward_leak",
        traj.diagnostics.backward_leak,
        resolved.checks.leak_tol,
    ));
    summary.push(Check::leq(
        "propagate.forward_leak_negative",
        traj.diagnostics.forward_leak_negative,
        resolved.checks.leak_tol,
    ));

    let scale = traj.diagnostics.field_scale.max(1e-300);
    let mut gauge: f64 = 0.0;
    let mut displacement: f64 = 0.0;
    for st in &traj.states {
        gauge = gauge.max(st.gauge_defect(&resolved.grid));
        displacement = displacement.max(st.displacement_defect(resolved.constants.eps0));
    }
    summary.push(Check::leq("propagate.coulomb_gauge", gauge / scale, 1e-10));
    summary.push(Check::leq(
        "propagate.displacement_relation",
        displacement / scale,
        1e-12,
    ));

    let report = maxwell_residual(&traj, &resolved.grid, &resolved.constants);
    summary.push(Check::leq(
        "propagate.maxwell_ampere",
        report.max_ampere,
        resolved.checks.maxwell_tol,
    ));
    summary.push(Check::leq(
        "propagate.maxwell_faraday",
        report.max_faraday,
        resolved.checks.maxwell_tol,
    ));

    let energies = energy_trajectory(&traj, &resolved.model, &resolved.grid, &resolved.bank)
        .map_err(AppError::from_propagate)?;
    let h0 = energies[0];
    let drift = if h0.abs() > 0.0 {
        energies
            .iter()
            .map(|h| (h - h0).abs() / h0.abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    summary.push(Check::leq(
        "propagate.energy_drift",
        drift,
        resolved.checks.energy_tol,
    ));

    let csv = render(|w| export::write_trajectory_table(w, &traj, &resolved.echo))?;
    write_output(&mut summary, out_dir, "trajectory.csv", csv)?;
    Ok(summary)
}

fn render(
    f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<Vec<u8>, AppError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| AppError::Io(e.to_string()))?;
    Ok(buf)
}
