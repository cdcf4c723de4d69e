//! Flat-table output: CSV writers for grids, response kernels, Green
//! tensors, dispersion scans and field trajectories. Every table starts with
//! comment lines echoing the resolved configuration, so outputs are
//! self-describing; all numbers are written with shortest-round-trip
//! formatting, which keeps identical runs byte-identical.

use std::io::{self, Write};

use crate::green::GreenTensor;
use crate::grid::ReciprocalGrid;
use crate::linalg::{Block, BlockOperator};
use crate::medium::ResponseKernel;
use crate::propagate::Trajectory;
use crate::scalar::{Cplx, Real};

fn fnum<T: Real>(x: T) -> String {
    format!("{}", x.to_f64_lossy())
}

fn header(out: &mut impl Write, title: &str, config_echo: &str) -> io::Result<()> {
    writeln!(out, "# kgreen {title}")?;
    for line in config_echo.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// Grid flat table: one row (k_x, k_y, k_z, weight) per point.
pub fn write_grid_table<T: Real>(
    out: &mut impl Write,
    grid: &ReciprocalGrid<T>,
    config_echo: &str,
) -> io::Result<()> {
    header(out, "grid", config_echo)?;
    writeln!(out, "kx,ky,kz,weight")?;
    for (p, &w) in grid.points().iter().zip(grid.weights()) {
        writeln!(
            out,
            "{},{},{},{}",
            fnum(p.x),
            fnum(p.y),
            fnum(p.z),
            fnum(w)
        )?;
    }
    Ok(())
}

/// Parse a grid table back (ignores comment lines); inverse of
/// `write_grid_table`.
pub fn read_grid_table<T: Real>(text: &str) -> Result<ReciprocalGrid<T>, String> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("kx") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(format!("expected 4 columns, got {}", cols.len()));
        }
        let mut vals = [0.0f64; 4];
        for (slot, c) in vals.iter_mut().zip(&cols) {
            *slot = c.parse::<f64>().map_err(|e| e.to_string())?;
        }
        rows.push((T::of(vals[0]), T::of(vals[1]), T::of(vals[2]), T::of(vals[3])));
    }
    ReciprocalGrid::from_rows(&rows).map_err(|e| e.to_string())
}

fn write_block_entries<T: Real>(out: &mut impl Write, b: &Block<T>) -> io::Result<()> {
    for i in 0..3 {
        for j in 0..3 {
            write!(out, ",{},{}", fnum(b[(i, j)].re), fnum(b[(i, j)].im))?;
        }
    }
    Ok(())
}

/// Susceptibility kernel dump: rows (re_s, im_s, ik, iq, 9 complex entries).
pub fn write_kernel_table<T: Real>(
    out: &mut impl Write,
    title: &str,
    rows: &[(Cplx<T>, usize, usize, Block<T>)],
    config_echo: &str,
) -> io::Result<()> {
    header(out, title, config_echo)?;
    write!(out, "re_s,im_s,ik,iq")?;
    for i in 0..3 {
        for j in 0..3 {
            write!(out, ",m{i}{j}_re,m{i}{j}_im")?;
        }
    }
    writeln!(out)?;
    for (s, ik, iq, b) in rows {
        write!(out, "{},{},{ik},{iq}", fnum(s.re), fnum(s.im))?;
        write_block_entries(out, b)?;
        writeln!(out)?;
    }
    Ok(())
}

/// All nonzero blocks of a response kernel as kernel rows.
pub fn kernel_rows<T: Real>(
    response: &ResponseKernel<T>,
    which: crate::medium::FieldKind,
) -> Vec<(Cplx<T>, usize, usize, Block<T>)> {
    let op = match which {
        crate::medium::FieldKind::Electric => response.chi_e(),
        crate::medium::FieldKind::Magnetic => response.chi_m(),
    };
    let n = op.n_points();
    let mut rows = Vec::new();
    for k in 0..n {
        for q in 0..n {
            if op.is_diagonal() && k != q {
                continue;
            }
            rows.push((response.s(), k, q, op.get(k, q)));
        }
    }
    rows
}

/// Green tensor dump: rows (re_s, im_s, ik, ip, 9 complex entries, method,
/// residual, n_terms).
pub fn write_green_table<T: Real>(
    out: &mut impl Write,
    green: &GreenTensor<T>,
    config_echo: &str,
) -> io::Result<()> {
    header(out, "green", config_echo)?;
    write!(out, "re_s,im_s,ik,ip")?;
    for i in 0..3 {
        for j in 0..3 {
            write!(out, ",g{i}{j}_re,g{i}{j}_im")?;
        }
    }
    writeln!(out, ",method,residual,n_terms")?;
    let n = green.n_points();
    let (method, n_terms) = match green.method {
        crate::green::GreenMethod::Born { n_terms } => ("born".to_string(), n_terms.to_string()),
        m => (m.label(), String::new()),
    };
    let diag = matches!(green.blocks, BlockOperator::Diagonal(_));
    for k in 0..n {
        for p in 0..n {
            if diag && k != p {
                continue;
            }
            write!(out, "{},{},{k},{p}", fnum(green.s.re), fnum(green.s.im))?;
            write_block_entries(out, &green.blocks.get(k, p))?;
            writeln!(out, ",{method},{},{n_terms}", fnum(green.residual))?;
        }
    }
    Ok(())
}

/// Dispersion scan: rows (ik, |k|, omega, |det T|).
pub fn write_dispersion_table<T: Real>(
    out: &mut impl Write,
    rows: &[(usize, T, T, T)],
    config_echo: &str,
) -> io::Result<()> {
    header(out, "dispersion", config_echo)?;
    writeln!(out, "ik,k_norm,omega,abs_det_t")?;
    for (ik, knorm, omega, det) in rows {
        writeln!(
            out,
            "{ik},{},{},{}",
            fnum(*knorm),
            fnum(*omega),
            fnum(*det)
        )?;
    }
    Ok(())
}

/// Trajectory dump: per (t, k) one row with Re/Im of E, B, D, P, M.
pub fn write_trajectory_table<T: Real>(
    out: &mut impl Write,
    trajectory: &Trajectory<T>,
    config_echo: &str,
) -> io::Result<()> {
    header(out, "trajectory", config_echo)?;
    write!(out, "t,ik")?;
    for field in ["e", "b", "d", "p", "m"] {
        for c in ["x", "y", "z"] {
            write!(out, ",{field}{c}_re,{field}{c}_im")?;
        }
    }
    writeln!(out)?;
    for state in &trajectory.states {
        for k in 0..state.e.len() {
            write!(out, "{},{k}", fnum(state.t))?;
            for field in [&state.e, &state.b, &state.d, &state.p, &state.m] {
                for c in 0..3 {
                    write!(out, ",{},{}", fnum(field[k][c].re), fnum(field[k][c].im))?;
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::scalar::Constants;

    #[test]
    fn grid_table_round_trip() {
        let g = ReciprocalGrid::<f64>::build(&GridSpec {
            extent: [1.0, 1.3, 0.9],
            shape: [3, 2, 3],
        })
        .unwrap();
        let mut buf = Vec::new();
        write_grid_table(&mut buf, &g, "shape: [3,2,3]").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# kgreen grid\n# shape: [3,2,3]\n"));
        let g2 = read_grid_table::<f64>(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn kernel_and_green_tables_have_stable_shape() {
        let g = ReciprocalGrid::<f64>::build(&GridSpec {
            extent: [1.0, 1.0, 1.0],
            shape: [2, 2, 2],
        })
        .unwrap();
        let model = crate::medium::CouplingModel::<f64>::vacuum(Constants::natural(), g.len());
        let r = model.response_at(Cplx::new(1.0, 0.5), &g).unwrap();
        let rows = kernel_rows(&r, crate::medium::FieldKind::Electric);
        assert_eq!(rows.len(), g.len()); // diagonal storage
        let mut buf = Vec::new();
        write_kernel_table(&mut buf, "chi_e", &rows, "cfg").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2 + 1 + g.len());

        let green = crate::green::solve_homogeneous(&r, g.points()).unwrap();
        let mut buf = Vec::new();
        write_green_table(&mut buf, &green, "cfg").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first_data = text.lines().nth(3).unwrap();
        assert!(first_data.contains("homogeneous"));
    }

    #[test]
    fn identical_inputs_produce_identical_bytes() {
        let g = ReciprocalGrid::<f64>::build(&GridSpec {
            extent: [1.0, 1.0, 1.0],
            shape: [3, 3, 3],
        })
        .unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_grid_table(&mut a, &g, "echo").unwrap();
        write_grid_table(&mut b, &g, "echo").unwrap();
        assert_eq!(a, b);
    }
}
