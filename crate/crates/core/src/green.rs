//! Green tensor of the reciprocal-space wave equation, solved three ways:
//! the closed form for translationally invariant media, a dense direct
//! solve, and a Born series in the medium part of the kernel.
//!
//! All methods solve `sum_q w_q Lambda(k,q,s) G(q,p,s) = delta(k,p) I` and
//! record the defining residual on return.

use nalgebra::Vector3;
use thiserror::Error;

use crate::assembly::{assemble, LambdaKernel};
use crate::linalg::{block_norm, green_residual, identity_block, Block, BlockOperator};
use crate::medium::ResponseKernel;
use crate::scalar::{cabs, re, Cplx, Real};

/// Residual bound enforced for the exact solver paths.
pub const EXACT_RESIDUAL_TOL: f64 = 1e-10;
/// The Born residual bound is this multiple of the requested series tolerance.
pub const BORN_RESIDUAL_FACTOR: f64 = 10.0;
/// Condition-number ceiling for the dense solve.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum GreenError {
    #[error("free-space pole: |s^2/c^2 + |k|^2| = {value:.3e} below 1e-14")]
    Pole { value: f64 },
    #[error("wave tensor is singular (dispersion resonance): |det T| = {det:.3e} < 1e-14 ||T||^3")]
    SingularT { det: f64 },
    #[error("dense system ill-conditioned: condition estimate {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },
    #[error("dense system is singular")]
    Singular,
    #[error(
        "Born series diverging: term norms non-decreasing over 3 iterations, contraction factor ~ {factor:.3}"
    )]
    Divergence { factor: f64, terms: usize },
    #[error("Born series did not reach tol {tol:.1e} within {n_max} terms (last relative term {rel:.3e})")]
    NotConverged { rel: f64, tol: f64, n_max: usize },
    #[error("Born solve requires the free/medium split of the kernel")]
    MissingSplit,
    #[error("method requires a block-diagonal (homogeneous) kernel")]
    NotHomogeneous,
    #[error("defining residual {residual:.3e} exceeds the method tolerance {tol:.1e}")]
    ResidualExceeded { residual: f64, tol: f64 },
}

/// How a Green tensor was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenMethod {
    Homogeneous,
    Direct,
    Born { n_terms: usize },
}

impl GreenMethod {
    pub fn label(&self) -> String {
        match self {
            GreenMethod::Homogeneous => "homogeneous".into(),
            GreenMethod::Direct => "direct".into(),
            GreenMethod::Born { n_terms } => format!("born({n_terms})"),
        }
    }
}

/// Block Green tensor G(k,p;s) with its defining residual.
#[derive(Debug, Clone)]
pub struct GreenTensor<T: Real> {
    pub s: Cplx<T>,
    pub blocks: BlockOperator<T>,
    pub method: GreenMethod,
    pub residual: T,
}

impl<T: Real> GreenTensor<T> {
    pub fn n_points(&self) -> usize {
        self.blocks.n_points()
    }

    /// `E(k) = sum_p w_p G(k,p) J(p)`.
    pub fn apply(&self, weights: &[T], source: &[crate::linalg::CVector<T>]) -> Vec<crate::linalg::CVector<T>> {
        self.blocks.weighted_apply(weights, source)
    }
}

/// Closed-form free-space Green block
/// `L^{-1}(k,s) = -(c^2/s^2) khat khat^T - (|k|^2 + s^2/c^2)^{-1} (I - khat khat^T)`.
pub fn green_free<T: Real>(k: &Vector3<T>, s: Cplx<T>, c: T) -> Result<Block<T>, GreenError> {
    let k2 = k.norm_squared();
    let s2c2 = s * s / re(c * c);
    let trans_denom = re(k2) + s2c2;
    if cabs(trans_denom) < T::of(1e-14) || s.norm_sqr() == T::zero() {
        return Err(GreenError::Pole {
            value: cabs(trans_denom).to_f64_lossy(),
        });
    }
    let khat = k / k2.sqrt();
    let p_long = crate::linalg::complexify(&(khat * khat.transpose()));
    let p_trans = identity_block::<T>() - p_long;
    let long = p_long * (-re(c * c) / (s * s));
    let trans = p_trans * (-(Cplx::new(T::one(), T::zero()) / trans_denom));
    Ok(long + trans)
}

/// The translationally invariant wave tensor
/// `T(k,s) = [k]_x (I - chi^m(k,s)) [k]_x - (s^2/c^2)(I + chi^e(k,s))`,
/// evaluated from the delta-coefficient susceptibilities.
pub fn t_tensor<T: Real>(
    response: &ResponseKernel<T>,
    ik: usize,
    k: &Vector3<T>,
) -> Result<Block<T>, GreenError> {
    if !response.is_homogeneous() {
        return Err(GreenError::NotHomogeneous);
    }
    let s = response.s();
    let c = response.constants().c;
    let s2c2 = s * s / re(c * c);
    let kx = crate::linalg::complexify(&crate::linalg::cross_matrix(k));
    let chi_m = response.chi_m_coefficient(ik);
    let chi_e = response.chi_e_coefficient(ik);
    Ok(kx * (identity_block::<T>() - chi_m) * kx - (identity_block::<T>() + chi_e) * s2c2)
}

/// `T^{-1}(k,s)`, the homogeneous Green block without the delta weight.
pub fn homogeneous_block<T: Real>(
    response: &ResponseKernel<T>,
    ik: usize,
    k: &Vector3<T>,
) -> Result<Block<T>, GreenError> {
    let t = t_tensor(response, ik, k)?;
    let det = t.determinant();
    let norm = block_norm(&t);
    if cabs(det) < T::of(1e-14) * norm * norm * norm {
        return Err(GreenError::SingularT {
            det: cabs(det).to_f64_lossy(),
        });
    }
    let mut inv = t.try_inverse().ok_or(GreenError::SingularT {
        det: cabs(det).to_f64_lossy(),
    })?;
    // the cofactor inverse loses ~cond^2 digits near dispersion resonances;
    // one Newton pass restores a backward-stable residual
    inv += inv * (identity_block::<T>() - t * inv);
    Ok(inv)
}

/// Solve the homogeneous problem blockwise: `G(k,p) = T^{-1}(k) delta(k,p)`.
pub fn solve_homogeneous<T: Real>(
    response: &ResponseKernel<T>,
    points: &[Vector3<T>],
) -> Result<GreenTensor<T>, GreenError> {
    if !response.is_homogeneous() {
        return Err(GreenError::NotHomogeneous);
    }
    let w = response.weights();
    let mut blocks = Vec::with_capacity(points.len());
    for (ik, k) in points.iter().enumerate() {
        blocks.push(homogeneous_block(response, ik, k)? * re(T::one() / w[ik]));
    }
    let green = GreenTensor {
        s: response.s(),
        blocks: BlockOperator::Diagonal(blocks),
        method: GreenMethod::Homogeneous,
        residual: T::zero(),
    };
    let lambda = assemble(response, points);
    finish_with_residual(green, &lambda, T::of(EXACT_RESIDUAL_TOL))
}

/// Dense direct solve of the weighted linear system.
pub fn solve_direct<T: Real>(lambda: &LambdaKernel<T>) -> Result<GreenTensor<T>, GreenError> {
    let w = lambda.weights();
    let n = lambda.n_points();
    // weights folded into columns; the right-hand side is the weighted delta
    let a = lambda.blocks().to_flat(Some(w));
    let mut b = nalgebra::DMatrix::<Cplx<T>>::zeros(3 * n, 3 * n);
    for p in 0..n {
        let inv_w = T::one() / w[p];
        for i in 0..3 {
            b[(3 * p + i, 3 * p + i)] = re(inv_w);
        }
    }
    let one_norm = |m: &nalgebra::DMatrix<Cplx<T>>| {
        let mut best = T::zero();
        for j in 0..m.ncols() {
            let mut col = T::zero();
            for i in 0..m.nrows() {
                col += cabs(m[(i, j)]);
            }
            if col > best {
                best = col;
            }
        }
        best
    };
    let lu = a.clone().lu();
    let ainv = lu.try_inverse().ok_or(GreenError::Singular)?;
    let cond = (one_norm(&a) * one_norm(&ainv)).to_f64_lossy();
    if cond > CONDITION_LIMIT {
        return Err(GreenError::IllConditioned {
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let x = &ainv * &b;
    let blocks = BlockOperator::from_flat(&x);
    let green = GreenTensor {
        s: lambda.s(),
        blocks,
        method: GreenMethod::Direct,
        residual: T::zero(),
    };
    finish_with_residual(green, lambda, T::of(EXACT_RESIDUAL_TOL))
}

/// One Born step: `G -> -L^{-1} (Lambda^1 o G)` with the weighted kernel
/// contraction.
fn born_step<T: Real>(
    linv: &[Block<T>],
    lambda1: &BlockOperator<T>,
    weights: &[T],
    term: &BlockOperator<T>,
) -> BlockOperator<T> {
    let contracted = lambda1.weighted_compose(weights, term);
    match contracted {
        BlockOperator::Diagonal(v) => BlockOperator::Diagonal(
            v.into_iter()
                .enumerate()
                .map(|(k, b)| -(linv[k] * b))
                .collect(),
        ),
        BlockOperator::Dense(v) => BlockOperator::Dense(
            v.into_iter()
                .enumerate()
                .map(|(k, row)| row.into_iter().map(|b| -(linv[k] * b)).collect())
                .collect(),
        ),
    }
}

fn born_free_term<T: Real>(lambda: &LambdaKernel<T>) -> Result<(Vec<Block<T>>, BlockOperator<T>), GreenError> {
    let w = lambda.weights();
    let mut linv = Vec::with_capacity(lambda.n_points());
    for k in lambda.points() {
        linv.push(green_free(k, lambda.s(), lambda.light_speed())?);
    }
    let g0 = BlockOperator::Diagonal(
        linv.iter()
            .zip(w)
            .map(|(b, &wk)| b * re(T::one() / wk))
            .collect(),
    );
    Ok((linv, g0))
}

/// Born series with convergence and divergence control. Terms are added
/// while their relative block norm exceeds `tol`; three consecutive
/// non-decreasing term norms abort with a divergence error.
pub fn solve_born<T: Real>(
    lambda: &LambdaKernel<T>,
    tol: T,
    n_max: usize,
) -> Result<GreenTensor<T>, GreenError> {
    assert!(tol > T::zero() && n_max >= 1, "tol > 0 and n_max >= 1");
    let (_, lambda1) = lambda.split().ok_or(GreenError::MissingSplit)?;
    let lambda1 = lambda1.clone();
    let (linv, g0) = born_free_term(lambda)?;
    let w = lambda.weights();

    let mut accum = g0.clone();
    let mut term = g0;
    let mut n_terms = 1usize;
    let mut prev_norms: Vec<T> = vec![term.max_block_norm()];
    let mut last_rel = T::zero();
    let mut converged = false;
    for _ in 1..=n_max {
        term = born_step(&linv, &lambda1, w, &term);
        let norm = term.max_block_norm();
        prev_norms.push(norm);
        // three consecutive non-decreasing term norms -> diverging
        let m = prev_norms.len();
        if m >= 4
            && prev_norms[m - 1] >= prev_norms[m - 2]
            && prev_norms[m - 2] >= prev_norms[m - 3]
            && prev_norms[m - 3] >= prev_norms[m - 4]
        {
            let factor = (prev_norms[m - 1] / prev_norms[m - 2]).to_f64_lossy();
            return Err(GreenError::Divergence {
                factor,
                terms: n_terms,
            });
        }
        let scale = accum.max_block_norm();
        last_rel = if scale > T::zero() { norm / scale } else { norm };
        if last_rel <= tol {
            converged = true;
            break;
        }
        accum = accum.add(&term);
        n_terms += 1;
    }
    if !converged {
        return Err(GreenError::NotConverged {
            rel: last_rel.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
            n_max,
        });
    }
    let green = GreenTensor {
        s: lambda.s(),
        blocks: accum,
        method: GreenMethod::Born { n_terms },
        residual: T::zero(),
    };
    finish_with_residual(green, lambda, T::of(BORN_RESIDUAL_FACTOR) * tol)
}

/// Fixed-order Born partial sum `G^(0) + ... + G^(orders)` with no residual
/// gate; the order-expansion oracle for the convergence studies.
pub fn born_partial_sum<T: Real>(
    lambda: &LambdaKernel<T>,
    orders: usize,
) -> Result<GreenTensor<T>, GreenError> {
    let (_, lambda1) = lambda.split().ok_or(GreenError::MissingSplit)?;
    let lambda1 = lambda1.clone();
    let (linv, g0) = born_free_term(lambda)?;
    let w = lambda.weights();
    let mut accum = g0.clone();
    let mut term = g0;
    for _ in 1..=orders {
        term = born_step(&linv, &lambda1, w, &term);
        accum = accum.add(&term);
    }
    let residual = green_residual(lambda.blocks(), w, &accum);
    Ok(GreenTensor {
        s: lambda.s(),
        blocks: accum,
        method: GreenMethod::Born {
            n_terms: orders + 1,
        },
        residual,
    })
}

fn finish_with_residual<T: Real>(
    mut green: GreenTensor<T>,
    lambda: &LambdaKernel<T>,
    tol: T,
) -> Result<GreenTensor<T>, GreenError> {
    let r = green_residual(lambda.blocks(), lambda.weights(), &green.blocks);
    green.residual = r;
    // near poles |G| grows like 1/eta and the float evaluation of the
    // residual product cannot fall below eps * ||Lambda|| ||G||; gate on the
    // stated tolerance or that floor, whichever is larger
    let mut w_max = T::zero();
    for &w in lambda.weights() {
        w_max = crate::scalar::rmax(w_max, w);
    }
    let floor = T::of(100.0)
        * T::default_epsilon()
        * T::from_usize(lambda.n_points()).unwrap()
        * w_max
        * lambda.blocks().max_block_norm()
        * green.blocks.max_block_norm();
    let gate = crate::scalar::rmax(tol, floor);
    if r > gate {
        return Err(GreenError::ResidualExceeded {
            residual: r.to_f64_lossy(),
            tol: gate.to_f64_lossy(),
        });
    }
    Ok(green)
}

/// Defining residual of an arbitrary candidate Green tensor.
pub fn residual_of<T: Real>(lambda: &LambdaKernel<T>, green: &GreenTensor<T>) -> T {
    green_residual(lambda.blocks(), lambda.weights(), &green.blocks)
}

/// Scan `|det T(k, -i w + eta)|` over a frequency bracket and return the
/// interpolated minimum: the dressed transverse resonance locator.
pub fn transverse_resonance_scan<T: Real>(
    response_at: impl Fn(Cplx<T>) -> Result<ResponseKernel<T>, crate::medium::MediumError>,
    ik: usize,
    k: &Vector3<T>,
    omega_range: (T, T),
    n: usize,
    eta: T,
) -> Result<(T, Vec<(T, T)>), crate::medium::MediumError> {
    let (a, b) = omega_range;
    let step = (b - a) / T::from_usize(n - 1).unwrap();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let omega = a + step * T::from_usize(i).unwrap();
        let s = Cplx::new(eta, -omega);
        let resp = response_at(s)?;
        let t = t_tensor(&resp, ik, k).expect("homogeneous response");
        samples.push((omega, cabs(t.determinant())));
    }
    let mut i_min = 0;
    for (i, &(_, v)) in samples.iter().enumerate() {
        if v < samples[i_min].1 {
            i_min = i;
        }
    }
    // three-point parabolic refinement in log|det|
    let omega_min = if i_min == 0 || i_min + 1 == samples.len() {
        samples[i_min].0
    } else {
        let (x0, y0) = samples[i_min - 1];
        let (x1, y1) = samples[i_min];
        let (x2, y2) = samples[i_min + 1];
        let (l0, l1, l2) = (y0.ln(), y1.ln(), y2.ln());
        let denom = l0 - T::of(2.0) * l1 + l2;
        if denom.abs() > T::zero() {
            x1 + (x2 - x0) * T::of(0.25) * (l0 - l2) / denom
        } else {
            x1
        }
    };
    Ok((omega_min, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ReciprocalGrid};
    use crate::medium::{CouplingModel, MediumMode, OmegaGrid, ResponseKernel};
    use crate::scalar::Constants;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid() -> ReciprocalGrid<f64> {
        ReciprocalGrid::build(&GridSpec {
            extent: [1.0, 1.0, 1.0],
            shape: [2, 2, 2],
        })
        .unwrap()
    }

    fn grid8() -> ReciprocalGrid<f64> {
        ReciprocalGrid::build(&GridSpec {
            extent: [1.0, 1.0, 1.0],
            shape: [2, 2, 4],
        })
        .unwrap()
    }

    fn lorentz_model(grid: &ReciprocalGrid<f64>) -> CouplingModel<f64> {
        CouplingModel::diagonal_scalar(
            Constants::natural(),
            OmegaGrid::line(2.0, 1.0).unwrap(),
            &[0.8944271909999159], // lambda^2 = 0.8
            grid.len(),
            MediumMode::Full,
        )
        .unwrap()
    }

    #[test]
    fn green_free_inverts_lambda_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let k = Vector3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0,
            );
            if k.norm() < 0.1 {
                continue;
            }
            let s = Cplx::new(rng.gen::<f64>() + 0.1, rng.gen::<f64>() * 2.0 - 1.0);
            let c = 1.0 + rng.gen::<f64>();
            let l = crate::assembly::lambda_free(&k, s, c);
            let linv = green_free(&k, s, c).unwrap();
            let prod = l * linv - identity_block::<f64>();
            assert!(block_norm(&prod) < 1e-13, "residual {}", block_norm(&prod));
        }
    }

    #[test]
    fn green_free_hand_example() {
        // inverse of diag(-2,-2,-1)
        let g = green_free(&Vector3::new(0.0_f64, 0.0, 1.0), Cplx::new(1.0, 0.0), 1.0).unwrap();
        let want = Block::<f64>::from_diagonal(&Vector3::new(
            Cplx::new(-0.5, 0.0),
            Cplx::new(-0.5, 0.0),
            Cplx::new(-1.0, 0.0),
        ));
        assert!(block_norm(&(g - want)) < 1e-15);
    }

    #[test]
    fn green_free_longitudinal_block_independent_of_k() {
        let s = Cplx::new(0.8, -0.4);
        let c = 1.0;
        for k in [
            Vector3::new(0.0_f64, 0.0, 1.0),
            Vector3::new(0.0, 0.0, 2.5),
            Vector3::new(0.0, 0.0, 0.3),
        ] {
            let g = green_free(&k, s, c).unwrap();
            let want = -Cplx::new(c * c, 0.0) / (s * s);
            assert!((g[(2, 2)] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn green_free_pole_rejected() {
        // s = i c |k| exactly
        let k = Vector3::new(0.0_f64, 0.0, 1.0);
        let err = green_free(&k, Cplx::new(0.0, 1.0), 1.0).unwrap_err();
        assert!(matches!(err, GreenError::Pole { .. }));
    }

    #[test]
    fn homogeneous_vacuum_reduces_to_free() {
        let g = unit_grid();
        let m = CouplingModel::<f64>::vacuum(Constants::natural(), g.len());
        let s = Cplx::new(0.7, -1.1);
        let r = m.response_at(s, &g).unwrap();
        for (ik, k) in g.points().iter().enumerate() {
            let hb = homogeneous_block(&r, ik, k).unwrap();
            let fb = green_free(k, s, 1.0).unwrap();
            assert!(block_norm(&(hb - fb)) < 1e-13);
        }
    }

    #[test]
    fn t_tensor_inverse_random_hermitian_susceptibility() {
        let g = unit_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rand_herm = |rng: &mut ChaCha8Rng| {
            let a = Block::<f64>::from_fn(|_, _| {
                Cplx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            (a + a.adjoint()) * Cplx::new(0.25, 0.0)
        };
        let chi_e: Vec<_> = (0..g.len()).map(|_| rand_herm(&mut rng)).collect();
        let chi_m: Vec<_> = (0..g.len()).map(|_| rand_herm(&mut rng)).collect();
        let s = Cplx::new(0.9, 0.6);
        let r = ResponseKernel::from_homogeneous_coefficients(
            &g,
            s,
            chi_e,
            chi_m,
            Constants::natural(),
        );
        for (ik, k) in g.points().iter().enumerate() {
            let t = t_tensor(&r, ik, k).unwrap();
            let tinv = homogeneous_block(&r, ik, k).unwrap();
            assert!(block_norm(&(t * tinv - identity_block::<f64>())) < 1e-13);
        }
    }

    #[test]
    fn dressed_dispersion_minimum_matches_analytic_root() {
        // scalar constant chi_e: transverse pole at w = c|k|/sqrt(1+chi)
        let g = unit_grid();
        let chi = 0.21;
        let ik = 0;
        let k = g.point(ik);
        let ck = k.norm();
        let eta = 1e-4 * ck;
        let (w_min, _) = transverse_resonance_scan(
            |s| {
                Ok(ResponseKernel::from_scalar(
                    &g,
                    s,
                    Cplx::new(chi, 0.0),
                    Cplx::new(0.0, 0.0),
                    Constants::natural(),
                ))
            },
            ik,
            &k,
            (0.8 * ck, 1.0 * ck),
            4001,
            eta,
        )
        .unwrap();
        let want = ck / (1.0 + chi).sqrt();
        assert!(
            (w_min - want).abs() / want < 1e-3,
            "dressed root {w_min} vs {want}"
        );
    }

    #[test]
    fn dispersion_resonance_reported_singular() {
        let g = unit_grid();
        let ik = 0;
        let k = g.point(ik);
        let chi = 0.21;
        let w_pole = k.norm() / (1.0 + chi as f64).sqrt();
        let r = ResponseKernel::from_scalar(
            &g,
            Cplx::new(0.0, -w_pole),
            Cplx::new(chi, 0.0),
            Cplx::new(0.0, 0.0),
            Constants::natural(),
        );
        assert!(matches!(
            homogeneous_block(&r, ik, &k).unwrap_err(),
            GreenError::SingularT { .. }
        ));
    }

    #[test]
    fn direct_vacuum_matches_free_blocks() {
        let g = unit_grid();
        let m = CouplingModel::<f64>::vacuum(Constants::natural(), g.len());
        let s = Cplx::new(0.45, -1.3);
        let r = m.response_at(s, &g).unwrap();
        let lam = assemble(&r, g.points());
        let direct = solve_direct(&lam).unwrap();
        assert!(direct.residual < 1e-12);
        for (ik, k) in g.points().iter().enumerate() {
            let want = green_free(k, s, 1.0).unwrap() / Cplx::new(g.weight(ik), 0.0);
            for iq in 0..g.len() {
                let got = direct.blocks.get(ik, iq);
                let expect = if ik == iq { want } else { Block::<f64>::zeros() };
                assert!(block_norm(&(got - expect)) < 1e-12);
            }
        }
    }

    #[test]
    fn direct_matches_homogeneous_cross_method() {
        let g = grid8();
        let m = lorentz_model(&g);
        let s = Cplx::new(1.5, 0.0);
        let r = m.response_at(s, &g).unwrap();
        let lam = assemble(&r, g.points());
        let direct = solve_direct(&lam).unwrap();
        let hom = solve_homogeneous(&r, g.points()).unwrap();
        for ik in 0..g.len() {
            for iq in 0..g.len() {
                let d = block_norm(&(direct.blocks.get(ik, iq) - hom.blocks.get(ik, iq)));
                assert!(d < 1e-10, "cross-method deviation {d} at ({ik},{iq})");
            }
        }
    }

    fn weak_inhomogeneous_model(
        grid: &ReciprocalGrid<f64>,
        eps: f64,
        seed: u64,
    ) -> CouplingModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.len();
        let base = 0.6;
        let mut dense = vec![vec![vec![Block::<f64>::zeros(); n]; n]; 1];
        for k in 0..n {
            dense[0][k][k] = identity_block::<f64>() * Cplx::new(base / grid.weight(k), 0.0);
            for p in 0..n {
                if p != k {
                    dense[0][k][p] = Block::<f64>::from_fn(|_, _| {
                        Cplx::new(eps * (rng.gen::<f64>() - 0.5), 0.0)
                    });
                }
            }
        }
        CouplingModel::new(
            Constants::natural(),
            OmegaGrid::line(2.0, 1.0).unwrap(),
            crate::medium::Coupling::Dense(dense),
            crate::medium::Coupling::zero_diagonal(1, n),
            MediumMode::Full,
            n,
        )
        .unwrap()
    }

    #[test]
    fn direct_weak_perturbation_residual_small() {
        let g = unit_grid();
        let m = weak_inhomogeneous_model(&g, 0.05, 13);
        let r = m.response_at(Cplx::new(1.2, 0.3), &g).unwrap();
        let lam = assemble(&r, g.points());
        let direct = solve_direct(&lam).unwrap();
        assert!(direct.residual <= 1e-10, "residual {}", direct.residual);
    }

    #[test]
    fn born_vacuum_converges_in_one_term() {
        let g = unit_grid();
        let m = CouplingModel::<f64>::vacuum(Constants::natural(), g.len());
        let s = Cplx::new(0.6, -0.8);
        let r = m.response_at(s, &g).unwrap();
        let lam = assemble(&r, g.points());
        let born = solve_born(&lam, 1e-10, 8).unwrap();
        assert_eq!(born.method, GreenMethod::Born { n_terms: 1 });
        for (ik, k) in g.points().iter().enumerate() {
            let want = green_free(k, s, 1.0).unwrap() / Cplx::new(g.weight(ik), 0.0);
            assert!(block_norm(&(born.blocks.get(ik, ik) - want)) < 1e-13);
        }
    }

    /// First-order Born error against the dense solve scales as O(chi^2).
    #[test]
    fn born_first_order_error_scales_quadratically() {
        let g = unit_grid();
        let s = Cplx::new(1.1, 0.4);
        let err_at = |chi: f64| {
            let r = ResponseKernel::from_scalar(
                &g,
                s,
                Cplx::new(chi, 0.0),
                Cplx::new(0.0, 0.0),
                Constants::natural(),
            );
            let lam = assemble(&r, g.points());
            let direct = solve_direct(&lam).unwrap();
            let first = born_partial_sum(&lam, 1).unwrap();
            let mut worst: f64 = 0.0;
            for ik in 0..g.len() {
                for iq in 0..g.len() {
                    worst = worst
                        .max(block_norm(&(direct.blocks.get(ik, iq) - first.blocks.get(ik, iq))));
                }
            }
            worst
        };
        let e1 = err_at(1e-3);
        let e2 = err_at(1e-2);
        let order = (e2 / e1).log10();
        assert!(
            (2.0 / 1.5..2.0 * 1.5).contains(&order),
            "fitted order {order}"
        );
    }

    #[test]
    fn born_agrees_with_direct_when_converged() {
        let g = grid8();
        let m = weak_inhomogeneous_model(&g, 0.03, 29);
        let r = m.response_at(Cplx::new(1.5, 0.2), &g).unwrap();
        let lam = assemble(&r, g.points());
        let tol = 1e-10;
        let born = solve_born(&lam, tol, 64).unwrap();
        let direct = solve_direct(&lam).unwrap();
        let mut worst: f64 = 0.0;
        for ik in 0..g.len() {
            for iq in 0..g.len() {
                worst =
                    worst.max(block_norm(&(direct.blocks.get(ik, iq) - born.blocks.get(ik, iq))));
            }
        }
        assert!(worst <= 10.0 * tol, "method disagreement {worst}");
    }

    #[test]
    fn born_strong_coupling_diverges_with_factor_report() {
        let g = unit_grid();
        let s = Cplx::new(3.0, 0.0);
        // chi tuned so ||L^-1 Lambda^1|| ~ 2 on the transverse sector
        let chi = 2.0 * (0.75 + 9.0) / 9.0;
        let r = ResponseKernel::from_scalar(
            &g,
            s,
            Cplx::new(chi, 0.0),
            Cplx::new(0.0, 0.0),
            Constants::natural(),
        );
        let lam = assemble(&r, g.points());
        match solve_born(&lam, 1e-10, 50).unwrap_err() {
            GreenError::Divergence { factor, terms } => {
                assert!(factor > 1.0, "estimated factor {factor}");
                assert!(terms < 50);
            }
            e => panic!("expected divergence, got {e:?}"),
        }
    }

    /// Reciprocity G(k,p) = G^T(p,k) for real symmetric kernels at real s.
    #[test]
    fn reciprocity_for_real_couplings_at_real_s() {
        let g = unit_grid();
        let m = weak_inhomogeneous_model(&g, 0.1, 41);
        let r = m.response_at(Cplx::new(1.4, 0.0), &g).unwrap();
        let lam = assemble(&r, g.points());
        let direct = solve_direct(&lam).unwrap();
        for ik in 0..g.len() {
            for iq in 0..g.len() {
                let a = direct.blocks.get(ik, iq);
                let b = direct.blocks.get(iq, ik).transpose();
                assert!(block_norm(&(a - b)) < 1e-10, "({ik},{iq})");
            }
        }
    }

    #[test]
    fn ill_conditioned_system_rejected() {
        let g = unit_grid();
        let ik = 0;
        let chi = 0.21;
        let w_pole = g.point(ik).norm() / (1.0 + chi as f64).sqrt();
        // essentially on the dispersion resonance: near-singular T
        let r = ResponseKernel::from_scalar(
            &g,
            Cplx::new(1e-13, -w_pole),
            Cplx::new(chi, 0.0),
            Cplx::new(0.0, 0.0),
            Constants::natural(),
        );
        let lam = assemble(&r, g.points());
        match solve_direct(&lam) {
            Err(GreenError::IllConditioned { .. }) | Err(GreenError::Singular) => {}
            Err(GreenError::ResidualExceeded { .. }) => {}
            other => panic!("expected conditioning failure, got {other:?}"),
        }
    }
}
