//! Assembly of the wave-operator kernel whose inverse is the Green tensor.
//!
//! In reciprocal Laplace space the field equation reads
//! `sum_q w_q Lambda(k,q,s) E(q,s) = J_N(k,s)` with
//!
//! ```text
//! Lambda_ij(k,q,s) = e_{i d g} e_{a b j} k^d q^b mu~_{g a}(k,q,s) - (s^2/c^2) eps~_ij(k,q,s)
//! ```
//!
//! split into the free part `Lambda^0(k,q) = delta(k,q) L(k,s)` with
//! `L_ij = k_i k_j - delta_ij |k|^2 - (s^2/c^2) delta_ij` and the medium part
//! `Lambda^1 = -[k]_x chi^m(k,q) [q]_x - (s^2/c^2) chi^e(k,q)`. The double
//! Levi-Civita contraction collapses to the cross-matrix sandwich, which is
//! unit-tested against a brute-force epsilon-tensor loop.

use nalgebra::Vector3;

use crate::linalg::{complexify, cross_matrix, Block, BlockOperator};
use crate::medium::ResponseKernel;
use crate::scalar::{re, Cplx, Real};

/// Free-space wave operator `L(k,s)`.
pub fn lambda_free<T: Real>(k: &Vector3<T>, s: Cplx<T>, c: T) -> Block<T> {
    let k2 = k.norm_squared();
    let s2c2 = s * s / re(c * c);
    let mut m = complexify(&(k * k.transpose()));
    for i in 0..3 {
        m[(i, i)] -= re(k2) + s2c2;
    }
    m
}

/// The double Levi-Civita contraction
/// `M_ij = e_{i d g} e_{a b j} k^d q^b X_{g a}`, equal to `[k]_x X [q]_x`.
pub fn levi_civita_contract<T: Real>(
    k: &Vector3<T>,
    q: &Vector3<T>,
    x: &Block<T>,
) -> Block<T> {
    complexify(&cross_matrix(k)) * x * complexify(&cross_matrix(q))
}

/// Medium part of the kernel at one grid pair (literal kernel values).
pub fn lambda_medium<T: Real>(
    response: &ResponseKernel<T>,
    ik: usize,
    iq: usize,
    k: &Vector3<T>,
    q: &Vector3<T>,
) -> Block<T> {
    let s = response.s();
    let c = response.constants().c;
    let s2c2 = s * s / re(c * c);
    let curl = levi_civita_contract(k, q, &response.chi_m_block(ik, iq));
    -curl - response.chi_e_block(ik, iq) * s2c2
}

/// The assembled kernel: total blocks plus the free/medium split used by the
/// Born series.
#[derive(Debug, Clone)]
pub struct LambdaKernel<T: Real> {
    s: Cplx<T>,
    blocks: BlockOperator<T>,
    split: Option<(BlockOperator<T>, BlockOperator<T>)>,
    weights: Vec<T>,
    points: Vec<Vector3<T>>,
    c: T,
}

impl<T: Real> LambdaKernel<T> {
    pub fn s(&self) -> Cplx<T> {
        self.s
    }

    pub fn blocks(&self) -> &BlockOperator<T> {
        &self.blocks
    }

    pub fn split(&self) -> Option<(&BlockOperator<T>, &BlockOperator<T>)> {
        self.split.as_ref().map(|(a, b)| (a, b))
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn light_speed(&self) -> T {
        self.c
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.blocks.is_diagonal()
    }
}

/// Build `Lambda = Lambda^0 + Lambda^1` over all grid pairs from a response
/// kernel; the delta is realized as `[k=q]/w_k` on the diagonal.
pub fn assemble<T: Real>(
    response: &ResponseKernel<T>,
    points: &[Vector3<T>],
) -> LambdaKernel<T> {
    let w = response.weights().to_vec();
    let n = w.len();
    assert_eq!(points.len(), n, "grid points must match the response kernel");
    let s = response.s();
    let c = response.constants().c;

    let free = BlockOperator::from_diagonal_fn(n, |k| {
        lambda_free(&points[k], s, c) * re(T::one() / w[k])
    });
    let medium = if response.is_homogeneous() {
        BlockOperator::from_diagonal_fn(n, |k| {
            lambda_medium(response, k, k, &points[k], &points[k])
        })
    } else {
        BlockOperator::from_dense_fn(n, |k, q| {
            lambda_medium(response, k, q, &points[k], &points[q])
        })
    };
    let blocks = free.add(&medium);
    LambdaKernel {
        s,
        blocks,
        split: Some((free, medium)),
        weights: w,
        points: points.to_vec(),
        c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, ReciprocalGrid};
    use crate::linalg::block_norm;
    use crate::medium::{CouplingModel, MediumMode, OmegaGrid};
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

    #[test]
    fn lambda_free_hand_example() {
        // k = (0,0,1), s = 1, c = 1 -> diag(-2, -2, -1)
        let l = lambda_free(&Vector3::new(0.0_f64, 0.0, 1.0), Cplx::new(1.0, 0.0), 1.0);
        let want = Block::<f64>::from_diagonal(&Vector3::new(
            Cplx::new(-2.0, 0.0),
            Cplx::new(-2.0, 0.0),
            Cplx::new(-1.0, 0.0),
        ));
        assert!(block_norm(&(l - want)) < 1e-15);
    }

    #[test]
    fn lambda_free_eigenvectors() {
        let k = Vector3::new(0.3_f64, -0.7, 1.1);
        let s = Cplx::new(0.4, 1.2);
        let c = 2.0;
        let l = lambda_free(&k, s, c);
        let t = crate::grid::PolarizationTriad::for_wavevector(&k).unwrap();
        let k2 = k.norm_squared();
        let s2c2 = s * s / Cplx::new(c * c, 0.0);
        // transverse eigenvalue -(|k|^2 + s^2/c^2)
        let e1 = t.e1.map(|x| Cplx::new(x, 0.0));
        let want_t = e1 * (-(Cplx::new(k2, 0.0) + s2c2));
        assert!((l * e1 - want_t).norm() < 1e-14);
        // longitudinal eigenvalue -s^2/c^2
        let e3 = t.e3.map(|x| Cplx::new(x, 0.0));
        let want_l = e3 * (-s2c2);
        assert!((l * e3 - want_l).norm() < 1e-14);
    }

    /// Brute-force epsilon-tensor loop vs the cross-matrix sandwich.
    #[test]
    fn levi_civita_contraction_matches_brute_force() {
        fn eps(i: usize, j: usize, k: usize) -> f64 {
            match (i, j, k) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
                (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
                _ => 0.0,
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let q = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let x = Block::<f64>::from_fn(|_, _| Cplx::new(rng.gen::<f64>(), rng.gen::<f64>()));
            let fast = levi_civita_contract(&k, &q, &x);
            let mut slow = Block::<f64>::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    let mut acc = Cplx::new(0.0, 0.0);
                    for d in 0..3 {
                        for g in 0..3 {
                            for a in 0..3 {
                                for b in 0..3 {
                                    acc += Cplx::new(eps(i, d, g) * eps(a, b, j) * k[d] * q[b], 0.0)
                                        * x[(g, a)];
                                }
                            }
                        }
                    }
                    slow[(i, j)] = acc;
                }
            }
            assert!(block_norm(&(fast - slow)) < 1e-13);
        }
    }

    #[test]
    fn lambda_medium_vanishes_without_susceptibility() {
        let g = unit_grid();
        let m = CouplingModel::<f64>::vacuum(Constants::natural(), g.len());
        let r = m.response_at(Cplx::new(1.0, 0.0), &g).unwrap();
        let b = lambda_medium(&r, 0, 1, &g.point(0), &g.point(1));
        assert_eq!(b, Block::<f64>::zeros());
    }

    #[test]
    fn lambda_medium_scalar_electric() {
        // chi_e = chi I, chi_m = 0 -> -(s^2/c^2) chi I (delta-coefficient form)
        let g = unit_grid();
        let chi = Cplx::new(0.3, -0.1);
        let s = Cplx::new(0.7, 1.1);
        let r = crate::medium::ResponseKernel::from_scalar(
            &g,
            s,
            chi,
            Cplx::new(0.0, 0.0),
            Constants::natural(),
        );
        let k = 0;
        let got = lambda_medium(&r, k, k, &g.point(k), &g.point(k));
        let want = Block::<f64>::identity() * (-s * s * chi / Cplx::new(g.weight(k), 0.0));
        assert!(block_norm(&(got - want)) < 1e-15);
    }

    #[test]
    fn lambda_medium_scalar_magnetic_is_curl_curl() {
        // chi_m = chi I at k = q: -[k]x chi [k]x = -chi (k k^T - |k|^2 I)
        let g = unit_grid();
        let chi = Cplx::new(0.25, 0.05);
        let s = Cplx::new(0.4, -0.9);
        let r = crate::medium::ResponseKernel::from_scalar(
            &g,
            s,
            Cplx::new(0.0, 0.0),
            chi,
            Constants::natural(),
        );
        let ik = 2;
        let k = g.point(ik);
        let got = lambda_medium(&r, ik, ik, &k, &k);
        let kkt = complexify(&(k * k.transpose()));
        let want =
            -(kkt - Block::<f64>::identity() * Cplx::new(k.norm_squared(), 0.0)) * chi
                / Cplx::new(g.weight(ik), 0.0);
        assert!(block_norm(&(got - want)) < 1e-14);
    }

    #[test]
    fn assemble_vacuum_is_pure_free_part() {
        let g = unit_grid();
        let m = CouplingModel::<f64>::vacuum(Constants::natural(), g.len());
        let r = m.response_at(Cplx::new(0.9, 0.0), &g).unwrap();
        let lam = assemble(&r, g.points());
        assert!(lam.is_block_diagonal());
        let (free, medium) = lam.split().unwrap();
        assert_eq!(medium.max_block_norm(), 0.0);
        for k in 0..g.len() {
            assert_eq!(lam.blocks().get(k, k), free.get(k, k));
        }
    }

    #[test]
    fn split_parts_resum_exactly() {
        let g = unit_grid();
        let m = CouplingModel::<f64>::diagonal_scalar(
            Constants::natural(),
            OmegaGrid::line(2.0, 0.7).unwrap(),
            &[0.5],
            g.len(),
            MediumMode::Full,
        )
        .unwrap();
        let r = m.response_at(Cplx::new(0.3, 1.4), &g).unwrap();
        let lam = assemble(&r, g.points());
        let (free, medium) = lam.split().unwrap();
        let resum = free.add(medium);
        for k in 0..g.len() {
            for q in 0..g.len() {
                assert_eq!(resum.get(k, q), lam.blocks().get(k, q), "exact resum");
            }
        }
    }

    /// Homogeneous diagonal block agrees with an independent evaluation of
    /// the translationally invariant wave tensor
    /// T = [k]x (I - chi_m) [k]x - (s^2/c^2)(I + chi_e).
    #[test]
    fn homogeneous_diagonal_matches_t_tensor() {
        let g = unit_grid();
        let s = Cplx::new(0.2, -1.5);
        let chi_e = Cplx::new(0.21, 0.0);
        let chi_m = Cplx::new(0.07, -0.02);
        let r = crate::medium::ResponseKernel::from_scalar(&g, s, chi_e, chi_m, Constants::natural());
        let lam = assemble(&r, g.points());
        assert!(lam.is_block_diagonal());
        for ik in 0..g.len() {
            let k = g.point(ik);
            let kx = complexify(&cross_matrix(&k));
            let t = kx * (Block::<f64>::identity() * (Cplx::new(1.0, 0.0) - chi_m)) * kx
                - (Block::<f64>::identity() * (Cplx::new(1.0, 0.0) + chi_e)) * (s * s);
            let got = lam.blocks().get(ik, ik) * Cplx::new(g.weight(ik), 0.0);
            assert!(block_norm(&(got - t)) < 1e-13, "block {ik}");
        }
    }

    #[test]
    fn lambda_free_part_is_symmetric() {
        let g = ReciprocalGrid::build(&GridSpec {
            extent: [1.3, 0.8, 1.0],
            shape: [3, 3, 3],
        })
        .unwrap();
        let s = Cplx::new(0.6, 2.0);
        for k in g.points() {
            let l = lambda_free(k, s, 1.0);
            let asym = block_norm(&(l - l.transpose()));
            assert!(asym <= 1e-14);
        }
    }

    /// Lambda(k,q) = Lambda^H(q,k) blockwise for Hermitian chi kernels at
    /// real s (chi built from f f^H is Hermitian as a kernel).
    #[test]
    fn hermitian_kernel_symmetry_at_real_s() {
        let g = unit_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n_omega = 2;
        let dense: Vec<Vec<Vec<Block<f64>>>> = (0..n_omega)
            .map(|_| {
                (0..g.len())
                    .map(|_| {
                        (0..g.len())
                            .map(|_| {
                                Block::<f64>::from_fn(|_, _| {
                                    Cplx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                                })
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let m = CouplingModel::<f64>::new(
            Constants::natural(),
            OmegaGrid::trapezoid(vec![1.0, 2.0]).unwrap(),
            crate::medium::Coupling::Dense(dense.clone()),
            crate::medium::Coupling::Dense(dense),
            MediumMode::Full,
            g.len(),
        )
        .unwrap();
        let r = m.response_at(Cplx::new(1.3, 0.0), &g).unwrap();
        let lam = assemble(&r, g.points());
        for k in 0..g.len() {
            for q in 0..g.len() {
                let a = lam.blocks().get(k, q);
                let b = lam.blocks().get(q, k).adjoint();
                assert!(block_norm(&(a - b)) < 1e-12, "({k},{q})");
            }
        }
    }

    /// assemble is linear in chi_e and chi_m separately.
    #[test]
    fn assembly_superposition() {
        let g = unit_grid();
        let s = Cplx::new(0.5, -0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rand_op = |rng: &mut ChaCha8Rng| {
            let rows: Vec<Vec<Block<f64>>> = (0..g.len())
                .map(|_| {
                    (0..g.len())
                        .map(|_| {
                            Block::<f64>::from_fn(|_, _| {
                                Cplx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                            })
                        })
                        .collect()
                })
                .collect();
            BlockOperator::Dense(rows)
        };
        let (e1, e2) = (rand_op(&mut rng), rand_op(&mut rng));
        let (m1, m2) = (rand_op(&mut rng), rand_op(&mut rng));
        let zero = BlockOperator::zeros_dense(g.len());
        let resp = |e: &BlockOperator<f64>, m: &BlockOperator<f64>| {
            crate::medium::ResponseKernel::from_dense(
                &g,
                s,
                e.clone(),
                m.clone(),
                Constants::natural(),
            )
        };
        let lam_sum = assemble(&resp(&e1.add(&e2), &m1.add(&m2)), g.points());
        let lam_1 = assemble(&resp(&e1, &m1), g.points());
        let lam_2 = assemble(&resp(&e2, &m2), g.points());
        let lam_0 = assemble(&resp(&zero, &zero), g.points());
        for k in 0..g.len() {
            for q in 0..g.len() {
                let lhs = lam_sum.blocks().get(k, q);
                let rhs = lam_1.blocks().get(k, q) + lam_2.blocks().get(k, q)
                    - lam_0.blocks().get(k, q);
                assert!(block_norm(&(lhs - rhs)) < 1e-12);
            }
        }
    }
}
