//! Coupling-tensor model of the medium and its derived response.
//!
//! The medium is two reservoirs of harmonic oscillators, labeled by a
//! frequency grid, coupled to the electromagnetic field through 3x3 tensors
//! f (electric) and g (magnetic) sampled over reciprocal-space point pairs.
//! The causal susceptibility kernels are quadratic in the couplings:
//!
//! ```text
//! chi^e(k,q,t) = (1/eps0) int dw  sin(w t)/w  int d^3p f(w,k,p) f^H(w,q,p)   (t > 0)
//! chi^m(k,q,t) =    mu0   int dw  sin(w t)/w  int d^3p g(w,k,p) g^H(w,q,p)   (t > 0)
//! ```
//!
//! and vanish identically for t <= 0. In Laplace language the sine kernel
//! becomes 1/(s^2 + w^2), and the permittivity/permeability kernels are
//! `eps = delta I + chi^e`, `mu = delta I - chi^m`.
//!
//! Translationally invariant media are stored diagonally: the stored block
//! is the coefficient of the discrete delta, i.e. `f(w,k,p) = F_w(k) [k=p] / w_k`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ReciprocalGrid;
use crate::linalg::{dagger, Block, BlockOperator};
use crate::scalar::{re, sinc_omega, Constants, Cplx, Real};

#[derive(Debug, Error)]
pub enum MediumError {
    #[error("frequency grid must be strictly increasing and positive")]
    BadOmegaGrid,
    #[error("frequency quadrature weights must be positive and match the grid")]
    BadOmegaWeights,
    #[error("coupling sample shape mismatch: {0}")]
    Shape(String),
    #[error("single-response media carry no magnetic coupling, but g is nonzero")]
    SingleResponseNonzeroG,
    #[error("operation requires single-response mode")]
    ModeError,
    #[error(
        "Laplace kernel pole: s^2 + w^2 vanishes at quadrature node w = {omega}; increase the regulator eta"
    )]
    PoleAtNode { omega: f64 },
    #[error("mixing family violates orthogonality: defect {defect:.3e} > {tol:.1e}")]
    GaugeOrthogonality { defect: f64, tol: f64 },
    #[error("negative loss spectral density at w = {omega}: {value:.3e}")]
    Passivity { omega: f64, value: f64 },
    #[error("physical constants are inconsistent: |c^2 eps0 mu0 - 1| = {defect:.3e}")]
    InconsistentConstants { defect: f64 },
    #[error("medium spec: {0}")]
    Spec(String),
}

/// Full two-reservoir medium or one that admits only a single response
/// equation (no polarization/magnetization split).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumMode {
    Full,
    SingleResponse,
}

/// Which susceptibility kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Electric,
    Magnetic,
}

/// Positive ascending frequency grid with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaGrid<T: Real> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> OmegaGrid<T> {
    pub fn new(nodes: Vec<T>, weights: Vec<T>) -> Result<Self, MediumError> {
        if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|&w| !(w > T::zero())) {
            return Err(MediumError::BadOmegaGrid);
        }
        if weights.len() != nodes.len() || weights.iter().any(|&w| !(w > T::zero())) {
            return Err(MediumError::BadOmegaWeights);
        }
        Ok(Self { nodes, weights })
    }

    /// Trapezoid weights on the given nodes.
    pub fn trapezoid(nodes: Vec<T>) -> Result<Self, MediumError> {
        let n = nodes.len();
        if n == 1 {
            return Err(MediumError::BadOmegaWeights);
        }
        let mut weights = vec![T::zero(); n];
        for i in 0..n.saturating_sub(1) {
            let h = (nodes[i + 1] - nodes[i]) * T::of(0.5);
            weights[i] += h;
            weights[i + 1] += h;
        }
        Self::new(nodes, weights)
    }

    /// A single spectral line of explicit weight.
    pub fn line(omega: T, weight: T) -> Result<Self, MediumError> {
        Self::new(vec![omega], vec![weight])
    }

    /// No reservoir at all (free space).
    pub fn empty() -> Self {
        Self {
            nodes: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn max_node(&self) -> Option<T> {
        self.nodes.last().copied()
    }
}

/// Coupling samples over (frequency, k, p).
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling<T: Real> {
    /// Translationally invariant: stored block is the coefficient of the
    /// discrete delta, `f(w,k,p) = blocks[iw][ik] [k=p] / w_k`. Indexed
    /// \[iw\]\[ik\].
    Diagonal(Vec<Vec<Block<T>>>),
    /// Literal samples f(w,k,p), indexed \[iw\]\[ik\]\[ip\].
    Dense(Vec<Vec<Vec<Block<T>>>>),
}

impl<T: Real> Coupling<T> {
    pub fn zero_diagonal(n_omega: usize, n_points: usize) -> Self {
        Coupling::Diagonal(vec![vec![Block::<T>::zeros(); n_points]; n_omega])
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Coupling::Diagonal(_))
    }

    pub fn n_omega(&self) -> usize {
        match self {
            Coupling::Diagonal(v) => v.len(),
            Coupling::Dense(v) => v.len(),
        }
    }

    pub fn n_points(&self) -> usize {
        match self {
            Coupling::Diagonal(v) => v.first().map_or(0, |r| r.len()),
            Coupling::Dense(v) => v.first().map_or(0, |r| r.len()),
        }
    }

    /// Literal sample value f(w_iw, k_ik, p_ip) under the storage convention.
    pub fn literal(&self, iw: usize, ik: usize, ip: usize, weights: &[T]) -> Block<T> {
        match self {
            Coupling::Diagonal(v) => {
                if ik == ip {
                    v[iw][ik] * re(T::one() / weights[ik])
                } else {
                    Block::<T>::zeros()
                }
            }
            Coupling::Dense(v) => v[iw][ik][ip],
        }
    }

    pub fn is_zero(&self) -> bool {
        let block_zero = |b: &Block<T>| b.iter().all(|z| z.norm_sqr() == T::zero());
        match self {
            Coupling::Diagonal(v) => v.iter().flatten().all(block_zero),
            Coupling::Dense(v) => v.iter().flatten().flatten().all(block_zero),
        }
    }

    fn check_shape(&self, n_omega: usize, n_points: usize) -> Result<(), MediumError> {
        let ok = match self {
            Coupling::Diagonal(v) => {
                v.len() == n_omega && v.iter().all(|r| r.len() == n_points)
            }
            Coupling::Dense(v) => {
                v.len() == n_omega
                    && v.iter()
                        .all(|r| r.len() == n_points && r.iter().all(|c| c.len() == n_points))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(MediumError::Shape(format!(
                "expected {n_omega} frequencies x {n_points} grid points"
            )))
        }
    }
}

/// The sampled medium model: frequency grid, electric and magnetic coupling
/// tensors, mode flag and physical constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel<T: Real> {
    constants: Constants<T>,
    omega: OmegaGrid<T>,
    f: Coupling<T>,
    g: Coupling<T>,
    mode: MediumMode,
    n_points: usize,
}

impl<T: Real> CouplingModel<T> {
    pub fn new(
        constants: Constants<T>,
        omega: OmegaGrid<T>,
        f: Coupling<T>,
        g: Coupling<T>,
        mode: MediumMode,
        n_points: usize,
    ) -> Result<Self, MediumError> {
        if !constants.is_consistent() {
            return Err(MediumError::InconsistentConstants {
                defect: constants.consistency().to_f64_lossy(),
            });
        }
        f.check_shape(omega.len(), n_points)?;
        g.check_shape(omega.len(), n_points)?;
        if mode == MediumMode::SingleResponse && !g.is_zero() {
            return Err(MediumError::SingleResponseNonzeroG);
        }
        Ok(Self {
            constants,
            omega,
            f,
            g,
            mode,
            n_points,
        })
    }

    /// Free space: empty reservoir.
    pub fn vacuum(constants: Constants<T>, n_points: usize) -> Self {
        Self {
            constants,
            omega: OmegaGrid::empty(),
            f: Coupling::Diagonal(Vec::new()),
            g: Coupling::Diagonal(Vec::new()),
            mode: MediumMode::Full,
            n_points,
        }
    }

    /// Isotropic translationally invariant electric coupling
    /// `f = lambda(w) I` (delta-coefficient form) with no magnetic coupling.
    pub fn diagonal_scalar(
        constants: Constants<T>,
        omega: OmegaGrid<T>,
        lambda: &[T],
        n_points: usize,
        mode: MediumMode,
    ) -> Result<Self, MediumError> {
        if lambda.len() != omega.len() {
            return Err(MediumError::Shape(
                "lambda samples must match the frequency grid".into(),
            ));
        }
        let f = Coupling::Diagonal(
            lambda
                .iter()
                .map(|&l| vec![Block::<T>::identity() * re(l); n_points])
                .collect(),
        );
        let g = Coupling::zero_diagonal(omega.len(), n_points);
        Self::new(constants, omega, f, g, mode, n_points)
    }

    pub fn constants(&self) -> Constants<T> {
        self.constants
    }

    pub fn omega(&self) -> &OmegaGrid<T> {
        &self.omega
    }

    pub fn mode(&self) -> MediumMode {
        self.mode
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn coupling(&self, kind: FieldKind) -> &Coupling<T> {
        match kind {
            FieldKind::Electric => &self.f,
            FieldKind::Magnetic => &self.g,
        }
    }

    /// True when both couplings are stored diagonally (translationally
    /// invariant medium).
    pub fn is_homogeneous(&self) -> bool {
        self.f.is_diagonal() && self.g.is_diagonal()
    }

    pub fn is_vacuum(&self) -> bool {
        self.omega.is_empty() || (self.f.is_zero() && self.g.is_zero())
    }

    /// Coupling pair spectrum `F(w,k,q) = sum_p w_p f(w,k,p) f^H(w,q,p)`;
    /// Hermitian positive semidefinite at k = q by construction.
    pub fn pair_spectrum(
        &self,
        kind: FieldKind,
        iw: usize,
        ik: usize,
        iq: usize,
        weights: &[T],
    ) -> Block<T> {
        let c = self.coupling(kind);
        match c {
            Coupling::Diagonal(v) => {
                if ik == iq {
                    let b = v[iw][ik];
                    b * dagger(&b) * re(T::one() / weights[ik])
                } else {
                    Block::<T>::zeros()
                }
            }
            Coupling::Dense(v) => {
                let mut acc = Block::<T>::zeros();
                for (ip, &w) in weights.iter().enumerate() {
                    acc += v[iw][ik][ip] * dagger(&v[iw][iq][ip]) * re(w);
                }
                acc
            }
        }
    }

    fn kind_prefactor(&self, kind: FieldKind) -> T {
        match kind {
            FieldKind::Electric => T::one() / self.constants.eps0,
            FieldKind::Magnetic => self.constants.mu0,
        }
    }

    /// Causal time-domain susceptibility kernel; identically zero for t <= 0.
    pub fn susceptibility_time(
        &self,
        kind: FieldKind,
        ik: usize,
        iq: usize,
        t: T,
        grid: &ReciprocalGrid<T>,
    ) -> Block<T> {
        if t <= T::zero() {
            return Block::<T>::zeros();
        }
        let w = grid.weights();
        let mut acc = Block::<T>::zeros();
        for (j, (&omega, &wo)) in self.omega.nodes.iter().zip(&self.omega.weights).enumerate() {
            acc += self.pair_spectrum(kind, j, ik, iq, w) * re(wo * sinc_omega(omega, t));
        }
        acc * re(self.kind_prefactor(kind))
    }

    /// Laplace-domain susceptibility kernel
    /// `chi~(k,q,s) = pref * sum_w w_w F(w,k,q) / (s^2 + w^2)`.
    pub fn susceptibility_laplace(
        &self,
        kind: FieldKind,
        ik: usize,
        iq: usize,
        s: Cplx<T>,
        grid: &ReciprocalGrid<T>,
    ) -> Result<Block<T>, MediumError> {
        let w = grid.weights();
        let s2 = s * s;
        let mut acc = Block::<T>::zeros();
        for (j, (&omega, &wo)) in self.omega.nodes.iter().zip(&self.omega.weights).enumerate() {
            let denom = s2 + re(omega * omega);
            let scale = s.norm_sqr() + omega * omega;
            if denom.norm_sqr().sqrt() <= T::of(1e-14) * scale {
                return Err(MediumError::PoleAtNode {
                    omega: omega.to_f64_lossy(),
                });
            }
            acc += self.pair_spectrum(kind, j, ik, iq, w) * (re(wo) / denom);
        }
        Ok(acc * re(self.kind_prefactor(kind)))
    }

    /// Assemble both susceptibility kernels over all grid pairs at one
    /// complex frequency, block-diagonal storage for homogeneous media.
    pub fn response_at(
        &self,
        s: Cplx<T>,
        grid: &ReciprocalGrid<T>,
    ) -> Result<ResponseKernel<T>, MediumError> {
        let n = grid.len();
        let build = |kind: FieldKind| -> Result<BlockOperator<T>, MediumError> {
            if self.coupling(kind).is_diagonal() {
                let mut blocks = Vec::with_capacity(n);
                for k in 0..n {
                    blocks.push(self.susceptibility_laplace(kind, k, k, s, grid)?);
                }
                Ok(BlockOperator::Diagonal(blocks))
            } else {
                let mut rows = Vec::with_capacity(n);
                for k in 0..n {
                    let mut row = Vec::with_capacity(n);
                    for q in 0..n {
                        row.push(self.susceptibility_laplace(kind, k, q, s, grid)?);
                    }
                    rows.push(row);
                }
                Ok(BlockOperator::Dense(rows))
            }
        };
        Ok(ResponseKernel {
            s,
            chi_e: build(FieldKind::Electric)?,
            chi_m: build(FieldKind::Magnetic)?,
            weights: grid.weights().to_vec(),
            constants: self.constants,
        })
    }

    /// Time derivative of the single-response kernel: the conductivity
    /// tensor `sigma(k,q,t) = (1/eps0) sum_w w_w cos(w t) F(w,k,q)`.
    /// Zero for t <= 0, matching the causal branch of the kernel.
    pub fn conductivity(
        &self,
        ik: usize,
        iq: usize,
        t: T,
        grid: &ReciprocalGrid<T>,
    ) -> Result<Block<T>, MediumError> {
        if self.mode != MediumMode::SingleResponse {
            return Err(MediumError::ModeError);
        }
        if t <= T::zero() {
            return Ok(Block::<T>::zeros());
        }
        let w = grid.weights();
        let mut acc = Block::<T>::zeros();
        for (j, (&omega, &wo)) in self.omega.nodes.iter().zip(&self.omega.weights).enumerate() {
            acc += self.pair_spectrum(FieldKind::Electric, j, ik, iq, w)
                * re(wo * (omega * t).cos());
        }
        Ok(acc * re(T::one() / self.constants.eps0))
    }

    /// Replace the electric coupling by the gauge-equivalent
    /// `f'(w,k,q) = sum_p' w_p' f(w,k,p') A(w,q,p')`. The physical response
    /// is unchanged for any mixing family satisfying the orthogonality
    /// condition.
    pub fn gauge_transform(
        &self,
        mixing: &GaugeMixing<T>,
        grid: &ReciprocalGrid<T>,
    ) -> Result<Self, MediumError> {
        mixing.validate(grid.weights())?;
        if mixing.n_omega() != self.omega.len() || mixing.n_points() != self.n_points {
            return Err(MediumError::Shape(
                "mixing family shape must match the model".into(),
            ));
        }
        let w = grid.weights();
        let n = self.n_points;
        let mut dense = Vec::with_capacity(self.omega.len());
        for iw in 0..self.omega.len() {
            let mut per_k = Vec::with_capacity(n);
            for ik in 0..n {
                let mut per_q = Vec::with_capacity(n);
                for iq in 0..n {
                    let mut acc = Block::<T>::zeros();
                    for ip in 0..n {
                        acc += self.f.literal(iw, ik, ip, w)
                            * mixing.blocks[iw][iq][ip]
                            * re(w[ip]);
                    }
                    per_q.push(acc);
                }
                per_k.push(per_q);
            }
            dense.push(per_k);
        }
        Self::new(
            self.constants,
            self.omega.clone(),
            Coupling::Dense(dense),
            self.g.clone(),
            self.mode,
            self.n_points,
        )
    }
}

/// Invert a k-diagonal scalar susceptibility for an isotropic diagonal
/// coupling. `target_im` samples the imaginary part of the susceptibility on
/// the shifted axis s = -i w + 0+ at the frequency grid nodes; the loss
/// spectral density gives `lambda^2(w) = (2 eps0 w / pi) Im chi~(-i w + 0+)`.
pub fn factor_diagonal_susceptibility<T: Real>(
    constants: Constants<T>,
    omega: OmegaGrid<T>,
    target_im: &[T],
    n_points: usize,
) -> Result<CouplingModel<T>, MediumError> {
    if target_im.len() != omega.len() {
        return Err(MediumError::Shape(
            "target samples must match the frequency grid".into(),
        ));
    }
    let two_over_pi = T::of(2.0) / T::pi();
    let mut lambda = Vec::with_capacity(target_im.len());
    for (&im_chi, &w) in target_im.iter().zip(omega.nodes()) {
        if im_chi < T::zero() {
            return Err(MediumError::Passivity {
                omega: w.to_f64_lossy(),
                value: im_chi.to_f64_lossy(),
            });
        }
        lambda.push((two_over_pi * constants.eps0 * w * im_chi).sqrt());
    }
    CouplingModel::diagonal_scalar(constants, omega, &lambda, n_points, MediumMode::Full)
}

/// Susceptibility kernels and the derived permittivity/permeability kernels
/// at one complex Laplace frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKernel<T: Real> {
    s: Cplx<T>,
    chi_e: BlockOperator<T>,
    chi_m: BlockOperator<T>,
    weights: Vec<T>,
    constants: Constants<T>,
}

impl<T: Real> ResponseKernel<T> {
    /// Build directly from susceptibility kernels in delta-coefficient form
    /// (the stored diagonal block becomes `coef / w_k`).
    pub fn from_homogeneous_coefficients(
        grid: &ReciprocalGrid<T>,
        s: Cplx<T>,
        chi_e_coef: Vec<Block<T>>,
        chi_m_coef: Vec<Block<T>>,
        constants: Constants<T>,
    ) -> Self {
        let w = grid.weights();
        let scale = |v: Vec<Block<T>>| {
            BlockOperator::Diagonal(
                v.into_iter()
                    .zip(w)
                    .map(|(b, &wk)| b * re(T::one() / wk))
                    .collect(),
            )
        };
        Self {
            s,
            chi_e: scale(chi_e_coef),
            chi_m: scale(chi_m_coef),
            weights: w.to_vec(),
            constants,
        }
    }

    /// Scalar isotropic homogeneous kernels `chi I`.
    pub fn from_scalar(
        grid: &ReciprocalGrid<T>,
        s: Cplx<T>,
        chi_e: Cplx<T>,
        chi_m: Cplx<T>,
        constants: Constants<T>,
    ) -> Self {
        let n = grid.len();
        Self::from_homogeneous_coefficients(
            grid,
            s,
            vec![Block::<T>::identity() * chi_e; n],
            vec![Block::<T>::identity() * chi_m; n],
            constants,
        )
    }

    /// Literal dense kernels (values of chi~(k,q,s)).
    pub fn from_dense(
        grid: &ReciprocalGrid<T>,
        s: Cplx<T>,
        chi_e: BlockOperator<T>,
        chi_m: BlockOperator<T>,
        constants: Constants<T>,
    ) -> Self {
        Self {
            s,
            chi_e,
            chi_m,
            weights: grid.weights().to_vec(),
            constants,
        }
    }

    pub fn s(&self) -> Cplx<T> {
        self.s
    }

    pub fn constants(&self) -> Constants<T> {
        self.constants
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.chi_e.is_diagonal() && self.chi_m.is_diagonal()
    }

    pub fn chi_e(&self) -> &BlockOperator<T> {
        &self.chi_e
    }

    pub fn chi_m(&self) -> &BlockOperator<T> {
        &self.chi_m
    }

    pub fn chi_e_block(&self, i: usize, j: usize) -> Block<T> {
        self.chi_e.get(i, j)
    }

    pub fn chi_m_block(&self, i: usize, j: usize) -> Block<T> {
        self.chi_m.get(i, j)
    }

    /// Permittivity kernel `eps(k,q) = delta(k,q) I + chi^e(k,q)`.
    pub fn eps_block(&self, i: usize, j: usize) -> Block<T> {
        crate::linalg::delta_block(i, j, &self.weights) + self.chi_e.get(i, j)
    }

    /// Permeability kernel `mu(k,q) = delta(k,q) I - chi^m(k,q)`.
    pub fn mu_block(&self, i: usize, j: usize) -> Block<T> {
        crate::linalg::delta_block(i, j, &self.weights) - self.chi_m.get(i, j)
    }

    /// Delta-coefficient (weight-stripped) susceptibility at a diagonal
    /// block; only meaningful for homogeneous kernels.
    pub fn chi_e_coefficient(&self, i: usize) -> Block<T> {
        self.chi_e.get(i, i) * re(self.weights[i])
    }

    pub fn chi_m_coefficient(&self, i: usize) -> Block<T> {
        self.chi_m.get(i, i) * re(self.weights[i])
    }
}

/// Family of mixing tensors A(w, p, p') with the discrete orthogonality
/// `sum_p w_p A(w,p,p') A^H(w,p,p'') = delta(p',p'') I / w_p'`.
#[derive(Debug, Clone)]
pub struct GaugeMixing<T: Real> {
    /// Indexed \[iw\]\[p\]\[p'\].
    pub blocks: Vec<Vec<Vec<Block<T>>>>,
}

impl<T: Real> GaugeMixing<T> {
    pub fn n_omega(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_points(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.len())
    }

    /// `A(w,p,p') = delta(p,p') I / w_p` (the identity of the mixing group).
    pub fn identity(n_omega: usize, weights: &[T]) -> Self {
        Self::scaled_identity(n_omega, weights, T::one())
    }

    /// `sign * identity`; sign = -1 flips the coupling without changing the
    /// response.
    pub fn scaled_identity(n_omega: usize, weights: &[T], sign: T) -> Self {
        let n = weights.len();
        let blocks = (0..n_omega)
            .map(|_| {
                (0..n)
                    .map(|p| {
                        (0..n)
                            .map(|q| {
                                if p == q {
                                    Block::<T>::identity() * re(sign / weights[p])
                                } else {
                                    Block::<T>::zeros()
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { blocks }
    }

    /// Random family built from a Haar-like unitary per frequency.
    pub fn random_orthogonal(n_omega: usize, weights: &[T], rng: &mut impl Rng) -> Self {
        let n = weights.len();
        let blocks = (0..n_omega)
            .map(|_| {
                let z = DMatrix::<Cplx<T>>::from_fn(3 * n, 3 * n, |_, _| {
                    Cplx::new(
                        T::of(rng.sample::<f64, _>(StandardNormal)),
                        T::of(rng.sample::<f64, _>(StandardNormal)),
                    )
                });
                let u = z.qr().q();
                (0..n)
                    .map(|p| {
                        (0..n)
                            .map(|q| {
                                let scale = T::one() / (weights[p] * weights[q]).sqrt();
                                Block::<T>::from_fn(|i, a| u[(3 * p + a, 3 * q + i)] * re(scale))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { blocks }
    }

    /// Largest deviation from the discrete orthogonality condition.
    pub fn orthogonality_defect(&self, weights: &[T]) -> T {
        let n = self.n_points();
        let mut worst = T::zero();
        for per_omega in &self.blocks {
            for p1 in 0..n {
                for p2 in 0..n {
                    let mut acc = Block::<T>::zeros();
                    for (p, &w) in weights.iter().enumerate() {
                        acc += per_omega[p][p1] * dagger(&per_omega[p][p2]) * re(w);
                    }
                    let want = crate::linalg::delta_block(p1, p2, weights);
                    let dev = (acc - want).norm();
                    if dev > worst {
                        worst = dev;
                    }
                }
            }
        }
        worst
    }

    pub fn validate(&self, weights: &[T]) -> Result<(), MediumError> {
        let tol = 1e-10;
        let defect = self.orthogonality_defect(weights).to_f64_lossy();
        if defect > tol {
            return Err(MediumError::GaugeOrthogonality { defect, tol });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Medium spec file (JSON), concrete f64 DTOs converted into the generic model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsSpec {
    pub c: f64,
    pub eps0: f64,
    pub mu0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaSpec {
    pub nodes: Vec<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

/// Complex scalar in file form: `[re, im]`.
pub type CplxSpec = [f64; 2];
/// 3x3 complex matrix in file form.
pub type BlockSpec = [[CplxSpec; 3]; 3];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingSpec {
    Zero,
    /// Isotropic diagonal shorthand: f = lambda(w) I for every k.
    DiagonalScalar { lambda_of_omega: Vec<f64> },
    /// Diagonal blocks\[iw\]\[ik\] in delta-coefficient form.
    Diagonal { blocks: Vec<Vec<BlockSpec>> },
    /// Sparse list of literal dense samples; unlisted entries are zero.
    Dense {
        entries: Vec<DenseEntrySpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseEntrySpec {
    pub iw: usize,
    pub ik: usize,
    pub ip: usize,
    pub m: BlockSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediumSpec {
    pub constants: ConstantsSpec,
    pub mode: MediumMode,
    pub omega: OmegaSpec,
    pub f: CouplingSpec,
    #[serde(default)]
    pub g: Option<CouplingSpec>,
}

impl MediumSpec {
    /// Parse from JSON text; errors carry serde's line/column anchor.
    pub fn from_json(text: &str) -> Result<Self, MediumError> {
        serde_json::from_str(text).map_err(|e| MediumError::Spec(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

fn block_from_spec<T: Real>(b: &BlockSpec) -> Block<T> {
    Block::<T>::from_fn(|i, j| Cplx::new(T::of(b[i][j][0]), T::of(b[i][j][1])))
}

fn coupling_from_spec<T: Real>(
    spec: &CouplingSpec,
    n_omega: usize,
    n_points: usize,
) -> Result<Coupling<T>, MediumError> {
    match spec {
        CouplingSpec::Zero => Ok(Coupling::zero_diagonal(n_omega, n_points)),
        CouplingSpec::DiagonalScalar { lambda_of_omega } => {
            if lambda_of_omega.len() != n_omega {
                return Err(MediumError::Spec(
                    "lambda_of_omega length must match omega.nodes".into(),
                ));
            }
            Ok(Coupling::Diagonal(
                lambda_of_omega
                    .iter()
                    .map(|&l| vec![Block::<T>::identity() * re(T::of(l)); n_points])
                    .collect(),
            ))
        }
        CouplingSpec::Diagonal { blocks } => Ok(Coupling::Diagonal(
            blocks
                .iter()
                .map(|row| row.iter().map(block_from_spec).collect())
                .collect(),
        )),
        CouplingSpec::Dense { entries } => {
            let mut data = vec![vec![vec![Block::<T>::zeros(); n_points]; n_points]; n_omega];
            for e in entries {
                if e.iw >= n_omega || e.ik >= n_points || e.ip >= n_points {
                    return Err(MediumError::Spec(format!(
                        "dense entry ({},{},{}) out of range",
                        e.iw, e.ik, e.ip
                    )));
                }
                data[e.iw][e.ik][e.ip] = block_from_spec(&e.m);
            }
            Ok(Coupling::Dense(data))
        }
    }
}

impl<T: Real> CouplingModel<T> {
    /// Instantiate the generic model from a parsed medium spec.
    pub fn from_spec(spec: &MediumSpec, n_points: usize) -> Result<Self, MediumError> {
        let constants = Constants {
            c: T::of(spec.constants.c),
            eps0: T::of(spec.constants.eps0),
            mu0: T::of(spec.constants.mu0),
        };
        let nodes: Vec<T> = spec.omega.nodes.iter().map(|&x| T::of(x)).collect();
        let omega = if nodes.is_empty() {
            OmegaGrid::empty()
        } else {
            match &spec.omega.weights {
                Some(w) => OmegaGrid::new(nodes, w.iter().map(|&x| T::of(x)).collect())?,
                None => OmegaGrid::trapezoid(nodes)?,
            }
        };
        let n_omega = omega.len();
        let f = coupling_from_spec(&spec.f, n_omega, n_points)?;
        let g = match &spec.g {
            Some(gs) => coupling_from_spec(gs, n_omega, n_points)?,
            None => Coupling::zero_diagonal(n_omega, n_points),
        };
        Self::new(constants, omega, f, g, spec.mode, n_points)
    }
}
