//! Small dense linear-algebra helpers shared by the kernel modules: 3x3
//! complex blocks, the cross-product matrix, and a block operator type for
//! kernels A(k,q) that are either block-diagonal (translationally invariant
//! media) or dense over grid pairs.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::scalar::{re, Cplx, Real};

/// 3x3 complex block.
pub type Block<T> = Matrix3<Cplx<T>>;
/// Complex 3-vector (one field value at one grid point).
pub type CVector<T> = Vector3<Cplx<T>>;

/// Cross-product matrix `[k]_x` with `([k]_x v) = k x v`.
pub fn cross_matrix<T: Real>(k: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -k.z,
        k.y,
        k.z,
        T::zero(),
        -k.x,
        -k.y,
        k.x,
        T::zero(),
    )
}

/// Real 3x3 lifted to complex.
pub fn complexify<T: Real>(m: &Matrix3<T>) -> Block<T> {
    m.map(re)
}

/// Real 3-vector lifted to complex.
pub fn complexify_vec<T: Real>(v: &Vector3<T>) -> CVector<T> {
    v.map(re)
}

/// Identity block.
pub fn identity_block<T: Real>() -> Block<T> {
    Matrix3::identity()
}

/// Frobenius norm of a block (used as the block-norm everywhere; it bounds
/// the spectral norm from above, so tolerances stated for operator norms
/// remain valid).
pub fn block_norm<T: Real>(m: &Block<T>) -> T {
    m.norm()
}

/// Hermitian conjugate.
pub fn dagger<T: Real>(m: &Block<T>) -> Block<T> {
    m.adjoint()
}

/// Kernel of 3x3 blocks over grid-point pairs, block-diagonal or dense.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockOperator<T: Real> {
    /// Only (k,k) blocks are nonzero.
    Diagonal(Vec<Block<T>>),
    /// Row-major blocks\[k\]\[q\].
    Dense(Vec<Vec<Block<T>>>),
}

impl<T: Real> BlockOperator<T> {
    pub fn zeros_diagonal(n: usize) -> Self {
        BlockOperator::Diagonal(vec![Block::<T>::zeros(); n])
    }

    pub fn zeros_dense(n: usize) -> Self {
        BlockOperator::Dense(vec![vec![Block::<T>::zeros(); n]; n])
    }

    pub fn from_diagonal_fn(n: usize, f: impl FnMut(usize) -> Block<T>) -> Self {
        BlockOperator::Diagonal((0..n).map(f).collect())
    }

    pub fn from_dense_fn(n: usize, mut f: impl FnMut(usize, usize) -> Block<T>) -> Self {
        BlockOperator::Dense(
            (0..n)
                .map(|i| (0..n).map(|j| f(i, j)).collect())
                .collect(),
        )
    }

    pub fn n_points(&self) -> usize {
        match self {
            BlockOperator::Diagonal(v) => v.len(),
            BlockOperator::Dense(v) => v.len(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, BlockOperator::Diagonal(_))
    }

    /// Block at (i,j); zero off the diagonal for the diagonal storage.
    pub fn get(&self, i: usize, j: usize) -> Block<T> {
        match self {
            BlockOperator::Diagonal(v) => {
                if i == j {
                    v[i]
                } else {
                    Block::<T>::zeros()
                }
            }
            BlockOperator::Dense(v) => v[i][j],
        }
    }

    pub fn map(&self, f: impl Fn(&Block<T>) -> Block<T>) -> Self {
        match self {
            BlockOperator::Diagonal(v) => BlockOperator::Diagonal(v.iter().map(&f).collect()),
            BlockOperator::Dense(v) => {
                BlockOperator::Dense(v.iter().map(|row| row.iter().map(&f).collect()).collect())
            }
        }
    }

    /// Element-wise sum; densifies when the storages differ.
    pub fn add(&self, other: &Self) -> Self {
        use BlockOperator::*;
        match (self, other) {
            (Diagonal(a), Diagonal(b)) => {
                Diagonal(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => {
                let n = self.n_points();
                Self::from_dense_fn(n, |i, j| self.get(i, j) + other.get(i, j))
            }
        }
    }

    pub fn scale(&self, c: Cplx<T>) -> Self {
        self.map(|b| b * c)
    }

    /// Weighted kernel composition `(A o B)(k,p) = sum_q w_q A(k,q) B(q,p)`,
    /// the discrete form of the d^3q contraction.
    pub fn weighted_compose(&self, weights: &[T], rhs: &Self) -> Self {
        use BlockOperator::*;
        match (self, rhs) {
            (Diagonal(a), Diagonal(b)) => Diagonal(
                a.iter()
                    .zip(b)
                    .zip(weights)
                    .map(|((x, y), &w)| x * y * re(w))
                    .collect(),
            ),
            _ => {
                let n = self.n_points();
                Self::from_dense_fn(n, |k, p| {
                    let mut acc = Block::<T>::zeros();
                    for q in 0..n {
                        acc += self.get(k, q) * rhs.get(q, p) * re(weights[q]);
                    }
                    acc
                })
            }
        }
    }

    /// Weighted application to a field: `(A v)(k) = sum_q w_q A(k,q) v(q)`.
    pub fn weighted_apply(&self, weights: &[T], field: &[CVector<T>]) -> Vec<CVector<T>> {
        match self {
            BlockOperator::Diagonal(v) => v
                .iter()
                .zip(field)
                .zip(weights)
                .map(|((a, x), &w)| a * x * re(w))
                .collect(),
            BlockOperator::Dense(v) => v
                .iter()
                .map(|row| {
                    let mut acc = CVector::<T>::zeros();
                    for (q, b) in row.iter().enumerate() {
                        acc += b * field[q] * re(weights[q]);
                    }
                    acc
                })
                .collect(),
        }
    }

    /// Largest block Frobenius norm.
    pub fn max_block_norm(&self) -> T {
        let mut best = T::zero();
        match self {
            BlockOperator::Diagonal(v) => {
                for b in v {
                    let n = block_norm(b);
                    if n > best {
                        best = n;
                    }
                }
            }
            BlockOperator::Dense(v) => {
                for row in v {
                    for b in row {
                        let n = block_norm(b);
                        if n > best {
                            best = n;
                        }
                    }
                }
            }
        }
        best
    }

    /// Flatten to a 3N x 3N matrix. `col_weights` folds quadrature weights
    /// into columns: entry block (k,q) becomes `w_q A(k,q)`.
    pub fn to_flat(&self, col_weights: Option<&[T]>) -> DMatrix<Cplx<T>> {
        let n = self.n_points();
        let mut m = DMatrix::<Cplx<T>>::zeros(3 * n, 3 * n);
        for k in 0..n {
            for q in 0..n {
                let mut b = self.get(k, q);
                if let Some(w) = col_weights {
                    b *= re(w[q]);
                }
                for i in 0..3 {
                    for j in 0..3 {
                        m[(3 * k + i, 3 * q + j)] = b[(i, j)];
                    }
                }
            }
        }
        m
    }

    /// Rebuild dense block storage from a flat 3N x 3N matrix.
    pub fn from_flat(m: &DMatrix<Cplx<T>>) -> Self {
        let n = m.nrows() / 3;
        Self::from_dense_fn(n, |k, q| {
            let mut b = Block::<T>::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    b[(i, j)] = m[(3 * k + i, 3 * q + j)];
                }
            }
            b
        })
    }

    /// Force dense storage.
    pub fn densify(&self) -> Self {
        let n = self.n_points();
        Self::from_dense_fn(n, |i, j| self.get(i, j))
    }
}

/// Discrete delta kernel block: `(1/w_k) [k = q] I`, the convention making
/// `sum_q w_q delta(k,q) X(q) = X(k)` exact.
pub fn delta_block<T: Real>(i: usize, j: usize, weights: &[T]) -> Block<T> {
    if i == j {
        identity_block::<T>() * re(T::one() / weights[i])
    } else {
        Block::<T>::zeros()
    }
}

/// Max block norm of `A o G - delta`, the defining residual of the Green
/// equation, for any pair of kernels.
pub fn green_residual<T: Real>(
    lambda: &BlockOperator<T>,
    weights: &[T],
    green: &BlockOperator<T>,
) -> T {
    let prod = lambda.weighted_compose(weights, green);
    let n = prod.n_points();
    let mut worst = T::zero();
    for k in 0..n {
        for p in 0..n {
            if prod.is_diagonal() && k != p {
                continue;
            }
            let r = block_norm(&(prod.get(k, p) - delta_block(k, p, weights)));
            if r > worst {
                worst = r;
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::im;

    #[test]
    fn cross_matrix_matches_cross_product() {
        let k = Vector3::new(0.3_f64, -1.2, 2.5);
        let v = Vector3::new(1.0, 0.5, -0.7);
        let lhs = cross_matrix(&k) * v;
        let rhs = k.cross(&v);
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn weighted_compose_diagonal_fast_path_matches_dense() {
        let w = [0.5_f64, 2.0, 1.5];
        let a = BlockOperator::from_diagonal_fn(3, |i| {
            identity_block::<f64>() * re((i + 1) as f64) + Matrix3::from_element(im(0.1))
        });
        let b = BlockOperator::from_diagonal_fn(3, |i| identity_block::<f64>() * im(i as f64 + 0.5));
        let fast = a.weighted_compose(&w, &b);
        let slow = a.densify().weighted_compose(&w, &b.densify());
        for i in 0..3 {
            for j in 0..3 {
                assert!(block_norm(&(fast.get(i, j) - slow.get(i, j))) < 1e-14);
            }
        }
    }

    #[test]
    fn flat_round_trip() {
        let op = BlockOperator::from_dense_fn(2, |i, j| {
            Matrix3::from_fn(|r, c| Cplx::new((i + r) as f64, (j * c) as f64))
        });
        let round = BlockOperator::from_flat(&op.to_flat(None));
        assert_eq!(op, round);
    }

    #[test]
    fn delta_is_weighted_identity() {
        let w = [0.25_f64, 4.0];
        let d = delta_block(0, 0, &w);
        assert!((d[(0, 0)].re - 4.0).abs() < 1e-15);
        assert!(block_norm(&delta_block(0, 1, &w)) == 0.0);
    }
}
