//! Reciprocal-space discretization on the half space k_z >= 0.
//!
//! Real fields make the two half spaces redundant: the value at -k is the
//! complex conjugate of the value at k, so the grid keeps one representative
//! per +-k pair. Interior cells (k_z > 0) stand for themselves; cells on the
//! k_z = 0 plane represent their mirror partner as well, so their full cell
//! volume is the right quadrature weight either way. The k = 0 cell is
//! excluded: the longitudinal projector is undefined there.

use nalgebra::Vector3;
use thiserror::Error;

use crate::linalg::CVector;
use crate::scalar::{Cplx, Real};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid is empty after exclusion of k_z < 0 and the k = 0 cell")]
    EmptyGrid,
    #[error("extents must be positive and resolutions >= 1")]
    BadSpec,
    #[error("zero wavevector is not a valid grid point")]
    ZeroWavevector,
    #[error("grid point {index} violates the half-space convention (k_z < 0)")]
    LowerHalfSpace { index: usize },
    #[error("non-positive quadrature weight at point {index}")]
    BadWeight { index: usize },
    #[error("duplicate grid point at indices {a} and {b}")]
    DuplicatePoint { a: usize, b: usize },
    #[error("field has {got} values but the grid has {want} points")]
    ShapeMismatch { got: usize, want: usize },
    #[error("mirror conflict at point {index}: |F(-k) - F*(k)| = {deviation:.3e}")]
    MirrorConflict { index: usize, deviation: f64 },
    #[error("point {index} has no mirror partner in the sample set")]
    MissingMirrorPartner { index: usize },
}

/// Uniform Cartesian grid specification: the box [-K_x,K_x] x [-K_y,K_y] x
/// [-K_z,K_z] split into shape\[i\] cells per axis, sampled at cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T: Real> {
    pub extent: [T; 3],
    pub shape: [usize; 3],
}

/// Finite set of wavevectors in the half space k_z >= 0 with quadrature
/// weights replacing the d^3k integral.
#[derive(Debug, Clone, PartialEq)]
pub struct ReciprocalGrid<T: Real> {
    points: Vec<Vector3<T>>,
    weights: Vec<T>,
    half_space: bool,
}

impl<T: Real> ReciprocalGrid<T> {
    /// Build the uniform cell-centered grid, dropping the lower half space,
    /// the k = 0 cell, and the lexicographically smaller member of each
    /// +-k pair on the k_z = 0 plane.
    pub fn build(spec: &GridSpec<T>) -> Result<Self, GridError> {
        if spec.shape.iter().any(|&n| n == 0)
            || spec.extent.iter().any(|&e| !(e > T::zero()))
        {
            return Err(GridError::BadSpec);
        }
        let [nx, ny, nz] = spec.shape;
        // Center numerators 2i + 1 - n are integers, so membership of the
        // k_z = 0 plane and the k = 0 cell is decided exactly.
        let numer = |i: usize, n: usize| 2 * i as i64 + 1 - n as i64;
        let coord = |i: usize, n: usize, ext: T| {
            ext * T::from_i64(numer(i, n)).expect("small integer") / T::from_usize(n).unwrap()
        };
        let cell_volume = (0..3).fold(T::one(), |acc, a| {
            acc * (T::of(2.0) * spec.extent[a] / T::from_usize(spec.shape[a]).unwrap())
        });

        let mut points = Vec::new();
        let mut weights = Vec::new();
        for iz in 0..nz {
            let mz = numer(iz, nz);
            if mz < 0 {
                continue;
            }
            for ix in 0..nx {
                for iy in 0..ny {
                    let (mx, my) = (numer(ix, nx), numer(iy, ny));
                    if mz == 0 {
                        if mx == 0 && my == 0 {
                            continue; // the k = 0 cell
                        }
                        // keep one representative per +-k pair on the plane
                        if !(mx > 0 || (mx == 0 && my > 0)) {
                            continue;
                        }
                    }
                    points.push(Vector3::new(
                        coord(ix, nx, spec.extent[0]),
                        coord(iy, ny, spec.extent[1]),
                        coord(iz, nz, spec.extent[2]),
                    ));
                    weights.push(cell_volume);
                }
            }
        }
        if points.is_empty() {
            return Err(GridError::EmptyGrid);
        }
        Ok(Self {
            points,
            weights,
            half_space: true,
        })
    }

    /// Assemble from explicit rows (k_x, k_y, k_z, weight), validating the
    /// half-space invariants.
    pub fn from_rows(rows: &[(T, T, T, T)]) -> Result<Self, GridError> {
        let points: Vec<_> = rows
            .iter()
            .map(|&(x, y, z, _)| Vector3::new(x, y, z))
            .collect();
        let weights: Vec<_> = rows.iter().map(|&(_, _, _, w)| w).collect();
        let grid = Self {
            points,
            weights,
            half_space: true,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.points.is_empty() {
            return Err(GridError::EmptyGrid);
        }
        for (i, (p, &w)) in self.points.iter().zip(&self.weights).enumerate() {
            if p.norm() == T::zero() {
                return Err(GridError::ZeroWavevector);
            }
            if p.z < T::zero() {
                return Err(GridError::LowerHalfSpace { index: i });
            }
            if !(w > T::zero()) {
                return Err(GridError::BadWeight { index: i });
            }
        }
        for a in 0..self.points.len() {
            for b in (a + 1)..self.points.len() {
                if self.points[a] == self.points[b] {
                    return Err(GridError::DuplicatePoint { a, b });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> Vector3<T> {
        self.points[i]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn half_space(&self) -> bool {
        self.half_space
    }

    /// Total quadrature weight; equals the represented half-space volume.
    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Triads for every point.
    pub fn triads(&self) -> Vec<PolarizationTriad<T>> {
        self.points
            .iter()
            .map(|k| PolarizationTriad::for_wavevector(k).expect("grid excludes k = 0"))
            .collect()
    }

    /// Flat-table rows (k_x, k_y, k_z, weight).
    pub fn rows(&self) -> Vec<(T, T, T, T)> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| (p.x, p.y, p.z, w))
            .collect()
    }
}

/// Orthonormal per-point basis: e1, e2 transverse, e3 = k/|k|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationTriad<T: Real> {
    pub e1: Vector3<T>,
    pub e2: Vector3<T>,
    pub e3: Vector3<T>,
}

impl<T: Real> PolarizationTriad<T> {
    /// Deterministic triad: e1 along z-hat x k-hat when well separated from
    /// the z axis, else e1 = x-hat; e2 = e3 x e1.
    pub fn for_wavevector(k: &Vector3<T>) -> Result<Self, GridError> {
        let norm = k.norm();
        if norm == T::zero() {
            return Err(GridError::ZeroWavevector);
        }
        let e3 = k / norm;
        let zxk = Vector3::new(T::zero(), T::zero(), T::one()).cross(&e3);
        let e1 = if zxk.norm() > T::of(1e-8) {
            zxk / zxk.norm()
        } else {
            Vector3::new(T::one(), T::zero(), T::zero())
        };
        let e2 = e3.cross(&e1);
        Ok(Self { e1, e2, e3 })
    }

    /// max |e_i . e_j - delta_ij| over the triad.
    pub fn orthonormality_defect(&self) -> T {
        let es = [self.e1, self.e2, self.e3];
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { T::one() } else { T::zero() };
                let got = (es[i].dot(&es[j]) - want).abs();
                if got > worst {
                    worst = got;
                }
            }
        }
        worst
    }

    /// max-entry defect of sum_lambda e_lambda (x) e_lambda - I.
    pub fn completeness_defect(&self) -> T {
        let m = self.e1 * self.e1.transpose()
            + self.e2 * self.e2.transpose()
            + self.e3 * self.e3.transpose()
            - nalgebra::Matrix3::identity();
        m.amax()
    }

}

/// Transverse part (I - k-hat k-hat^T) v of a complex field value; k-hat is
/// real, so the contraction is the plain bilinear product.
pub fn transverse_part<T: Real>(k: &Vector3<T>, v: &CVector<T>) -> CVector<T> {
    let khat = k / k.norm();
    let dot = Cplx::new(khat.x, T::zero()) * v.x
        + Cplx::new(khat.y, T::zero()) * v.y
        + Cplx::new(khat.z, T::zero()) * v.z;
    v - khat.map(|x| Cplx::new(x, T::zero())) * dot
}

/// Longitudinal part k-hat (k-hat . v).
pub fn longitudinal_part<T: Real>(k: &Vector3<T>, v: &CVector<T>) -> CVector<T> {
    v - transverse_part(k, v)
}

/// Values that obey the reality condition F(-k) = F*(k).
pub trait MirrorValue: Clone {
    fn mirror_conj(&self) -> Self;
    fn deviation(&self, other: &Self) -> f64;
}

impl<T: Real> MirrorValue for Cplx<T> {
    fn mirror_conj(&self) -> Self {
        self.conj()
    }
    fn deviation(&self, other: &Self) -> f64 {
        (self - other).norm_sqr().sqrt().to_f64_lossy()
    }
}

impl<T: Real> MirrorValue for CVector<T> {
    fn mirror_conj(&self) -> Self {
        self.map(|z| z.conj())
    }
    fn deviation(&self, other: &Self) -> f64 {
        (self - other).norm().to_f64_lossy()
    }
}

/// A field extended to the full reciprocal space: the first N entries are
/// the grid's own points, the second N their mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct FullField<T: Real, V> {
    pub points: Vec<Vector3<T>>,
    pub values: Vec<V>,
    half_len: usize,
}

impl<T: Real, V: MirrorValue> FullField<T, V> {
    pub fn half_len(&self) -> usize {
        self.half_len
    }

    /// Restriction back to the half-space grid (exact inverse of
    /// `mirror_extend`).
    pub fn restrict(&self) -> Vec<V> {
        self.values[..self.half_len].to_vec()
    }
}

/// Extend a half-space field to the full space by F(-k) = F*(k).
pub fn mirror_extend<T: Real, V: MirrorValue>(
    grid: &ReciprocalGrid<T>,
    values: &[V],
) -> Result<FullField<T, V>, GridError> {
    if values.len() != grid.len() {
        return Err(GridError::ShapeMismatch {
            got: values.len(),
            want: grid.len(),
        });
    }
    let mut points = grid.points().to_vec();
    let mut all = values.to_vec();
    for (p, v) in grid.points().iter().zip(values) {
        points.push(-p);
        all.push(v.mirror_conj());
    }
    Ok(FullField {
        points,
        values: all,
        half_len: grid.len(),
    })
}

/// Validate the reality condition on an arbitrary full-space sample set:
/// every point must have its mirror present with the conjugate value, and a
/// self-conjugate point (k = -k, i.e. k = 0) must be real.
pub fn validate_mirror_samples<T: Real, V: MirrorValue>(
    points: &[Vector3<T>],
    values: &[V],
    tol: f64,
) -> Result<(), GridError> {
    if points.len() != values.len() {
        return Err(GridError::ShapeMismatch {
            got: values.len(),
            want: points.len(),
        });
    }
    for (i, p) in points.iter().enumerate() {
        let minus = -p;
        if minus == *p {
            // self-conjugate point: value must equal its own conjugate
            let dev = values[i].deviation(&values[i].mirror_conj());
            if dev > tol {
                return Err(GridError::MirrorConflict {
                    index: i,
                    deviation: dev,
                });
            }
            continue;
        }
        match points.iter().position(|q| *q == minus) {
            None => return Err(GridError::MissingMirrorPartner { index: i }),
            Some(j) => {
                let dev = values[j].deviation(&values[i].mirror_conj());
                if dev > tol {
                    return Err(GridError::MirrorConflict {
                        index: i,
                        deviation: dev,
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::im;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cube_spec(n: usize, k: f64) -> GridSpec<f64> {
        GridSpec {
            extent: [k, k, k],
            shape: [n, n, n],
        }
    }

    #[test]
    fn two_cube_retains_four_cells_of_unit_weight() {
        let g = ReciprocalGrid::build(&cube_spec(2, 1.0)).unwrap();
        assert_eq!(g.len(), 4);
        for (p, &w) in g.points().iter().zip(g.weights()) {
            assert!(p.z > 0.0);
            assert_abs_diff_eq!(w, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_cell_grid_is_only_the_excluded_origin() {
        assert_eq!(
            ReciprocalGrid::build(&cube_spec(1, 1.0)).unwrap_err(),
            GridError::EmptyGrid
        );
    }

    /// Independent oracle: enumerate all cells of the 3x3x3 grid and apply
    /// the exclusion rules directly.
    #[test]
    fn three_cube_retention_matches_enumeration() {
        let g = ReciprocalGrid::build(&cube_spec(3, 1.0)).unwrap();
        let mut expected = Vec::new();
        for iz in 0..3i64 {
            for ix in 0..3i64 {
                for iy in 0..3i64 {
                    let (mx, my, mz) = (2 * ix - 2, 2 * iy - 2, 2 * iz - 2);
                    if mz < 0 || (mx == 0 && my == 0 && mz == 0) {
                        continue;
                    }
                    if mz == 0 && !(mx > 0 || (mx == 0 && my > 0)) {
                        continue;
                    }
                    expected.push((mx, my, mz));
                }
            }
        }
        assert_eq!(expected.len(), 13);
        assert_eq!(g.len(), 13);
        // every retained point is one of the enumerated centers K*m/3
        for p in g.points() {
            let key = (
                (3.0 * p.x).round() as i64,
                (3.0 * p.y).round() as i64,
                (3.0 * p.z).round() as i64,
            );
            assert!(expected.contains(&(key.0, key.1, key.2)), "{:?}", key);
        }
    }

    #[test]
    fn total_weight_matches_covered_volume_oracle() {
        for (n, k) in [(2usize, 1.0f64), (3, 1.0), (4, 2.5), (5, 0.7)] {
            let g = ReciprocalGrid::build(&cube_spec(n, k)).unwrap();
            // oracle: one full cell volume per retained representative
            let cell = (2.0 * k / n as f64).powi(3);
            let mut covered = 0.0;
            for iz in 0..n as i64 {
                for ix in 0..n as i64 {
                    for iy in 0..n as i64 {
                        let m = (
                            2 * ix + 1 - n as i64,
                            2 * iy + 1 - n as i64,
                            2 * iz + 1 - n as i64,
                        );
                        if m.2 < 0 || (m.0 == 0 && m.1 == 0 && m.2 == 0) {
                            continue;
                        }
                        if m.2 == 0 && !(m.0 > 0 || (m.0 == 0 && m.1 > 0)) {
                            continue;
                        }
                        covered += cell;
                    }
                }
            }
            assert_abs_diff_eq!(g.total_weight(), covered, epsilon = 1e-12);
        }
    }

    #[test]
    fn plane_points_keep_exactly_one_representative() {
        let g = ReciprocalGrid::build(&cube_spec(3, 1.0)).unwrap();
        for (i, p) in g.points().iter().enumerate() {
            if p.z == 0.0 {
                let minus = -p;
                assert!(
                    !g.points().iter().enumerate().any(|(j, q)| j != i && *q == minus),
                    "both members of a plane pair retained"
                );
            }
        }
    }

    #[test]
    fn triad_along_z_axis() {
        let t = PolarizationTriad::for_wavevector(&Vector3::new(0.0_f64, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!((t.e3 - Vector3::new(0.0, 0.0, 1.0)).norm(), 0.0);
        assert!(t.e1.dot(&t.e3).abs() < 1e-15);
        assert!(t.e2.dot(&t.e3).abs() < 1e-15);
        assert!((t.e1.cross(&t.e2) - t.e3).norm() < 1e-15);
    }

    #[test]
    fn triad_zero_vector_rejected() {
        assert_eq!(
            PolarizationTriad::for_wavevector(&Vector3::<f64>::zeros()).unwrap_err(),
            GridError::ZeroWavevector
        );
    }

    #[test]
    fn triad_depends_on_direction_only() {
        let k = Vector3::new(0.4_f64, -0.9, 0.2);
        let a = PolarizationTriad::for_wavevector(&k).unwrap();
        let b = PolarizationTriad::for_wavevector(&(k * 2.0)).unwrap();
        assert!((a.e1 - b.e1).norm() < 1e-15);
        assert!((a.e2 - b.e2).norm() < 1e-15);
        assert!((a.e3 - b.e3).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn triad_orthonormal_and_complete(
            x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0
        ) {
            prop_assume!((x * x + y * y + z * z).sqrt() > 1e-6);
            let t = PolarizationTriad::for_wavevector(&Vector3::new(x, y, z)).unwrap();
            prop_assert!(t.orthonormality_defect() < 1e-14);
            prop_assert!(t.completeness_defect() < 1e-14);
            prop_assert!((t.e1.cross(&t.e2) - t.e3).norm() < 1e-14);
        }
    }

    #[test]
    fn grid_triads_meet_tolerances() {
        let g = ReciprocalGrid::build(&cube_spec(3, 1.3)).unwrap();
        for t in g.triads() {
            assert!(t.orthonormality_defect() < 1e-14);
            assert!(t.completeness_defect() < 1e-14);
        }
    }

    #[test]
    fn mirror_extend_constant_real_field() {
        let g = ReciprocalGrid::build(&cube_spec(2, 1.0)).unwrap();
        let vals = vec![Cplx::new(2.5_f64, 0.0); g.len()];
        let full = mirror_extend(&g, &vals).unwrap();
        assert_eq!(full.values.len(), 2 * g.len());
        for v in &full.values {
            assert_eq!(*v, Cplx::new(2.5, 0.0));
        }
    }

    #[test]
    fn mirror_extend_conjugates_imaginary_values() {
        let g = ReciprocalGrid::build(&cube_spec(2, 1.0)).unwrap();
        let mut vals = vec![Cplx::new(0.0_f64, 0.0); g.len()];
        vals[0] = im(1.0);
        let full = mirror_extend(&g, &vals).unwrap();
        assert_eq!(full.values[g.len()], im(-1.0));
        assert_eq!(full.points[g.len()], -g.point(0));
    }

    #[test]
    fn mirror_round_trip_and_reality_exact() {
        let g = ReciprocalGrid::build(&cube_spec(3, 1.0)).unwrap();
        let vals: Vec<CVector<f64>> = (0..g.len())
            .map(|i| {
                CVector::new(
                    Cplx::new(i as f64, -0.3 * i as f64),
                    Cplx::new(0.1, 1.0),
                    Cplx::new(-2.0, 0.25 * i as f64),
                )
            })
            .collect();
        let full = mirror_extend(&g, &vals).unwrap();
        assert_eq!(full.restrict(), vals);
        validate_mirror_samples(&full.points, &full.values, 0.0).unwrap();
    }

    #[test]
    fn mirror_conflict_detected() {
        let points = vec![Vector3::new(0.0_f64, 0.0, 0.0)];
        let values = vec![im(1.0_f64)];
        match validate_mirror_samples(&points, &values, 1e-12).unwrap_err() {
            GridError::MirrorConflict { .. } => {}
            e => panic!("wrong error {e:?}"),
        }
        let points = vec![Vector3::new(1.0_f64, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0)];
        let values = vec![im(1.0_f64), im(1.0_f64)];
        assert!(matches!(
            validate_mirror_samples(&points, &values, 1e-12).unwrap_err(),
            GridError::MirrorConflict { .. }
        ));
    }

    #[test]
    fn rows_round_trip() {
        let g = ReciprocalGrid::build(&cube_spec(3, 1.0)).unwrap();
        let g2 = ReciprocalGrid::from_rows(&g.rows()).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn from_rows_rejects_bad_tables() {
        assert!(matches!(
            ReciprocalGrid::from_rows(&[(0.0_f64, 0.0, 0.0, 1.0)]).unwrap_err(),
            GridError::ZeroWavevector
        ));
        assert!(matches!(
            ReciprocalGrid::from_rows(&[(1.0_f64, 0.0, -0.5, 1.0)]).unwrap_err(),
            GridError::LowerHalfSpace { .. }
        ));
        assert!(matches!(
            ReciprocalGrid::from_rows(&[(1.0_f64, 0.0, 0.5, 0.0)]).unwrap_err(),
            GridError::BadWeight { .. }
        ));
        assert!(matches!(
            ReciprocalGrid::from_rows(&[(1.0_f64, 0.0, 0.5, 1.0), (1.0, 0.0, 0.5, 1.0)])
                .unwrap_err(),
            GridError::DuplicatePoint { .. }
        ));
    }
}
