//! Uniform rectangular staggered grid and the three finite-volume operators
//! everything else is built from: divergence, two-point flux, and upwind
//! face reconstruction.
//!
//! Cells are indexed row-major, `cell = j*nx + i`. Scalar unknowns live at
//! cell centers; vector quantities (fluxes, fields, velocities) live as one
//! normal component per face. Interior faces store the component in the
//! +x / +y direction; boundary faces store the *outward* normal component,
//! so prescribed boundary data can be compared bit-for-bit.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {nx} x {ny}")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("domain lengths must be positive and finite, got {lx} x {ly}")]
    BadDomain { lx: f64, ly: f64 },
}

/// Face orientation: `X` faces are vertical (normal along x), `Y` faces
/// horizontal (normal along y).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Which domain edge a boundary face belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

/// Topology of one face: either between two cells or on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceNeighbors {
    /// `lo` is the cell on the smaller-coordinate side; stored values point
    /// from `lo` to `hi`.
    Interior { lo: usize, hi: usize },
    /// Stored values point outward.
    Boundary { cell: usize, side: Side },
}

/// Uniform rectangular grid on `[0, lx] x [0, ly]` with `nx * ny` cells.
#[derive(Debug, Clone)]
pub struct Grid2D<S = f64> {
    pub nx: usize,
    pub ny: usize,
    pub lx: S,
    pub ly: S,
    pub hx: S,
    pub hy: S,
}

impl<S: Scalar> Grid2D<S> {
    pub fn new(nx: usize, ny: usize, lx: S, ly: S) -> Result<Self, GridError> {
        if nx == 0 || ny == 0 {
            return Err(GridError::EmptyGrid { nx, ny });
        }
        if !(lx > S::zero() && ly > S::zero()) || !lx.is_finite() || !ly.is_finite() {
            return Err(GridError::BadDomain {
                lx: lx.to_f64_lossy(),
                ly: ly.to_f64_lossy(),
            });
        }
        let hx = lx / S::cast(nx as f64);
        let hy = ly / S::cast(ny as f64);
        Ok(Self { nx, ny, lx, ly, hx, hy })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_area(&self) -> S {
        self.hx * self.hy
    }

    pub fn domain_area(&self) -> S {
        self.lx * self.ly
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        debug_assert!(cell < self.n_cells());
        (cell % self.nx, cell / self.nx)
    }

    #[inline]
    pub fn cell_center(&self, cell: usize) -> (S, S) {
        let (i, j) = self.cell_ij(cell);
        (
            (S::cast(i as f64) + S::half()) * self.hx,
            (S::cast(j as f64) + S::half()) * self.hy,
        )
    }

    /// Number of x-faces; they occupy indices `0..n_x_faces()`.
    #[inline]
    pub fn n_x_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    #[inline]
    pub fn n_faces(&self) -> usize {
        (self.nx + 1) * self.ny + self.nx * (self.ny + 1)
    }

    pub fn n_interior_faces(&self) -> usize {
        (self.nx - 1) * self.ny + self.nx * (self.ny - 1)
    }

    pub fn n_boundary_faces(&self) -> usize {
        2 * self.nx + 2 * self.ny
    }

    /// Global index of the x-face left of cell column `i` (0..=nx) in row `j`.
    #[inline]
    pub fn x_face(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        j * (self.nx + 1) + i
    }

    /// Global index of the y-face below cell row `j` (0..=ny) in column `i`.
    #[inline]
    pub fn y_face(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        self.n_x_faces() + j * self.nx + i
    }

    #[inline]
    pub fn face_axis(&self, face: usize) -> Axis {
        debug_assert!(face < self.n_faces());
        if face < self.n_x_faces() {
            Axis::X
        } else {
            Axis::Y
        }
    }

    /// Cell-center spacing across the face (hx for x-faces, hy for y-faces).
    #[inline]
    pub fn face_spacing(&self, face: usize) -> S {
        match self.face_axis(face) {
            Axis::X => self.hx,
            Axis::Y => self.hy,
        }
    }

    /// Length of the face segment (hy for x-faces, hx for y-faces).
    #[inline]
    pub fn face_length(&self, face: usize) -> S {
        match self.face_axis(face) {
            Axis::X => self.hy,
            Axis::Y => self.hx,
        }
    }

    pub fn face_neighbors(&self, face: usize) -> FaceNeighbors {
        debug_assert!(face < self.n_faces());
        if face < self.n_x_faces() {
            let j = face / (self.nx + 1);
            let i = face % (self.nx + 1);
            if i == 0 {
                FaceNeighbors::Boundary { cell: self.cell_index(0, j), side: Side::West }
            } else if i == self.nx {
                FaceNeighbors::Boundary { cell: self.cell_index(self.nx - 1, j), side: Side::East }
            } else {
                FaceNeighbors::Interior {
                    lo: self.cell_index(i - 1, j),
                    hi: self.cell_index(i, j),
                }
            }
        } else {
            let rest = face - self.n_x_faces();
            let j = rest / self.nx;
            let i = rest % self.nx;
            if j == 0 {
                FaceNeighbors::Boundary { cell: self.cell_index(i, 0), side: Side::South }
            } else if j == self.ny {
                FaceNeighbors::Boundary { cell: self.cell_index(i, self.ny - 1), side: Side::North }
            } else {
                FaceNeighbors::Interior {
                    lo: self.cell_index(i, j - 1),
                    hi: self.cell_index(i, j),
                }
            }
        }
    }

    pub fn face_midpoint(&self, face: usize) -> (S, S) {
        if face < self.n_x_faces() {
            let j = face / (self.nx + 1);
            let i = face % (self.nx + 1);
            (S::cast(i as f64) * self.hx, (S::cast(j as f64) + S::half()) * self.hy)
        } else {
            let rest = face - self.n_x_faces();
            let j = rest / self.nx;
            let i = rest % self.nx;
            ((S::cast(i as f64) + S::half()) * self.hx, S::cast(j as f64) * self.hy)
        }
    }

    pub fn faces(&self) -> impl Iterator<Item = usize> {
        0..self.n_faces()
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces().filter(move |&f| matches!(self.face_neighbors(f), FaceNeighbors::Interior { .. }))
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces().filter(move |&f| matches!(self.face_neighbors(f), FaceNeighbors::Boundary { .. }))
    }

    /// The four faces of a cell with the sign that makes their stored value
    /// point outward: +1 on east/north and on every boundary face, -1 on
    /// interior west/south faces.
    pub fn cell_faces(&self, cell: usize) -> [(usize, S); 4] {
        let (i, j) = self.cell_ij(cell);
        let one = S::one();
        let west_sign = if i == 0 { one } else { -one };
        let south_sign = if j == 0 { one } else { -one };
        [
            (self.x_face(i, j), west_sign),
            (self.x_face(i + 1, j), one),
            (self.y_face(i, j), south_sign),
            (self.y_face(i, j + 1), one),
        ]
    }

    /// Net outward flux of `flux` per unit cell area.
    ///
    /// Summed over all cells this telescopes to the boundary sum exactly
    /// (discrete Gauss theorem).
    pub fn divergence(&self, flux: &FaceField<S>) -> CellField<S> {
        debug_assert_eq!(flux.len(), self.n_faces());
        let inv_area = S::one() / self.cell_area();
        let values = (0..self.n_cells())
            .map(|c| {
                let mut acc = S::zero();
                for (face, sign) in self.cell_faces(c) {
                    acc += sign * flux[face] * self.face_length(face);
                }
                acc * inv_area
            })
            .collect();
        CellField::new(FieldRole::Auxiliary, values)
    }

    /// Two-point flux `-coeff * grad(field)` with harmonic face averaging of
    /// the (diagonal, per-cell) coefficient. Boundary faces take the
    /// prescribed outward normal flux from `boundary`.
    ///
    /// Exact for affine fields under a uniform coefficient.
    pub fn tpfa_gradient_flux(
        &self,
        field: &CellField<S>,
        coeff: &DiagTensorField<S>,
        mut boundary: impl FnMut(usize, Side, (S, S)) -> S,
    ) -> FaceField<S> {
        debug_assert_eq!(field.len(), self.n_cells());
        debug_assert_eq!(coeff.len(), self.n_cells());
        let mut out = FaceField::zeros(self);
        for face in self.faces() {
            match self.face_neighbors(face) {
                FaceNeighbors::Interior { lo, hi } => {
                    let axis = self.face_axis(face);
                    let k = harmonic_mean(coeff.along(axis, lo), coeff.along(axis, hi));
                    out[face] = -k * (field[hi] - field[lo]) / self.face_spacing(face);
                }
                FaceNeighbors::Boundary { cell: _, side } => {
                    out[face] = boundary(face, side, self.face_midpoint(face));
                }
            }
        }
        out
    }

    /// Donor-cell value per face: the upwind cell's value by the sign of the
    /// face velocity, the arithmetic mean on interior zero-velocity faces,
    /// and the adjacent cell's value on boundary faces (transport assembles
    /// no boundary flux, so inflow boundary values are never consumed).
    pub fn upwind_face_value(&self, c: &CellField<S>, v: &FaceField<S>) -> FaceField<S> {
        debug_assert_eq!(c.len(), self.n_cells());
        debug_assert_eq!(v.len(), self.n_faces());
        let mut out = FaceField::zeros(self);
        for face in self.faces() {
            out[face] = match self.face_neighbors(face) {
                FaceNeighbors::Interior { lo, hi } => {
                    if v[face] > S::zero() {
                        c[lo]
                    } else if v[face] < S::zero() {
                        c[hi]
                    } else {
                        (c[lo] + c[hi]) * S::half()
                    }
                }
                FaceNeighbors::Boundary { cell, .. } => c[cell],
            };
        }
        out
    }
}

/// Harmonic mean used for face-averaged coefficients; both arguments must be
/// positive (guaranteed by the ellipticity checks on model input).
#[inline]
pub fn harmonic_mean<S: Scalar>(a: S, b: S) -> S {
    debug_assert!(a > S::zero() && b > S::zero());
    S::two() * a * b / (a + b)
}

/// What a cell field physically holds; used for output labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Concentration,
    Potential,
    Pressure,
    Charge,
    Auxiliary,
}

/// One value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField<S = f64> {
    role: FieldRole,
    values: Vec<S>,
}

impl<S: Scalar> CellField<S> {
    pub fn new(role: FieldRole, values: Vec<S>) -> Self {
        Self { role, values }
    }

    pub fn constant(grid: &Grid2D<S>, role: FieldRole, value: S) -> Self {
        Self { role, values: vec![value; grid.n_cells()] }
    }

    pub fn zeros(grid: &Grid2D<S>, role: FieldRole) -> Self {
        Self::constant(grid, role, S::zero())
    }

    /// Sample `f(x, y)` at cell centers.
    pub fn from_fn(grid: &Grid2D<S>, role: FieldRole, mut f: impl FnMut(S, S) -> S) -> Self {
        let values = (0..grid.n_cells())
            .map(|c| {
                let (x, y) = grid.cell_center(c);
                f(x, y)
            })
            .collect();
        Self { role, values }
    }

    #[inline]
    pub fn role(&self) -> FieldRole {
        self.role
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.values.iter()
    }

    pub fn sum(&self) -> S {
        self.values.iter().copied().sum()
    }

    pub fn mean(&self) -> S {
        self.sum() / S::cast(self.len() as f64)
    }

    pub fn min(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max(&self) -> S {
        self.values.iter().copied().fold(S::neg_infinity(), S::max)
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    /// Subtract the mean; the gauge fix for potentials and pressures.
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
    }
}

impl<S: Scalar> std::ops::Index<usize> for CellField<S> {
    type Output = S;
    #[inline]
    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

impl<S: Scalar> std::ops::IndexMut<usize> for CellField<S> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.values[i]
    }
}

/// One normal component per face (+x/+y on interior faces, outward on
/// boundary faces).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField<S = f64> {
    values: Vec<S>,
}

impl<S: Scalar> FaceField<S> {
    pub fn zeros(grid: &Grid2D<S>) -> Self {
        Self { values: vec![S::zero(); grid.n_faces()] }
    }

    pub fn from_values(grid: &Grid2D<S>, values: Vec<S>) -> Self {
        assert_eq!(values.len(), grid.n_faces());
        Self { values }
    }

    /// Sample a vector field `(fx, fy)(x, y)` at face midpoints, applying the
    /// storage convention (+axis inside, outward on the boundary).
    pub fn sample_vector(
        grid: &Grid2D<S>,
        mut fx: impl FnMut(S, S) -> S,
        mut fy: impl FnMut(S, S) -> S,
    ) -> Self {
        let mut out = Self::zeros(grid);
        for face in grid.faces() {
            let (x, y) = grid.face_midpoint(face);
            let component = match grid.face_axis(face) {
                Axis::X => fx(x, y),
                Axis::Y => fy(x, y),
            };
            out[face] = match grid.face_neighbors(face) {
                FaceNeighbors::Boundary { side: Side::West, .. }
                | FaceNeighbors::Boundary { side: Side::South, .. } => -component,
                _ => component,
            };
        }
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }
}

impl<S: Scalar> std::ops::Index<usize> for FaceField<S> {
    type Output = S;
    #[inline]
    fn index(&self, i: usize) -> &S {
        &self.values[i]
    }
}

impl<S: Scalar> std::ops::IndexMut<usize> for FaceField<S> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.values[i]
    }
}

/// Per-cell diagonal 2-tensor (xx, yy), e.g. permittivity scalars broadcast
/// to both axes or an anisotropic permeability.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagTensorField<S = f64> {
    xx: Vec<S>,
    yy: Vec<S>,
}

impl<S: Scalar> DiagTensorField<S> {
    pub fn uniform(grid: &Grid2D<S>, xx: S, yy: S) -> Self {
        Self { xx: vec![xx; grid.n_cells()], yy: vec![yy; grid.n_cells()] }
    }

    pub fn from_parts(xx: Vec<S>, yy: Vec<S>) -> Self {
        assert_eq!(xx.len(), yy.len());
        Self { xx, yy }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.xx.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.xx.is_empty()
    }

    #[inline]
    pub fn along(&self, axis: Axis, cell: usize) -> S {
        match axis {
            Axis::X => self.xx[cell],
            Axis::Y => self.yy[cell],
        }
    }

    pub fn min_component(&self) -> S {
        let mx = self.xx.iter().copied().fold(S::infinity(), S::min);
        let my = self.yy.iter().copied().fold(S::infinity(), S::min);
        mx.min(my)
    }

    pub fn scale(&self, s: S) -> Self {
        Self {
            xx: self.xx.iter().map(|&v| v * s).collect(),
            yy: self.yy.iter().map(|&v| v * s).collect(),
        }
    }
}

/// No-flux boundary closure for `tpfa_gradient_flux`.
pub fn zero_boundary<S: Scalar>(_face: usize, _side: Side, _mid: (S, S)) -> S {
    S::zero()
}
