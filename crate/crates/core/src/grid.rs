//! Uniform node-centered grid over a rectangular box, face classification
//! and scalar fields.
//!
//! Nodes are stored x-fastest: `idx = i + n0 * (j + n1 * k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DIVISIBILITY_TOL: f64 = 1e-9;

/// Axis-aligned box `[lo, hi]` in dimensionless coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Box3 {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self> {
        if (0..3).any(|k| !(lo[k] < hi[k])) {
            return Err(Error::InvalidBox { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// The outer computational box `(-1.8,1.8) x (-0.8,0.8) x (-0.8,0.8)`.
    pub fn standard_domain() -> Self {
        Self { lo: [-1.8, -0.8, -0.8], hi: [1.8, 0.8, 0.8] }
    }

    /// The inner inversion box `(-1.6,1.6) x (-0.6,0.6) x (-0.6,0.6)`.
    pub fn standard_inner() -> Self {
        Self { lo: [-1.6, -0.6, -0.6], hi: [1.6, 0.6, 0.6] }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: [f64; 3], tol: f64) -> bool {
        (0..3).all(|k| x[k] >= self.lo[k] - tol && x[k] <= self.hi[k] + tol)
    }

    /// Strict containment on every side.
    pub fn strictly_inside(&self, outer: &Box3) -> bool {
        (0..3).all(|k| self.lo[k] > outer.lo[k] && self.hi[k] < outer.hi[k])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.extent(k)).product()
    }
}

/// Which part of the boundary a node belongs to. `Front` is the illuminated
/// observation face, `Back` the opposite face, `Lateral` everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceClass {
    #[serde(rename = "S1_front")]
    Front,
    #[serde(rename = "S2_back")]
    Back,
    #[serde(rename = "S3_lateral")]
    Lateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub bbox: Box3,
    pub h: f64,
    pub n: [usize; 3],
    /// Axis normal to the front and back faces.
    pub normal_axis: usize,
}

/// Builds the uniform grid with spacing `h`; every extent must be an integer
/// multiple of `h`.
pub fn build_grid(bbox: Box3, h: f64) -> Result<Grid3> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidSpacing(h));
    }
    let bbox = Box3::new(bbox.lo, bbox.hi)?;
    let mut n = [0usize; 3];
    for axis in 0..3 {
        let ratio = bbox.extent(axis) / h;
        let cells = ratio.round();
        if (ratio - cells).abs() > DIVISIBILITY_TOL || cells < 1.0 {
            return Err(Error::NonDivisibleExtent { axis, extent: bbox.extent(axis), h });
        }
        n[axis] = cells as usize + 1;
    }
    Ok(Grid3 { bbox, h, n, normal_axis: 0 })
}

impl Grid3 {
    pub fn with_normal_axis(mut self, axis: usize) -> Self {
        assert!(axis < 3, "normal axis must be 0, 1 or 2");
        self.normal_axis = axis;
        self
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.n[0] * (ijk[1] + self.n[1] * ijk[2])
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let rest = idx / self.n[0];
        [i, rest % self.n[1], rest / self.n[1]]
    }

    /// Offset between neighbouring nodes along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let ijk = self.ijk(idx);
        [0, 1, 2].map(|k| self.bbox.lo[k] + self.h * ijk[k] as f64)
    }

    /// Nearest node to `x`, or `None` when `x` lies outside the box by more
    /// than half a cell.
    pub fn nearest_index(&self, x: [f64; 3]) -> Option<usize> {
        let mut ijk = [0usize; 3];
        for k in 0..3 {
            let r = ((x[k] - self.bbox.lo[k]) / self.h).round();
            if r < 0.0 || r > (self.n[k] - 1) as f64 {
                return None;
            }
            ijk[k] = r as usize;
        }
        Some(self.index(ijk))
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let ijk = self.ijk(idx);
        (0..3).any(|k| ijk[k] == 0 || ijk[k] + 1 == self.n[k])
    }

    /// Boundary face of a node; front beats back beats lateral on edges and
    /// corners.
    pub fn classify_face(&self, idx: usize) -> Result<Option<FaceClass>> {
        if idx >= self.len() {
            return Err(Error::IndexOutOfRange { index: idx, len: self.len() });
        }
        let ijk = self.ijk(idx);
        let a = self.normal_axis;
        Ok(if ijk[a] == 0 {
            Some(FaceClass::Front)
        } else if ijk[a] + 1 == self.n[a] {
            Some(FaceClass::Back)
        } else if self.is_boundary(idx) {
            Some(FaceClass::Lateral)
        } else {
            None
        })
    }

    /// All nodes classified as `face`, in ascending index order.
    pub fn face_nodes(&self, face: FaceClass) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| matches!(self.classify_face(i), Ok(Some(f)) if f == face))
            .collect()
    }

    /// Lumped nodal weight: the fraction of a full `h^3` cell owned by the
    /// node (1/2 per boundary axis).
    pub fn nodal_weight(&self, idx: usize) -> f64 {
        let ijk = self.ijk(idx);
        (0..3)
            .map(|k| if ijk[k] == 0 || ijk[k] + 1 == self.n[k] { 0.5 } else { 1.0 })
            .product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Same box refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Result<Grid3> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be positive".into()));
        }
        Ok(build_grid(self.bbox, self.h / factor as f64)?.with_normal_axis(self.normal_axis))
    }

    pub fn same_geometry(&self, other: &Grid3) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.n == other.n
            && self.normal_axis == other.normal_axis
            && close(self.h, other.h)
            && (0..3).all(|k| close(self.bbox.lo[k], other.bbox.lo[k]))
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScalarField3 {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldLength { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid3, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum over mask nodes and the node where it occurs (lowest index
    /// wins ties).
    pub fn max_on(&self, mask: &RegionMask) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for &i in mask.indices() {
            if self.values[i] > best.0 {
                best = (self.values[i], i);
            }
        }
        best
    }
}

/// Indicator of the inner inversion box on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    grid: Grid3,
    inside: Vec<bool>,
    indices: Vec<usize>,
}

/// Marks every node lying in the closed `inner` box. The inner box has to
/// sit strictly inside the grid box so the outer boundary is never masked.
pub fn build_mask(grid: &Grid3, inner: Box3) -> Result<RegionMask> {
    if !inner.strictly_inside(&grid.bbox) {
        return Err(Error::InnerNotContained);
    }
    let tol = 1e-9 * grid.h;
    let inside: Vec<bool> = (0..grid.len()).map(|i| inner.contains(grid.coords(i), tol)).collect();
    let indices: Vec<usize> = inside.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    if indices.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(RegionMask { grid: *grid, inside, indices })
}

impl RegionMask {
    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Mask nodes in ascending order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Gathers mask values of a full field.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| full[i]).collect()
    }

    /// Writes packed mask values back into a full field.
    pub fn scatter(&self, packed: &[f64], full: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(packed) {
            full[i] = v;
        }
    }
}
