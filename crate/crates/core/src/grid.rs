//! Uniform finite-difference grids on intervals and rectangles, nodal fields,
//! and the five-point (three-point in 1D) Dirichlet Laplacian.
//!
//! Boundary nodes are eliminated: a [`Field`] only stores values at interior
//! nodes and every operator treats the missing boundary neighbours as zero.
//! Interior nodes are numbered lexicographically with the x index running
//! fastest.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Axis-aligned domain with a per-axis cell count.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    bounds: Vec<(f64, f64)>,
    cells: Vec<usize>,
}

impl DomainSpec {
    pub fn new(bounds: Vec<(f64, f64)>, cells: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension must be 1 or 2, got {}",
                bounds.len()
            )));
        }
        if bounds.len() != cells.len() {
            return Err(Error::InvalidDomain(
                "bounds and cell counts have different lengths".into(),
            ));
        }
        for (k, (&(a, b), &n)) in bounds.iter().zip(&cells).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: bounds ({a}, {b}) must be finite with a < b"
                )));
            }
            if n < 3 {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: cell count {n} is below the minimum of 3"
                )));
            }
        }
        Ok(Self { bounds, cells })
    }

    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::new(vec![(a, b)], vec![cells])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), cells: (usize, usize)) -> Result<Self> {
        Self::new(vec![x, y], vec![cells.0, cells.1])
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
}

/// A built grid: spacing, interior node counts and node coordinates.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: DomainSpec,
    spacing: Vec<f64>,
    interior: Vec<usize>,
    coords: Vec<f64>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Grid {
    pub fn new(spec: DomainSpec) -> Arc<Self> {
        let spacing: Vec<f64> = spec
            .bounds
            .iter()
            .zip(&spec.cells)
            .map(|(&(a, b), &n)| (b - a) / n as f64)
            .collect();
        let interior: Vec<usize> = spec.cells.iter().map(|n| n - 1).collect();
        let len: usize = interior.iter().product();
        let dim = spec.dimension();
        let mut coords = Vec::with_capacity(len * dim);
        for idx in 0..len {
            let mut rest = idx;
            for k in 0..dim {
                let i = rest % interior[k];
                rest /= interior[k];
                coords.push(spec.bounds[k].0 + (i + 1) as f64 * spacing[k]);
            }
        }
        Arc::new(Self {
            spec,
            spacing,
            interior,
            coords,
        })
    }

    /// Builds a grid after validating the domain; convenience for `Grid::new(DomainSpec::new(..)?)`.
    pub fn build(bounds: Vec<(f64, f64)>, cells: Vec<usize>) -> Result<Arc<Self>> {
        Ok(Self::new(DomainSpec::new(bounds, cells)?))
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Interior nodes per axis.
    pub fn interior_counts(&self) -> &[usize] {
        &self.interior
    }

    /// Total number of interior nodes (the unknown count).
    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of one node: the product of the spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        let d = self.dimension();
        &self.coords[idx * d..(idx + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dimension())
    }

    /// Half-bandwidth of the lexicographically ordered Laplacian.
    pub fn bandwidth(&self) -> usize {
        if self.dimension() == 1 {
            1
        } else {
            self.interior[0]
        }
    }

    /// Dense matrix of the negative discrete Laplacian.
    pub fn assemble_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut mat = DMatrix::zeros(n, n);
        let mut unit = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            unit[j] = 1.0;
            neg_laplacian_into(self, &unit, &mut col);
            mat.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            unit[j] = 0.0;
        }
        mat
    }
}

/// Values at the interior nodes of a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.points().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_on(&self, grid: &Grid) -> bool {
        std::ptr::eq(&*self.grid, grid) || *self.grid == *grid
    }

    pub fn check_on(&self, grid: &Grid) -> Result<()> {
        if self.is_on(grid) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: grid.len(),
                actual: self.len(),
            })
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nodewise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        other.check_on(&self.grid)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `max_i |self_i - other_i|`.
    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        other.check_on(&self.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn write_csv<W: Write>(&self, out: W, name: &str) -> io::Result<()> {
        write_csv(out, &[(name, self)])
    }
}

/// Writes node coordinates followed by one column per field, lexicographic
/// node order, 17 significant digits, LF line endings.
pub fn write_csv<W: Write>(mut out: W, columns: &[(&str, &Field)]) -> io::Result<()> {
    let Some((_, first)) = columns.first() else {
        return Ok(());
    };
    let grid = first.grid();
    for (name, f) in columns {
        if !f.is_on(grid) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("column {name} lives on a different grid"),
            ));
        }
    }
    let axes = ["x", "y"];
    let mut header: Vec<&str> = axes[..grid.dimension()].to_vec();
    header.extend(columns.iter().map(|(n, _)| *n));
    writeln!(out, "{}", header.join(","))?;
    for (i, p) in grid.points().enumerate() {
        let mut row: Vec<String> = p.iter().map(|c| format_float(*c)).collect();
        row.extend(columns.iter().map(|(_, f)| format_float(f.values[i])));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Scientific notation with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn neg_laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let h = grid.spacing();
    match grid.dimension() {
        1 => {
            let n = u.len();
            let inv = 1.0 / (h[0] * h[0]);
            for i in 0..n {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                out[i] = (2.0 * u[i] - left - right) * inv;
            }
        }
        _ => {
            let (nx, ny) = (grid.interior[0], grid.interior[1]);
            let ix = 1.0 / (h[0] * h[0]);
            let iy = 1.0 / (h[1] * h[1]);
            for j in 0..ny {
                for i in 0..nx {
                    let k = i + j * nx;
                    let w = if i > 0 { u[k - 1] } else { 0.0 };
                    let e = if i + 1 < nx { u[k + 1] } else { 0.0 };
                    let s = if j > 0 { u[k - nx] } else { 0.0 };
                    let n = if j + 1 < ny { u[k + nx] } else { 0.0 };
                    out[k] = (2.0 * u[k] - w - e) * ix + (2.0 * u[k] - s - n) * iy;
                }
            }
        }
    }
}

/// Negative discrete Laplacian `-Δ_h u` with zero Dirichlet data.
pub fn apply_laplacian(grid: &Grid, u: &Field) -> Result<Field> {
    u.check_on(grid)?;
    let mut out = vec![0.0; u.len()];
    neg_laplacian_into(grid, &u.values, &mut out);
    Ok(Field {
        grid: Arc::clone(&u.grid),
        values: out,
    })
}
