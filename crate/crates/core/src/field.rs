//! Grid-sampled fields. Values are stored in the grid's cell order
//! (radial index fastest).

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::mesh::SectorGrid;
use crate::oracles::RadialOracle;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub nr: usize,
    pub nt: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &SectorGrid) -> Self {
        Self {
            nr: grid.nr,
            nt: grid.nt,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &SectorGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite field value {bad}")));
        }
        Ok(Self {
            nr: grid.nr,
            nt: grid.nt,
            values,
        })
    }

    pub fn from_fn(grid: &SectorGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        for j in 0..grid.nt {
            for i in 0..grid.nr {
                values[grid.idx(i, j)] = f(i, j);
            }
        }
        Self {
            nr: grid.nr,
            nt: grid.nt,
            values,
        }
    }

    /// Samples a radial oracle at the cell centers.
    pub fn from_oracle(grid: &SectorGrid, oracle: &dyn RadialOracle) -> Result<Self> {
        let mut values = vec![0.0; grid.len()];
        for j in 0..grid.nt {
            let theta = grid.theta(j);
            for i in 0..grid.nr {
                let d = oracle.distance_polar(grid.r(i, j), theta);
                values[grid.idx(i, j)] = oracle.u(d)?;
            }
        }
        Ok(Self {
            nr: grid.nr,
            nt: grid.nt,
            values,
        })
    }

    pub fn check_grid(&self, grid: &SectorGrid) -> Result<()> {
        if self.nr != grid.nr || self.nt != grid.nt {
            return Err(Error::InvalidGrid(format!(
                "field is {}x{}, grid is {}x{}",
                self.nr, self.nt, grid.nr, grid.nt
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i + self.nr * j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cartesian gradient per cell (Euclidean grids).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub nr: usize,
    pub nt: usize,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[i + self.nr * j]
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v[0].hypot(v[1])))
    }
}

/// Per-cell 2×2 matrices (the `W` field) with degeneracy masks.
#[derive(Debug, Clone)]
pub struct MatrixField {
    pub nr: usize,
    pub nt: usize,
    pub values: Vec<Matrix2<f64>>,
    /// Cells where `|∇u|` fell below the gradient floor.
    pub masked: Vec<bool>,
    /// Cells at least one cell away from every boundary.
    pub interior: Vec<bool>,
}

impl MatrixField {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &Matrix2<f64> {
        &self.values[i + self.nr * j]
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    /// Indices of interior, unmasked cells.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(move |&c| self.interior[c] && !self.masked[c])
    }
}
