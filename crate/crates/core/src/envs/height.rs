use rand::Rng;

use super::Grid;
use crate::error::{Error, Result};

/// Isotropic Gaussian bump in grid coordinates (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
}

/// Per-cell heights, min-max normalized to `[0, 1]` (all zero when flat).
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl HeightField {
    pub fn from_values(dims: &[usize], mut values: Vec<f64>) -> Result<Self> {
        let grid = Grid::new(dims)?;
        if values.len() != grid.num_cells() {
            return Err(Error::LengthMismatch { left: values.len(), right: grid.num_cells() });
        }
        if values.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("height", "non-finite height"));
        }
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        let span = hi - lo;
        for h in &mut values {
            *h = if span > 0.0 { (*h - lo) / span } else { 0.0 };
        }
        Ok(HeightField { dims: dims.to_vec(), values })
    }

    /// Sum of the given bumps, normalized.
    pub fn from_bumps(dims: &[usize], bumps: &[Bump]) -> Result<Self> {
        let grid = Grid::new(dims)?;
        if let Some(b) = bumps.iter().find(|b| b.center.len() != dims.len() || !(b.width > 0.0)) {
            return Err(Error::invalid("bump", format!("{b:?} does not fit the grid")));
        }
        let values = (0..grid.num_cells())
            .map(|cell| {
                let x = grid.coords(cell);
                bumps
                    .iter()
                    .map(|b| {
                        let r2: f64 = x.iter().zip(&b.center).map(|(&xi, &ci)| (xi as f64 - ci).powi(2)).sum();
                        (-r2 / (2.0 * b.width * b.width)).exp()
                    })
                    .sum()
            })
            .collect();
        Self::from_values(dims, values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Random height field: `bumps` Gaussian bumps with centers uniform over the
/// grid and widths uniform in `[0.1, 0.3]·max(dims)`.
pub fn gen_height_field<R: Rng>(dims: &[usize], bumps: usize, rng: &mut R) -> Result<HeightField> {
    if bumps == 0 {
        return Err(Error::invalid("bumps", "need at least one bump"));
    }
    Grid::new(dims)?;
    let scale = *dims.iter().max().expect("nonempty dims") as f64;
    let list: Vec<Bump> = (0..bumps)
        .map(|_| Bump {
            center: dims.iter().map(|&d| rng.random_range(0.0..=(d - 1) as f64)).collect(),
            width: rng.random_range(0.1..=0.3) * scale,
        })
        .collect();
    HeightField::from_bumps(dims, &list)
}
