use crate::error::{Error, Result};

/// Row-major-free n-dimensional grid: axis 0 varies fastest, and cell 0 is
/// the corner `(1, …, 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    dims: Vec<usize>,
    strides: Vec<usize>,
    cells: usize,
}

impl Grid {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("dims", "need at least one axis"));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::invalid("dims", format!("axis size {d} is below 2")));
        }
        let mut strides = Vec::with_capacity(dims.len());
        let mut cells: usize = 1;
        for &d in dims {
            strides.push(cells);
            cells = cells
                .checked_mul(d)
                .filter(|&c| c <= u32::MAX as usize)
                .ok_or_else(|| Error::invalid("dims", "grid is too large"))?;
        }
        Ok(Grid { dims: dims.to_vec(), strides, cells })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_cells(&self) -> usize {
        self.cells
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        self.dims.iter().zip(&self.strides).map(|(&d, &st)| (cell / st) % d).collect()
    }

    /// In-grid neighbours in a fixed order: for each axis, the −1 step then the +1 step.
    pub fn neighbors(&self, cell: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.dims.len());
        for (&d, &st) in self.dims.iter().zip(&self.strides) {
            let c = (cell / st) % d;
            if c > 0 {
                out.push(cell - st);
            }
            if c + 1 < d {
                out.push(cell + st);
            }
        }
        out
    }

    /// Number of grid edges, `Σ_i (d_i − 1)·Π_{j≠i} d_j`.
    pub fn num_edges(&self) -> usize {
        self.dims.iter().map(|&d| (d - 1) * (self.cells / d)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing() {
        let g = Grid::new(&[3, 2]).unwrap();
        assert_eq!(g.num_cells(), 6);
        assert_eq!(g.coords(4), vec![1, 1]);
        assert_eq!(g.neighbors(0), vec![1, 3]);
        assert_eq!(g.neighbors(4), vec![3, 5, 1]);
        assert_eq!(g.num_edges(), 7);
        assert!(Grid::new(&[3, 1]).is_err());
        assert!(Grid::new(&[]).is_err());
    }
}
