//! Uniform lattices on axis-aligned boxes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Where the nodes sit inside each cell of the box partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Nodes at cell vertices, including the box faces.
    #[default]
    Vertex,
    /// Nodes at cell centres.
    Centered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Nodes per axis.
    pub per_axis: usize,
    pub placement: Placement,
}

impl Grid {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        per_axis: usize,
        placement: Placement,
    ) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::param(
                "grid.box",
                "lower and upper bounds must have equal positive length",
            ));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::param("grid.box", "need lower < upper on every axis"));
        }
        let widths: Vec<f64> = lower.iter().zip(&upper).map(|(a, b)| b - a).collect();
        if widths
            .iter()
            .any(|w| (w - widths[0]).abs() > 1e-12 * widths[0])
        {
            return Err(Error::param(
                "grid.box",
                "box must be a cube for uniform spacing",
            ));
        }
        if per_axis < 8 {
            return Err(Error::param(
                "grid.per_axis",
                "need at least 8 nodes per axis",
            ));
        }
        Ok(Self {
            lower,
            upper,
            per_axis,
            placement,
        })
    }

    pub fn interval(a: f64, b: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![a], vec![b], nodes, Placement::Vertex)
    }

    pub fn cell_centered(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::new(vec![a], vec![b], cells, Placement::Centered)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spacing(&self) -> f64 {
        let w = self.upper[0] - self.lower[0];
        match self.placement {
            Placement::Vertex => w / (self.per_axis - 1) as f64,
            Placement::Centered => w / self.per_axis as f64,
        }
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing();
        match self.placement {
            Placement::Vertex => self.lower[axis] + i as f64 * h,
            Placement::Centered => self.lower[axis] + (i as f64 + 0.5) * h,
        }
    }

    /// Multi-index of node `k` (last axis fastest).
    pub fn index(&self, mut k: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; d];
        for a in (0..d).rev() {
            idx[a] = k % self.per_axis;
            k /= self.per_axis;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.per_axis + i)
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.index(k)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| v >= a && v <= b)
    }

    /// Whether node `k` lies on a box face (vertex placement only).
    pub fn on_boundary(&self, k: usize) -> bool {
        self.placement == Placement::Vertex
            && self
                .index(k)
                .iter()
                .any(|&i| i == 0 || i == self.per_axis - 1)
    }

    /// Short digest of the grid parameters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).unwrap_or_default());
        hex16(&h.finalize())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_grid_layout() {
        let g = Grid::interval(-2.0, 2.0, 9).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.point(0), vec![-2.0]);
        assert_eq!(g.point(8), vec![2.0]);
        assert!(g.on_boundary(0) && !g.on_boundary(4));
    }

    #[test]
    fn centered_grid_layout() {
        let g = Grid::cell_centered(0.0, 1.0, 10).unwrap();
        assert!((g.point(0)[0] - 0.05).abs() < 1e-15);
        assert!((g.point(9)[0] - 0.95).abs() < 1e-15);
        assert!(!g.on_boundary(0));
    }

    #[test]
    fn two_dimensional_indexing_roundtrips() {
        let g = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], 8, Placement::Vertex).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.flat(&g.index(k)), k);
            assert!(g.contains(&g.point(k)));
        }
        assert_eq!(g.cell_measure(), (1.0f64 / 7.0).powi(2));
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(Grid::interval(0.0, 1.0, 7).is_err());
        assert!(Grid::interval(1.0, 0.0, 9).is_err());
    }

    #[test]
    fn hash_depends_on_parameters() {
        let a = Grid::interval(0.0, 1.0, 9).unwrap();
        let b = Grid::interval(0.0, 1.0, 10).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
