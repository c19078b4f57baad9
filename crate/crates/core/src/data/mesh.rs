use crate::error::{Error, Result};

/// Number of lip vertices in the synthetic topology: the first `ceil(D / 4)`.
pub fn lip_vertex_count(n_vertices: usize) -> usize {
    n_vertices.div_ceil(4)
}

/// Neutral geometry that displacements are applied to, plus the lip region
/// used by the evaluation metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMesh {
    rest: Vec<f64>,
    lip_indices: Vec<usize>,
}

impl TemplateMesh {
    pub fn new(rest: Vec<f64>, lip_indices: Vec<usize>) -> Result<Self> {
        if rest.is_empty() || rest.len() % 3 != 0 {
            return Err(Error::Config(format!(
                "rest positions must be D x 3, got {} values",
                rest.len()
            )));
        }
        let d = rest.len() / 3;
        if lip_indices.is_empty() {
            return Err(Error::Config("lip region is empty".into()));
        }
        if let Some(&bad) = lip_indices.iter().find(|&&i| i >= d) {
            return Err(Error::Config(format!("lip index {bad} out of range for {d} vertices")));
        }
        Ok(Self { rest, lip_indices })
    }

    /// Vertices spread over a unit half-sphere (the "face"), lip region
    /// being the first `ceil(D / 4)` indices.
    pub fn synthetic(n_vertices: usize) -> Result<Self> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let rest = (0..n_vertices)
            .flat_map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / n_vertices as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                [r * th.cos(), r * th.sin(), z]
            })
            .collect();
        Self::new(rest, (0..lip_vertex_count(n_vertices)).collect())
    }

    /// Mesh with zero rest positions; only the lip mask matters for metrics.
    pub fn with_lips(n_vertices: usize, lip_indices: Vec<usize>) -> Result<Self> {
        Self::new(vec![0.0; n_vertices * 3], lip_indices)
    }

    pub fn n_vertices(&self) -> usize {
        self.rest.len() / 3
    }

    pub fn rest(&self) -> &[f64] {
        &self.rest
    }

    pub fn lip_indices(&self) -> &[usize] {
        &self.lip_indices
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.n_vertices()).collect()
    }
}
