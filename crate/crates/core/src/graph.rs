//! Viewer friendship graph and signed streamer relations.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{dim_err, MarsError, Result};

/// Undirected viewer friendship graph. Edges are stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViewerGraph {
    n_viewers: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl ViewerGraph {
    pub fn new(n_viewers: usize) -> Self {
        ViewerGraph {
            n_viewers,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(
        n_viewers: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut g = ViewerGraph::new(n_viewers);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u == v {
            return Err(MarsError::InvalidInput(format!("self-loop on viewer {u}")));
        }
        if u >= self.n_viewers || v >= self.n_viewers {
            return Err(MarsError::IndexOutOfRange(format!(
                "edge ({u}, {v}) with {} viewers",
                self.n_viewers
            )));
        }
        self.edges.insert((u.min(v), u.max(v)));
        Ok(())
    }

    pub fn n_viewers(&self) -> usize {
        self.n_viewers
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Friends of `u` in ascending order.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == u {
                Some(b)
            } else if b == u {
                Some(a)
            } else {
                None
            }
        })
    }
}

/// Signed streamer relation matrix with entries in `{-1, 0, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedStreamerMatrix {
    values: Array2<f64>,
}

impl SignedStreamerMatrix {
    pub fn zeros(n_channels: usize) -> Self {
        SignedStreamerMatrix {
            values: Array2::zeros((n_channels, n_channels)),
        }
    }

    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return dim_err(format!(
                "relation matrix must be square, got {:?}",
                values.dim()
            ));
        }
        if let Some(x) = values.iter().find(|&&x| x != -1.0 && x != 0.0 && x != 1.0) {
            return Err(MarsError::InvalidInput(format!(
                "relation entries must be -1, 0 or 1, got {x}"
            )));
        }
        Ok(SignedStreamerMatrix { values })
    }

    /// Sets a symmetric relation between two streamers.
    pub fn set_symmetric(&mut self, i: usize, j: usize, sign: i8) -> Result<()> {
        let n = self.n_channels();
        if i >= n || j >= n {
            return Err(MarsError::IndexOutOfRange(format!(
                "relation ({i}, {j}) with {n} channels"
            )));
        }
        if !(-1..=1).contains(&sign) {
            return Err(MarsError::InvalidInput(format!(
                "relation sign must be -1, 0 or 1, got {sign}"
            )));
        }
        self.values[[i, j]] = f64::from(sign);
        self.values[[j, i]] = f64::from(sign);
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.values[[i, j]] as i8
    }

    pub fn as_matrix(&self) -> &Array2<f64> {
        &self.values
    }
}
