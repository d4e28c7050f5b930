use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Lower-triangular nonzero layout of a block-banded Cholesky factor.
///
/// The variable ordering is `(b_1, …, b_n, θ_G)`. Local block `i` couples to
/// blocks `i−ℓ..i`, and the trailing global rows are full. Slots are stored
/// column-major; the first slot of every column is its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    n_blocks: usize,
    block_dims: Vec<usize>,
    global_dim: usize,
    markov_order: usize,
    dim: usize,
    dense: bool,
    rows: Vec<usize>,
    cols: Vec<usize>,
    col_ptr: Vec<usize>,
}

/// Serializable summary of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDescriptor {
    pub kind: String,
    pub n_blocks: usize,
    pub block_dims: Vec<usize>,
    pub global_dim: usize,
    pub markov_order: usize,
    pub dim: usize,
    pub nnz: usize,
}

impl SparsityPattern {
    pub fn build(
        n_blocks: usize,
        block_dims: &[usize],
        global_dim: usize,
        markov_order: usize,
    ) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::InvalidInput("pattern needs at least one block".into()));
        }
        if block_dims.len() != n_blocks {
            return Err(Error::DimensionMismatch {
                expected: n_blocks,
                got: block_dims.len(),
            });
        }
        if block_dims.contains(&0) {
            return Err(Error::InvalidInput("block dimensions must be >= 1".into()));
        }
        if markov_order >= n_blocks {
            return Err(Error::InvalidInput(format!(
                "markov order {markov_order} must be below the block count {n_blocks}"
            )));
        }
        let mut offsets = Vec::with_capacity(n_blocks + 1);
        offsets.push(0);
        for &b in block_dims {
            offsets.push(offsets.last().unwrap() + b);
        }
        let local = offsets[n_blocks];
        let dim = local + global_dim;

        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut block = 0;
        for j in 0..dim {
            col_ptr.push(rows.len());
            let row_end = if j < local {
                while offsets[block + 1] <= j {
                    block += 1;
                }
                offsets[(block + markov_order + 1).min(n_blocks)]
            } else {
                local
            };
            for i in j..row_end {
                rows.push(i);
                cols.push(j);
            }
            for i in local.max(j)..dim {
                if i >= row_end {
                    rows.push(i);
                    cols.push(j);
                }
            }
        }
        col_ptr.push(rows.len());
        Ok(SparsityPattern {
            n_blocks,
            block_dims: block_dims.to_vec(),
            global_dim,
            markov_order,
            dim,
            dense: n_blocks == 1 && global_dim == 0,
            rows,
            cols,
            col_ptr,
        })
    }

    /// Full lower triangle.
    pub fn dense(d: usize) -> Result<Self> {
        Self::build(1, &[d], 0, 0)
    }

    /// Band of width `bandwidth` over `d` scalar variables.
    pub fn banded(d: usize, bandwidth: usize) -> Result<Self> {
        Self::build(d, &vec![1; d], 0, bandwidth.min(d.saturating_sub(1)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn nnz(&self) -> usize {
        self.rows.len()
    }
    pub fn is_dense(&self) -> bool {
        self.dense
    }
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }
    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }
    pub fn global_dim(&self) -> usize {
        self.global_dim
    }
    pub fn markov_order(&self) -> usize {
        self.markov_order
    }
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Slot range of column `j`; the first slot is the diagonal.
    pub fn column(&self, j: usize) -> std::ops::Range<usize> {
        self.col_ptr[j]..self.col_ptr[j + 1]
    }

    pub fn diag_slot(&self, j: usize) -> usize {
        self.col_ptr[j]
    }

    pub fn is_diag_slot(&self, k: usize) -> bool {
        self.rows[k] == self.cols[k]
    }

    /// Slot of lower-triangular position (i, j), i ≥ j.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if i < j || i >= self.dim {
            return None;
        }
        let range = self.column(j);
        let start = range.start;
        self.rows[range].binary_search(&i).ok().map(|k| start + k)
    }

    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    pub fn descriptor(&self) -> PatternDescriptor {
        PatternDescriptor {
            kind: if self.dense { "dense" } else { "block-banded" }.to_string(),
            n_blocks: self.n_blocks,
            block_dims: self.block_dims.clone(),
            global_dim: self.global_dim,
            markov_order: self.markov_order,
            dim: self.dim,
            nnz: self.nnz(),
        }
    }

    pub fn from_descriptor(d: &PatternDescriptor) -> Result<Self> {
        Self::build(d.n_blocks, &d.block_dims, d.global_dim, d.markov_order)
    }
}
