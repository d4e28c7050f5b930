use crate::error::{check_len, Result};
use serde::{Deserialize, Serialize};

/// Elementwise Adadelta accumulators E[g²] and E[Δ²].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adadelta {
    pub decay: f64,
    pub eps: f64,
    pub eg2: Vec<f64>,
    pub edx2: Vec<f64>,
}

impl Adadelta {
    pub fn new(len: usize, decay: f64, eps: f64) -> Self {
        Adadelta {
            decay,
            eps,
            eg2: vec![0.0; len],
            edx2: vec![0.0; len],
        }
    }

    /// Step for a descent gradient: Δ = −√(E[Δ²]+ε)/√(E[g²]+ε) · g, with
    /// E[g²] updated before and E[Δ²] after.
    pub fn step(&mut self, grad: &[f64]) -> Result<Vec<f64>> {
        check_len(self.eg2.len(), grad.len())?;
        let (r, eps) = (self.decay, self.eps);
        let mut out = Vec::with_capacity(grad.len());
        for ((g, eg2), edx2) in grad.iter().zip(&mut self.eg2).zip(&mut self.edx2) {
            *eg2 = r * *eg2 + (1.0 - r) * g * g;
            let dx = -((*edx2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
            *edx2 = r * *edx2 + (1.0 - r) * dx * dx;
            out.push(dx);
        }
        Ok(out)
    }
}
