//! The 4-bit identity task and its two-layer MLP.

use ndarray::{Array1, Array2};

pub const MLP_IO: usize = 4;
pub const MLP_HIDDEN: usize = 16;

/// All sixteen binary 4-vectors, each mapped to itself.
#[derive(Debug, Clone)]
pub struct IdentityDataset {
    pub examples: Vec<[u8; MLP_IO]>,
}

pub fn gen_identity() -> IdentityDataset {
    let examples = (0..16u8)
        .map(|bits| {
            let mut x = [0u8; MLP_IO];
            for (i, slot) in x.iter_mut().enumerate() {
                *slot = (bits >> i) & 1;
            }
            x
        })
        .collect();
    IdentityDataset { examples }
}

/// Two-layer MLP making four independent binary predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    /// (16, 4)
    pub w1: Array2<f64>,
    /// (16,)
    pub b1: Array1<f64>,
    /// (4, 16)
    pub w2: Array2<f64>,
    /// (4,)
    pub b2: Array1<f64>,
}

impl MlpWeights {
    pub fn zeros() -> Self {
        MlpWeights {
            w1: Array2::zeros((MLP_HIDDEN, MLP_IO)),
            b1: Array1::zeros(MLP_HIDDEN),
            w2: Array2::zeros((MLP_IO, MLP_HIDDEN)),
            b2: Array1::zeros(MLP_IO),
        }
    }

    pub fn num_weights(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_weights());
        flat.extend(self.w1.iter());
        flat.extend(self.b1.iter());
        flat.extend(self.w2.iter());
        flat.extend(self.b2.iter());
        flat
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for v in self.w1.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in self.b1.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in self.w2.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in self.b2.iter_mut() {
            *v = *it.next().unwrap();
        }
        assert!(it.next().is_none());
    }
}

/// The hand-built identity solution: `W2 = W1^T` with `lambda` on the four
/// diagonal slots and both biases at `-lambda/2`.
pub fn mlp_manual_weights(lambda: f64) -> MlpWeights {
    assert!(lambda > 0.0);
    let mut w = MlpWeights::zeros();
    for i in 0..MLP_IO {
        w.w1[[i, i]] = lambda;
        w.w2[[i, i]] = lambda;
    }
    w.b1.fill(-lambda / 2.0);
    w.b2.fill(-lambda / 2.0);
    w
}

/// Pre-sigmoid logits for one input.
pub fn mlp_logits(w: &MlpWeights, x: &[u8; MLP_IO]) -> [f64; MLP_IO] {
    let xv = Array1::from_iter(x.iter().map(|b| *b as f64));
    let hidden = (w.w1.dot(&xv) + &w.b1).mapv(|v| v.max(0.0));
    let out = w.w2.dot(&hidden) + &w.b2;
    let mut logits = [0.0; MLP_IO];
    for i in 0..MLP_IO {
        logits[i] = out[i];
    }
    logits
}

/// Elementwise sigmoid outputs.
pub fn mlp_forward(w: &MlpWeights, x: &[u8; MLP_IO]) -> [f64; MLP_IO] {
    let logits = mlp_logits(w, x);
    logits.map(|l| 1.0 / (1.0 + (-l).exp()))
}

/// Binary cross-entropy in bits, summed over the four dimensions.
pub fn bce_nll_bits(probs: &[f64; MLP_IO], y: &[u8; MLP_IO]) -> f64 {
    let mut nll = 0.0;
    for i in 0..MLP_IO {
        let p = probs[i].clamp(1e-300, 1.0);
        nll -= if y[i] == 1 {
            p.log2()
        } else {
            (1.0 - p).max(1e-300).log2()
        };
    }
    nll
}

/// Numerically stable BCE in bits computed from logits.
pub fn bce_nll_bits_from_logits(logits: &[f64; MLP_IO], y: &[u8; MLP_IO]) -> f64 {
    let mut nats = 0.0;
    for i in 0..MLP_IO {
        let l = logits[i];
        nats += crate::codes::softplus(l) - (y[i] as f64) * l;
    }
    nats / std::f64::consts::LN_2
}
