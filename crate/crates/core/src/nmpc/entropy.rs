//! Shannon-entropy tracking weights from windows of measurement variances.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Number of tracked translational axes: `p_x, p_y, p_z, v_x, v_y, v_z`.
pub const TRACKED_AXES: usize = 6;

/// Variances below this value are raised to it so every probability is defined.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Rolling window of the last `n_max` variance samples per tracked axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceWindow {
    n_max: usize,
    buffers: [VecDeque<f64>; TRACKED_AXES],
}

impl VarianceWindow {
    /// A full window of zero variances, i.e. a history of exact estimates.
    pub fn new(n_max: usize) -> Self {
        let n_max = n_max.max(1);
        Self {
            n_max,
            buffers: std::array::from_fn(|_| std::iter::repeat_n(0.0, n_max).collect()),
        }
    }

    /// Builds a window from explicit per-axis histories (oldest first). Longer
    /// histories keep their newest `n_max` samples.
    pub fn from_samples(n_max: usize, samples: [&[f64]; TRACKED_AXES]) -> Self {
        let mut w = Self {
            n_max: n_max.max(1),
            buffers: Default::default(),
        };
        for (buf, s) in w.buffers.iter_mut().zip(samples) {
            for &v in s {
                buf.push_back(v.max(0.0));
            }
            while buf.len() > w.n_max {
                buf.pop_front();
            }
        }
        w
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Appends one sample per axis, evicting the oldest when full.
    pub fn push(&mut self, sample: [f64; TRACKED_AXES]) {
        for (buf, v) in self.buffers.iter_mut().zip(sample) {
            if buf.len() == self.n_max {
                buf.pop_front();
            }
            buf.push_back(if v.is_finite() { v.max(0.0) } else { 0.0 });
        }
    }

    pub fn axis(&self, i: usize) -> &VecDeque<f64> {
        &self.buffers[i]
    }
}

/// `-Σ P_i ln P_i` with `P_i = max(σ_i, floor) / Σ_j max(σ_j, floor)`.
/// An empty window has entropy zero; a uniform window returns `ln(len)` exactly.
pub fn shannon_entropy<'a>(samples: impl IntoIterator<Item = &'a f64> + Clone) -> f64 {
    let mut floored = samples.clone().into_iter().map(|s| s.max(VARIANCE_FLOOR));
    if let Some(first) = floored.next() {
        let mut len = 1usize;
        if floored.all(|s| {
            len += 1;
            s == first
        }) {
            return (len as f64).ln();
        }
    }
    let total: f64 = samples.clone().into_iter().map(|s| s.max(VARIANCE_FLOOR)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = samples
        .into_iter()
        .map(|s| {
            let p = s.max(VARIANCE_FLOOR) / total;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Diagonal of the state-tracking weight `Q_x` in state order
/// `p_x, p_y, p_z, v_x, v_y, v_z, phi, theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveWeights {
    pub q: [f64; 8],
}

impl AdaptiveWeights {
    /// Every tracked axis at the maximum entropy `ln(n_max)`.
    pub fn fixed(n_max: usize, q_phi: f64, q_theta: f64) -> Self {
        let h = (n_max.max(1) as f64).ln();
        Self {
            q: [h, h, h, h, h, h, q_phi, q_theta],
        }
    }
}

pub fn entropy_weights(window: &VarianceWindow, q_phi: f64, q_theta: f64) -> AdaptiveWeights {
    let mut q = [0.0; 8];
    for (i, qi) in q.iter_mut().take(TRACKED_AXES).enumerate() {
        *qi = shannon_entropy(window.axis(i));
    }
    q[6] = q_phi;
    q[7] = q_theta;
    AdaptiveWeights { q }
}
