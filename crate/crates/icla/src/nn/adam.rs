//! Adam with bias correction, operating on a fixed list of parameter slots.
//!
//! A slot is one flat parameter buffer (a weight matrix or a bias vector).
//! Slot order is fixed by the caller and must stay stable for the lifetime of
//! the state; growing a slot (classifier head expansion) zero-extends its
//! moment buffers so new parameters start with fresh accumulators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper, slot_lens: &[usize]) -> AdamState {
        AdamState {
            hyper,
            step: 0,
            m: slot_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: slot_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Rebuilds a state from checkpointed pieces.
    pub fn from_parts(hyper: AdamHyper, step: u64, moments: Vec<(Vec<f64>, Vec<f64>)>) -> AdamState {
        let (m, v) = moments.into_iter().unzip();
        AdamState { hyper, step, m, v }
    }

    /// First/second moment buffers per slot, in slot order.
    pub fn moment_slots(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.m.iter().map(Vec::as_slice).zip(self.v.iter().map(Vec::as_slice))
    }

    /// Zero-extends one slot's moment buffers to `new_len` (appended params
    /// start with empty accumulators). Shrinking is not supported.
    pub fn expand_slot(&mut self, slot: usize, new_len: usize) {
        assert!(new_len >= self.m[slot].len(), "slots only grow");
        self.m[slot].resize(new_len, 0.0);
        self.v[slot].resize(new_len, 0.0);
    }

    /// One update over all slots. `params[i]` and `grads[i]` must match the
    /// slot lengths registered at construction (after any expansions).
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} param / {} grad slots, state has {}", params.len(), grads.len(), self.m.len()),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() || params[i].len() != self.m[i].len() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "slot {i}: param {} grad {} state {}",
                        params[i].len(),
                        g.len(),
                        self.m[i].len()
                    ),
                ));
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence(format!("non-finite gradient in slot {i}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = h.beta1 * *mi + (1.0 - h.beta1) * gi;
                *vi = h.beta2 * *vi + (1.0 - h.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= h.learning_rate * mhat / (vhat.sqrt() + h.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_signed_learning_rate() {
        // With bias correction, step 1 moves each coordinate by
        // lr · g/(|g| + eps) ≈ lr · sign(g).
        let mut state = AdamState::new(AdamHyper::default(), &[3]);
        let mut p = vec![1.0, 1.0, 1.0];
        state.step(&mut [&mut p], &[&[0.5, -2.0, 0.0]]).unwrap();
        assert!((p[0] - (1.0 - 1e-3 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (1.0 + 1e-3 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn converges_on_quadratic() {
        // min (x-3)²: gradient 2(x-3).
        let mut state = AdamState::new(
            AdamHyper { learning_rate: 0.05, ..AdamHyper::default() },
            &[1],
        );
        let mut x = vec![-4.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 3.0)];
            state.step(&mut [&mut x], &[&g]).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "ended at {}", x[0]);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut state = AdamState::new(AdamHyper::default(), &[2]);
        let mut p = vec![0.0, 0.0];
        let err = state.step(&mut [&mut p], &[&[1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn rejects_slot_mismatch() {
        let mut state = AdamState::new(AdamHyper::default(), &[2]);
        let mut p = vec![0.0, 0.0, 0.0];
        assert!(state.step(&mut [&mut p], &[&[1.0, 1.0, 1.0]]).is_err());
    }

    #[test]
    fn expanded_slot_keeps_old_moments() {
        let mut state = AdamState::new(AdamHyper::default(), &[2]);
        let mut p = vec![1.0, 1.0];
        state.step(&mut [&mut p], &[&[1.0, 1.0]]).unwrap();
        let before = p.clone();
        state.expand_slot(0, 4);
        let mut p2 = vec![before[0], before[1], 5.0, 5.0];
        state.step(&mut [&mut p2], &[&[0.0, 0.0, 1.0, -1.0]]).unwrap();
        // Old coords had momentum, so they keep drifting a little even with
        // zero gradient. New coords start from zero moments but share the
        // global step counter (t = 2), so their bias correction is milder
        // than a true first step.
        assert!(p2[0] != before[0]);
        let m_hat = 0.1 / (1.0 - 0.9f64.powi(2));
        let v_hat = 0.001 / (1.0 - 0.999f64.powi(2));
        let update = 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p2[2] - (5.0 - update)).abs() < 1e-12);
        assert!((p2[3] - (5.0 + update)).abs() < 1e-12);
    }
}
