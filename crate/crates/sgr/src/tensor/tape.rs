use std::cell::RefCell;
use std::collections::HashMap;

use super::Tensor;
use crate::error::{Result, SgrError};

/// Backward rule: given the inputs, the output, and the output adjoint,
/// produce one adjoint per input (aligned with the input list).
pub(super) type BackwardFn = Box<dyn Fn(&[Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>>>;

pub(super) struct Entry {
    pub inputs: Vec<Tensor>,
    pub output: Tensor,
    pub backward: BackwardFn,
}

/// Single-writer operation recorder for reverse-mode differentiation.
///
/// Ops are recorded only while the tape is recording and at least one input
/// is gradient-tracked; [`Tape::no_grad`] gives a pure-evaluation tape for
/// inference. Replaying the records in reverse visits every operation
/// exactly once per backward call.
pub struct Tape {
    pub(super) entries: RefCell<Vec<Entry>>,
    recording: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            entries: RefCell::new(Vec::new()),
            recording: true,
        }
    }

    /// Evaluation-only tape: nothing is recorded, outputs are untracked.
    pub fn no_grad() -> Tape {
        Tape {
            entries: RefCell::new(Vec::new()),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_entries(&self) -> usize {
        self.entries.borrow().len()
    }

    pub(super) fn record(&self, inputs: Vec<Tensor>, output: &Tensor, backward: BackwardFn) {
        if self.recording && inputs.iter().any(|t| t.requires_grad()) {
            output.set_requires_grad(true);
            self.entries.borrow_mut().push(Entry {
                inputs,
                output: output.clone(),
                backward,
            });
        }
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate additively
    /// into every `requires_grad` tensor reached by the sweep; repeated
    /// calls without `zero_grad` keep accumulating.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(SgrError::Contract(format!(
                "backward needs a scalar loss, shape is {:?}",
                loss.shape()
            )));
        }
        if !loss.requires_grad() {
            return Err(SgrError::Contract(
                "loss does not depend on any gradient-tracked tensor under this tape".into(),
            ));
        }
        let mut adjoints: HashMap<u64, Vec<f64>> = HashMap::new();
        adjoints.insert(loss.id(), vec![1.0]);

        let entries = self.entries.borrow();
        for entry in entries.iter().rev() {
            let Some(d_out) = adjoints.get(&entry.output.id()).cloned() else {
                continue;
            };
            let d_inputs = (entry.backward)(&entry.inputs, &entry.output, &d_out);
            debug_assert_eq!(d_inputs.len(), entry.inputs.len());
            for (input, d_in) in entry.inputs.iter().zip(d_inputs) {
                if !input.requires_grad() {
                    continue;
                }
                debug_assert_eq!(d_in.len(), input.numel());
                adjoints
                    .entry(input.id())
                    .and_modify(|acc| {
                        for (a, d) in acc.iter_mut().zip(&d_in) {
                            *a += d;
                        }
                    })
                    .or_insert(d_in);
            }
        }

        // Flush adjoints into the tensors themselves. Entry outputs cover all
        // non-leaf tensors; leaves appear only as inputs.
        let mut flushed: HashMap<u64, bool> = HashMap::new();
        let mut flush = |t: &Tensor| {
            if t.requires_grad() && !flushed.contains_key(&t.id()) {
                if let Some(adj) = adjoints.get(&t.id()) {
                    t.accumulate_grad(adj);
                }
                flushed.insert(t.id(), true);
            }
        };
        for entry in entries.iter() {
            for input in &entry.inputs {
                flush(input);
            }
            flush(&entry.output);
        }
        flush(loss);
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
