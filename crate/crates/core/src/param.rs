//! Trainable parameter: a master tensor paired with a gradient slot.
//!
//! The master value is never tracked; each training step watches it onto a
//! fresh tape, and after `backward` the tape gradient is accumulated (`+=`)
//! into the slot. `zero_grad` is explicit, matching the accumulate-then-step
//! optimizer contract.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::element::Element;
use crate::tape::{Gradients, NodeId, Tape};
use crate::tensor::Tensor;

struct ParamInner<T: Element> {
    name: String,
    value: RefCell<Tensor<T>>,
    grad: RefCell<Vec<T>>,
    /// Node this parameter occupies on the most recent tape, keyed by the
    /// tape's unique id so a stale tape can never alias a new one.
    last_watch: Cell<Option<(u64, NodeId)>>,
}

/// Shared handle to one trainable tensor.
pub struct Param<T: Element>(Rc<ParamInner<T>>);

impl<T: Element> Clone for Param<T> {
    fn clone(&self) -> Self {
        Param(Rc::clone(&self.0))
    }
}

impl<T: Element> std::fmt::Debug for Param<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Param")
            .field("name", &self.0.name)
            .field("shape", &self.0.value.borrow().shape())
            .finish()
    }
}

impl<T: Element> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let numel = value.numel();
        Param(Rc::new(ParamInner {
            name: name.into(),
            value: RefCell::new(value.detach()),
            grad: RefCell::new(vec![T::ZERO; numel]),
            last_watch: Cell::new(None),
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.value.borrow().numel()
    }

    /// Untracked snapshot of the current value (cheap: shared buffer).
    pub fn value(&self) -> Tensor<T> {
        self.0.value.borrow().clone()
    }

    /// Replaces the value; the shape must not change.
    pub fn set_value(&self, t: Tensor<T>) {
        assert_eq!(
            self.0.value.borrow().shape(),
            t.shape(),
            "set_value must preserve shape of {}",
            self.0.name
        );
        *self.0.value.borrow_mut() = t.detach();
    }

    /// Registers this parameter on `tape` (once per tape — repeated watches
    /// return the same node so shared use accumulates correctly).
    pub fn watch(&self, tape: &Tape<T>) -> Tensor<T> {
        if let Some((tape_id, node)) = self.0.last_watch.get() {
            if tape_id == tape.id() {
                return self.0.value.borrow().detach().with_history(tape.clone(), node);
            }
        }
        let tracked = tape.leaf(&self.0.value.borrow());
        self.0.last_watch.set(Some((tape.id(), tracked.node().expect("leaf is tracked"))));
        tracked
    }

    /// Adds the tape gradient for this parameter into its slot, if present.
    pub fn accumulate_grad(&self, grads: &Gradients<T>) {
        let Some((tape_id, node)) = self.0.last_watch.get() else { return };
        let Some(g) = grads.of_node(tape_id, node) else { return };
        let mut slot = self.0.grad.borrow_mut();
        for (s, &gi) in slot.iter_mut().zip(g) {
            *s += gi;
        }
    }

    /// Copy of the accumulated gradient.
    pub fn grad(&self) -> Vec<T> {
        self.0.grad.borrow().clone()
    }

    /// Applies `f(value, grad)` producing the new value buffer in place.
    pub fn update_value(&self, f: impl FnOnce(&mut Vec<T>, &[T])) {
        let grad = self.0.grad.borrow();
        let mut value = self.0.value.borrow_mut();
        let mut buf = value.to_vec();
        f(&mut buf, &grad);
        let shape = value.shape().to_vec();
        *value = Tensor::from_vec(shape, buf).expect("update preserves length");
    }

    pub fn zero_grad(&self) {
        for g in self.0.grad.borrow_mut().iter_mut() {
            *g = T::ZERO;
        }
    }
}
