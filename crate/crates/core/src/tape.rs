//! Reverse-mode autodiff tape.
//!
//! Ops append nodes in execution order; each node owns a backward closure
//! that maps the node's output gradient to contributions for its parents.
//! [`backward`] walks the tape once in reverse, accumulating contributions
//! with `+=` into per-node slots — a fixed traversal order, so gradients are
//! bitwise reproducible run to run.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::Tensor;
use crate::Result;

/// Index of a node on its tape.
pub type NodeId = usize;

/// Maps the output gradient to `(parent, contribution)` pairs.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T]) -> Vec<(NodeId, Vec<T>)>>;

struct Node<T> {
    /// `None` marks a leaf (parameter or watched input).
    backward: Option<BackwardFn<T>>,
    numel: usize,
}

struct TapeInner<T> {
    nodes: Vec<Node<T>>,
}

static TAPE_IDS: AtomicU64 = AtomicU64::new(1);

/// Shared handle to one recording. Clones refer to the same tape.
pub struct Tape<T: Element> {
    inner: Rc<RefCell<TapeInner<T>>>,
    id: u64,
}

impl<T: Element> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape { inner: Rc::clone(&self.inner), id: self.id }
    }
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
            id: TAPE_IDS.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// Process-unique identity of this recording.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers `t` as a differentiable leaf and returns the tracked handle.
    pub fn leaf(&self, t: &Tensor<T>) -> Tensor<T> {
        let id = self.push(None, t.numel());
        t.detach().with_history(self.clone(), id)
    }

    pub(crate) fn record(&self, numel: usize, backward: BackwardFn<T>) -> NodeId {
        self.push(Some(backward), numel)
    }

    fn push(&self, backward: Option<BackwardFn<T>>, numel: usize) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { backward, numel });
        inner.nodes.len() - 1
    }

    pub(crate) fn same_as(&self, other: &Tape<T>) -> bool {
        self.id == other.id
    }
}

/// Gradient buffers produced by [`backward`], indexed by node.
pub struct Gradients<T: Element> {
    tape_id: u64,
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of the loss w.r.t. `t`, if `t` is tracked and reached.
    pub fn of(&self, t: &Tensor<T>) -> Option<&[T]> {
        let node = t.node?;
        if t.tape.as_ref().map(|tp| tp.id) != Some(self.tape_id) {
            return None;
        }
        self.slots.get(node)?.as_deref()
    }

    pub(crate) fn of_node(&self, tape_id: u64, node: NodeId) -> Option<&[T]> {
        if tape_id != self.tape_id {
            return None;
        }
        self.slots.get(node)?.as_deref()
    }
}

/// Runs reverse-mode accumulation from `loss` (which must be a tracked
/// single-element tensor on `tape`) back to every reachable leaf.
pub fn backward<T: Element>(tape: &Tape<T>, loss: &Tensor<T>) -> Result<Gradients<T>> {
    let loss_node = loss.node.ok_or_else(|| {
        CoreError::invalid("backward", "loss tensor is not tracked on any tape")
    })?;
    match loss.tape.as_ref() {
        Some(t) if t.same_as(tape) => {}
        _ => {
            return Err(CoreError::invalid(
                "backward",
                "loss tensor was recorded on a different tape",
            ))
        }
    }
    if loss.numel() != 1 {
        return Err(CoreError::shape("backward", "scalar loss (1 element)", format!("{:?}", loss.shape())));
    }

    let inner = tape.inner.borrow();
    let n = inner.nodes.len();
    let mut slots: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
    slots[loss_node] = Some(vec![T::ONE]);

    for id in (0..=loss_node).rev() {
        if slots[id].is_none() {
            continue;
        }
        let node = &inner.nodes[id];
        let Some(bwd) = &node.backward else {
            continue; // leaf: keep the accumulated slot for callers
        };
        // Non-leaf slots are dropped after use to bound memory.
        let grad = slots[id].take().expect("slot checked above");
        debug_assert_eq!(grad.len(), node.numel, "gradient numel mismatch at node {id}");
        for (parent, contribution) in bwd(&grad) {
            debug_assert!(parent < id, "parent {parent} not older than node {id}");
            debug_assert_eq!(contribution.len(), inner.nodes[parent].numel);
            match &mut slots[parent] {
                Some(buf) => {
                    for (b, c) in buf.iter_mut().zip(&contribution) {
                        *b += *c;
                    }
                }
                slot @ None => *slot = Some(contribution),
            }
        }
    }

    Ok(Gradients { tape_id: tape.id, slots })
}
