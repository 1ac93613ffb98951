//! Dense tensor with an optional reverse-mode backward graph.
//!
//! A `Tensor` is a cheap handle (`Rc`) to a node holding the forward value,
//! an optional gradient buffer, and — for op results — the parent handles
//! plus a closure that maps the output gradient to per-parent contributions.
//! Graphs are rebuilt every step; parameters are leaves whose values the
//! optimizer mutates in place between steps.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::element::Element;
use crate::error::{Result, TensorError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) struct BackCtx<'a, E: Element> {
    /// dL/d(output of this node)
    pub grad: &'a [E],
    /// forward value of this node
    pub out: &'a [E],
    pub parents: &'a [Tensor<E>],
}

pub(crate) type BackFn<E> = Box<dyn Fn(&BackCtx<'_, E>) -> Vec<Option<Vec<E>>>>;

pub(crate) struct Node<E: Element> {
    id: u64,
    shape: Vec<usize>,
    value: RefCell<Vec<E>>,
    grad: RefCell<Option<Vec<E>>>,
    requires_grad: Cell<bool>,
    parents: Vec<Tensor<E>>,
    backward: Option<BackFn<E>>,
}

pub struct Tensor<E: Element> {
    node: Rc<Node<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

fn check_len<E: Element>(shape: &[usize], data: &[E]) -> Result<()> {
    let numel: usize = shape.iter().product();
    if numel != data.len() {
        return Err(TensorError::ShapeMismatch {
            op: "construct",
            lhs: shape.to_vec(),
            rhs: vec![data.len()],
        });
    }
    Ok(())
}

impl<E: Element> Tensor<E> {
    fn new_node(
        shape: Vec<usize>,
        value: Vec<E>,
        requires_grad: bool,
        parents: Vec<Tensor<E>>,
        backward: Option<BackFn<E>>,
    ) -> Self {
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                value: RefCell::new(value),
                grad: RefCell::new(None),
                requires_grad: Cell::new(requires_grad),
                parents,
                backward,
            }),
        }
    }

    /// Constant tensor: participates in math, never receives gradients.
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        check_len(shape, &data)?;
        Ok(Self::new_node(
            shape.to_vec(),
            data,
            false,
            Vec::new(),
            None,
        ))
    }

    /// Trainable leaf.
    pub fn param(shape: &[usize], data: Vec<E>) -> Result<Self> {
        check_len(shape, &data)?;
        Ok(Self::new_node(shape.to_vec(), data, true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new_node(
            shape.to_vec(),
            vec![E::zero(); numel],
            false,
            Vec::new(),
            None,
        )
    }

    pub fn full(shape: &[usize], v: E) -> Self {
        let numel = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![v; numel], false, Vec::new(), None)
    }

    pub fn scalar(v: E) -> Self {
        Self::new_node(vec![1], vec![v], false, Vec::new(), None)
    }

    /// Op-result constructor. Collapses to a constant when no parent needs
    /// gradients, which is what gives teacher/momentum paths their
    /// stop-gradient behaviour for free.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        value: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: BackFn<E>,
    ) -> Self {
        let requires = parents.iter().any(|p| p.requires_grad());
        if requires {
            Self::new_node(shape, value, true, parents, Some(backward))
        } else {
            Self::new_node(shape, value, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn rows(&self) -> usize {
        self.node.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.node.shape[1]
    }

    pub fn is_matrix(&self) -> bool {
        self.node.shape.len() == 2
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn same_node(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.node, &other.node)
    }

    pub fn value(&self) -> Ref<'_, Vec<E>> {
        self.node.value.borrow()
    }

    pub fn value_vec(&self) -> Vec<E> {
        self.node.value.borrow().clone()
    }

    /// Mutable access to the stored value. Meant for leaves (optimizer
    /// updates, buffer maintenance); mutating an op result invalidates
    /// gradients of any graph still holding it.
    pub fn value_mut(&self) -> RefMut<'_, Vec<E>> {
        self.node.value.borrow_mut()
    }

    pub fn item(&self) -> E {
        debug_assert_eq!(self.numel(), 1);
        self.node.value.borrow()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad.get()
    }

    pub fn set_requires_grad(&self, flag: bool) {
        self.node.requires_grad.set(flag);
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Value copy cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::new_node(
            self.node.shape.clone(),
            self.value_vec(),
            false,
            Vec::new(),
            None,
        )
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if self.value().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TensorError::Numeric(format!("non-finite values in {what}")))
        }
    }

    fn accumulate_grad(&self, contrib: &[E]) {
        let mut slot = self.node.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (g, c) in buf.iter_mut().zip(contrib) {
                    *g += *c;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across
    /// calls until `zero_grad` (the optimizer clears them after a step).
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                lhs: self.shape().to_vec(),
                rhs: vec![1],
            });
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Post-order DFS: parents precede children, so the reversed list is
        // a valid backprop order.
        let mut order: Vec<Tensor<E>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<E>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.node.id);
        while let Some((t, idx)) = stack.pop() {
            let parents = &t.node.parents;
            if idx < parents.len() {
                let next = parents[idx].clone();
                stack.push((t, idx + 1));
                if next.requires_grad() && visited.insert(next.node.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(t);
            }
        }

        self.accumulate_grad(&[E::one()]);

        for t in order.iter().rev() {
            let Some(back) = t.node.backward.as_ref() else {
                continue;
            };
            let grad = t.node.grad.borrow().clone();
            let Some(grad) = grad else { continue };
            let out = t.node.value.borrow();
            let ctx = BackCtx {
                grad: &grad,
                out: &out,
                parents: &t.node.parents,
            };
            let contribs = back(&ctx);
            drop(out);
            debug_assert_eq!(contribs.len(), t.node.parents.len());
            for (parent, contrib) in t.node.parents.iter().zip(contribs) {
                if let Some(c) = contrib {
                    if parent.requires_grad() {
                        parent.accumulate_grad(&c);
                    }
                }
            }
            // Intermediate grads are not needed once propagated.
            *t.node.grad.borrow_mut() = None;
        }
        Ok(())
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad.get())
            .finish()
    }
}
