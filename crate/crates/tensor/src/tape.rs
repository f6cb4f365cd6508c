use std::cell::RefCell;
use std::rc::Rc;

use crate::error::TensorError;
use crate::tensor::Tensor;

/// Maps the output gradient to one optional gradient per recorded input.
pub type BackwardFn = Box<dyn FnOnce(&Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn>,
}

struct TapeInner {
    nodes: Vec<Node>,
    consumed: bool,
    grad_enabled: bool,
    checked: bool,
}

/// Records differentiable operations for one forward pass.
///
/// A tape supports a single [`Tape::backward`]; afterwards it is stale and
/// further recording or backward passes fail.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// A value on a tape. Untracked values (constants, or anything built while
/// gradients are disabled) carry no node id.
#[derive(Clone)]
pub struct Var {
    value: Rc<Tensor>,
    id: Option<usize>,
    tape: Tape,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
                grad_enabled: true,
                checked: false,
            })),
        }
    }

    /// A tape that never records; every op result is a constant.
    pub fn no_grad() -> Self {
        let t = Self::new();
        t.inner.borrow_mut().grad_enabled = false;
        t
    }

    /// Rejects NaN/Inf at every op boundary.
    pub fn set_checked(&self, checked: bool) {
        self.inner.borrow_mut().checked = checked;
    }

    pub fn grad_enabled(&self) -> bool {
        self.inner.borrow().grad_enabled
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// A leaf whose gradient will be reported by [`Tape::backward`].
    pub fn var(&self, value: Tensor) -> Var {
        self.leaf(Rc::new(value))
    }

    /// Tracked leaf sharing an existing tensor without copying it.
    pub fn leaf(&self, value: Rc<Tensor>) -> Var {
        let mut inner = self.inner.borrow_mut();
        let id = if inner.grad_enabled && !inner.consumed {
            inner.nodes.push(Node {
                parents: Vec::new(),
                backward: None,
            });
            Some(inner.nodes.len() - 1)
        } else {
            None
        };
        Var {
            value,
            id,
            tape: self.clone(),
        }
    }

    pub fn constant(&self, value: Tensor) -> Var {
        Var {
            value: Rc::new(value),
            id: None,
            tape: self.clone(),
        }
    }

    /// Records an op. `make_backward` is only called when some input is
    /// tracked; it receives a per-input "needs gradient" mask.
    pub(crate) fn record<F>(
        &self,
        op: &'static str,
        value: Tensor,
        inputs: &[&Var],
        make_backward: F,
    ) -> Result<Var, TensorError>
    where
        F: FnOnce(Vec<bool>) -> BackwardFn,
    {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(TensorError::StaleTape);
        }
        if inputs.iter().any(|v| !v.tape.same(self)) {
            return Err(TensorError::ForeignVar);
        }
        if inner.checked && !value.is_finite() {
            return Err(TensorError::NonFinite(op));
        }
        let needs: Vec<bool> = inputs.iter().map(|v| v.id.is_some()).collect();
        let id = if inner.grad_enabled && needs.iter().any(|&b| b) {
            let parents = inputs.iter().map(|v| v.id).collect();
            inner.nodes.push(Node {
                parents,
                backward: Some(make_backward(needs)),
            });
            Some(inner.nodes.len() - 1)
        } else {
            None
        };
        drop(inner);
        Ok(Var {
            value: Rc::new(value),
            id,
            tape: self.clone(),
        })
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(&self, loss: &Var) -> Result<Gradients, TensorError> {
        if !loss.tape.same(self) {
            return Err(TensorError::ForeignVar);
        }
        if loss.value.numel() != 1 {
            return Err(TensorError::NonScalar(loss.value.shape().to_vec()));
        }
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(TensorError::StaleTape);
        }
        inner.consumed = true;
        let mut nodes = std::mem::take(&mut inner.nodes);
        drop(inner);

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        let Some(root) = loss.id else {
            return Ok(Gradients { grads });
        };
        grads[root] = Some(Tensor::full(loss.value.shape(), 1.0));
        for id in (0..=root).rev() {
            let Some(backward) = nodes[id].backward.take() else { continue };
            let Some(g) = grads[id].take() else { continue };
            let parent_grads = backward(&g);
            for (parent, pg) in nodes[id].parents.iter().zip(parent_grads) {
                if let (Some(p), Some(pg)) = (parent, pg) {
                    match &mut grads[*p] {
                        Some(acc) => acc.add_assign(&pg),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            // Leaves keep their gradient; interior nodes no longer need it.
            if !nodes[id].parents.is_empty() {
                grads[id] = None;
            } else {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of tracked leaves after a backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        var.id.and_then(|i| self.grads.get(i)).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: &Var) -> Option<Tensor> {
        var.id.and_then(|i| self.grads.get_mut(i)).and_then(Option::take)
    }
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_rc(&self) -> Rc<Tensor> {
        self.value.clone()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn is_tracked(&self) -> bool {
        self.id.is_some()
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var {
            value: self.value.clone(),
            id: None,
            tape: self.tape.clone(),
        }
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(id={:?}, {:?})", self.id, self.value)
    }
}
