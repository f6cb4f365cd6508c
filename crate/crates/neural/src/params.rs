use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use tanner_tensor::{Tape, Tensor, Var};

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// How a parameter is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with this std, resampled outside two standard deviations.
    TruncNormal(f64),
    Zeros,
    Ones,
}

/// Named parameter tensors in creation order.
#[derive(Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Rc<Tensor>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add<R: Rng>(&mut self, name: String, shape: &[usize], init: Init, rng: &mut R) -> ParamId {
        let t = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::TruncNormal(std) => {
                let normal = Normal::new(0.0, std).expect("positive std");
                Tensor::from_fn(shape, |_| loop {
                    let x: f64 = normal.sample(rng);
                    if x.abs() <= 2.0 * std {
                        break x;
                    }
                })
            }
        };
        self.names.push(name);
        self.tensors.push(Rc::new(t));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Mutable access; clones the tensor first if a tape still shares it.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        Rc::make_mut(&mut self.tensors[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(value.shape(), self.tensors[id.0].shape(), "shape of {}", self.names[id.0]);
        self.tensors[id.0] = Rc::new(value);
    }

    pub fn total(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Parameter count excluding the bit embedding and positional encodings.
    pub fn counted(&self) -> usize {
        self.names
            .iter()
            .zip(&self.tensors)
            .filter(|(n, _)| !is_embedding(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Puts every parameter on `tape` without copying. They are tracked
    /// leaves unless the tape has gradients disabled.
    pub fn bind(&self, tape: &Tape) -> Bound {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        Bound { vars }
    }
}

fn is_embedding(name: &str) -> bool {
    name == "encoder.embed" || name == "encoder.pe_check" || name == "encoder.pe_data"
}

/// Parameters placed on one tape.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
