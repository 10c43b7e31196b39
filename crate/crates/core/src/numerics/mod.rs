//! Dense tensors, reverse-mode differentiation and gradient checking.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, BlockError, GradCheckOptions, GradReport};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{dot, Tensor};

use crate::error::{Error, Result};

/// Named parameter blocks with a fixed insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::data(format!("duplicate parameter block `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn by_index(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    /// Mutable element access; the block shape cannot change through it.
    pub fn data_mut(&mut self, i: usize) -> &mut [f64] {
        self.tensors[i].data_mut()
    }

    pub fn get_data_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let i = self.index_of(name)?;
        Some(self.tensors[i].data_mut())
    }

    /// Replaces a block's values; the new tensor must have the same shape.
    pub fn replace(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::data(format!("no parameter block `{name}`")))?;
        if self.tensors[i].shape() != value.shape() {
            return Err(Error::Shape {
                op: "replace",
                left: self.tensors[i].shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        self.tensors[i] = value;
        Ok(())
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Parameter blocks bound to leaves on a tape.
#[derive(Debug)]
pub struct Bound<'a> {
    params: &'a ParamSet,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    pub fn bind(tape: &mut Tape, params: &'a ParamSet) -> Self {
        let vars = params.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        Bound { params, vars }
    }

    /// Leaf for the named block. Panics on an unknown name, which is a
    /// programming error in the loss graph.
    pub fn var(&self, name: &str) -> Var {
        let i = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter block `{name}`"));
        self.vars[i]
    }

    pub fn params(&self) -> &ParamSet {
        self.params
    }
}

/// Evaluates `loss` and its gradient with respect to every block of `params`.
pub fn value_and_grad<F>(loss: F, params: &ParamSet) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&mut Tape, &Bound<'_>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params);
    let root = loss(&mut tape, &bound)?;
    let value = tape.value(root);
    if value.len() != 1 {
        return Err(Error::Shape {
            op: "value_and_grad",
            left: value.shape().to_vec(),
            right: vec![],
        });
    }
    let value = value.item();
    let mut grads = tape.backward(root)?;
    let mut out = params.zeros_like();
    for (i, &v) in bound.vars.iter().enumerate() {
        if let Some(g) = grads.take(v) {
            out.tensors[i] = g;
        }
    }
    Ok((value, out))
}

/// Forward-only evaluation of a scalar loss.
pub fn evaluate<F>(loss: F, params: &ParamSet) -> Result<f64>
where
    F: FnOnce(&mut Tape, &Bound<'_>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, params);
    let root = loss(&mut tape, &bound)?;
    Ok(tape.value(root).item())
}
