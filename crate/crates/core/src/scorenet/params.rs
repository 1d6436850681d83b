//! Flat parameter storage with a named tensor registry.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub values: Vec<T>,
    pub tensors: Vec<TensorInfo>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            tensors: Vec::new(),
        }
    }

    /// Registers a zero-initialized tensor and returns its offset.
    pub fn register(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.values.len();
        let info = TensorInfo {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.values.resize(offset + info.len(), T::zero());
        self.tensors.push(info);
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Fails with the name of the first tensor holding a non-finite entry of `v`.
    pub fn check_finite(&self, v: &[T], what: &str) -> Result<()> {
        for t in &self.tensors {
            if v[t.range()].iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{what} of tensor `{}`", t.name)));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            tensors: self.tensors.clone(),
        }
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}
