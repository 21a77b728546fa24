//! Ordered, name-indexed collection of every learnable parameter.

use std::collections::HashMap;

use uxnet_core::{Element, Param, Rng, Tensor};

use crate::{ModelError, Result};

/// Owns the canonical list of parameters in construction order. Names are
/// hierarchical (`stage1.block0.dwc.weight`) and must be unique; checkpoint
/// manifests and optimizer state both follow this order.
pub struct ParamRegistry<T: Element> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> Default for ParamRegistry<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamRegistry<T> {
    pub fn new() -> Self {
        ParamRegistry { params: Vec::new(), index: HashMap::new() }
    }

    /// Creates, registers, and returns a parameter. Rejects duplicate names.
    pub fn create(&mut self, name: &str, value: Tensor<T>) -> Result<Param<T>> {
        if self.index.contains_key(name) {
            return Err(ModelError::Registry(format!("duplicate parameter name {name:?}")));
        }
        let p = Param::new(name, value);
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(p.clone());
        Ok(p)
    }

    /// Convenience: truncated-normal weight initialization (std 0.02).
    pub fn create_weight(&mut self, name: &str, shape: Vec<usize>, rng: &mut Rng) -> Result<Param<T>> {
        self.create(name, Tensor::trunc_normal(shape, 0.02, rng))
    }

    /// Convenience: zero-filled tensor (biases, LN/IN beta).
    pub fn create_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<Param<T>> {
        self.create(name, Tensor::zeros(shape))
    }

    /// Convenience: one-filled tensor (LN/IN gamma).
    pub fn create_ones(&mut self, name: &str, shape: Vec<usize>) -> Result<Param<T>> {
        self.create(name, Tensor::full(shape, T::ONE))
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    /// Parameters in registration order.
    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn total_numel(&self) -> u64 {
        self.params.iter().map(|p| p.numel() as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registers_in_order_and_rejects_duplicates() {
        let mut reg = ParamRegistry::<f32>::new();
        reg.create("a.weight", Tensor::zeros(vec![2, 3])).unwrap();
        reg.create("a.bias", Tensor::zeros(vec![3])).unwrap();
        assert!(reg.create("a.weight", Tensor::zeros(vec![1])).is_err());
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.total_numel(), 9);
        assert_eq!(reg.params()[0].name(), "a.weight");
        assert!(reg.get("a.bias").is_some());
        assert!(reg.get("missing").is_none());
    }
}
