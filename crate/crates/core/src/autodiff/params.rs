use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Gradient buffers keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    buffers: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.buffers.get(name).map(|b| b.as_slice())
    }

    pub(crate) fn buffer_mut(&mut self, name: &str, len: usize) -> &mut Vec<f64> {
        self.buffers
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; len])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Adds `other` into `self`, buffer by buffer.
    pub fn merge(&mut self, other: &Gradients) {
        for (name, src) in &other.buffers {
            let dst = self.buffer_mut(name, src.len());
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.buffers
            .values()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.buffers.values_mut() {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn clear(&mut self) {
        self.buffers.clear();
    }
}

/// Named model parameters with their accumulated gradients.
///
/// Values are reference counted so a forward graph can hold them without
/// copying; the optimizer clones on write if a graph is still alive.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    values: BTreeMap<String, Arc<Tensor>>,
    grads: Gradients,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.values.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "parameter `{name}` already exists"
            )));
        }
        self.values.insert(name.to_string(), Arc::new(value));
        Ok(())
    }

    /// Inserts a parameter drawn uniformly from `[-scale, scale]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<()> {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-scale..=scale)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    /// Replaces the value of an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .values
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(
                "param-set",
                format!(
                    "`{name}` has shape {:?}, new value {:?}",
                    slot.shape(),
                    value.shape()
                ),
            ));
        }
        *slot = Arc::new(value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.values
            .get(name)
            .map(|t| t.as_ref())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))
    }

    pub(crate) fn shared(&self, name: &str) -> Result<Arc<Tensor>> {
        self.values
            .get(name)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))
    }

    /// Mutable access for in-place edits such as loading pretrained rows.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.values
            .get_mut(name)
            .map(Arc::make_mut)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|k| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.values.values().map(|t| t.len()).sum()
    }

    /// Squared L2 norm over every parameter.
    pub fn l2_squared(&self) -> f64 {
        self.values.values().map(|t| t.sum_squares()).sum()
    }

    pub fn grads(&self) -> &Gradients {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Gradients {
        &mut self.grads
    }

    /// Gradient of `name`, zeros when nothing has been accumulated.
    pub fn grad(&self, name: &str) -> Result<Vec<f64>> {
        let len = self.get(name)?.len();
        Ok(self
            .grads
            .get(name)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; len]))
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
    }

    /// Adds `∂(coef · ‖Θ‖²)/∂Θ = 2·coef·Θ` to every gradient buffer.
    pub fn add_l2_grad(&mut self, coef: f64) {
        if coef == 0.0 {
            return;
        }
        for (name, value) in &self.values {
            let buf = self.grads.buffer_mut(name, value.len());
            for (g, v) in buf.iter_mut().zip(value.data()) {
                *g += 2.0 * coef * v;
            }
        }
    }

    /// Plain gradient-descent update `θ ← θ − lr · g`.
    pub fn sgd_step(&mut self, lr: f64) {
        for (name, value) in self.values.iter_mut() {
            if let Some(g) = self.grads.get(name) {
                let t = Arc::make_mut(value);
                for (v, gv) in t.data_mut().iter_mut().zip(g) {
                    *v -= lr * gv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(store.insert("w", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn set_keeps_shape() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(store.set("w", Tensor::zeros(&[4])).is_err());
        assert!(store.set("w", Tensor::full(&[2, 2], 1.0)).is_ok());
        assert_eq!(store.l2_squared(), 4.0);
    }

    #[test]
    fn l2_grad_and_step() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0, -2.0])).unwrap();
        store.add_l2_grad(0.5);
        assert_eq!(store.grad("w").unwrap(), vec![1.0, -2.0]);
        store.sgd_step(0.1);
        assert_eq!(store.get("w").unwrap().data(), &[0.9, -1.8]);
    }
}
