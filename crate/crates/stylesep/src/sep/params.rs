//! Named parameter registry shared by the separation and clue networks.
//!
//! Initialization draws from a stream keyed by (seed, parameter name), so
//! a parameter's initial values depend only on its name and shape — ablation
//! arms built from the same seed start identical wherever shapes agree.

use std::collections::HashMap;

use rand::Rng;

use crate::numerics::{Graph, NodeId, NumericsError, Parameter, Tensor};
use crate::seeding::stream_rng;

#[derive(Clone)]
pub struct ParamSet {
    items: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet { items: Vec::new(), index: HashMap::new() }
    }

    /// Register a parameter initialized uniformly in +-sqrt(1/fan_in).
    pub fn add(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) {
        assert!(
            !self.index.contains_key(name),
            "parameter {} registered twice (independence contract)",
            name
        );
        let mut rng = stream_rng(seed, &["param", name]);
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        let p = Parameter::new(name, Tensor::new(shape.to_vec(), data).expect("init shape"));
        self.index.insert(name.to_string(), self.items.len());
        self.items.push(p);
    }

    pub fn get(&self, name: &str) -> &Parameter {
        &self.items[self.index[name]]
    }

    pub fn try_get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.items[i])
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Parameter {
        let i = self.index[name];
        &mut self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.items.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.items.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.items {
            p.zero_grad();
        }
    }

    /// Insert every parameter into a fresh graph as a gradient-requiring leaf.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        let mut ids = HashMap::with_capacity(self.items.len());
        let mut order = Vec::with_capacity(self.items.len());
        for p in &self.items {
            let id = g.leaf(p.value.clone(), true);
            ids.insert(p.name.clone(), id);
            order.push(id);
        }
        Binding { ids, order }
    }

    /// Add `scale` times the graph gradients into each parameter's grad
    /// buffer. Parameters absent from the backward result contribute zero.
    pub fn accumulate_grads(
        &mut self,
        binding: &Binding,
        grads: &[Option<Tensor>],
        scale: f64,
    ) -> Result<(), NumericsError> {
        for (i, p) in self.items.iter_mut().enumerate() {
            let id = binding.order[i];
            if let Some(Some(gr)) = grads.get(id) {
                gr.assert_finite("parameter gradient")?;
                for (dst, &src) in p.grad.data_mut().iter_mut().zip(gr.data()) {
                    *dst += scale * src;
                }
            }
        }
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// NodeIds of every bound parameter in one graph.
pub struct Binding {
    ids: HashMap<String, NodeId>,
    order: Vec<NodeId>,
}

impl Binding {
    pub fn id(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {} not bound", name))
    }
}
