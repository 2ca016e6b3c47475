//! Parameter storage: an ordered name → tensor map whose layout comes from
//! `param_schema`, so iteration order is identical for initialization,
//! optimization, and serialization.

use indexmap::IndexMap;

use super::config::{param_schema, ModelConfig, ParamKind};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug)]
pub struct ParamStore<E: Element> {
    map: IndexMap<String, Tensor<E>>,
}

impl<E: Element> ParamStore<E> {
    /// Fan-in–scaled uniform weights, zero biases, drawn in schema order
    /// from a single seeded stream — bit-identical for equal (config, seed).
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = Rng::seed_from_u64(seed);
        let mut map = IndexMap::new();
        for spec in param_schema(cfg)? {
            let t = match spec.kind {
                ParamKind::Bias => Tensor::zeros(spec.shape).requiring_grad(),
                _ => {
                    let bound = 1.0 / (spec.fan_in() as f64).sqrt();
                    Tensor::uniform(spec.shape, -bound, bound, &mut rng).requiring_grad()
                }
            };
            map.insert(spec.name, t);
        }
        Ok(ParamStore { map })
    }

    /// Build from external data (checkpoint payloads): `source` is called
    /// once per schema entry, in order.
    pub fn from_schema<F>(cfg: &ModelConfig, mut source: F) -> Result<Self>
    where
        F: FnMut(&str, crate::tensor::Shape) -> Result<Vec<E>>,
    {
        let mut map = IndexMap::new();
        for spec in param_schema(cfg)? {
            let data = source(&spec.name, spec.shape)?;
            map.insert(
                spec.name,
                Tensor::from_vec(spec.shape, data)?.requiring_grad(),
            );
        }
        Ok(ParamStore { map })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<E>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn param_count(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    /// Replace a parameter with updated values (optimizer step). The new
    /// tensor keeps the shape and stays gradient-tracked.
    pub fn update(&mut self, name: &str, data: Vec<E>) -> Result<()> {
        let old = self.get(name)?;
        if data.len() != old.numel() {
            return Err(Error::invalid(
                "param update",
                format!("{name}: {} values for {} slots", data.len(), old.numel()),
            ));
        }
        let shape = old.shape();
        self.map
            .insert(name.to_string(), Tensor::from_vec(shape, data)?.requiring_grad());
        Ok(())
    }

    /// Drop accumulated gradients on every parameter.
    pub fn zero_grads(&self) {
        for t in self.map.values() {
            t.zero_grad();
        }
    }

    /// Cast every parameter (e.g. for running double-precision checks on an
    /// f32-trained model).
    pub fn cast<F: Element>(&self) -> ParamStore<F> {
        ParamStore {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), v.cast::<F>().requiring_grad()))
                .collect(),
        }
    }
}
