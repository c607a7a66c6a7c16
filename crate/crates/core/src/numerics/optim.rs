use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::{Gradients, Graph, Var};
use super::Tensor;

/// A named trainable array with its freeze mask and Adam state.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    freeze_mask: Vec<bool>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    step_count: u64,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let n = value.len();
        Self {
            name: name.into(),
            value,
            grad: None,
            freeze_mask: vec![false; n],
            moment1: vec![0.0; n],
            moment2: vec![0.0; n],
            step_count: 0,
            trainable: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn freeze_mask(&self) -> &[bool] {
        &self.freeze_mask
    }

    pub fn set_freeze_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.value.len() {
            return Err(Error::shape(format!(
                "freeze mask for `{}` has {} entries, parameter has {}",
                self.name,
                mask.len(),
                self.value.len()
            )));
        }
        self.freeze_mask = mask;
        Ok(())
    }

    pub fn frozen_count(&self) -> usize {
        self.freeze_mask.iter().filter(|&&f| f).count()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.moment1, &self.moment2)
    }

    pub fn reset_optimizer_state(&mut self) {
        self.moment1.iter_mut().for_each(|m| *m = 0.0);
        self.moment2.iter_mut().for_each(|m| *m = 0.0);
        self.step_count = 0;
    }
}

/// Ordered collection of parameters with unique names.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, param: Parameter) -> Result<()> {
        if self.index.contains_key(param.name()) {
            return Err(Error::invalid(format!(
                "duplicate parameter name `{}`",
                param.name()
            )));
        }
        self.index.insert(param.name().to_string(), self.params.len());
        self.params.push(param);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Parameter> {
        self.position(name)
            .map(|i| &self.params[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter> {
        match self.position(name) {
            Some(i) => Ok(&mut self.params[i]),
            None => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn by_index(&self, i: usize) -> &Parameter {
        &self.params[i]
    }

    pub fn by_index_mut(&mut self, i: usize) -> &mut Parameter {
        &mut self.params[i]
    }

    pub fn element_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies every value into `graph` as a differentiable leaf.
    pub fn bind<'a>(&'a self, graph: &mut Graph) -> Binding<'a> {
        let vars = self
            .params
            .iter()
            .map(|p| graph.param(p.value.clone()))
            .collect();
        Binding { store: self, vars }
    }

    /// Replaces every gradient slot with the gradients of `binding`.
    pub fn store_grads(&mut self, binding_vars: &[Var], grads: &mut Gradients) {
        for (p, v) in self.params.iter_mut().zip(binding_vars) {
            p.grad = Some(grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.value.shape())));
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub fn reset_optimizer_state(&mut self) {
        self.params.iter_mut().for_each(Parameter::reset_optimizer_state);
    }

    /// Current values, in store order.
    pub fn values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn load_values(&mut self, values: &[Tensor]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameter arrays, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape(format!(
                    "`{}`: stored shape {:?}, loaded {:?}",
                    p.name,
                    p.value.shape(),
                    v.shape()
                )));
            }
            p.value = v.clone();
        }
        Ok(())
    }
}

/// Graph leaves for a [`ParamStore`], looked up by parameter name.
pub struct Binding<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl Binding<'_> {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.store
            .position(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn into_vars(self) -> Vec<Var> {
        self.vars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update with L2 weight decay folded into the
/// gradient. Masked elements are skipped entirely: no decay, no update, no
/// moment change.
pub fn adam_step(param: &mut Parameter, cfg: &AdamConfig) -> Result<()> {
    if !param.trainable {
        return Ok(());
    }
    let grad = param
        .grad
        .as_ref()
        .ok_or_else(|| Error::MissingGradient(param.name.clone()))?;
    if grad.shape() != param.value.shape() {
        return Err(Error::shape(format!(
            "gradient for `{}` has shape {:?}, value {:?}",
            param.name,
            grad.shape(),
            param.value.shape()
        )));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let values = param.value.data_mut();
    for (i, &g0) in grad.data().iter().enumerate() {
        if param.freeze_mask[i] {
            continue;
        }
        let g = g0 + cfg.weight_decay * values[i];
        let m = cfg.beta1 * param.moment1[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * param.moment2[i] + (1.0 - cfg.beta2) * g * g;
        param.moment1[i] = m;
        param.moment2[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    param.value.ensure_finite(&format!("adam update of `{}`", param.name))
}

impl ParamStore {
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for p in &mut self.params {
            adam_step(p, cfg)?;
        }
        Ok(())
    }
}
