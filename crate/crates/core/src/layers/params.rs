use std::collections::HashMap;

use rand::Rng;

use crate::autograd::{BnMode, Float, Gradients, Tape, Tensor, Var};
use crate::error::{contract_err, Result};

/// Learning-rate group: the encoder trains at a tenth of the head rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LrGroup {
    Encoder,
    Head,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Trainable(LrGroup),
    /// BatchNorm running statistic, saved with the weights but never trained.
    RunningStat,
}

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub role: Role,
}

impl<T> Parameter<T> {
    pub fn lr_group(&self) -> Option<LrGroup> {
        match self.role {
            Role::Trainable(g) => Some(g),
            Role::RunningStat => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// All named tensors of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>, role: Role) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return contract_err(format!("duplicate parameter name {:?}", name));
        }
        self.by_name.insert(name.clone(), self.entries.len());
        self.entries.push(Parameter { name, tensor, role });
        Ok(ParamId(self.entries.len() - 1))
    }

    /// Adds a tensor of uniform draws in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, group: LrGroup, rng: &mut impl Rng) -> Result<ParamId> {
        let n = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_f64(shape, &data)?, Role::Trainable(group))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, shape: &[usize], value: f64, role: Role) -> Result<ParamId> {
        self.add(name, Tensor::full(shape, T::from_f64(value))?, role)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.entries[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].tensor
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.iter().filter(|(_, p)| matches!(p.role, Role::Trainable(_)))
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.trainable().map(|(_, p)| p.tensor.len()).sum()
    }

    /// Same store converted to another precision.
    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|p| Parameter { name: p.name.clone(), tensor: p.tensor.cast(), role: p.role })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        assert_ne!(a, b);
        if a.0 < b.0 {
            let (lo, hi) = self.entries.split_at_mut(b.0);
            (lo[a.0].tensor.data_mut(), hi[0].tensor.data_mut())
        } else {
            let (lo, hi) = self.entries.split_at_mut(a.0);
            (hi[0].tensor.data_mut(), lo[b.0].tensor.data_mut())
        }
    }
}

enum StoreAccess<'s, T> {
    Shared(&'s ParamStore<T>),
    Exclusive(&'s mut ParamStore<T>),
}

/// One forward pass: a fresh tape plus lazily bound parameter leaves.
///
/// Train-mode passes hold the store exclusively (BatchNorm running stats are
/// updated); eval-mode passes only read it and can share frozen weights.
pub struct Ctx<'s, T> {
    pub tape: Tape<T>,
    store: StoreAccess<'s, T>,
    bound: Vec<Option<Var>>,
    train: bool,
}

impl<'s, T: Float> Ctx<'s, T> {
    pub fn train(store: &'s mut ParamStore<T>) -> Self {
        let bound = vec![None; store.len()];
        Self { tape: Tape::new(), store: StoreAccess::Exclusive(store), bound, train: true }
    }

    pub fn eval(store: &'s ParamStore<T>) -> Self {
        let bound = vec![None; store.len()];
        Self { tape: Tape::new(), store: StoreAccess::Shared(store), bound, train: false }
    }

    /// Eval-mode pass that still holds the store exclusively.
    pub fn eval_mut(store: &'s mut ParamStore<T>) -> Self {
        let mut ctx = Self::train(store);
        ctx.train = false;
        ctx
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn store(&self) -> &ParamStore<T> {
        match &self.store {
            StoreAccess::Shared(s) => s,
            StoreAccess::Exclusive(s) => s,
        }
    }

    /// Tape leaf for a trainable parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let t = self.store().tensor(id).clone();
        let v = self.tape.param(t);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.tape.constant(t)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn batch_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId, mean: ParamId, var: ParamId, momentum: T, eps: T) -> Result<Var> {
        let g = self.param(gamma);
        let b = self.param(beta);
        let mode = match (&mut self.store, self.train) {
            (StoreAccess::Exclusive(s), true) => {
                let (running_mean, running_var) = s.pair_mut(mean, var);
                BnMode::Train { running_mean, running_var, momentum }
            }
            (StoreAccess::Shared(_), true) => return contract_err("train-mode pass needs exclusive parameter access"),
            (StoreAccess::Exclusive(s), false) => BnMode::Eval { running_mean: s.tensor(mean).data(), running_var: s.tensor(var).data() },
            (StoreAccess::Shared(s), false) => BnMode::Eval { running_mean: s.tensor(mean).data(), running_var: s.tensor(var).data() },
        };
        self.tape.batch_norm(x, g, b, mode, eps)
    }

    /// Gradients of every parameter that took part in the pass.
    pub fn param_grads(&self, grads: &mut Gradients<T>) -> Vec<(ParamId, Vec<T>)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.and_then(|v| grads.take(v)).map(|g| (ParamId(i), g)))
            .collect()
    }

    pub fn bound_var(&self, id: ParamId) -> Option<Var> {
        self.bound[id.0]
    }
}
