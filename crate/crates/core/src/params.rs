//! Named parameter registry and its binding into a tape.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Tape, Tensor, Var};
use crate::rng::{uniform_tensor, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in ±1/√fan_in, with fan_in the first extent.
    FanIn,
    Zero,
    Uniform(f64),
}

/// Parameters in registration order. Names are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn init(&mut self, rng: &mut SeededRng, name: &str, shape: &[usize], init: Init) -> ParamId {
        let t = match init {
            Init::Zero => Tensor::zeros(shape),
            Init::FanIn => {
                let a = 1.0 / libm::sqrt(shape[0] as f64);
                uniform_tensor(rng, shape, -a, a)
            }
            Init::Uniform(a) => uniform_tensor(rng, shape, -a, a),
        };
        self.register(name, t, true)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.entries[id.0].trainable = trainable;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Replaces every value from `(name, tensor)` pairs that must match this
    /// store's names and shapes exactly, in order.
    pub fn load_values(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(Error::Validation(format!(
                "expected {} parameters, found {}",
                self.entries.len(),
                values.len()
            )));
        }
        for (entry, (name, t)) in self.entries.iter().zip(&values) {
            if &entry.name != name || entry.value.shape() != t.shape() {
                return Err(Error::Validation(format!(
                    "parameter {name} {:?} does not match {} {:?}",
                    t.shape(),
                    entry.name,
                    entry.value.shape()
                )));
            }
        }
        for (entry, (_, t)) in self.entries.iter_mut().zip(values) {
            entry.value = t;
        }
        Ok(())
    }
}

/// Per-parameter gradients, indexed like the store; `None` for unused or frozen entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub grads: Vec<Option<Tensor>>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        ParamGrads {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Adds `other` into `self` component-wise.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        let s: f64 = self
            .grads
            .iter()
            .flatten()
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum();
        libm::sqrt(s)
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.grads.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// A tape plus lazily bound parameters. Trainable parameters become leaves
/// when gradients are enabled; everything else is a constant.
pub struct Session<'p> {
    pub tape: Tape,
    store: &'p ParamStore,
    bound: Vec<Option<Var>>,
    grad: bool,
}

impl<'p> Session<'p> {
    pub fn training(store: &'p ParamStore) -> Self {
        Self::with_grad(store, true)
    }

    pub fn inference(store: &'p ParamStore) -> Self {
        Self::with_grad(store, false)
    }

    fn with_grad(store: &'p ParamStore, grad: bool) -> Self {
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            grad,
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let entry = &self.store.entries[id.0];
        let v = if self.grad && entry.trainable {
            self.tape.leaf(entry.value.clone())
        } else {
            self.tape.constant(entry.value.clone())
        };
        self.bound[id.0] = Some(v);
        v
    }

    /// Overrides a parameter's binding with an explicit variable (used by gradient checks).
    pub fn bind(&mut self, id: ParamId, v: Var) {
        self.bound[id.0] = Some(v);
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.tape.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    pub fn backward(&self, loss: Var) -> Result<ParamGrads> {
        let mut g: Gradients = self.tape.backward(loss)?;
        let grads = self
            .bound
            .iter()
            .map(|b| b.and_then(|v| if self.tape.requires_grad(v) { g.take(v) } else { None }))
            .collect();
        Ok(ParamGrads { grads })
    }
}

/// `y = x·W (+ b)`, with `W` stored `[in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, inputs: usize, outputs: usize, bias: bool, init: Init) -> Self {
        let w = store.init(rng, &format!("{name}.w"), &[inputs, outputs], init);
        let b = bias.then(|| store.init(rng, &format!("{name}.b"), &[1, outputs], Init::Zero));
        Linear { w, b, inputs, outputs }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let w = s.param(self.w);
        let y = s.tape.matmul(x, w)?;
        match self.b {
            None => Ok(y),
            Some(b) => {
                let b = s.param(b);
                let rows = s.tape.shape(y)[0];
                let bb = if rows == 1 { b } else { s.tape.repeat_rows(b, rows)? };
                s.tape.add(y, bb)
            }
        }
    }
}
