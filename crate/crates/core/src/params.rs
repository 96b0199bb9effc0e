//! Named parameter storage and the per-pass binding of parameters onto a tape.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Real, Rng, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of parameter tensors.
///
/// Names are dotted paths (`mind1.lstm.fwd.w_ih`). Insertion order is the
/// serialization order and never changes after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    lookup: HashMap<String, usize>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Stream key for a parameter name, so initial values depend only on
/// `(seed, name)` and not on construction order.
fn name_stream(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter {name}");
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.names.len() - 1)
    }

    /// Adds a tensor with entries uniform in `±bound`, drawn from a stream keyed by `name`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64, seed: u64) -> ParamId {
        let mut rng = Rng::with_stream(seed, name_stream(name));
        self.add(name, Tensor::uniform(shape.to_vec(), bound, &mut rng))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            lookup: self.lookup.clone(),
        }
    }

    /// Overwrites every parameter whose name starts with `to` by its `from` counterpart.
    pub fn copy_prefix(&mut self, from: &str, to: &str) -> Result<usize> {
        let mut copied = 0;
        for i in 0..self.names.len() {
            if let Some(rest) = self.names[i].strip_prefix(to) {
                let src = format!("{from}{rest}");
                let j = *self
                    .lookup
                    .get(&src)
                    .ok_or_else(|| Error::Incompatible(format!("{} has no counterpart {src}", self.names[i])))?;
                if self.tensors[j].shape() != self.tensors[i].shape() {
                    return Err(Error::Incompatible(format!(
                        "{src} and {} differ in shape",
                        self.names[i]
                    )));
                }
                self.tensors[i] = self.tensors[j].clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Replaces all values from another store with identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<F>) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Incompatible("parameter names differ".into()));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::Incompatible("parameter shapes differ".into()));
            }
            dst.clone_from(src);
        }
        Ok(())
    }
}

/// One forward pass: the tape, lazily bound parameter leaves, and the pass mode.
///
/// A parameter used several times (the CNN trunk over every frame) is bound
/// once, so its gradient accumulates over all uses.
pub struct Ctx<'a, F: Real> {
    pub tape: &'a mut Tape<F>,
    store: &'a ParamStore<F>,
    bound: Vec<Option<Var>>,
    training: bool,
    track: bool,
    rng: Rng,
}

impl<'a, F: Real> Ctx<'a, F> {
    /// `training` turns dropout on; `rng` drives the dropout masks.
    pub fn new(tape: &'a mut Tape<F>, store: &'a ParamStore<F>, training: bool, rng: Rng) -> Self {
        Ctx {
            tape,
            bound: vec![None; store.len()],
            store,
            training,
            track: true,
            rng,
        }
    }

    /// Parameters become constants; no gradient is kept. Used for evaluation.
    pub fn frozen(mut self) -> Self {
        self.track = false;
        self
    }

    pub fn training(&self) -> bool {
        self.training
    }

    /// Uses an existing tape variable for `id` instead of binding the stored value.
    pub fn bind(&mut self, id: ParamId, v: Var) {
        self.bound[id.0] = Some(v);
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let t = self.store.get(id).clone();
        let v = if self.track {
            self.tape.leaf(t)
        } else {
            self.tape.constant(t)
        };
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.tape.constant(t)
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        self.tape.dropout(x, p, self.training, &mut self.rng)
    }

    /// Gradient per parameter after `tape.backward`; `None` where no path reached it.
    pub fn param_grads(&self) -> Vec<Option<Tensor<F>>> {
        self.bound.iter().map(|b| b.and_then(|v| self.tape.grad(v))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_depends_on_name_not_order() {
        let mut a = ParamStore::<f32>::new();
        a.add_uniform("x", &[4], 1.0, 9);
        a.add_uniform("y", &[4], 1.0, 9);
        let mut b = ParamStore::<f32>::new();
        b.add_uniform("y", &[4], 1.0, 9);
        b.add_uniform("x", &[4], 1.0, 9);
        assert_eq!(a.get(a.id("x").unwrap()), b.get(b.id("x").unwrap()));
        assert_ne!(a.get(a.id("x").unwrap()), a.get(a.id("y").unwrap()));
    }

    #[test]
    fn copy_prefix_clones_matching_suffixes() {
        let mut s = ParamStore::<f32>::new();
        s.add_uniform("m1.w", &[3], 1.0, 1);
        s.add_uniform("m2.w", &[3], 1.0, 1);
        assert_eq!(s.copy_prefix("m1.", "m2.").unwrap(), 1);
        assert_eq!(s.get(ParamId(0)), s.get(ParamId(1)));
    }

    #[test]
    fn shared_parameter_accumulates_gradient() {
        let mut s = ParamStore::<f64>::new();
        let w = s.add("w", Tensor::new([1], vec![3.0]).unwrap());
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &s, false, Rng::new(0));
        let a = ctx.param(w);
        let b = ctx.param(w);
        let y = ctx.tape.mul(a, b).unwrap();
        let l = ctx.tape.sum(y).unwrap();
        ctx.tape.backward(l).unwrap();
        assert_eq!(ctx.param_grads()[0].as_ref().unwrap().data(), &[6.0]);
    }
}
