//! Persistent trainable parameters, shared between tapes and the optimizer.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::scalar::Real;

struct ParamInner<S> {
    shape: Vec<usize>,
    values: Vec<S>,
    grad: Vec<S>,
}

/// A named-less trainable buffer. Clones share the same storage.
pub struct Param<S: Real> {
    inner: Rc<RefCell<ParamInner<S>>>,
}

impl<S: Real> Clone for Param<S> {
    fn clone(&self) -> Self {
        Param {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<S: Real> Param<S> {
    pub fn new(shape: &[usize], values: Vec<S>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(values.len(), n, "param: {} values for shape {:?}", values.len(), shape);
        Param {
            inner: Rc::new(RefCell::new(ParamInner {
                shape: shape.to_vec(),
                grad: vec![S::zero(); n],
                values,
            })),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self::new(shape, vec![S::zero(); n])
    }

    /// Uniform init over (-limit, +limit) with limit = sqrt(6/(fan_in+fan_out)).
    /// For a [rows, cols] weight, fan_out = rows and fan_in = cols; for a
    /// vector, fan_in = fan_out = len.
    pub fn uniform_init<R: Rng>(shape: &[usize], rng: &mut R) -> Self {
        let (fan_in, fan_out) = match shape {
            [n] => (*n, *n),
            [r, c] => (*c, *r),
            other => {
                let n: usize = other.iter().product();
                (n, n)
            }
        };
        let limit = S::of((6.0 / (fan_in + fan_out) as f64).sqrt());
        let dist = Uniform::new(-limit, limit).expect("uniform bounds");
        let n: usize = shape.iter().product();
        let values: Vec<S> = (0..n).map(|_| dist.sample(rng)).collect();
        Self::new(shape, values)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn values(&self) -> Vec<S> {
        self.inner.borrow().values.clone()
    }

    pub fn set_values(&self, values: Vec<S>) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(values.len(), inner.values.len());
        inner.values = values;
    }

    /// Nudge one coordinate; used by the finite-difference checker.
    pub fn perturb(&self, index: usize, delta: S) {
        self.inner.borrow_mut().values[index] += delta;
    }

    pub fn grad(&self) -> Vec<S> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        for g in self.inner.borrow_mut().grad.iter_mut() {
            *g = S::zero();
        }
    }

    pub(crate) fn accumulate_grad(&self, g: &[S]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(g.len(), inner.grad.len());
        for (acc, &gi) in inner.grad.iter_mut().zip(g) {
            *acc += gi;
        }
    }

    /// In-place update used by the optimizer.
    pub(crate) fn apply<F: FnMut(usize, S, S) -> S>(&self, mut f: F) {
        let mut inner = self.inner.borrow_mut();
        let grads: Vec<S> = inner.grad.clone();
        for (i, v) in inner.values.iter_mut().enumerate() {
            *v = f(i, *v, grads[i]);
        }
    }
}

/// Ordered collection of named parameters for one model. The BTreeMap order
/// makes iteration (and therefore training) deterministic.
pub struct ParamSet<S: Real> {
    map: BTreeMap<String, Param<S>>,
}

impl<S: Real> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param<S>) -> Param<S> {
        let name = name.into();
        assert!(
            self.map.insert(name.clone(), param.clone()).is_none(),
            "duplicate parameter name {name}"
        );
        param
    }

    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut R) -> Param<S> {
        self.insert(name, Param::uniform_init(shape, rng))
    }

    pub fn get(&self, name: &str) -> Option<&Param<S>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<S>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn zero_grad(&self) {
        for p in self.map.values() {
            p.zero_grad();
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.map.values().map(|p| p.numel()).sum()
    }
}
