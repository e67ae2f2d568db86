//! Named parameter collections and their binding into a [`Graph`].

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Parameters keyed by name, iterated in lexicographic order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::arg(format!("missing parameter {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::arg(format!("missing parameter {name:?}")))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Copies all values into one flat vector, in name order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for t in self.tensors.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::shape(
                "assign_flat",
                &[self.num_scalars()],
                &[flat.len()],
            ));
        }
        let mut offset = 0;
        for t in self.tensors.values_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Adds every parameter to `graph`, as leaves when `trainable` and as
    /// constants otherwise.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    graph.leaf(t.clone())
                } else {
                    graph.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

/// Parameter handles on one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::arg(format!("missing parameter {name:?}")))
    }

    /// Gradient of every bound parameter, zeros where unreached.
    pub fn gradients(&self, grads: &Gradients) -> GradSet {
        GradSet {
            tensors: self
                .vars
                .iter()
                .map(|(name, &v)| (name.clone(), grads.get(v)))
                .collect(),
        }
    }
}

/// Gradients keyed like a [`ParamStore`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradSet {
    pub tensors: BTreeMap<String, Tensor>,
}

impl GradSet {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            tensors: params
                .iter()
                .map(|(k, t)| (k.to_string(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &GradSet, scale: f64) -> Result<()> {
        for (name, g) in &other.tensors {
            let acc = self
                .tensors
                .get_mut(name)
                .ok_or_else(|| Error::arg(format!("unexpected gradient {name:?}")))?;
            if acc.shape() != g.shape() {
                return Err(Error::shape("add_scaled", acc.shape(), g.shape()));
            }
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .map(Tensor::sq_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .values()
            .flat_map(|t| t.data().to_vec())
            .collect()
    }
}

/// Glorot-uniform matrix of shape `rows × cols`.
pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], limit, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let mut p = ParamStore::new();
        p.insert("b", Tensor::vector(&[1.0, 2.0]));
        p.insert("a", Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap());
        assert_eq!(p.flatten(), vec![3.0, 4.0, 1.0, 2.0]);
        let mut q = p.clone();
        q.assign_flat(&[0.0; 4]).unwrap();
        q.assign_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert!(q.assign_flat(&[0.0; 3]).is_err());
    }

    #[test]
    fn glorot_within_limit() {
        let mut rng = rand::rng();
        let t = glorot(4, 8, &mut rng);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(t.data().iter().all(|x| x.abs() <= limit));
    }
}
