use indexmap::IndexMap;

use super::{Matrix, SeededRng};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

/// Named trainable parameters with accumulating gradients, kept in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or replaces) a parameter with a zeroed gradient.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.entries.insert(name.into(), Param { value, grad });
    }

    /// Adds a `rows x cols` parameter drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut SeededRng,
    ) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.insert(name, rng.uniform_matrix(rows, cols, bound));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        self.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    /// Adds `grad` into the named parameter's gradient.
    pub fn accumulate(&mut self, name: &str, grad: &Matrix) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::Dimension {
                op: "accumulate",
                left: p.grad.shape(),
                right: grad.shape(),
            });
        }
        p.grad.add_assign(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    /// Keeps only the parameters whose names start with one of `prefixes`.
    pub fn subset(&self, prefixes: &[&str]) -> ParamStore {
        let entries = self
            .entries
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        ParamStore { entries }
    }

    /// Copies values (not gradients) from `other` for every shared name.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (name, p) in self.entries.iter_mut() {
            if let Some(src) = other.entries.get(name) {
                p.value = src.value.clone();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_and_accumulation() {
        let mut s = ParamStore::new();
        s.insert("b", Matrix::zeros(1, 2));
        s.insert("a", Matrix::zeros(2, 1));
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["b", "a"]);

        let g = Matrix::row_vector(&[1.0, 2.0]);
        s.accumulate("b", &g).unwrap();
        s.accumulate("b", &g).unwrap();
        assert_eq!(s.get("b").unwrap().grad.data(), &[2.0, 4.0]);
        s.zero_grads();
        assert_eq!(s.get("b").unwrap().grad.data(), &[0.0, 0.0]);

        assert!(s.accumulate("a", &g).is_err());
        assert!(s.accumulate("missing", &g).is_err());
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut s = ParamStore::new();
        let mut rng = SeededRng::new(1);
        s.init_uniform("w", 20, 20, 16, &mut rng);
        assert!(s.value("w").unwrap().max_abs() <= 0.25);
    }
}
