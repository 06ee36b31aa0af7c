use rand::Rng;

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters, each paired with a gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        let grad = Tensor::zeros(value.shape());
        self.names.push(name);
        self.values.push(value);
        self.grads.push(grad);
        ParamId(self.values.len() - 1)
    }

    /// Registers a weight matrix drawn from `uniform(±1/sqrt(fan_in))`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        self.add(name, Tensor::uniform(shape, bound, rng))
    }

    /// Registers a weight drawn from `uniform(±sqrt(6/fan_in))`, which keeps
    /// activation variance constant through ReLU layers.
    pub fn add_he_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        self.add(name, Tensor::uniform(shape, bound, rng))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    /// Simultaneous read access to a value and write access to its gradient.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&Tensor<T>, &mut Tensor<T>) {
        (&self.values[id.0], &mut self.grads[id.0])
    }

    /// All values (shared) alongside all gradients (mutable), indexed by
    /// [`ParamId::index`].
    pub fn parts_mut(&mut self) -> (&[Tensor<T>], &mut [Tensor<T>]) {
        (&self.values, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Overwrites all values with those of `other` (same layout required).
    pub fn copy_values_from(&mut self, other: &Self) -> Result<()> {
        if self.names != other.names {
            return Err(Error::InvalidArgument(
                "parameter layouts differ; cannot copy values".into(),
            ));
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.shape() != src.shape() {
                return Err(Error::shape("copy_values_from", dst.shape(), src.shape()));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// True when every value tensor matches `other` bit-for-bit.
    pub fn values_identical(&self, other: &Self) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.shape() == b.shape() && bits_equal(a.data(), b.data()))
    }

    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Sets every parameter value to zero.
    pub fn zero_values(&mut self) {
        for v in &mut self.values {
            v.fill(T::zero());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::all_finite)
    }

    /// Converts every value to another precision; gradients are reset.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (n, v) in self.named_values() {
            out.add(n, v.cast());
        }
        out
    }
}

fn bits_equal<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| x.to_f64_lossy().to_bits() == y.to_f64_lossy().to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grads_resets_exactly() {
        let mut ps = ParamSet::<f64>::new();
        let id = ps.add("w", Tensor::full(&[2, 2], 1.0));
        ps.grad_mut(id).fill(3.5);
        ps.zero_grads();
        assert!(ps.grad(id).data().iter().all(|&g| g == 0.0));
        assert_eq!(ps.grad(id).shape(), ps.value(id).shape());
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_rejected() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("w", Tensor::zeros(&[1]));
        ps.add("w", Tensor::zeros(&[1]));
    }

    #[test]
    fn copy_values_makes_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        let mut a = ParamSet::<f32>::new();
        a.add_uniform("w", &[3, 4], 3, &mut rng);
        let mut b = a.clone();
        b.value_mut(ParamId(0)).fill(0.0);
        assert!(!a.values_identical(&b));
        b.copy_values_from(&a).unwrap();
        assert!(a.values_identical(&b));
    }
}
