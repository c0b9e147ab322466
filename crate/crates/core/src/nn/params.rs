use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerKind, LayerSpec, NnError, Result, Scalar, Shape, Tensor};

/// Named parameter tensors of one network plus a version counter that is
/// bumped on every in-place update.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    version: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut names = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, t) in entries {
            if names.contains(&name) {
                return Err(NnError::Config(format!("duplicate parameter name {name}")));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            names,
            tensors,
            version: 0,
        })
    }

    pub fn empty() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            version: 0,
        }
    }

    pub(crate) fn push(&mut self, name: String, t: Tensor<T>) -> Result<()> {
        if self.names.contains(&name) {
            return Err(NnError::Config(format!("duplicate parameter name {name}")));
        }
        self.names.push(name);
        self.tensors.push(t);
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect(),
            version: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    /// Mutable access; callers that change values should [`bump_version`](Self::bump_version).
    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.tensors.len() != other.tensors.len()
            || self
                .tensors
                .iter()
                .zip(&other.tensors)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(NnError::Shape("parameter stores are not aligned".into()));
        }
        Ok(())
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_aligned(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Overwrites values from `other`, keeping this store's version history.
    pub fn copy_from(&mut self, other: &Self) -> Result<()> {
        self.check_aligned(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().copy_from_slice(b.data());
        }
        self.version += 1;
        Ok(())
    }

    pub fn flat_values(&self) -> Vec<T> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            version: self.version,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data().iter().all(|v| v.is_finite()))
    }
}

/// Fan-in and fan-out of a parametrised layer.
pub(crate) fn fans(spec: &LayerSpec, input: Shape) -> Option<(usize, usize)> {
    match (spec.kind, input) {
        (LayerKind::Dense { outputs }, Shape::Flat(n)) => Some((n, outputs)),
        (
            LayerKind::Conv2d {
                out_channels,
                kernel,
                ..
            },
            Shape::Image { channels, .. },
        ) => Some((channels * kernel * kernel, out_channels * kernel * kernel)),
        _ => None,
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
///
/// Dense weights are stored `[fan_in, outputs]`, conv kernels
/// `[out_channels, in_channels, k, k]`. Layers without parameters yield an
/// empty store.
pub fn glorot_init<T: Scalar>(spec: &LayerSpec, input: Shape, seed: u64) -> Result<ParamStore<T>> {
    spec.output_shape(input)?;
    let Some((fan_in, fan_out)) = fans(spec, input) else {
        return Ok(ParamStore::empty());
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w_shape, b_len) = match (spec.kind, input) {
        (LayerKind::Dense { outputs }, Shape::Flat(n)) => (vec![n, outputs], outputs),
        (
            LayerKind::Conv2d {
                out_channels,
                kernel,
                ..
            },
            Shape::Image { channels, .. },
        ) => (vec![out_channels, channels, kernel, kernel], out_channels),
        _ => unreachable!("fans() returned Some"),
    };
    let n: usize = w_shape.iter().product();
    let w: Vec<T> = (0..n)
        .map(|_| T::of(rng.random_range(-limit..limit)))
        .collect();
    ParamStore::new(vec![
        ("w".to_string(), Tensor::new(w_shape, w)?),
        ("b".to_string(), Tensor::zeros(vec![b_len])),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn glorot_is_seeded_and_bounded() {
        let spec = LayerSpec::dense(30, Activation::Relu);
        let a: ParamStore<f32> = glorot_init(&spec, Shape::Flat(20), 3).unwrap();
        let b: ParamStore<f32> = glorot_init(&spec, Shape::Flat(20), 3).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f32 / 50.0).sqrt();
        assert!(a.get("w").unwrap().data().iter().all(|v| v.abs() <= limit));
        assert!(a.get("b").unwrap().data().iter().all(|&v| v == 0.0));
        let c: ParamStore<f32> = glorot_init(&spec, Shape::Flat(20), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_variance_matches_uniform_moments() {
        // Var(U(-l, l)) = l²/3 = 2 / (fan_in + fan_out)
        let spec = LayerSpec::dense(250, Activation::Linear);
        let p: ParamStore<f64> = glorot_init(&spec, Shape::Flat(400), 11).unwrap();
        let w = p.get("w").unwrap().data();
        assert_eq!(w.len(), 100_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 650.0;
        assert!((var - expected).abs() / expected < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn conv_kernel_layout() {
        let spec = LayerSpec::conv2d(8, 5, 2, Activation::Relu);
        let p: ParamStore<f32> = glorot_init(&spec, Shape::image(3, 16, 16), 0).unwrap();
        assert_eq!(p.get("w").unwrap().shape(), &[8, 3, 5, 5]);
        assert_eq!(p.get("b").unwrap().shape(), &[8]);
        let f: ParamStore<f32> = glorot_init(&LayerSpec::flatten(), Shape::image(3, 4, 4), 0).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn duplicate_names_rejected() {
        let t = Tensor::<f32>::zeros(vec![1]);
        assert!(ParamStore::new(vec![("a".into(), t.clone()), ("a".into(), t)]).is_err());
    }
}
