use super::{NnError, ParamStore, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// First and second moment estimates for one parameter store.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: ParamStore<T>,
    v: ParamStore<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step; bumps the parameter version.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) -> Result<()> {
        params.check_aligned(grads)?;
        params.check_aligned(&self.m)?;
        if !grads.all_finite() {
            return Err(NnError::Shape("non-finite gradient".into()));
        }
        self.t += 1;
        let c = self.config;
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one = T::one();
        let bc1 = 1.0 - c.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let step = T::of(c.lr * bc2.sqrt() / bc1);
        let eps = T::of(c.eps * bc2.sqrt());
        let tensors = params.tensors_mut().iter_mut();
        for (((p, g), m), v) in tensors
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= step * *m / (v.sqrt() + eps);
            }
        }
        params.bump_version();
        Ok(())
    }
}

/// `target ← tau·source + (1 − tau)·target`; bumps the target version.
pub fn soft_update<T: Scalar>(target: &mut ParamStore<T>, source: &ParamStore<T>, tau: f64) -> Result<()> {
    target.check_aligned(source)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(NnError::Config(format!("tau must be in [0, 1], got {tau}")));
    }
    let t = T::of(tau);
    let keep = T::one() - t;
    for (a, b) in target.tensors_mut().iter_mut().zip(source.tensors()) {
        for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
            *x = t * y + keep * *x;
        }
    }
    target.bump_version();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn store(v: Vec<f64>) -> ParamStore<f64> {
        ParamStore::new(vec![("x".into(), Tensor::new(vec![v.len()], v).unwrap())]).unwrap()
    }

    #[test]
    fn first_adam_step_moves_by_lr_times_sign() {
        // after one step m̂ = g and v̂ = g², so the update is lr·g/(|g|+eps)
        let mut p = store(vec![1.0, -1.0, 0.5]);
        let g = store(vec![0.3, -2.0, 0.0]);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &p);
        adam.step(&mut p, &g).unwrap();
        let got = p.tensors()[0].data();
        assert!((got[0] - 0.9).abs() < 1e-6);
        assert!((got[1] + 0.9).abs() < 1e-6);
        assert_eq!(got[2], 0.5);
        assert_eq!(p.version(), 1);
    }

    #[test]
    fn adam_matches_textbook_recursion() {
        let cfg = AdamConfig::with_lr(0.01);
        let mut p = store(vec![2.0]);
        let mut adam = AdamState::new(cfg, &p);
        let (mut x, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for t in 1..=20 {
            let g = 2.0 * x; // d/dx x²
            adam.step(&mut p, &store(vec![g])).unwrap();
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let mh = m / (1.0 - cfg.beta1.powi(t));
            let vh = v / (1.0 - cfg.beta2.powi(t));
            x -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            assert!((p.tensors()[0].data()[0] - x).abs() < 1e-9);
        }
    }

    #[test]
    fn adam_rejects_nan_gradient() {
        let mut p = store(vec![1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        assert!(adam.step(&mut p, &store(vec![f64::NAN])).is_err());
        assert_eq!(p.tensors()[0].data()[0], 1.0);
    }

    #[test]
    fn soft_update_contracts_distance() {
        let mut target = store(vec![0.0, 10.0]);
        let source = store(vec![1.0, 0.0]);
        let before = 1.0f64 + 100.0;
        soft_update(&mut target, &source, 0.1).unwrap();
        let d: f64 = target.tensors()[0]
            .data()
            .iter()
            .zip(source.tensors()[0].data())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert!((d - 0.81 * before).abs() < 1e-9);
        soft_update(&mut target, &source, 1.0).unwrap();
        assert_eq!(target.tensors()[0].data(), source.tensors()[0].data());
        assert!(soft_update(&mut target, &source, 1.5).is_err());
    }
}
