//! Lock-free shared parameters for Hogwild-style training.
//!
//! Values are `f32` bit patterns in `AtomicU32` cells accessed with relaxed
//! ordering. Concurrent writers may interleave at element granularity, which
//! is the intended semantics; no element is ever torn.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use super::{AdamConfig, NnError, ParamStore, Result, Tensor};

#[derive(Debug)]
pub struct RelaxedParams {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    cells: Vec<Vec<AtomicU32>>,
    version: AtomicU64,
}

fn atomic_vec(values: &[f32]) -> Vec<AtomicU32> {
    values.iter().map(|v| AtomicU32::new(v.to_bits())).collect()
}

impl RelaxedParams {
    pub fn from_store(store: &ParamStore<f32>) -> Self {
        Self {
            names: store.names().to_vec(),
            shapes: store.tensors().iter().map(|t| t.shape().to_vec()).collect(),
            cells: store.tensors().iter().map(|t| atomic_vec(t.data())).collect(),
            version: AtomicU64::new(0),
        }
    }

    /// Number of completed update passes.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Relaxed)
    }

    pub fn bump_version(&self) {
        self.version.fetch_add(1, Ordering::Relaxed);
    }

    /// Copies the current (possibly mid-update) values into `out`.
    pub fn snapshot_into(&self, out: &mut ParamStore<f32>) -> Result<()> {
        self.check(out)?;
        for (t, cells) in out.tensors_mut().iter_mut().zip(&self.cells) {
            for (v, c) in t.data_mut().iter_mut().zip(cells) {
                *v = f32::from_bits(c.load(Ordering::Relaxed));
            }
        }
        out.bump_version();
        Ok(())
    }

    pub fn snapshot(&self) -> ParamStore<f32> {
        let entries = self
            .names
            .iter()
            .zip(&self.shapes)
            .zip(&self.cells)
            .map(|((n, s), cells)| {
                let data = cells
                    .iter()
                    .map(|c| f32::from_bits(c.load(Ordering::Relaxed)))
                    .collect();
                (n.clone(), Tensor::new(s.clone(), data).expect("shape recorded at build"))
            })
            .collect();
        ParamStore::new(entries).expect("names unique at build")
    }

    fn check(&self, store: &ParamStore<f32>) -> Result<()> {
        if store.len() != self.shapes.len()
            || store
                .tensors()
                .iter()
                .zip(&self.shapes)
                .any(|(t, s)| t.shape() != s.as_slice())
        {
            return Err(NnError::Shape("store does not match shared parameters".into()));
        }
        Ok(())
    }

    /// `self ← tau·source + (1 − tau)·self`, element by element.
    pub fn soft_update_from(&self, source: &RelaxedParams, tau: f32) {
        let keep = 1.0 - tau;
        for (dst, src) in self.cells.iter().zip(&source.cells) {
            for (d, s) in dst.iter().zip(src) {
                let sv = f32::from_bits(s.load(Ordering::Relaxed));
                let dv = f32::from_bits(d.load(Ordering::Relaxed));
                d.store((tau * sv + keep * dv).to_bits(), Ordering::Relaxed);
            }
        }
        self.bump_version();
    }
}

/// Adam whose moments and step counter live in shared atomics.
#[derive(Debug)]
pub struct RelaxedAdam {
    config: AdamConfig,
    m: Vec<Vec<AtomicU32>>,
    v: Vec<Vec<AtomicU32>>,
    t: AtomicU64,
}

impl RelaxedAdam {
    pub fn new(config: AdamConfig, params: &RelaxedParams) -> Self {
        let zeros = |p: &RelaxedParams| {
            p.cells
                .iter()
                .map(|c| (0..c.len()).map(|_| AtomicU32::new(0)).collect())
                .collect()
        };
        Self {
            config,
            m: zeros(params),
            v: zeros(params),
            t: AtomicU64::new(0),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t.load(Ordering::Relaxed)
    }

    /// Applies one Adam step to the shared parameters without locking.
    pub fn step(&self, params: &RelaxedParams, grads: &ParamStore<f32>) -> Result<()> {
        params.check(grads)?;
        if !grads.all_finite() {
            return Err(NnError::Shape("non-finite gradient".into()));
        }
        let t = self.t.fetch_add(1, Ordering::Relaxed) + 1;
        let c = self.config;
        let exp = t.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - c.beta1.powi(exp);
        let bc2 = 1.0 - c.beta2.powi(exp);
        let step = (c.lr * bc2.sqrt() / bc1) as f32;
        let eps = (c.eps * bc2.sqrt()) as f32;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        for (((cells, g), m), v) in params
            .cells
            .iter()
            .zip(grads.tensors())
            .zip(&self.m)
            .zip(&self.v)
        {
            for (((p, &g), m), v) in cells.iter().zip(g.data()).zip(m).zip(v) {
                let mv = b1 * f32::from_bits(m.load(Ordering::Relaxed)) + (1.0 - b1) * g;
                let vv = b2 * f32::from_bits(v.load(Ordering::Relaxed)) + (1.0 - b2) * g * g;
                m.store(mv.to_bits(), Ordering::Relaxed);
                v.store(vv.to_bits(), Ordering::Relaxed);
                let pv = f32::from_bits(p.load(Ordering::Relaxed));
                p.store((pv - step * mv / (vv.sqrt() + eps)).to_bits(), Ordering::Relaxed);
            }
        }
        params.bump_version();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamState;

    fn store(v: Vec<f32>) -> ParamStore<f32> {
        ParamStore::new(vec![("x".into(), Tensor::new(vec![v.len()], v).unwrap())]).unwrap()
    }

    #[test]
    fn single_threaded_matches_plain_adam() {
        let init = store(vec![0.5, -1.5, 2.0]);
        let shared = RelaxedParams::from_store(&init);
        let radam = RelaxedAdam::new(AdamConfig::with_lr(0.01), &shared);
        let mut plain = init.clone();
        let mut adam = AdamState::new(AdamConfig::with_lr(0.01), &plain);
        for i in 0..10 {
            let g = store(vec![0.1 * i as f32, -0.3, 1.0]);
            radam.step(&shared, &g).unwrap();
            adam.step(&mut plain, &g).unwrap();
        }
        assert_eq!(shared.snapshot().flat_values(), plain.flat_values());
        assert_eq!(shared.version(), 10);
    }

    #[test]
    fn snapshot_round_trip_and_soft_update() {
        let a = RelaxedParams::from_store(&store(vec![0.0, 4.0]));
        let b = RelaxedParams::from_store(&store(vec![2.0, 0.0]));
        a.soft_update_from(&b, 0.5);
        let mut out = store(vec![9.0, 9.0]);
        a.snapshot_into(&mut out).unwrap();
        assert_eq!(out.flat_values(), vec![1.0, 2.0]);
        assert!(a.snapshot_into(&mut store(vec![1.0])).is_err());
    }
}
