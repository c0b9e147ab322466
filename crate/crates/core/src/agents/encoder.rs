use crate::env::{wrap_angle, EnvObservation, FeatureMode};
use crate::nn::{NnError, Shape};

use super::Result;

/// Maps an environment observation to the agent's network input.
pub trait StateEncoder: Send + Sync {
    fn input_shape(&self) -> Shape;

    /// Whether observations must carry a rendered frame.
    fn needs_pixels(&self) -> bool;

    fn encode(&self, obs: &EnvObservation) -> Result<Vec<f32>>;
}

/// Uses the simulator's physical state directly.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureEncoder(pub FeatureMode);

impl StateEncoder for FeatureEncoder {
    fn input_shape(&self) -> Shape {
        Shape::Flat(self.0.dim())
    }

    fn needs_pixels(&self) -> bool {
        false
    }

    fn encode(&self, obs: &EnvObservation) -> Result<Vec<f32>> {
        let f = &obs.features;
        Ok(match self.0 {
            FeatureMode::SinCos => f.to_vec(),
            FeatureMode::RawAngles => {
                let t1 = wrap_angle((f[1] as f64).atan2(f[0] as f64));
                let t2 = wrap_angle((f[3] as f64).atan2(f[2] as f64));
                vec![t1 as f32, t2 as f32, f[4], f[5]]
            }
        })
    }
}

/// Feeds the raw 64×64 frame to a convolutional front end, optionally with
/// a per-pixel mean subtracted.
#[derive(Debug, Clone, Default)]
pub struct PixelEncoder {
    pub mean: Option<Vec<f32>>,
}

impl StateEncoder for PixelEncoder {
    fn input_shape(&self) -> Shape {
        Shape::image(1, crate::env::FRAME_SIZE, crate::env::FRAME_SIZE)
    }

    fn needs_pixels(&self) -> bool {
        true
    }

    fn encode(&self, obs: &EnvObservation) -> Result<Vec<f32>> {
        let frame = obs
            .frame
            .as_ref()
            .ok_or_else(|| NnError::Shape("pixel encoder needs a rendered frame".into()))?;
        let mut v = frame.to_f32();
        if let Some(mean) = &self.mean {
            for (x, m) in v.iter_mut().zip(mean) {
                *x -= m;
            }
        }
        Ok(v)
    }
}
