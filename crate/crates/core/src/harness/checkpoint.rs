use std::path::Path;

use crate::agents::{actor_specs, critic_specs, derive_seed, FeatureEncoder, HyperParams, PixelEncoder, StateEncoder};
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, Network, Shape, Tensor};
use crate::pretrain::{Extractor, PretrainedModel};
use crate::render::{NoiseConfig, FRAME_SIZE};

use super::{Algorithm, HarnessError, Result};

/// How the agent turns observations into network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Features,
    Pixels,
    Pretrained,
}

impl SourceKind {
    fn name(self) -> &'static str {
        match self {
            SourceKind::Features => "features",
            SourceKind::Pixels => "pixels",
            SourceKind::Pretrained => "pretrained",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [SourceKind::Features, SourceKind::Pixels, SourceKind::Pretrained]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// A trained DDPG agent with everything needed to act again: networks,
/// state source (including an embedded extractor) and the noise setting of
/// its frames.
#[derive(Debug, Clone)]
pub struct AgentCheckpoint {
    pub algorithm: Algorithm,
    pub source: SourceKind,
    pub noise: NoiseConfig,
    pub extractor: Option<Extractor>,
    pub actor: Network<f32>,
    pub critic: Network<f32>,
    pub hidden: [usize; 2],
    pub critic_l2: f64,
}

fn tag(c: &mut Checkpoint, group: &str, value: &str) {
    c.entries.push((format!("{group}/{value}"), Tensor::zeros(vec![1])));
}

fn find_tag<'a>(c: &'a Checkpoint, group: &str) -> Option<&'a str> {
    let head = format!("{group}/");
    c.entries.iter().find_map(|(n, _)| n.strip_prefix(&head))
}

/// Algorithm tag of an agent checkpoint; `None` for other checkpoints.
pub(crate) fn algorithm_of(c: &Checkpoint) -> Option<Algorithm> {
    find_tag(c, "algorithm").and_then(|s| s.parse().ok())
}

fn input_shape(source: SourceKind, extractor: Option<&Extractor>) -> Result<Shape> {
    Ok(match source {
        SourceKind::Features => Shape::Flat(6),
        SourceKind::Pixels => Shape::image(1, FRAME_SIZE, FRAME_SIZE),
        SourceKind::Pretrained => Shape::Flat(
            extractor
                .ok_or_else(|| HarnessError::Mismatch("pretrained source without an extractor".into()))?
                .dim(),
        ),
    })
}

fn missing(what: &str) -> HarnessError {
    HarnessError::Mismatch(format!("agent checkpoint without {what}"))
}

impl AgentCheckpoint {
    /// Freshly initialised networks for the given source.
    pub fn untrained(
        algorithm: Algorithm,
        source: SourceKind,
        noise: NoiseConfig,
        extractor: Option<Extractor>,
        hp: &HyperParams,
        seed: u64,
    ) -> Result<Self> {
        let input = input_shape(source, extractor.as_ref())?;
        let actor = Network::new(input, &actor_specs(input, hp.hidden), derive_seed(seed, 1))?;
        let critic = Network::new(
            input,
            &critic_specs(input, hp.hidden, hp.critic_output_l2),
            derive_seed(seed, 2),
        )?;
        Ok(Self {
            algorithm,
            source,
            noise,
            extractor,
            actor,
            critic,
            hidden: hp.hidden,
            critic_l2: hp.critic_output_l2,
        })
    }

    pub fn encoder(&self) -> Box<dyn StateEncoder> {
        match (self.source, &self.extractor) {
            (SourceKind::Pretrained, Some(e)) => Box::new(e.clone()),
            (SourceKind::Pixels, _) => Box::new(PixelEncoder::default()),
            _ => Box::new(FeatureEncoder::default()),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        tag(&mut c, "algorithm", self.algorithm.name());
        tag(&mut c, "source", self.source.name());
        if self.noise.enabled {
            tag(&mut c, "noise_seed", &self.noise.seed.to_string());
            tag(&mut c, "noise_pixels", &self.noise.pixel_count.to_string());
        }
        c.entries.push((
            "meta/hidden".into(),
            Tensor::row(vec![self.hidden[0] as f32, self.hidden[1] as f32]),
        ));
        c.entries
            .push(("meta/critic_l2".into(), Tensor::row(vec![self.critic_l2 as f32])));
        c.insert("actor", self.actor.params());
        c.insert("critic", self.critic.params());
        if let Some(e) = &self.extractor {
            for (name, t) in PretrainedModel::Extractor(e.clone()).to_checkpoint().entries {
                c.entries.push((format!("extractor/{name}"), t));
            }
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let algorithm = algorithm_of(c).ok_or_else(|| missing("an algorithm tag"))?;
        let source = find_tag(c, "source")
            .and_then(SourceKind::from_name)
            .ok_or_else(|| missing("a state source tag"))?;
        let noise = match find_tag(c, "noise_seed") {
            Some(s) => NoiseConfig {
                enabled: true,
                seed: s.parse().map_err(|_| missing("a valid noise seed"))?,
                pixel_count: find_tag(c, "noise_pixels")
                    .and_then(|p| p.parse().ok())
                    .unwrap_or(NoiseConfig::DEFAULT_PIXELS),
            },
            None => NoiseConfig::disabled(),
        };
        let meta = c.extract("meta").ok_or_else(|| missing("metadata"))?;
        let hidden = meta.get("hidden").ok_or_else(|| missing("hidden widths"))?.data();
        let hidden = [hidden[0] as usize, hidden[1] as usize];
        let critic_l2 = meta.get("critic_l2").ok_or_else(|| missing("critic_l2"))?.data()[0] as f64;
        let nested: Vec<_> = c
            .entries
            .iter()
            .filter_map(|(n, t)| n.strip_prefix("extractor/").map(|s| (s.to_string(), t.clone())))
            .collect();
        let extractor = if nested.is_empty() {
            None
        } else {
            match PretrainedModel::from_checkpoint(&Checkpoint { entries: nested })? {
                PretrainedModel::Extractor(e) => Some(e),
                PretrainedModel::Inverse(_) => return Err(missing("a state extractor")),
            }
        };
        let input = input_shape(source, extractor.as_ref())?;
        let actor = Network::from_params(
            input,
            &actor_specs(input, hidden),
            c.extract("actor").ok_or_else(|| missing("actor parameters"))?,
        )?;
        let critic = Network::from_params(
            input,
            &critic_specs(input, hidden, critic_l2),
            c.extract("critic").ok_or_else(|| missing("critic parameters"))?,
        )?;
        Ok(Self {
            algorithm,
            source,
            noise,
            extractor,
            actor,
            critic,
            hidden,
            critic_l2,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(save_checkpoint(path, &self.to_checkpoint())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }
}
