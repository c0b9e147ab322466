//! Supervised models trained on randomly explored transitions: an inverse
//! model used directly as a controller, and three pixel models whose
//! internal representations serve as state inputs for the DDPG agents.
//!
//! Dataset records (`RLRB1`) carry 8 feature values per state: the six
//! state features followed by the gripper position.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{derive_seed, EpisodeSummary, StateEncoder};
use crate::env::{
    state_features, Action, EnvError, EnvObservation, NoiseConfig, PixelFrame, Reacher, ReacherState,
    FRAME_PIXELS, FRAME_SIZE,
};
use crate::nn::{
    mse_loss, Activation, AdamConfig, AdamState, Checkpoint, LayerSpec, Network, NnError, ParamStore, Shape, Tensor,
};
use crate::replay::{Observation, ReplayBuffer, ReplayError, StateKind, Transition};

pub const STATE_DIM: usize = 6;
pub const RECORD_DIM: usize = 8;
pub const LATENT_DIM: usize = 30;
pub const PHI_DIM: usize = 10;

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("dataset is missing {0}")]
    Missing(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PretrainError>;

/// Random-exploration dataset parameters.
#[derive(Debug, Clone, Copy)]
pub struct DatasetConfig {
    pub episodes: usize,
    pub steps: usize,
    pub seed: u64,
    pub pixels: bool,
    pub noise: NoiseConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            steps: 500,
            seed: 0,
            pixels: false,
            noise: NoiseConfig::disabled(),
        }
    }
}

fn record_features(s: &ReacherState) -> Vec<f32> {
    let mut v = state_features(s).to_vec();
    let g = s.gripper();
    v.extend_from_slice(&[g.0 as f32, g.1 as f32]);
    v
}

/// Collects `episodes × steps` transitions under uniform random actions.
/// An episode that ends early is continued from a fresh start so every
/// block has exactly `steps` records.
pub fn gen_random_dataset(cfg: &DatasetConfig) -> Result<ReplayBuffer> {
    let n = cfg.episodes * cfg.steps;
    if n == 0 {
        return Err(PretrainError::Config("dataset needs at least one record".into()));
    }
    let kind = if cfg.pixels {
        StateKind::FeaturesAndPixels { dim: RECORD_DIM }
    } else {
        StateKind::Features { dim: RECORD_DIM }
    };
    let mut buf = ReplayBuffer::new(n, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let observe = |env: &Reacher| {
        let f = record_features(env.state());
        if cfg.pixels {
            Observation::FeaturesAndPixels(f, Arc::new(env.render()))
        } else {
            Observation::Features(f)
        }
    };
    let mut resets = 0u64;
    for ep in 0..cfg.episodes {
        let mut env = Reacher::new(derive_seed(cfg.seed, 1_000_000 + ep as u64), cfg.noise);
        let mut obs = observe(&env);
        for _ in 0..cfg.steps {
            let a = [rng.random_range(-1.0f32..=1.0), rng.random_range(-1.0f32..=1.0)];
            let out = env.step(Action::from(a))?;
            let next = observe(&env);
            buf.push(Transition {
                state: obs,
                action: a,
                reward: out.reward as f32,
                next_state: next.clone(),
                terminal: out.success,
            })?;
            obs = if out.done {
                resets += 1;
                env = Reacher::new(derive_seed(cfg.seed, 2_000_000 + resets), cfg.noise);
                observe(&env)
            } else {
                next
            };
        }
    }
    Ok(buf)
}

/// Generates a dataset and writes it to `path`.
pub fn write_random_dataset(cfg: &DatasetConfig, path: impl AsRef<Path>) -> Result<ReplayBuffer> {
    let buf = gen_random_dataset(cfg)?;
    buf.dump(path)?;
    Ok(buf)
}

/// Per-pixel mean over a set of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanImage {
    values: Vec<f32>,
}

impl MeanImage {
    pub fn fit<'a>(frames: impl IntoIterator<Item = &'a PixelFrame>) -> Result<Self> {
        let mut sum = vec![0.0f64; FRAME_PIXELS];
        let mut n = 0usize;
        for f in frames {
            for (s, &v) in sum.iter_mut().zip(f.levels()) {
                *s += v as f64 / 255.0;
            }
            n += 1;
        }
        if n == 0 {
            return Err(PretrainError::Missing("frames to fit a mean image"));
        }
        Ok(Self {
            values: sum.into_iter().map(|s| (s / n as f64) as f32).collect(),
        })
    }

    pub fn from_values(values: Vec<f32>) -> Result<Self> {
        if values.len() != FRAME_PIXELS {
            return Err(NnError::Shape(format!("mean image needs {FRAME_PIXELS} values")).into());
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Centered intensities in `[−1, 1]`.
    pub fn apply(&self, frame: &PixelFrame) -> Vec<f32> {
        let mut out = vec![0.0; FRAME_PIXELS];
        self.apply_into(frame, &mut out);
        out
    }

    pub fn apply_into(&self, frame: &PixelFrame, out: &mut [f32]) {
        frame.write_f32(out);
        for (o, m) in out.iter_mut().zip(&self.values) {
            *o -= m;
        }
    }
}

fn frame_input(frame: &PixelFrame, mean: Option<&MeanImage>, out: &mut [f32]) {
    match mean {
        Some(m) => m.apply_into(frame, out),
        None => frame.write_f32(out),
    }
}

fn frames_tensor(frames: &[&PixelFrame], mean: Option<&MeanImage>) -> Result<Tensor<f32>> {
    let mut data = vec![0.0f32; frames.len() * FRAME_PIXELS];
    for (f, chunk) in frames.iter().zip(data.chunks_mut(FRAME_PIXELS)) {
        frame_input(f, mean, chunk);
    }
    Ok(Tensor::matrix(frames.len(), FRAME_PIXELS, data)?)
}

pub fn frame_shape() -> Shape {
    Shape::image(1, FRAME_SIZE, FRAME_SIZE)
}

pub fn inverse_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(128, Activation::Tanh),
        LayerSpec::dense(128, Activation::Tanh),
        LayerSpec::dense(2, Activation::Tanh),
    ]
}

fn conv_stack() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv2d(8, 5, 2, Activation::Relu),
        LayerSpec::conv2d(16, 5, 2, Activation::Relu),
        LayerSpec::flatten(),
    ]
}

pub fn internal_specs() -> Vec<LayerSpec> {
    let mut s = conv_stack();
    s.push(LayerSpec::dense(100, Activation::Relu));
    s.push(LayerSpec::dense(STATE_DIM, Activation::Linear));
    s
}

/// Convolutional encoder ending in a sigmoid code of width `code`.
pub fn encoder_specs(code: usize) -> Vec<LayerSpec> {
    let mut s = conv_stack();
    s.push(LayerSpec::dense(code, Activation::Sigmoid));
    s
}

pub fn state_head_specs() -> Vec<LayerSpec> {
    vec![LayerSpec::dense(STATE_DIM, Activation::Linear)]
}

pub fn decoder_specs(pixels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(512, Activation::Relu),
        LayerSpec::dense(pixels, Activation::Linear),
    ]
}

pub fn forward_head_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::concat(2),
        LayerSpec::dense(100, Activation::Relu),
        LayerSpec::dense(STATE_DIM, Activation::Linear),
    ]
}

/// Maps (angle encoding, desired gripper position) to the action that moves
/// the gripper there.
#[derive(Debug, Clone)]
pub struct InverseModel {
    pub net: Network<f32>,
}

/// Gain on the first-layer weights of a fresh inverse model.
pub const INVERSE_INPUT_GAIN: f32 = 10.0;

impl InverseModel {
    /// Glorot weights with the first layer scaled by
    /// [`INVERSE_INPUT_GAIN`] and biases uniform in `[−1, 1]`. With zero
    /// biases and unit-scale weights the network sits on a plateau: the
    /// action is only visible in the small difference between the desired
    /// and the current gripper position.
    pub fn new(seed: u64) -> Result<Self> {
        let mut net = Network::new(Shape::Flat(6), &inverse_specs(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let params = net.params_mut();
        let names = params.names().to_vec();
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            let data = t.data_mut();
            if name == "l0.w" {
                data.iter_mut().for_each(|w| *w *= INVERSE_INPUT_GAIN);
            } else if name.ends_with(".b") {
                data.iter_mut().for_each(|b| *b = rng.random_range(-1.0..=1.0));
            }
        }
        params.bump_version();
        Ok(Self { net })
    }

    pub fn predict(&self, inputs: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.net.predict(inputs, None)?)
    }
}

/// Steers toward the true target: the model is asked for the action that
/// would place the gripper on it.
pub fn inverse_act(m: &InverseModel, state: &ReacherState) -> Result<Action> {
    let f = state_features(state);
    let x = vec![f[0], f[1], f[2], f[3], state.target_x as f32, state.target_y as f32];
    let y = m.predict(&Tensor::row(x))?;
    Ok(Action::from([y.data()[0], y.data()[1]]))
}

/// Closed-loop episodes of the inverse-model controller from seeded resets.
pub fn evaluate_inverse(m: &InverseModel, episodes: usize, seed: u64) -> Result<Vec<EpisodeSummary>> {
    let mut out = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut env = Reacher::new(derive_seed(seed, ep as u64), NoiseConfig::disabled());
        let mut ret = 0.0;
        loop {
            let a = inverse_act(m, env.state())?;
            let o = env.step(a)?;
            ret += o.reward;
            if o.done {
                out.push(EpisodeSummary {
                    steps: o.next_state.step_count,
                    success: o.success,
                    ret,
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Pixels to the six state features.
#[derive(Debug, Clone)]
pub struct InternalModel {
    pub net: Network<f32>,
    pub mean: Option<MeanImage>,
}

impl InternalModel {
    pub fn new(seed: u64, mean: Option<MeanImage>) -> Result<Self> {
        Ok(Self {
            net: Network::new(frame_shape(), &internal_specs(), seed)?,
            mean,
        })
    }

    pub fn predict(&self, frames: &[&PixelFrame]) -> Result<Tensor<f32>> {
        Ok(self.net.predict(&frames_tensor(frames, self.mean.as_ref())?, None)?)
    }
}

/// Autoencoder whose 30-unit latent code also predicts the state through a
/// linear head.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub encoder: Network<f32>,
    pub head: Network<f32>,
    pub decoder: Network<f32>,
    pub mean: Option<MeanImage>,
}

impl Autoencoder {
    pub fn new(seed: u64, mean: Option<MeanImage>) -> Result<Self> {
        Ok(Self {
            encoder: Network::new(frame_shape(), &encoder_specs(LATENT_DIM), derive_seed(seed, 0))?,
            head: Network::new(Shape::Flat(LATENT_DIM), &state_head_specs(), derive_seed(seed, 1))?,
            decoder: Network::new(Shape::Flat(LATENT_DIM), &decoder_specs(FRAME_PIXELS), derive_seed(seed, 2))?,
            mean,
        })
    }

    pub fn latent(&self, frames: &[&PixelFrame]) -> Result<Tensor<f32>> {
        Ok(self.encoder.predict(&frames_tensor(frames, self.mean.as_ref())?, None)?)
    }

    pub fn states(&self, latent: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.head.predict(latent, None)?)
    }

    /// Reconstruction in the model's input space (centered when a mean is
    /// set).
    pub fn reconstruct(&self, latent: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.decoder.predict(latent, None)?)
    }
}

/// Predicts the next state from pixels and an action through a 10-unit
/// sigmoid bottleneck `φ` that sees only the pixels.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub encoder: Network<f32>,
    pub head: Network<f32>,
    pub mean: Option<MeanImage>,
}

impl ForwardModel {
    pub fn new(seed: u64, mean: Option<MeanImage>) -> Result<Self> {
        Ok(Self {
            encoder: Network::new(frame_shape(), &encoder_specs(PHI_DIM), derive_seed(seed, 0))?,
            head: Network::new(Shape::Flat(PHI_DIM), &forward_head_specs(), derive_seed(seed, 1))?,
            mean,
        })
    }

    pub fn phi(&self, frames: &[&PixelFrame]) -> Result<Tensor<f32>> {
        Ok(self.encoder.predict(&frames_tensor(frames, self.mean.as_ref())?, None)?)
    }

    pub fn predict_next(&self, frames: &[&PixelFrame], actions: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.head.predict(&self.phi(frames)?, Some(actions))?)
    }
}

/// Supervised training parameters shared by all models.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of records, taken from the end, kept for evaluation.
    pub holdout: f64,
    /// Subtract the training-set mean image from pixel inputs.
    pub mean_removal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batches: 20_000,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
            holdout: 0.1,
            mean_removal: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(PretrainError::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(PretrainError::Config(format!("holdout must be in [0, 1), got {}", self.holdout)));
        }
        if !(self.lr >= 0.0) {
            return Err(PretrainError::Config("lr must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Held-out errors. Fields that do not apply to a model are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Holdout {
    /// Mean squared error of the primary output.
    pub mse: f64,
    /// RMS over the four angle-encoding values.
    pub angle_rmse: Option<f64>,
    /// RMS Euclidean error of the predicted target position.
    pub target_rmse: Option<f64>,
    pub recon_mse: Option<f64>,
    /// Smallest and largest norm of predicted (cos, sin) pairs.
    pub norm_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Training loss of every batch (state loss for the autoencoder).
    pub loss: Vec<f32>,
    /// Reconstruction loss of every autoencoder batch.
    pub recon_loss: Vec<f32>,
    pub holdout: Holdout,
}

fn split(n: usize, holdout: f64) -> Result<(usize, usize)> {
    let test = ((n as f64) * holdout).ceil() as usize;
    let train = n - test.min(n);
    if train == 0 {
        return Err(PretrainError::Missing("training records"));
    }
    Ok((train, n))
}

fn features(o: &Observation) -> Result<&[f32]> {
    let f = o.features().ok_or(PretrainError::Missing("state features"))?;
    if f.len() < RECORD_DIM {
        return Err(PretrainError::Missing("gripper position in the features"));
    }
    Ok(f)
}

fn pixels(o: &Observation) -> Result<&PixelFrame> {
    o.pixels().ok_or(PretrainError::Missing("pixel frames"))
}

fn records(data: &ReplayBuffer) -> Vec<&Transition> {
    data.iter().collect()
}

fn inverse_row(t: &Transition) -> Result<[f32; 6]> {
    let s = features(&t.state)?;
    let s2 = features(&t.next_state)?;
    Ok([s[0], s[1], s[2], s[3], s2[6], s2[7]])
}

fn batch_indices(rng: &mut ChaCha8Rng, train: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..train)).collect()
}

fn state_metrics(pred: &[f32], target: &[f32]) -> Holdout {
    let n = pred.len() / STATE_DIM;
    let (mut se, mut angle, mut pos) = (0.0f64, 0.0f64, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (p, t) in pred.chunks(STATE_DIM).zip(target.chunks(STATE_DIM)) {
        for k in 0..STATE_DIM {
            let d = (p[k] - t[k]) as f64;
            se += d * d;
            if k < 4 {
                angle += d * d;
            } else {
                pos += d * d;
            }
        }
        for pair in [0, 2] {
            let norm = ((p[pair] as f64).powi(2) + (p[pair + 1] as f64).powi(2)).sqrt();
            lo = lo.min(norm);
            hi = hi.max(norm);
        }
    }
    Holdout {
        mse: se / (n * STATE_DIM) as f64,
        angle_rmse: Some((angle / (n * 4) as f64).sqrt()),
        target_rmse: Some((pos / n as f64).sqrt()),
        recon_mse: None,
        norm_range: Some((lo, hi)),
    }
}

pub fn train_inverse(data: &ReplayBuffer, cfg: &TrainConfig) -> Result<(InverseModel, TrainReport)> {
    cfg.validate()?;
    let recs = records(data);
    let (train, n) = split(recs.len(), cfg.holdout)?;
    let mut x = Vec::with_capacity(n * 6);
    let mut y = Vec::with_capacity(n * 2);
    for t in &recs {
        x.extend_from_slice(&inverse_row(t)?);
        y.extend_from_slice(&t.action);
    }
    let mut model = InverseModel::new(derive_seed(cfg.seed, 10))?;
    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), model.net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 11));
    let mut report = TrainReport::default();
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    for _ in 0..cfg.batches {
        bx.clear();
        by.clear();
        for i in batch_indices(&mut rng, train, cfg.batch_size) {
            bx.extend_from_slice(&x[i * 6..i * 6 + 6]);
            by.extend_from_slice(&y[i * 2..i * 2 + 2]);
        }
        let input = Tensor::matrix(cfg.batch_size, 6, bx.clone())?;
        let target = Tensor::matrix(cfg.batch_size, 2, by.clone())?;
        let (pred, cache) = model.net.forward(&input, None)?;
        let (loss, grad) = mse_loss(&pred, &target)?;
        let g = model.net.backward(&cache, &grad)?.params.expect("parameter gradients");
        opt.step(model.net.params_mut(), &g)?;
        report.loss.push(loss);
    }
    if n > train {
        let input = Tensor::matrix(n - train, 6, x[train * 6..].to_vec())?;
        let target = Tensor::matrix(n - train, 2, y[train * 2..].to_vec())?;
        let (loss, _) = mse_loss(&model.predict(&input)?, &target)?;
        report.holdout.mse = loss as f64;
    }
    Ok((model, report))
}

/// Mean image of the training split when mean removal is on.
fn fit_mean(recs: &[&Transition], train: usize, cfg: &TrainConfig) -> Result<Option<MeanImage>> {
    if !cfg.mean_removal {
        return Ok(None);
    }
    let frames = recs[..train].iter().map(|t| pixels(&t.state)).collect::<Result<Vec<_>>>()?;
    Ok(Some(MeanImage::fit(frames)?))
}

fn state_target(o: &Observation) -> Result<Vec<f32>> {
    Ok(features(o)?[..STATE_DIM].to_vec())
}

/// Held-out evaluation in chunks to bound memory.
fn holdout_chunks(train: usize, n: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (train..n).step_by(256).map(move |s| s..(s + 256).min(n))
}

pub fn train_internal(data: &ReplayBuffer, cfg: &TrainConfig) -> Result<(InternalModel, TrainReport)> {
    cfg.validate()?;
    let recs = records(data);
    let (train, n) = split(recs.len(), cfg.holdout)?;
    let mean = fit_mean(&recs, train, cfg)?;
    let mut model = InternalModel::new(derive_seed(cfg.seed, 20), mean)?;
    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), model.net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 21));
    let mut report = TrainReport::default();
    for _ in 0..cfg.batches {
        let idx = batch_indices(&mut rng, train, cfg.batch_size);
        let frames = idx.iter().map(|&i| pixels(&recs[i].state)).collect::<Result<Vec<_>>>()?;
        let mut target = Vec::with_capacity(idx.len() * STATE_DIM);
        for &i in &idx {
            target.extend(state_target(&recs[i].state)?);
        }
        let input = frames_tensor(&frames, model.mean.as_ref())?;
        let (pred, cache) = model.net.forward(&input, None)?;
        let (loss, grad) = mse_loss(&pred, &Tensor::matrix(idx.len(), STATE_DIM, target)?)?;
        let g = model.net.backward(&cache, &grad)?.params.expect("parameter gradients");
        opt.step(model.net.params_mut(), &g)?;
        report.loss.push(loss);
    }
    let (mut pred, mut target) = (Vec::new(), Vec::new());
    for r in holdout_chunks(train, n) {
        let frames = recs[r.clone()].iter().map(|t| pixels(&t.state)).collect::<Result<Vec<_>>>()?;
        pred.extend_from_slice(model.predict(&frames)?.data());
        for t in &recs[r] {
            target.extend(state_target(&t.state)?);
        }
    }
    if !pred.is_empty() {
        report.holdout = state_metrics(&pred, &target);
    }
    Ok((model, report))
}

fn add_grads(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Tensor<f32>> {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::new(a.shape().to_vec(), data)?)
}

pub fn train_autoencoder(data: &ReplayBuffer, cfg: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
    cfg.validate()?;
    let recs = records(data);
    let (train, n) = split(recs.len(), cfg.holdout)?;
    let mean = fit_mean(&recs, train, cfg)?;
    let mut m = Autoencoder::new(derive_seed(cfg.seed, 30), mean)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut enc_opt = AdamState::new(adam, m.encoder.params());
    let mut head_opt = AdamState::new(adam, m.head.params());
    let mut dec_opt = AdamState::new(adam, m.decoder.params());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 31));
    let mut report = TrainReport::default();
    for _ in 0..cfg.batches {
        let idx = batch_indices(&mut rng, train, cfg.batch_size);
        let frames = idx.iter().map(|&i| pixels(&recs[i].state)).collect::<Result<Vec<_>>>()?;
        let mut target = Vec::with_capacity(idx.len() * STATE_DIM);
        for &i in &idx {
            target.extend(state_target(&recs[i].state)?);
        }
        let input = frames_tensor(&frames, m.mean.as_ref())?;
        let (z, enc_cache) = m.encoder.forward(&input, None)?;
        let (s, head_cache) = m.head.forward(&z, None)?;
        let (r, dec_cache) = m.decoder.forward(&z, None)?;
        let (state_loss, ds) = mse_loss(&s, &Tensor::matrix(idx.len(), STATE_DIM, target)?)?;
        let (recon_loss, dr) = mse_loss(&r, &input)?;
        let hb = m.head.backward(&head_cache, &ds)?;
        let db = m.decoder.backward(&dec_cache, &dr)?;
        let dz = add_grads(&hb.input, &db.input)?;
        let eb = m.encoder.backward(&enc_cache, &dz)?;
        head_opt.step(m.head.params_mut(), &hb.params.expect("parameter gradients"))?;
        dec_opt.step(m.decoder.params_mut(), &db.params.expect("parameter gradients"))?;
        enc_opt.step(m.encoder.params_mut(), &eb.params.expect("parameter gradients"))?;
        report.loss.push(state_loss);
        report.recon_loss.push(recon_loss);
    }
    let (mut pred, mut target) = (Vec::new(), Vec::new());
    let (mut recon_se, mut recon_n) = (0.0f64, 0usize);
    for r in holdout_chunks(train, n) {
        let frames = recs[r.clone()].iter().map(|t| pixels(&t.state)).collect::<Result<Vec<_>>>()?;
        let input = frames_tensor(&frames, m.mean.as_ref())?;
        let z = m.encoder.predict(&input, None)?;
        pred.extend_from_slice(m.states(&z)?.data());
        let (l, _) = mse_loss(&m.reconstruct(&z)?, &input)?;
        recon_se += l as f64 * frames.len() as f64;
        recon_n += frames.len();
        for t in &recs[r] {
            target.extend(state_target(&t.state)?);
        }
    }
    if recon_n > 0 {
        report.holdout = state_metrics(&pred, &target);
        report.holdout.recon_mse = Some(recon_se / recon_n as f64);
    }
    Ok((m, report))
}

pub fn train_forward(data: &ReplayBuffer, cfg: &TrainConfig) -> Result<(ForwardModel, TrainReport)> {
    cfg.validate()?;
    let recs = records(data);
    let (train, n) = split(recs.len(), cfg.holdout)?;
    let mean = fit_mean(&recs, train, cfg)?;
    let mut m = ForwardModel::new(derive_seed(cfg.seed, 40), mean)?;
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut enc_opt = AdamState::new(adam, m.encoder.params());
    let mut head_opt = AdamState::new(adam, m.head.params());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 41));
    let mut report = TrainReport::default();
    let actions_of = |idx: &[usize]| -> Result<Tensor<f32>> {
        let a: Vec<f32> = idx.iter().flat_map(|&i| recs[i].action).collect();
        Ok(Tensor::matrix(idx.len(), 2, a)?)
    };
    for _ in 0..cfg.batches {
        let idx = batch_indices(&mut rng, train, cfg.batch_size);
        let frames = idx.iter().map(|&i| pixels(&recs[i].state)).collect::<Result<Vec<_>>>()?;
        let mut target = Vec::with_capacity(idx.len() * STATE_DIM);
        for &i in &idx {
            target.extend(state_target(&recs[i].next_state)?);
        }
        let input = frames_tensor(&frames, m.mean.as_ref())?;
        let (phi, enc_cache) = m.encoder.forward(&input, None)?;
        let (pred, head_cache) = m.head.forward(&phi, Some(&actions_of(&idx)?))?;
        let (loss, grad) = mse_loss(&pred, &Tensor::matrix(idx.len(), STATE_DIM, target)?)?;
        let hb = m.head.backward(&head_cache, &grad)?;
        let eb = m.encoder.backward(&enc_cache, &hb.input)?;
        head_opt.step(m.head.params_mut(), &hb.params.expect("parameter gradients"))?;
        enc_opt.step(m.encoder.params_mut(), &eb.params.expect("parameter gradients"))?;
        report.loss.push(loss);
    }
    let (mut pred, mut target) = (Vec::new(), Vec::new());
    for r in holdout_chunks(train, n) {
        let idx: Vec<usize> = r.clone().collect();
        let frames = recs[r.clone()].iter().map(|t| pixels(&t.state)).collect::<Result<Vec<_>>>()?;
        pred.extend_from_slice(m.predict_next(&frames, &actions_of(&idx)?)?.data());
        for t in &recs[r] {
            target.extend(state_target(&t.next_state)?);
        }
    }
    if !pred.is_empty() {
        report.holdout = state_metrics(&pred, &target);
    }
    Ok((m, report))
}

/// A pretrained pixel model used as the RL state.
#[derive(Debug, Clone)]
pub enum Extractor {
    Internal(InternalModel),
    Autoencoder(Autoencoder),
    Forward(ForwardModel),
}

impl Extractor {
    pub fn dim(&self) -> usize {
        match self {
            Extractor::Internal(_) => STATE_DIM,
            Extractor::Autoencoder(_) => LATENT_DIM,
            Extractor::Forward(_) => PHI_DIM,
        }
    }

    pub fn extract_batch(&self, frames: &[&PixelFrame]) -> Result<Tensor<f32>> {
        match self {
            Extractor::Internal(m) => m.predict(frames),
            Extractor::Autoencoder(m) => m.latent(frames),
            Extractor::Forward(m) => m.phi(frames),
        }
    }

    pub fn extract_state(&self, frame: &PixelFrame) -> Result<Vec<f32>> {
        Ok(self.extract_batch(&[frame])?.into_data())
    }
}

impl StateEncoder for Extractor {
    fn input_shape(&self) -> Shape {
        Shape::Flat(self.dim())
    }

    fn needs_pixels(&self) -> bool {
        true
    }

    fn encode(&self, obs: &EnvObservation) -> crate::agents::Result<Vec<f32>> {
        let frame = obs
            .frame
            .as_ref()
            .ok_or_else(|| NnError::Shape("pretrained extractor needs a rendered frame".into()))?;
        self.extract_state(frame).map_err(|e| match e {
            PretrainError::Nn(e) => e.into(),
            other => NnError::Shape(other.to_string()).into(),
        })
    }
}

/// Any trained model, as stored in a checkpoint.
#[derive(Debug, Clone)]
pub enum PretrainedModel {
    Inverse(InverseModel),
    Extractor(Extractor),
}

impl PretrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PretrainedModel::Inverse(_) => "inverse",
            PretrainedModel::Extractor(Extractor::Internal(_)) => "internal",
            PretrainedModel::Extractor(Extractor::Autoencoder(_)) => "autoencoder",
            PretrainedModel::Extractor(Extractor::Forward(_)) => "forward",
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.entries.push((format!("kind/{}", self.kind()), Tensor::zeros(vec![1])));
        let mean = |c: &mut Checkpoint, m: &Option<MeanImage>| {
            if let Some(m) = m {
                c.entries
                    .push(("mean/values".into(), Tensor::row(m.values().to_vec())));
            }
        };
        match self {
            PretrainedModel::Inverse(m) => c.insert("net", m.net.params()),
            PretrainedModel::Extractor(Extractor::Internal(m)) => {
                c.insert("net", m.net.params());
                mean(&mut c, &m.mean);
            }
            PretrainedModel::Extractor(Extractor::Autoencoder(m)) => {
                c.insert("encoder", m.encoder.params());
                c.insert("head", m.head.params());
                c.insert("decoder", m.decoder.params());
                mean(&mut c, &m.mean);
            }
            PretrainedModel::Extractor(Extractor::Forward(m)) => {
                c.insert("encoder", m.encoder.params());
                c.insert("head", m.head.params());
                mean(&mut c, &m.mean);
            }
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let kind = c
            .entries
            .iter()
            .find_map(|(n, _)| n.strip_prefix("kind/"))
            .ok_or(PretrainError::Missing("model kind tag in the checkpoint"))?;
        let part = |p: &'static str| -> Result<ParamStore<f32>> {
            c.extract(p).ok_or(PretrainError::Missing("network parameters in the checkpoint"))
        };
        let mean = match c.extract("mean") {
            Some(store) => Some(MeanImage::from_values(
                store.get("values").ok_or(PretrainError::Missing("mean image"))?.data().to_vec(),
            )?),
            None => None,
        };
        let image = frame_shape();
        let latent = Shape::Flat(LATENT_DIM);
        Ok(match kind {
            "inverse" => PretrainedModel::Inverse(InverseModel {
                net: Network::from_params(Shape::Flat(6), &inverse_specs(), part("net")?)?,
            }),
            "internal" => PretrainedModel::Extractor(Extractor::Internal(InternalModel {
                net: Network::from_params(image, &internal_specs(), part("net")?)?,
                mean,
            })),
            "autoencoder" => PretrainedModel::Extractor(Extractor::Autoencoder(Autoencoder {
                encoder: Network::from_params(image, &encoder_specs(LATENT_DIM), part("encoder")?)?,
                head: Network::from_params(latent, &state_head_specs(), part("head")?)?,
                decoder: Network::from_params(latent, &decoder_specs(FRAME_PIXELS), part("decoder")?)?,
                mean,
            })),
            "forward" => PretrainedModel::Extractor(Extractor::Forward(ForwardModel {
                encoder: Network::from_params(image, &encoder_specs(PHI_DIM), part("encoder")?)?,
                head: Network::from_params(Shape::Flat(PHI_DIM), &forward_head_specs(), part("head")?)?,
                mean,
            })),
            other => return Err(PretrainError::Config(format!("unknown model kind {other:?}"))),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(crate::nn::save_checkpoint(path, &self.to_checkpoint())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&crate::nn::load_checkpoint(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_keeps_tail_for_evaluation() {
        assert_eq!(split(100, 0.1).unwrap(), (90, 100));
        assert_eq!(split(10, 0.0).unwrap(), (10, 10));
        assert!(split(1, 0.5).is_err());
    }

    #[test]
    fn state_metrics_of_exact_prediction() {
        let v = vec![1.0, 0.0, 0.0, 1.0, 0.3, 0.4];
        let h = state_metrics(&v, &v);
        assert_eq!(h.mse, 0.0);
        assert_eq!(h.target_rmse, Some(0.0));
        assert_eq!(h.norm_range, Some((1.0, 1.0)));
    }
}
