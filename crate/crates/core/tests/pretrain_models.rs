use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reacher_rl::env::{forward_kinematics, reset, wrap_angle, NoiseConfig, PixelFrame, ReacherState, FRAME_PIXELS};
use reacher_rl::nn::gradcheck::check_network;
use reacher_rl::nn::{Network, Shape, Tensor};
use reacher_rl::pretrain::{
    decoder_specs, encoder_specs, forward_head_specs, gen_random_dataset, internal_specs, inverse_act,
    state_head_specs, train_autoencoder, train_forward, train_internal, train_inverse, DatasetConfig, Extractor,
    InverseModel, MeanImage, PretrainedModel, TrainConfig, LATENT_DIM, PHI_DIM, STATE_DIM,
};
use reacher_rl::render::{render, scene_pixels};
use reacher_rl::replay::ReplayBuffer;

fn pixel_data(episodes: usize, steps: usize, seed: u64, noise: bool) -> ReplayBuffer {
    gen_random_dataset(&DatasetConfig {
        episodes,
        steps,
        seed,
        pixels: true,
        noise: if noise { NoiseConfig::enabled(seed) } else { NoiseConfig::disabled() },
    })
    .unwrap()
}

fn small_cfg(batches: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        batches,
        batch_size: 8,
        lr,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn dataset_size_bytes_and_gripper_consistency() {
    let cfg = DatasetConfig {
        episodes: 2,
        steps: 3,
        seed: 4,
        ..DatasetConfig::default()
    };
    let a = gen_random_dataset(&cfg).unwrap();
    assert_eq!(a.len(), 6);
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    a.write_to(&mut ba).unwrap();
    gen_random_dataset(&cfg).unwrap().write_to(&mut bb).unwrap();
    assert_eq!(ba, bb);

    let big = gen_random_dataset(&DatasetConfig {
        episodes: 20,
        steps: 50,
        seed: 5,
        ..DatasetConfig::default()
    })
    .unwrap();
    for t in big.iter() {
        assert!(t.action.iter().all(|a| (-1.0..=1.0).contains(a)));
        let f = t.next_state.features().unwrap();
        let t1 = wrap_angle((f[1] as f64).atan2(f[0] as f64));
        let t2 = wrap_angle((f[3] as f64).atan2(f[2] as f64));
        let (_, g) = forward_kinematics(t1, t2);
        assert!((g.0 - f[6] as f64).abs() < 1e-6 && (g.1 - f[7] as f64).abs() < 1e-6);
    }
}

#[test]
fn mean_image_examples() {
    let s = reset(1);
    let f = render(&s, &NoiseConfig::enabled(2));
    let m = MeanImage::fit([&f, &f, &f]).unwrap();
    assert!(m.apply(&f).iter().all(|&v| v == 0.0));
    let one = MeanImage::fit([&f]).unwrap();
    assert_eq!(one.values(), f.to_f32().as_slice());
    assert!(MeanImage::fit(std::iter::empty::<&PixelFrame>()).is_err());
}

#[test]
fn static_noise_is_centered_away() {
    let noise = NoiseConfig::enabled(9);
    let states: Vec<ReacherState> = (0..50).map(reset).collect();
    let frames: Vec<PixelFrame> = states.iter().map(|s| render(s, &noise)).collect();
    let mean = MeanImage::fit(frames.iter()).unwrap();
    let mut covered = vec![false; FRAME_PIXELS];
    for s in &states {
        for i in scene_pixels(s) {
            covered[i] = true;
        }
    }
    let free_noise: Vec<usize> = noise.pixels().into_iter().filter(|&i| !covered[i]).collect();
    assert!(free_noise.len() > 10);
    for f in &frames {
        let c = mean.apply(f);
        assert!(c.iter().all(|v| (-1.0..=1.0).contains(v)));
        for &i in &free_noise {
            assert_eq!(f.levels()[i], u8::MAX);
            assert!(c[i].abs() < 1e-6);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_models_unchanged() {
    let feats = gen_random_dataset(&DatasetConfig {
        episodes: 4,
        steps: 20,
        seed: 1,
        ..DatasetConfig::default()
    })
    .unwrap();
    let (m0, _) = train_inverse(&feats, &small_cfg(0, 0.0)).unwrap();
    let (m1, _) = train_inverse(&feats, &small_cfg(5, 0.0)).unwrap();
    assert_eq!(m0.net.params().flat_values(), m1.net.params().flat_values());

    let pix = pixel_data(4, 10, 1, true);
    let (i0, _) = train_internal(&pix, &small_cfg(0, 0.0)).unwrap();
    let (i1, _) = train_internal(&pix, &small_cfg(3, 0.0)).unwrap();
    assert_eq!(i0.net.params().flat_values(), i1.net.params().flat_values());
    let (f0, _) = train_forward(&pix, &small_cfg(0, 0.0)).unwrap();
    let (f1, _) = train_forward(&pix, &small_cfg(3, 0.0)).unwrap();
    assert_eq!(f0.encoder.params().flat_values(), f1.encoder.params().flat_values());
    assert_eq!(f0.head.params().flat_values(), f1.head.params().flat_values());
}

#[test]
fn inverse_actions_are_bounded_and_deterministic() {
    let m = InverseModel::new(2).unwrap();
    for seed in 0..200 {
        let s = reset(seed);
        let a = inverse_act(&m, &s).unwrap();
        assert!(a.a1.abs() <= 1.0 && a.a2.abs() <= 1.0);
        assert_eq!(a, inverse_act(&m, &s).unwrap());
    }
}

/// Epoch averages over chunks of `chunk` batches; at most `allowed`
/// increases between consecutive epochs.
fn mostly_decreasing(loss: &[f32], chunk: usize, allowed: usize) -> bool {
    let avg: Vec<f32> = loss.chunks(chunk).map(|c| c.iter().sum::<f32>() / c.len() as f32).collect();
    let ups = avg.windows(2).filter(|w| w[1] > w[0]).count();
    ups <= allowed && avg.last() < avg.first()
}

#[test]
fn autoencoder_smoke_run() {
    let data = pixel_data(20, 8, 7, true);
    let cfg = TrainConfig {
        batches: 500,
        batch_size: 16,
        lr: 3e-4,
        seed: 7,
        ..TrainConfig::default()
    };
    let (m, report) = train_autoencoder(&data, &cfg).unwrap();
    assert!(mostly_decreasing(&report.loss, 50, 1), "state loss not decreasing");
    assert!(mostly_decreasing(&report.recon_loss, 50, 1), "reconstruction loss not decreasing");
    assert!(report.holdout.recon_mse.is_some());

    let frames: Vec<&PixelFrame> = data.iter().take(12).map(|t| t.state.pixels().unwrap()).collect();
    let z = m.latent(&frames).unwrap();
    assert!(z.data().iter().all(|&v| v > 0.0 && v < 1.0));

    // linear head: h(z1 + z2) + h(0) = h(z1) + h(z2)
    let head = m.head.params().cast::<f64>();
    let head = Network::<f64>::from_params(Shape::Flat(LATENT_DIM), &state_head_specs(), head).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z1: Vec<f64> = (0..LATENT_DIM).map(|_| rng.random()).collect();
    let z2: Vec<f64> = (0..LATENT_DIM).map(|_| rng.random()).collect();
    let sum: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
    let h = |v: Vec<f64>| head.predict(&Tensor::row(v), None).unwrap().into_data();
    let lhs: Vec<f64> = h(sum).iter().zip(h(vec![0.0; LATENT_DIM])).map(|(a, b)| a + b).collect();
    let rhs: Vec<f64> = h(z1).iter().zip(h(z2)).map(|(a, b)| a + b).collect();
    for (a, b) in lhs.iter().zip(&rhs) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn forward_bottleneck_ignores_the_action() {
    let data = pixel_data(3, 5, 2, false);
    let (m, _) = train_forward(&data, &small_cfg(20, 1e-3)).unwrap();
    let frames: Vec<&PixelFrame> = data.iter().take(4).map(|t| t.state.pixels().unwrap()).collect();
    let phi = m.phi(&frames).unwrap();
    let a = Tensor::matrix(4, 2, vec![0.5; 8]).unwrap();
    let b = Tensor::matrix(4, 2, vec![-0.9; 8]).unwrap();
    let (pa, pb) = (m.predict_next(&frames, &a).unwrap(), m.predict_next(&frames, &b).unwrap());
    assert_eq!(m.phi(&frames).unwrap(), phi);
    assert_ne!(pa, pb);
    assert_eq!(phi.shape(), &[4, PHI_DIM]);
}

#[test]
fn extractors_have_fixed_dims_and_do_not_mutate() {
    let data = pixel_data(3, 5, 3, true);
    let cfg = small_cfg(3, 1e-3);
    let extractors = [
        Extractor::Internal(train_internal(&data, &cfg).unwrap().0),
        Extractor::Autoencoder(train_autoencoder(&data, &cfg).unwrap().0),
        Extractor::Forward(train_forward(&data, &cfg).unwrap().0),
    ];
    let frame = data.get(0).unwrap().state.pixels().unwrap().clone();
    for (e, dim) in extractors.iter().zip([STATE_DIM, LATENT_DIM, PHI_DIM]) {
        let versions = |e: &Extractor| match e {
            Extractor::Internal(m) => vec![m.net.params().version()],
            Extractor::Autoencoder(m) => vec![m.encoder.params().version(), m.head.params().version()],
            Extractor::Forward(m) => vec![m.encoder.params().version(), m.head.params().version()],
        };
        let before = versions(e);
        let x = e.extract_state(&frame).unwrap();
        assert_eq!(x.len(), dim);
        assert_eq!(e.dim(), dim);
        assert_eq!(x, e.extract_state(&frame).unwrap());
        assert_eq!(versions(e), before);

        // checkpoint round trip
        let model = PretrainedModel::Extractor(e.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        match PretrainedModel::load(&path).unwrap() {
            PretrainedModel::Extractor(back) => assert_eq!(back.extract_state(&frame).unwrap(), x),
            PretrainedModel::Inverse(_) => panic!("kind changed"),
        }
    }
}

fn gradcheck(net: &Network<f64>, side: Option<usize>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand = |n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
    let batch = 2;
    let x = Tensor::matrix(batch, net.input_size(), rand(batch * net.input_size(), 0.0, 1.0)).unwrap();
    let s = side.map(|w| Tensor::matrix(batch, w, rand(batch * w, -1.0, 1.0)).unwrap());
    let w = Tensor::matrix(batch, net.output_size(), rand(batch * net.output_size(), -1.0, 1.0)).unwrap();
    let r = check_network(net, &x, s.as_ref(), &w, 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-4, "rel error {} over {}", r.max_rel_error, r.checked);
}

// Pixel architectures are checked on small inputs (20×20 frames, an 8×8
// decoder output) so every parameter can be probed; the layer stack is the same.
#[test]
fn every_model_passes_the_gradient_check_at_init() {
    let inv = InverseModel::new(5).unwrap();
    let inv64 = Network::<f64>::from_params(Shape::Flat(6), &inv.net.specs(), inv.net.params().cast()).unwrap();
    gradcheck(&inv64, None, 1);

    let img = Shape::image(1, 20, 20);
    gradcheck(&Network::new(img, &internal_specs(), 2).unwrap(), None, 2);
    gradcheck(&Network::new(img, &encoder_specs(LATENT_DIM), 3).unwrap(), None, 3);
    gradcheck(&Network::new(Shape::Flat(LATENT_DIM), &state_head_specs(), 4).unwrap(), None, 4);
    gradcheck(&Network::new(Shape::Flat(LATENT_DIM), &decoder_specs(64), 5).unwrap(), None, 5);
    gradcheck(&Network::new(img, &encoder_specs(PHI_DIM), 6).unwrap(), None, 6);
    gradcheck(&Network::new(Shape::Flat(PHI_DIM), &forward_head_specs(), 7).unwrap(), Some(2), 7);
}
