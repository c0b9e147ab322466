//! Builds a small conv net, verifies its backward pass against central
//! differences, then fits a toy regression with Adam.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reacher_rl::nn::gradcheck::check_network;
use reacher_rl::nn::{mse_loss, Activation, AdamConfig, AdamState, LayerSpec, Network, Shape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let specs = [
        LayerSpec::conv2d(4, 3, 2, Activation::Relu),
        LayerSpec::flatten(),
        LayerSpec::dense(16, Activation::Tanh),
        LayerSpec::dense(1, Activation::Linear).with_l2(0.01),
    ];
    let input = Shape::image(1, 9, 9);

    let net = Network::<f64>::new(input, &specs, 1)?;
    let mut rand = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let x = Tensor::matrix(4, input.size(), rand(4 * input.size()))?;
    let w = Tensor::matrix(4, 1, rand(4))?;
    let report = check_network(&net, &x, None, &w, 1e-5)?;
    println!("gradient check: max relative error {:.2e} over {} entries", report.max_rel_error, report.checked);

    // regress the mean brightness of random images
    let mut net = Network::<f32>::new(input, &specs, 2)?;
    let mut opt = AdamState::new(AdamConfig::with_lr(1e-3), net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for it in 0..=2000 {
        let xs: Vec<f32> = (0..32 * 81).map(|_| rng.random()).collect();
        let ys: Vec<f32> = xs.chunks(81).map(|c| c.iter().sum::<f32>() / 81.0).collect();
        let (xs, ys) = (Tensor::matrix(32, 81, xs)?, Tensor::matrix(32, 1, ys)?);
        let (pred, cache) = net.forward(&xs, None)?;
        let (loss, grad) = mse_loss(&pred, &ys)?;
        let back = net.backward(&cache, &grad)?;
        opt.step(net.params_mut(), back.params.as_ref().expect("parameter gradients"))?;
        if it % 400 == 0 {
            println!("iteration {it:>5}: loss {loss:.6}");
        }
    }
    Ok(())
}
