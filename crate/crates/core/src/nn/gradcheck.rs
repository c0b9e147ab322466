//! Central finite-difference verification of [`Network::backward`].

use super::{Network, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a − n| / max(|a| + |n|, floor)` over all checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Relative error with a floor on the denominator so that entries whose true
/// gradient is ~0 are compared absolutely.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compares analytic parameter and input gradients of the scalar loss
/// `Σ w_i·y_i` (fixed random `w` given as `weights`) with central differences
/// of step `h`.
pub fn check_network(
    net: &Network<f64>,
    input: &Tensor<f64>,
    side: Option<&Tensor<f64>>,
    weights: &Tensor<f64>,
    h: f64,
) -> Result<GradCheckReport> {
    let loss = |n: &Network<f64>, x: &Tensor<f64>, s: Option<&Tensor<f64>>| -> Result<f64> {
        let y = n.predict(x, s)?;
        Ok(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>() + n.l2_loss())
    };
    let (_, cache) = net.forward(input, side)?;
    let back = net.backward(&cache, weights)?;
    let grads = back.params.expect("parameter gradients requested");

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
    };
    let mut probe = net.clone();
    for ti in 0..grads.len() {
        for ei in 0..grads.tensors()[ti].len() {
            let orig = probe.params().tensors()[ti].data()[ei];
            probe.params_mut().tensors_mut()[ti].data_mut()[ei] = orig + h;
            let up = loss(&probe, input, side)?;
            probe.params_mut().tensors_mut()[ti].data_mut()[ei] = orig - h;
            let down = loss(&probe, input, side)?;
            probe.params_mut().tensors_mut()[ti].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_error(grads.tensors()[ti].data()[ei], numeric);
            report.max_rel_error = report.max_rel_error.max(e);
            report.checked += 1;
        }
    }

    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = loss(net, &x, side)?;
        x.data_mut()[i] = orig - h;
        let down = loss(net, &x, side)?;
        x.data_mut()[i] = orig;
        let e = rel_error(back.input.data()[i], (up - down) / (2.0 * h));
        report.max_rel_error = report.max_rel_error.max(e);
        report.checked += 1;
    }

    if let (Some(s), Some(sg)) = (side, back.side.as_ref()) {
        let mut s = s.clone();
        for i in 0..s.len() {
            let orig = s.data()[i];
            s.data_mut()[i] = orig + h;
            let up = loss(net, input, Some(&s))?;
            s.data_mut()[i] = orig - h;
            let down = loss(net, input, Some(&s))?;
            s.data_mut()[i] = orig;
            let e = rel_error(sg.data()[i], (up - down) / (2.0 * h));
            report.max_rel_error = report.max_rel_error.max(e);
            report.checked += 1;
        }
    }
    Ok(report)
}
