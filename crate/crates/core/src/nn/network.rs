use super::params::glorot_init;
use super::{LayerKind, LayerSpec, NnError, ParamStore, Result, Scalar, Shape, Tensor};

#[derive(Debug, Clone)]
struct LayerPlan {
    spec: LayerSpec,
    input: Shape,
    output: Shape,
    /// Index of the weight tensor in the store; the bias follows it.
    param_index: Option<usize>,
}

/// A chain of layers and the parameters they own.
///
/// Activations are batch-major: row `i` of every tensor is sample `i`, image
/// activations are flattened channel-major (`c, h, w`).
#[derive(Debug, Clone)]
pub struct Network<T> {
    input_shape: Shape,
    plans: Vec<LayerPlan>,
    params: ParamStore<T>,
}

/// Activations recorded by [`Network::forward`], consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    version: u64,
    batch: usize,
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    /// Parameter gradients, aligned with [`Network::params`]; `None` when
    /// only input gradients were requested.
    pub params: Option<ParamStore<T>>,
    pub input: Tensor<T>,
    /// Gradient of the side input of a concat layer, if any.
    pub side: Option<Tensor<T>>,
}

fn plan_layers<T: Scalar>(
    input: Shape,
    specs: &[LayerSpec],
) -> Result<(Vec<LayerPlan>, Vec<(String, Vec<usize>)>)> {
    let mut plans = Vec::with_capacity(specs.len());
    let mut shapes = Vec::new();
    let mut shape = input;
    let mut concat_seen = false;
    for (i, spec) in specs.iter().enumerate() {
        let output = spec.output_shape(shape)?;
        if let LayerKind::Concat { .. } = spec.kind {
            if concat_seen {
                return Err(NnError::Config("at most one concat layer is supported".into()));
            }
            concat_seen = true;
        }
        let param_index = if spec.has_params() {
            let idx = shapes.len();
            let probe: ParamStore<T> = glorot_init(spec, shape, 0)?;
            for (name, t) in probe.iter() {
                shapes.push((format!("l{i}.{name}"), t.shape().to_vec()));
            }
            Some(idx)
        } else {
            None
        };
        plans.push(LayerPlan {
            spec: *spec,
            input: shape,
            output,
            param_index,
        });
        shape = output;
    }
    if plans.is_empty() {
        return Err(NnError::Config("network needs at least one layer".into()));
    }
    Ok((plans, shapes))
}

impl<T: Scalar> Network<T> {
    /// Builds the network with Glorot-initialised parameters. Each layer gets
    /// its own seed derived from `seed` and the layer index.
    pub fn new(input: Shape, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let (plans, _) = plan_layers::<T>(input, specs)?;
        let mut params = ParamStore::empty();
        for (i, plan) in plans.iter().enumerate() {
            let layer_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(i as u64 + 1);
            let p: ParamStore<T> = glorot_init(&plan.spec, plan.input, layer_seed)?;
            for (name, t) in p.iter() {
                params.push(format!("l{i}.{name}"), t.clone())?;
            }
        }
        Ok(Self {
            input_shape: input,
            plans,
            params,
        })
    }

    /// Builds the network around existing parameters (e.g. from a checkpoint).
    pub fn from_params(input: Shape, specs: &[LayerSpec], params: ParamStore<T>) -> Result<Self> {
        let (plans, shapes) = plan_layers::<T>(input, specs)?;
        if shapes.len() != params.len() {
            return Err(NnError::Shape(format!(
                "architecture needs {} tensors, store has {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(params.tensors()) {
            if t.shape() != shape.as_slice() {
                return Err(NnError::Shape(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            input_shape: input,
            plans,
            params,
        })
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn input_size(&self) -> usize {
        self.input_shape.size()
    }

    pub fn output_size(&self) -> usize {
        self.plans.last().map(|p| p.output.size()).unwrap_or(0)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.plans.iter().map(|p| p.spec).collect()
    }

    /// Width of the side input expected by a concat layer.
    pub fn side_width(&self) -> Option<usize> {
        self.plans.iter().find_map(|p| match p.spec.kind {
            LayerKind::Concat { width } => Some(width),
            _ => None,
        })
    }

    /// Same architecture with different parameter values.
    pub fn with_params(&self, params: ParamStore<T>) -> Result<Self> {
        self.params.check_aligned(&params)?;
        Ok(Self {
            input_shape: self.input_shape,
            plans: self.plans.clone(),
            params,
        })
    }

    /// `Σ λ·‖W‖²` over layers with a weight penalty.
    pub fn l2_loss(&self) -> T {
        let mut total = T::zero();
        for plan in &self.plans {
            if let (Some(idx), true) = (plan.param_index, plan.spec.l2_penalty > 0.0) {
                total += T::of(plan.spec.l2_penalty) * self.params.tensors()[idx].sq_norm();
            }
        }
        total
    }

    fn check_inputs(&self, input: &Tensor<T>, side: Option<&Tensor<T>>) -> Result<usize> {
        let batch = input.rows();
        if input.row_len() != self.input_size() {
            return Err(NnError::Shape(format!(
                "network expects {} inputs per sample, got {}",
                self.input_size(),
                input.row_len()
            )));
        }
        match (self.side_width(), side) {
            (None, None) => {}
            (Some(w), Some(s)) => {
                if s.rows() != batch || s.row_len() != w {
                    return Err(NnError::Shape(format!(
                        "side input must be {batch}x{w}, got {:?}",
                        s.shape()
                    )));
                }
            }
            (Some(w), None) => {
                return Err(NnError::Shape(format!("missing side input of width {w}")))
            }
            (None, Some(_)) => {
                return Err(NnError::Shape("network takes no side input".into()))
            }
        }
        Ok(batch)
    }

    fn layer_forward(&self, plan: &LayerPlan, x: &[T], side: Option<&Tensor<T>>, batch: usize) -> Vec<T> {
        let out_size = plan.output.size();
        let mut y = match plan.spec.kind {
            LayerKind::Dense { outputs } => {
                let idx = plan.param_index.expect("dense has params");
                let w = self.params.tensors()[idx].data();
                let b = self.params.tensors()[idx + 1].data();
                let n_in = plan.input.size();
                let mut y = Vec::with_capacity(batch * outputs);
                for _ in 0..batch {
                    y.extend_from_slice(b);
                }
                T::gemm(false, false, batch, outputs, n_in, T::one(), x, w, T::one(), &mut y);
                y
            }
            LayerKind::Conv2d { .. } => self.conv_forward(plan, x, batch),
            LayerKind::Flatten => x.to_vec(),
            LayerKind::Concat { width } => {
                let side = side.expect("checked in check_inputs").data();
                let n_in = plan.input.size();
                let mut y = Vec::with_capacity(batch * out_size);
                for i in 0..batch {
                    y.extend_from_slice(&x[i * n_in..(i + 1) * n_in]);
                    y.extend_from_slice(&side[i * width..(i + 1) * width]);
                }
                y
            }
        };
        if plan.spec.has_params() {
            let act = plan.spec.activation;
            y.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        y
    }

    /// Runs the network and records the activations needed by `backward`.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        side: Option<&Tensor<T>>,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let batch = self.check_inputs(input, side)?;
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.plans.len() + 1);
        acts.push(input.data().to_vec());
        for plan in &self.plans {
            let y = self.layer_forward(plan, acts.last().expect("nonempty"), side, batch);
            acts.push(y);
        }
        let out = Tensor::matrix(batch, self.output_size(), acts.last().expect("nonempty").clone())?;
        Ok((
            out,
            ForwardCache {
                version: self.params.version(),
                batch,
                acts,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: &Tensor<T>, side: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let batch = self.check_inputs(input, side)?;
        let mut x = input.data().to_vec();
        for plan in &self.plans {
            x = self.layer_forward(plan, &x, side, batch);
        }
        Tensor::matrix(batch, self.output_size(), x)
    }

    /// Backpropagates `grad_out` (dLoss/dOutput), including the weight
    /// penalty term `2·λ·W` on penalised layers.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<Backward<T>> {
        self.backward_impl(cache, grad_out, true)
    }

    /// Input (and side input) gradients only; parameter gradients are skipped.
    pub fn backward_inputs(&self, cache: &ForwardCache<T>, grad_out: &Tensor<T>) -> Result<Backward<T>> {
        self.backward_impl(cache, grad_out, false)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &Tensor<T>,
        want_params: bool,
    ) -> Result<Backward<T>> {
        if cache.version != self.params.version() {
            return Err(NnError::StaleCache {
                cached: cache.version,
                current: self.params.version(),
            });
        }
        if cache.acts.len() != self.plans.len() + 1 {
            return Err(NnError::Shape("cache does not belong to this network".into()));
        }
        let batch = cache.batch;
        if grad_out.len() != batch * self.output_size() {
            return Err(NnError::Shape(format!(
                "output gradient must have {} values, got {}",
                batch * self.output_size(),
                grad_out.len()
            )));
        }
        let mut grads = want_params.then(|| self.params.zeros_like());
        let mut side_grad = None;
        let mut g = grad_out.data().to_vec();
        for (i, plan) in self.plans.iter().enumerate().rev() {
            let x = &cache.acts[i];
            let y = &cache.acts[i + 1];
            if plan.spec.has_params() {
                let act = plan.spec.activation;
                for (gv, &yv) in g.iter_mut().zip(y.iter()) {
                    *gv *= act.derivative_from_output(yv);
                }
            }
            g = match plan.spec.kind {
                LayerKind::Dense { outputs } => {
                    let idx = plan.param_index.expect("dense has params");
                    let w = self.params.tensors()[idx].data();
                    let n_in = plan.input.size();
                    if let Some(grads) = grads.as_mut() {
                        let (gw, rest) = grads.tensors_mut().split_at_mut(idx + 1);
                        let gw = gw[idx].data_mut();
                        T::gemm(true, false, n_in, outputs, batch, T::one(), x, &g, T::zero(), gw);
                        if plan.spec.l2_penalty > 0.0 {
                            let two_l = T::of(2.0 * plan.spec.l2_penalty);
                            for (d, &wv) in gw.iter_mut().zip(w) {
                                *d += two_l * wv;
                            }
                        }
                        let gb = rest[0].data_mut();
                        for row in g.chunks_exact(outputs) {
                            for (d, &v) in gb.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                    let mut dx = vec![T::zero(); batch * n_in];
                    T::gemm(false, true, batch, n_in, outputs, T::one(), &g, w, T::zero(), &mut dx);
                    dx
                }
                LayerKind::Conv2d { .. } => self.conv_backward(plan, x, &g, batch, grads.as_mut()),
                LayerKind::Flatten => g,
                LayerKind::Concat { width } => {
                    let n_in = plan.input.size();
                    let n_out = n_in + width;
                    let mut dx = Vec::with_capacity(batch * n_in);
                    let mut ds = Vec::with_capacity(batch * width);
                    for row in g.chunks_exact(n_out) {
                        dx.extend_from_slice(&row[..n_in]);
                        ds.extend_from_slice(&row[n_in..]);
                    }
                    side_grad = Some(Tensor::matrix(batch, width, ds)?);
                    dx
                }
            };
        }
        Ok(Backward {
            params: grads,
            input: Tensor::matrix(batch, self.input_size(), g)?,
            side: side_grad,
        })
    }

    fn conv_dims(plan: &LayerPlan) -> ConvDims {
        let (LayerKind::Conv2d { kernel, stride, .. }, Shape::Image { channels, height, width }, Shape::Image { channels: oc, height: oh, width: ow }) =
            (plan.spec.kind, plan.input, plan.output)
        else {
            unreachable!("conv plan has image shapes")
        };
        ConvDims {
            c: channels,
            h: height,
            w: width,
            oc,
            oh,
            ow,
            k: kernel,
            s: stride,
            pad: kernel / 2,
        }
    }

    fn conv_forward(&self, plan: &LayerPlan, x: &[T], batch: usize) -> Vec<T> {
        let d = Self::conv_dims(plan);
        let idx = plan.param_index.expect("conv has params");
        let w = self.params.tensors()[idx].data();
        let b = self.params.tensors()[idx + 1].data();
        let (in_size, out_size, p, ckk) = (d.c * d.h * d.w, d.oc * d.oh * d.ow, d.oh * d.ow, d.c * d.k * d.k);
        let mut cols = vec![T::zero(); ckk * p];
        let mut y = vec![T::zero(); batch * out_size];
        for n in 0..batch {
            im2col(&d, &x[n * in_size..(n + 1) * in_size], &mut cols);
            let out = &mut y[n * out_size..(n + 1) * out_size];
            for (ch, row) in out.chunks_exact_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = b[ch]);
            }
            T::gemm(false, false, d.oc, p, ckk, T::one(), w, &cols, T::one(), out);
        }
        y
    }

    /// `g` holds dLoss/dPreActivation for the conv output.
    fn conv_backward(
        &self,
        plan: &LayerPlan,
        x: &[T],
        g: &[T],
        batch: usize,
        grads: Option<&mut ParamStore<T>>,
    ) -> Vec<T> {
        let d = Self::conv_dims(plan);
        let idx = plan.param_index.expect("conv has params");
        let w = self.params.tensors()[idx].data();
        let (in_size, out_size, p, ckk) = (d.c * d.h * d.w, d.oc * d.oh * d.ow, d.oh * d.ow, d.c * d.k * d.k);
        let mut cols = vec![T::zero(); ckk * p];
        let mut dcols = vec![T::zero(); ckk * p];
        let mut dx = vec![T::zero(); batch * in_size];
        let mut grads = grads;
        for n in 0..batch {
            let gn = &g[n * out_size..(n + 1) * out_size];
            if let Some(grads) = grads.as_deref_mut() {
                im2col(&d, &x[n * in_size..(n + 1) * in_size], &mut cols);
                let (gw, rest) = grads.tensors_mut().split_at_mut(idx + 1);
                T::gemm(false, true, d.oc, ckk, p, T::one(), gn, &cols, T::one(), gw[idx].data_mut());
                let gb = rest[0].data_mut();
                for (ch, row) in gn.chunks_exact(p).enumerate() {
                    gb[ch] += row.iter().copied().sum::<T>();
                }
            }
            T::gemm(true, false, ckk, p, d.oc, T::one(), w, gn, T::zero(), &mut dcols);
            col2im(&d, &dcols, &mut dx[n * in_size..(n + 1) * in_size]);
        }
        if let (Some(grads), true) = (grads, plan.spec.l2_penalty > 0.0) {
            let two_l = T::of(2.0 * plan.spec.l2_penalty);
            let gw = grads.tensors_mut()[idx].data_mut();
            for (dv, &wv) in gw.iter_mut().zip(w) {
                *dv += two_l * wv;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    oh: usize,
    ow: usize,
    k: usize,
    s: usize,
    pad: usize,
}

/// Unfolds one sample into `[c·k·k, oh·ow]` patch columns.
fn im2col<T: Scalar>(d: &ConvDims, x: &[T], cols: &mut [T]) {
    let p = d.oh * d.ow;
    for c in 0..d.c {
        for ki in 0..d.k {
            for kj in 0..d.k {
                let row = (c * d.k + ki) * d.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oh in 0..d.oh {
                    let ih = (oh * d.s + ki) as isize - d.pad as isize;
                    let line = &mut dst[oh * d.ow..(oh + 1) * d.ow];
                    if ih < 0 || ih >= d.h as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &x[(c * d.h + ih as usize) * d.w..(c * d.h + ih as usize + 1) * d.w];
                    for (ow, v) in line.iter_mut().enumerate() {
                        let iw = (ow * d.s + kj) as isize - d.pad as isize;
                        *v = if iw < 0 || iw >= d.w as isize {
                            T::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
fn col2im<T: Scalar>(d: &ConvDims, cols: &[T], dx: &mut [T]) {
    let p = d.oh * d.ow;
    for c in 0..d.c {
        for ki in 0..d.k {
            for kj in 0..d.k {
                let row = (c * d.k + ki) * d.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oh in 0..d.oh {
                    let ih = (oh * d.s + ki) as isize - d.pad as isize;
                    if ih < 0 || ih >= d.h as isize {
                        continue;
                    }
                    let base = (c * d.h + ih as usize) * d.w;
                    for ow in 0..d.ow {
                        let iw = (ow * d.s + kj) as isize - d.pad as isize;
                        if iw >= 0 && iw < d.w as isize {
                            dx[base + iw as usize] += src[oh * d.ow + ow];
                        }
                    }
                }
            }
        }
    }
}
