use super::{NnError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Linear => T::one(),
        }
    }
}

/// Per-sample activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Shape::Image {
            channels,
            height,
            width,
        }
    }

    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Fully connected; the fan-in is the size of the incoming activation.
    Dense { outputs: usize },
    /// Zero-padded (`kernel / 2`) cross-correlation; input channels come from
    /// the incoming image shape.
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Flatten,
    /// Appends a side input of `width` values to a flat activation.
    Concat { width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    /// Weight decay `λ·‖W‖²` added to the loss (weights only, not biases).
    pub l2_penalty: f64,
}

impl LayerSpec {
    pub fn dense(outputs: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense { outputs },
            activation,
            l2_penalty: 0.0,
        }
    }

    pub fn conv2d(out_channels: usize, kernel: usize, stride: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                out_channels,
                kernel,
                stride,
            },
            activation,
            l2_penalty: 0.0,
        }
    }

    pub fn flatten() -> Self {
        Self {
            kind: LayerKind::Flatten,
            activation: Activation::Linear,
            l2_penalty: 0.0,
        }
    }

    pub fn concat(width: usize) -> Self {
        Self {
            kind: LayerKind::Concat { width },
            activation: Activation::Linear,
            l2_penalty: 0.0,
        }
    }

    pub fn with_l2(mut self, penalty: f64) -> Self {
        self.l2_penalty = penalty;
        self
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    /// Validates the spec against its input shape and returns the output shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if !(self.l2_penalty >= 0.0) {
            return Err(NnError::Config(format!(
                "l2 penalty must be nonnegative, got {}",
                self.l2_penalty
            )));
        }
        match (self.kind, input) {
            (LayerKind::Dense { outputs }, Shape::Flat(n)) => {
                if outputs == 0 || n == 0 {
                    return Err(NnError::Config("dense layer with zero width".into()));
                }
                Ok(Shape::Flat(outputs))
            }
            (LayerKind::Dense { .. }, Shape::Image { .. }) => Err(NnError::Config(
                "dense layer needs a flat input; insert a flatten layer".into(),
            )),
            (
                LayerKind::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                },
                Shape::Image { height, width, .. },
            ) => {
                if kernel % 2 == 0 {
                    return Err(NnError::Config(format!("kernel extent {kernel} must be odd")));
                }
                if stride == 0 {
                    return Err(NnError::Config("stride must be at least 1".into()));
                }
                if out_channels == 0 {
                    return Err(NnError::Config("conv layer with zero channels".into()));
                }
                let pad = kernel / 2;
                Ok(Shape::Image {
                    channels: out_channels,
                    height: (height + 2 * pad - kernel) / stride + 1,
                    width: (width + 2 * pad - kernel) / stride + 1,
                })
            }
            (LayerKind::Conv2d { .. }, Shape::Flat(_)) => {
                Err(NnError::Config("conv layer needs an image input".into()))
            }
            (LayerKind::Flatten, s) => Ok(Shape::Flat(s.size())),
            (LayerKind::Concat { width }, Shape::Flat(n)) => Ok(Shape::Flat(n + width)),
            (LayerKind::Concat { .. }, Shape::Image { .. }) => {
                Err(NnError::Config("concat needs a flat input".into()))
            }
        }
    }
}
