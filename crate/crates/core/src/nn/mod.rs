//! Feed-forward network engine: dense and convolutional layers with analytic
//! backpropagation, Adam, target-network soft updates and a finite-difference
//! gradient checker.
//!
//! Training runs in `f32`; everything is generic over [`Scalar`] so gradient
//! verification can run the identical code path in `f64`.

mod checkpoint;
pub mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod params;
mod shared;
mod tensor;

pub use checkpoint::{read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, load_checkpoint};
pub use layers::{Activation, LayerKind, LayerSpec, Shape};
pub use loss::mse_loss;
pub use network::{Backward, ForwardCache, Network};
pub use optim::{soft_update, AdamConfig, AdamState};
pub use params::{glorot_init, ParamStore};
pub use shared::{RelaxedAdam, RelaxedParams};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("stale forward cache: parameters changed from version {cached} to {current}")]
    StaleCache { cached: u64, current: u64 },
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NnError {
    fn from(e: std::io::Error) -> Self {
        NnError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Floating-point element type of tensors, with a GEMM kernel.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    /// `C = alpha * op(A) * op(B) + beta * C`, all row-major.
    ///
    /// `op(A)` is `m×k`; when `trans_a` is set, `a` is stored `k×m`.
    /// `op(B)` is `k×n`; when `trans_b` is set, `b` is stored `n×k`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("representable")
    }
}

fn strides(trans: bool, rows: usize, cols: usize) -> (isize, isize) {
    // logical rows×cols; stored either as rows×cols or transposed
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

impl Scalar for f32 {
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: f32,
        a: &[f32],
        b: &[f32],
        beta: f32,
        c: &mut [f32],
    ) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        let (rsa, csa) = strides(trans_a, m, k);
        let (rsb, csb) = strides(trans_b, k, n);
        // SAFETY: bounds asserted above; strides describe the row-major
        // layouts of `a`, `b`, `c` exactly.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for f64 {
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        n: usize,
        k: usize,
        alpha: f64,
        a: &[f64],
        b: &[f64],
        beta: f64,
        c: &mut [f64],
    ) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        let (rsa, csa) = strides(trans_a, m, k);
        let (rsb, csb) = strides(trans_b, k, n);
        // SAFETY: see the f32 implementation.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}
