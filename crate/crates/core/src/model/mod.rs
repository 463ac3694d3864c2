//! Illuminant estimation network with a contrastive projection head.
//!
//! The backbone `h` is a small strided conv stack with global average
//! pooling. Two heads sit on the pooled features: the illuminant head `f`
//! (dropout, linear, softplus, L2 normalization) and the projection head `g`
//! (three-layer MLP, L2 normalization) used only by the contrastive loss.
//!
//! Layers are generic over [`Real`] so training runs in `f32` while gradient
//! checks run the same code in `f64`.

mod adam;
mod layers;
mod loss;
mod net;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{illuminant_loss, illuminant_loss_rgb};
pub use net::{
    backward, backward_into, forward, forward_with_rng, prepare_input, ForwardCache, ForwardOutput,
    HeadGrads, InputTensor, ModelParams, ModelShape, TensorSpec,
};
pub use train::{
    estimate_from_image, estimate_illuminant, train, EpochLog, PhaseWeights, StepStats, TrainConfig,
    TrainLog, TrainMode, Trainer,
};

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of model tensors.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    /// `C ← α·A·B + β·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

fn check_gemm_bounds<T>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &[T], strides: [isize; 6]) {
    let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
        }
    };
    assert!(strides.iter().all(|s| *s >= 0));
    assert!(a.len() >= extent(m, k, strides[0], strides[1]));
    assert!(b.len() >= extent(k, n, strides[2], strides[3]));
    assert!(c.len() >= extent(m, n, strides[4], strides[5]));
}

impl Real for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a, b, c, [rsa, csa, rsb, csb, rsc, csc]);
        // SAFETY: bounds checked above for the non-negative strides used here.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), rsc, csc,
            );
        }
    }
}

impl Real for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        check_gemm_bounds(m, k, n, a, b, c, [rsa, csa, rsb, csb, rsc, csc]);
        // SAFETY: bounds checked above for the non-negative strides used here.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                c.as_mut_ptr(), rsc, csc,
            );
        }
    }
}
