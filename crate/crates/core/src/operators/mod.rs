//! Fixed linear operators: the observation map (blur + subsample), the
//! motion-gradient analysis operator, and orthogonal wavelet transforms.

mod motion;
mod observe;
mod wavelet;

pub use motion::MotionGradOp;
pub use observe::{separable_filter, ObservationOp};
pub use wavelet::{DictId, WaveletOp};
