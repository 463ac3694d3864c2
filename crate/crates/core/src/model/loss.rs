use super::Real;
use crate::color_math::IlluminantRGB;
use crate::error::{Error, Result};

/// Angular loss in radians and its gradient with respect to `est`.
///
/// Near zero error the arccos derivative blows up; once `1 − c²` falls to a
/// few ulps the gradient is reported as zero.
pub fn illuminant_loss<T: Real>(est: &[T; 3], gt: &[T; 3]) -> Result<(T, [T; 3])> {
    let dot = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let ne = dot(est, est).sqrt();
    let ng = dot(gt, gt).sqrt();
    if !(ne > T::zero()) || !(ng > T::zero()) || !ne.is_finite() || !ng.is_finite() {
        return Err(Error::domain("angular loss needs nonzero finite vectors"));
    }
    let c = (dot(est, gt) / (ne * ng)).max(-T::one()).min(T::one());
    let loss = c.acos();
    let one_minus = T::one() - c * c;
    if one_minus <= T::epsilon() * T::of(16.0) {
        return Ok((loss, [T::zero(); 3]));
    }
    let scale = -T::one() / one_minus.sqrt();
    let grad = std::array::from_fn(|i| scale * (gt[i] / (ne * ng) - c * est[i] / (ne * ne)));
    Ok((loss, grad))
}

pub fn illuminant_loss_rgb(est: &IlluminantRGB, gt: &IlluminantRGB) -> Result<(f64, [f64; 3])> {
    illuminant_loss(&est.rgb(), &gt.rgb())
}
