use rand::Rng;

use super::{AudioFeatureSequence, MotionSequence};
use crate::error::{dim_err, Error, Result};

/// Uniform window start in `[0, n - len]`.
pub fn random_crop_start(n: usize, len: usize, rng: &mut impl Rng) -> Result<usize> {
    if len == 0 {
        return Err(Error::Config("crop length must be positive".into()));
    }
    if n < len {
        return Err(Error::SequenceTooShort { needed: len, got: n });
    }
    Ok(if n == len { 0 } else { rng.random_range(0..=n - len) })
}

/// Cut the same `len`-frame window out of frame-aligned motion and features.
pub fn random_crop(
    motion: &MotionSequence,
    features: &AudioFeatureSequence,
    len: usize,
    rng: &mut impl Rng,
) -> Result<(MotionSequence, AudioFeatureSequence)> {
    if motion.n_frames() != features.n_frames() {
        return Err(dim_err!(
            "motion has {} frames but features have {}",
            motion.n_frames(),
            features.n_frames()
        ));
    }
    let start = random_crop_start(motion.n_frames(), len, rng)?;
    Ok((motion.window(start, len)?, features.window(start, len)?))
}
