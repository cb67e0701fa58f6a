use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cosine-annealed learning rate `½·lr0·(1 + cos(π·epoch/total))`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> Result<f64> {
    if total_epochs == 0 || epoch > total_epochs {
        return Err(Error::config(format!(
            "epoch {epoch} outside [0, {total_epochs}]"
        )));
    }
    if !(lr0 > 0.0 && lr0.is_finite()) {
        return Err(Error::config(format!("lr0 must be positive, got {lr0}")));
    }
    let lr = 0.5 * lr0 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos());
    // cos(π) is not exactly -1 in floating point
    Ok(lr.max(0.0))
}
