//! Binary regularizer: L1 sparsity plus a thresholded MSE-to-one term that
//! pulls entries above the threshold toward 1.

use crate::error::{Error, Result};
use crate::imgcore::{Grid, Mask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinRegConfig {
    pub v_thre: f64,
    pub alpha: f64,
}

impl Default for BinRegConfig {
    fn default() -> Self {
        BinRegConfig {
            v_thre: 0.5,
            alpha: 1.0,
        }
    }
}

impl BinRegConfig {
    pub fn new(v_thre: f64, alpha: f64) -> Result<Self> {
        let cfg = BinRegConfig { v_thre, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_thre > 0.0 && self.v_thre < 1.0) {
            return Err(Error::Parameter(format!(
                "v_thre must lie in (0, 1), got {}",
                self.v_thre
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// `H(v) = 1` for `v <= v_thre`, `v` above it, together with `H'`
/// (0 on the flat branch, including the tie, 1 above).
pub fn h_map(m: &Mask, v_thre: f64) -> (Grid, Grid) {
    let h = m.grid().map(|v| if v <= v_thre { 1.0 } else { v });
    let dh = m.grid().map(|v| if v <= v_thre { 0.0 } else { 1.0 });
    (h, dh)
}

/// Value and gradient of `||M||_1 + alpha * mean((H(M) - 1)^2)`.
pub fn loss_binary(m: &Mask, cfg: &BinRegConfig) -> (f64, Grid) {
    let n = m.grid().len().max(1) as f64;
    let (h, dh) = h_map(m, cfg.v_thre);
    let l1 = m.l1_norm();
    let mse = h.data().iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n;
    let value = l1 + cfg.alpha * mse;
    let grad = h
        .zip_map(&dh, |hv, d| 1.0 + cfg.alpha * 2.0 / n * (hv - 1.0) * d)
        .expect("h and dh share a shape");
    (value, grad)
}
