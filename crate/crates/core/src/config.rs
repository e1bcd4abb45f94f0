//! Solver parameters.

use serde::Serialize;

use crate::error::{DeblurError, Result};

/// Every tunable used by blind and non-blind deconvolution.
///
/// `gamma_init` and `beta_init` default to twice the corresponding L0 weight
/// when left unset, so changing `mu` or `lambda` moves them along.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Weight of the L0 penalty on the thresholded RFT response.
    pub lambda: f64,
    /// Weight of the L0 penalty on image gradients.
    pub mu: f64,
    /// Ridge weight in kernel estimation.
    pub alpha: f64,
    pub gamma_init: Option<f64>,
    pub beta_init: Option<f64>,
    /// Penalty multiplier applied after every inner splitting round.
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// Outer iterations per pyramid level.
    pub max_iter: usize,
    pub kernel_size: usize,
    pub min_kernel: usize,
    pub scale_ratio: f64,
    pub adam_lr: f64,
    pub adam_steps: usize,
    pub l0_eps: f64,
    /// Connected components lighter than this fraction of the heaviest one
    /// are erased from the kernel.
    pub cc_threshold: f64,
    pub bilateral_sigma_s: f64,
    pub bilateral_sigma_r: f64,
    /// Hyper-Laplacian prior weight for the final non-blind pass.
    pub nb_weight: f64,
    /// L0 gradient weight of the reference solve used for ringing
    /// suppression in the non-blind pass.
    pub nb_mu: f64,
    pub nb_exponent: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 3e-4,
            mu: 0.004,
            alpha: 2.0,
            gamma_init: None,
            beta_init: None,
            penalty_growth: 2.0,
            penalty_max: 1e5,
            max_iter: 5,
            kernel_size: 31,
            min_kernel: 3,
            #[allow(clippy::approx_constant)] // pinned default, not 1/sqrt(2)
            scale_ratio: 0.7071,
            adam_lr: 0.1,
            adam_steps: 100,
            l0_eps: 1e-3,
            cc_threshold: 0.1,
            bilateral_sigma_s: 5.0,
            bilateral_sigma_r: 0.1,
            nb_weight: 2e-3,
            nb_mu: 5e-4,
            nb_exponent: 0.6667,
        }
    }
}

impl SolverConfig {
    pub fn gamma_init(&self) -> f64 {
        self.gamma_init.unwrap_or(2.0 * self.mu)
    }

    pub fn beta_init(&self) -> f64 {
        self.beta_init.unwrap_or(2.0 * self.lambda)
    }

    /// Checks every invariant; the error names the offending key.
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("alpha", self.alpha),
            ("nb_weight", self.nb_weight),
            ("nb_mu", self.nb_mu),
        ];
        for (key, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DeblurError::config(key, "must be finite and >= 0"));
            }
        }
        for (key, v) in [("gamma_init", self.gamma_init()), ("beta_init", self.beta_init())] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DeblurError::config(key, "must be finite and >= 0"));
            }
        }
        if !(self.penalty_growth.is_finite() && self.penalty_growth > 1.0) {
            return Err(DeblurError::config("penalty_growth", "must exceed 1"));
        }
        if !(self.penalty_max.is_finite() && self.penalty_max > 0.0) {
            return Err(DeblurError::config("penalty_max", "must be positive"));
        }
        if self.max_iter < 1 {
            return Err(DeblurError::config("max_iter", "must be at least 1"));
        }
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return Err(DeblurError::config("kernel_size", "must be odd and >= 3"));
        }
        if self.min_kernel < 3 || self.min_kernel.is_multiple_of(2) {
            return Err(DeblurError::config("min_kernel", "must be odd and >= 3"));
        }
        if self.min_kernel > self.kernel_size {
            return Err(DeblurError::config("min_kernel", "must not exceed kernel_size"));
        }
        if !(self.scale_ratio > 0.0 && self.scale_ratio < 1.0) {
            return Err(DeblurError::config("scale_ratio", "must lie in (0, 1)"));
        }
        if !(self.adam_lr.is_finite() && self.adam_lr > 0.0) {
            return Err(DeblurError::config("adam_lr", "must be positive"));
        }
        if self.adam_steps < 1 {
            return Err(DeblurError::config("adam_steps", "must be at least 1"));
        }
        if !(self.l0_eps.is_finite() && self.l0_eps > 0.0) {
            return Err(DeblurError::config("l0_eps", "must be positive"));
        }
        if !(self.cc_threshold >= 0.0 && self.cc_threshold < 1.0) {
            return Err(DeblurError::config("cc_threshold", "must lie in [0, 1)"));
        }
        if !(self.bilateral_sigma_s.is_finite() && self.bilateral_sigma_s > 0.0) {
            return Err(DeblurError::config("bilateral_sigma_s", "must be positive"));
        }
        if self.bilateral_sigma_r.is_nan() || self.bilateral_sigma_r <= 0.0 {
            return Err(DeblurError::config("bilateral_sigma_r", "must be positive"));
        }
        if !(self.nb_exponent > 0.0 && self.nb_exponent <= 1.0) {
            return Err(DeblurError::config("nb_exponent", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = SolverConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.lambda, 3e-4);
        assert_eq!(cfg.mu, 0.004);
        assert_eq!(cfg.alpha, 2.0);
        assert_eq!(cfg.max_iter, 5);
        assert_eq!(cfg.gamma_init(), 0.008);
        assert_eq!(cfg.beta_init(), 6e-4);
    }

    #[test]
    fn penalty_init_follows_weights() {
        let cfg = SolverConfig {
            mu: 0.01,
            ..SolverConfig::default()
        };
        assert_eq!(cfg.gamma_init(), 0.02);
    }

    #[test]
    fn rejects_bad_growth_and_even_kernel() {
        let cfg = SolverConfig {
            penalty_growth: 0.5,
            ..SolverConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("penalty_growth"));

        let cfg = SolverConfig {
            kernel_size: 14,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("kernel_size"));
    }
}
