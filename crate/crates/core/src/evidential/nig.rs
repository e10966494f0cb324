//! Scalar Normal-Inverse-Gamma evidence and the factorized per-axis variant.

use alloc::format;

use nalgebra::Matrix3;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::{LossConfig, UncertaintyDecomposition};
use crate::error::{CoreError, Result};
use crate::grid::Vec3;
use crate::special::{digamma, ln_gamma, sigmoid, softplus, LN_PI};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NigParams {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Gradient of a scalar NIG loss with respect to `(gamma, nu, alpha, beta)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NigGrad {
    pub gamma: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigParams {
    pub fn new(gamma: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { gamma, nu, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.nu, self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.nu > 0.0) || !(self.alpha > 1.0) || !(self.beta > 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "invalid NIG parameters {self:?} (need nu > 0, alpha > 1, beta > 0)"
            )));
        }
        Ok(())
    }
}

/// Unconstrained per-axis NIG head output.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RawNig {
    pub gamma_raw: f64,
    pub nu_raw: f64,
    pub alpha_raw: f64,
    pub beta_raw: f64,
}

/// `gamma` passes through; `nu = softplus + eps`, `alpha = 1 + softplus + eps`, `beta = softplus + eps`.
pub fn raw_to_nig(raw: &RawNig, eps: f64) -> Result<NigParams> {
    let vals = [raw.gamma_raw, raw.nu_raw, raw.alpha_raw, raw.beta_raw];
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "raw NIG parameter {} is not finite",
            ["gamma", "nu", "alpha", "beta"][i]
        )));
    }
    Ok(NigParams {
        gamma: raw.gamma_raw,
        nu: softplus(raw.nu_raw) + eps,
        alpha: 1.0 + softplus(raw.alpha_raw) + eps,
        beta: softplus(raw.beta_raw) + eps,
    })
}

/// Predictive `(mean, variance, dof)` of the induced Student-t.
pub fn nig_predictive(p: &NigParams) -> Result<(f64, f64, f64)> {
    if !(p.alpha > 1.0) {
        return Err(CoreError::Domain(format!(
            "variance undefined for alpha = {} <= 1",
            p.alpha
        )));
    }
    Ok((p.gamma, p.beta * (1.0 + p.nu) / (p.nu * (p.alpha - 1.0)), 2.0 * p.alpha))
}

/// Scale parameter `lambda = beta (1 + nu) / (nu alpha)` of the predictive Student-t.
pub fn nig_student_scale(p: &NigParams) -> f64 {
    p.beta * (1.0 + p.nu) / (p.nu * p.alpha)
}

pub fn nig_nll(p: &NigParams, y: f64) -> f64 {
    let omega = 2.0 * p.beta * (1.0 + p.nu);
    let r = y - p.gamma;
    0.5 * (LN_PI - p.nu.ln()) - p.alpha * omega.ln() + (p.alpha + 0.5) * (p.nu * r * r + omega).ln() + ln_gamma(p.alpha)
        - ln_gamma(p.alpha + 0.5)
}

pub fn nig_nll_grad(p: &NigParams, y: f64) -> NigGrad {
    let omega = 2.0 * p.beta * (1.0 + p.nu);
    let r = y - p.gamma;
    let s = p.nu * r * r + omega;
    let a5 = p.alpha + 0.5;
    NigGrad {
        gamma: -a5 * 2.0 * p.nu * r / s,
        nu: -0.5 / p.nu - p.alpha * 2.0 * p.beta / omega + a5 * (r * r + 2.0 * p.beta) / s,
        alpha: -omega.ln() + s.ln() + digamma(p.alpha) - digamma(p.alpha + 0.5),
        beta: -p.alpha / p.beta + a5 * 2.0 * (1.0 + p.nu) / s,
    }
}

/// `|y - gamma| (2 nu + alpha)`.
pub fn nig_evidence_reg(p: &NigParams, y: f64) -> f64 {
    (y - p.gamma).abs() * (2.0 * p.nu + p.alpha)
}

/// Gradient of [`nig_evidence_reg`]; the `|.|` subgradient at zero residual is taken as 0.
pub fn nig_evidence_reg_grad(p: &NigParams, y: f64) -> NigGrad {
    let r = y - p.gamma;
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    NigGrad {
        gamma: -sign * (2.0 * p.nu + p.alpha),
        nu: 2.0 * r.abs(),
        alpha: r.abs(),
        beta: 0.0,
    }
}

pub fn nig_loss(p: &NigParams, y: f64, cfg: &LossConfig) -> f64 {
    nig_nll(p, y) + cfg.lambda_evi * nig_evidence_reg(p, y)
}

/// Coordinate-averaged NIG loss under per-axis independence.
pub fn xyz_nig_loss(params: &[NigParams; 3], x_gt: &Vec3, cfg: &LossConfig) -> f64 {
    params
        .iter()
        .zip(x_gt.iter())
        .map(|(p, &y)| nig_loss(p, y, cfg))
        .sum::<f64>()
        / 3.0
}

/// Value and raw-space gradient of [`xyz_nig_loss`] composed with [`raw_to_nig`].
pub fn xyz_nig_loss_and_grad(raw: &[RawNig; 3], x_gt: &Vec3, cfg: &LossConfig) -> Result<(f64, [RawNig; 3])> {
    let mut grads = [RawNig::default(); 3];
    let mut value = 0.0;
    for c in 0..3 {
        let p = raw_to_nig(&raw[c], cfg.eps)?;
        let y = x_gt[c];
        value += nig_loss(&p, y, cfg) / 3.0;
        let g = nig_nll_grad(&p, y);
        let gr = nig_evidence_reg_grad(&p, y);
        let scale = 1.0 / 3.0;
        grads[c] = RawNig {
            gamma_raw: scale * (g.gamma + cfg.lambda_evi * gr.gamma),
            nu_raw: scale * (g.nu + cfg.lambda_evi * gr.nu) * sigmoid(raw[c].nu_raw),
            alpha_raw: scale * (g.alpha + cfg.lambda_evi * gr.alpha) * sigmoid(raw[c].alpha_raw),
            beta_raw: scale * (g.beta + cfg.lambda_evi * gr.beta) * sigmoid(raw[c].beta_raw),
        };
        let arr = [
            grads[c].gamma_raw,
            grads[c].nu_raw,
            grads[c].alpha_raw,
            grads[c].beta_raw,
        ];
        if let Some(i) = arr.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Numeric(format!(
                "non-finite gradient for axis {c} parameter {}",
                ["gamma", "nu", "alpha", "beta"][i]
            )));
        }
    }
    Ok((value, grads))
}

/// Per-axis `beta/(alpha-1)`, `beta/(nu (alpha-1))` and their sum, as diagonal matrices.
pub fn xyz_nig_decompose(params: &[NigParams; 3]) -> Result<UncertaintyDecomposition> {
    let mut alea = Vec3::zeros();
    let mut epi = Vec3::zeros();
    for (c, p) in params.iter().enumerate() {
        if !(p.alpha > 1.0) {
            return Err(CoreError::Domain(format!("alpha = {} <= 1 on axis {c}", p.alpha)));
        }
        alea[c] = p.beta / (p.alpha - 1.0);
        epi[c] = p.beta / (p.nu * (p.alpha - 1.0));
    }
    let alea = Matrix3::from_diagonal(&alea);
    let epi = Matrix3::from_diagonal(&epi);
    Ok(UncertaintyDecomposition {
        alea,
        epi,
        total: alea + epi,
    })
}
