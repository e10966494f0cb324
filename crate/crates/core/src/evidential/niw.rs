//! Normal-Inverse-Wishart evidence over a 3D point and its Student-t marginal.

use alloc::format;

use nalgebra::Matrix3;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::student_t::{studentt_logpdf, StudentTMv};
use super::{LossConfig, UncertaintyDecomposition};
use crate::error::{CoreError, Result};
use crate::grid::Vec3;
use crate::special::{digamma, sigmoid, softplus};

/// Point dimension.
pub const D: f64 = 3.0;

/// Number of unconstrained head outputs per pixel.
pub const RAW_NIW_LEN: usize = 11;

/// Names of the raw coordinates, in [`RawNiw::to_array`] order.
pub const RAW_NIW_NAMES: [&str; RAW_NIW_LEN] = [
    "m_x", "m_y", "m_z", "kappa", "nu", "l11", "l21", "l22", "l31", "l32", "l33",
];

/// `(row, col)` of each packed lower-triangular entry.
const TRI: [(usize, usize); 6] = [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)];

#[derive(Clone, Debug, PartialEq)]
pub struct NiwParams {
    pub m: Vec3,
    pub kappa: f64,
    pub nu: f64,
    /// Lower Cholesky factor of the scale matrix `Psi`.
    pub chol_psi: Matrix3<f64>,
}

impl NiwParams {
    pub fn new(m: Vec3, kappa: f64, nu: f64, chol_psi: Matrix3<f64>) -> Result<Self> {
        let p = Self { m, kappa, nu, chol_psi };
        p.validate()?;
        Ok(p)
    }

    /// Builds from a full SPD scale matrix.
    pub fn from_psi(m: Vec3, kappa: f64, nu: f64, psi: &Matrix3<f64>) -> Result<Self> {
        let l = super::student_t::cholesky_lower(psi)?;
        Self::new(m, kappa, nu, l)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidInput("non-finite prior mean".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !(self.nu > D + 1.0 && self.nu.is_finite()) {
            return Err(CoreError::InvalidInput(format!("nu must be > 4, got {}", self.nu)));
        }
        for i in 0..3 {
            if !(self.chol_psi[(i, i)] > 0.0) {
                return Err(CoreError::InvalidInput(format!(
                    "Cholesky diagonal {i} must be > 0, got {}",
                    self.chol_psi[(i, i)]
                )));
            }
            for j in (i + 1)..3 {
                if self.chol_psi[(i, j)] != 0.0 {
                    return Err(CoreError::InvalidInput(
                        "Cholesky factor is not lower-triangular".into(),
                    ));
                }
            }
        }
        if !self.chol_psi.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidInput("non-finite Cholesky factor".into()));
        }
        Ok(())
    }

    pub fn psi(&self) -> Matrix3<f64> {
        self.chol_psi * self.chol_psi.transpose()
    }
}

/// Unconstrained head output for one pixel.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RawNiw {
    pub m_raw: Vec3,
    pub kappa_raw: f64,
    pub nu_raw: f64,
    /// Row-major lower triangle: `l11, l21, l22, l31, l32, l33`.
    pub l_raw: [f64; 6],
}

impl RawNiw {
    pub fn to_array(&self) -> [f64; RAW_NIW_LEN] {
        let mut a = [0.0; RAW_NIW_LEN];
        a[0] = self.m_raw.x;
        a[1] = self.m_raw.y;
        a[2] = self.m_raw.z;
        a[3] = self.kappa_raw;
        a[4] = self.nu_raw;
        a[5..].copy_from_slice(&self.l_raw);
        a
    }

    pub fn from_array(a: &[f64; RAW_NIW_LEN]) -> Self {
        let mut l_raw = [0.0; 6];
        l_raw.copy_from_slice(&a[5..]);
        Self {
            m_raw: Vec3::new(a[0], a[1], a[2]),
            kappa_raw: a[3],
            nu_raw: a[4],
            l_raw,
        }
    }
}

/// Maps unconstrained outputs to valid NIW parameters:
/// `kappa = softplus + eps`, `nu = (d+1) + softplus + eps`, Cholesky diagonal `softplus + eps`.
///
/// The floor on `nu` keeps `nu > d + 1` even when softplus underflows.
pub fn raw_to_niw(raw: &RawNiw, eps: f64) -> Result<NiwParams> {
    if let Some(i) = raw.to_array().iter().position(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "raw NIW parameter {} is not finite",
            RAW_NIW_NAMES[i]
        )));
    }
    let mut l = Matrix3::zeros();
    for (k, &(i, j)) in TRI.iter().enumerate() {
        l[(i, j)] = if i == j {
            softplus(raw.l_raw[k]) + eps
        } else {
            raw.l_raw[k]
        };
    }
    Ok(NiwParams {
        m: raw.m_raw,
        kappa: softplus(raw.kappa_raw) + eps,
        nu: (D + 1.0) + softplus(raw.nu_raw) + eps,
        chol_psi: l,
    })
}

/// Student-t marginal: `dof = nu - d + 1`, `scale = (kappa + 1) / (kappa * dof) * Psi`.
pub fn niw_predictive(p: &NiwParams) -> StudentTMv {
    let dof = p.nu - D + 1.0;
    let c = (p.kappa + 1.0) / (p.kappa * dof);
    StudentTMv {
        location: p.m,
        scale: p.psi() * c,
        dof,
    }
}

pub fn niw_nll(p: &NiwParams, x_gt: &Vec3) -> Result<f64> {
    Ok(-studentt_logpdf(&niw_predictive(p), x_gt)?)
}

/// `||x - m||^2 * (kappa + nu)`.
pub fn niw_evidence_reg(p: &NiwParams, x_gt: &Vec3) -> f64 {
    (x_gt - p.m).norm_squared() * (p.kappa + p.nu)
}

pub fn niw_loss(p: &NiwParams, x_gt: &Vec3, cfg: &LossConfig) -> Result<f64> {
    Ok(niw_nll(p, x_gt)? + cfg.lambda_evi * niw_evidence_reg(p, x_gt))
}

/// Value and gradient of `niw_loss(raw_to_niw(raw), x_gt)` with respect to all
/// eleven raw coordinates.
///
/// The marginal NLL is rewritten in the factor `L` of `Psi`, with `q = |L^-1 r|^2`
/// and `h = kappa / (kappa + 1)`:
/// `-lnG((nt+3)/2) + lnG(nt/2) + 3/2 ln(pi) + 3/2 ln(1/h) + sum ln L_ii + (nt+3)/2 ln(1 + h q)`,
/// where `nt = nu - 2`.
pub fn niw_loss_and_grad(raw: &RawNiw, x_gt: &Vec3, cfg: &LossConfig) -> Result<(f64, RawNiw)> {
    let p = raw_to_niw(raw, cfg.eps)?;
    let l = &p.chol_psi;
    let r = x_gt - p.m;
    let z = l
        .solve_lower_triangular(&r)
        .ok_or_else(|| CoreError::Numeric("singular Cholesky factor".into()))?;
    let y = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| CoreError::Numeric("singular Cholesky factor".into()))?;
    let q = z.norm_squared();
    let kappa = p.kappa;
    let nt = p.nu - D + 1.0;
    let a = 0.5 * (nt + D);
    let h = kappa / (kappa + 1.0);
    let w = 1.0 + h * q;

    let nll = niw_nll(&p, x_gt)?;
    let r2 = r.norm_squared();
    let evidence = kappa + p.nu;
    let value = nll + cfg.lambda_evi * r2 * evidence;

    let dnll_dq = a * h / w;
    // d/dm: dq/dm = -2 Psi^-1 r = -2 L^-T z
    let d_m = -2.0 * dnll_dq * y - 2.0 * cfg.lambda_evi * evidence * r;
    let d_kappa = -1.5 / (kappa * (kappa + 1.0)) + a * q / (w * (kappa + 1.0) * (kappa + 1.0)) + cfg.lambda_evi * r2;
    let d_nu = -0.5 * digamma(a) + 0.5 * digamma(0.5 * nt) + 0.5 * w.ln() + cfg.lambda_evi * r2;

    let mut l_raw = [0.0; 6];
    for (k, &(i, j)) in TRI.iter().enumerate() {
        // dq/dL_ij = -2 (L^-T z)_i z_j
        let mut g = -2.0 * dnll_dq * y[i] * z[j];
        if i == j {
            g += 1.0 / l[(i, i)];
            g *= sigmoid(raw.l_raw[k]);
        }
        l_raw[k] = g;
    }
    let grad = RawNiw {
        m_raw: d_m,
        kappa_raw: d_kappa * sigmoid(raw.kappa_raw),
        nu_raw: d_nu * sigmoid(raw.nu_raw),
        l_raw,
    };
    if let Some(i) = grad.to_array().iter().position(|v| !v.is_finite()) {
        return Err(CoreError::Numeric(format!(
            "non-finite gradient for {}",
            RAW_NIW_NAMES[i]
        )));
    }
    Ok((value, grad))
}

pub fn niw_loss_grad(raw: &RawNiw, x_gt: &Vec3, cfg: &LossConfig) -> Result<RawNiw> {
    niw_loss_and_grad(raw, x_gt, cfg).map(|(_, g)| g)
}

/// Aleatoric `Psi / (nu - d - 1)`, epistemic `Psi / (kappa (nu - d - 1))`, and their sum.
pub fn niw_decompose(p: &NiwParams) -> Result<UncertaintyDecomposition> {
    let denom = p.nu - D - 1.0;
    if !(denom > 0.0) {
        return Err(CoreError::Domain(format!(
            "moments undefined for nu = {} <= d + 1",
            p.nu
        )));
    }
    let psi = p.psi();
    let alea = psi / denom;
    let epi = psi / (p.kappa * denom);
    let total = alea + epi;
    Ok(UncertaintyDecomposition { alea, epi, total })
}
