//! Closed-form evidential distributions, their Student-t marginals, losses and
//! analytic gradients, and the aleatoric/epistemic split.

use core::str::FromStr;

use alloc::format;
use nalgebra::Matrix3;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{CoreError, Result};

pub mod nig;
pub mod niw;
pub mod student_t;

pub use nig::{
    nig_evidence_reg, nig_evidence_reg_grad, nig_loss, nig_nll, nig_nll_grad, nig_predictive, raw_to_nig,
    xyz_nig_decompose, xyz_nig_loss, xyz_nig_loss_and_grad, NigGrad, NigParams, RawNig,
};
pub use niw::{
    niw_decompose, niw_evidence_reg, niw_loss, niw_loss_and_grad, niw_loss_grad, niw_nll, niw_predictive, raw_to_niw,
    NiwParams, RawNiw, RAW_NIW_LEN, RAW_NIW_NAMES,
};
pub use student_t::{studentt1_logpdf, studentt_logpdf, StudentTMv};

/// Default numeric floor added after softplus.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossConfig {
    pub lambda_evi: f64,
    /// Overall weight of the uncertainty loss.
    pub lambda_uq: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_evi: 1e-3,
            lambda_uq: 0.05,
            eps: DEFAULT_EPS,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_evi >= 0.0) || !(self.lambda_uq >= 0.0) || !(self.eps > 0.0) {
            return Err(CoreError::Config(format!("invalid loss config {self:?}")));
        }
        Ok(())
    }
}

/// Aleatoric, epistemic and total covariance of one point.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyDecomposition {
    pub alea: Matrix3<f64>,
    pub epi: Matrix3<f64>,
    pub total: Matrix3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ReadoutMode {
    Alea,
    Epi,
    Total,
    Conf,
}

impl ReadoutMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReadoutMode::Alea => "alea",
            ReadoutMode::Epi => "epi",
            ReadoutMode::Total => "total",
            ReadoutMode::Conf => "conf",
        }
    }
}

impl FromStr for ReadoutMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alea" => Ok(Self::Alea),
            "epi" => Ok(Self::Epi),
            "total" => Ok(Self::Total),
            "conf" => Ok(Self::Conf),
            other => Err(CoreError::Usage(format!("unknown readout mode '{other}'"))),
        }
    }
}

/// What a scalar uncertainty is read from.
#[derive(Clone, Copy, Debug)]
pub enum ReadoutSource<'a> {
    Decomposition(&'a UncertaintyDecomposition),
    /// A heuristic confidence in `[0, 1]`.
    Confidence(f64),
}

/// Scalar uncertainty (larger = less reliable): trace of the selected matrix, or
/// `-ln(conf + eps)` for confidence inputs.
pub fn uncertainty_readout(source: ReadoutSource<'_>, mode: ReadoutMode, eps: f64) -> Result<f64> {
    match (source, mode) {
        (ReadoutSource::Decomposition(d), ReadoutMode::Alea) => Ok(d.alea.trace()),
        (ReadoutSource::Decomposition(d), ReadoutMode::Epi) => Ok(d.epi.trace()),
        (ReadoutSource::Decomposition(d), ReadoutMode::Total) => Ok(d.total.trace()),
        (ReadoutSource::Confidence(c), ReadoutMode::Conf) => Ok(-(c + eps).ln()),
        (ReadoutSource::Confidence(_), m) => Err(CoreError::Usage(format!(
            "readout '{}' needs a covariance decomposition, got a confidence",
            m.as_str()
        ))),
        (ReadoutSource::Decomposition(_), ReadoutMode::Conf) => {
            Err(CoreError::Usage("readout 'conf' needs a confidence value".into()))
        }
    }
}
