//! Analytic loss gradients against central differences, per parameter group.

use evident_core::evidential::{
    niw_loss, niw_loss_and_grad, raw_to_nig, raw_to_niw, xyz_nig_loss, xyz_nig_loss_and_grad, LossConfig, RawNig,
    RawNiw, RAW_NIW_LEN,
};
use evident_core::grid::Vec3;
use evident_core::predictor::{hetero_loss, hetero_loss_grad, HeadKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EvidentError, Result};

/// Everything needed to reproduce one comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradDraw {
    pub head: HeadKind,
    pub raw: Vec<f64>,
    pub target: [f64; 3],
    pub loss: LossConfig,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub head: HeadKind,
    pub trials: usize,
    pub step: f64,
    pub tol: f64,
    pub groups: Vec<GroupError>,
    pub passed: bool,
    pub worst_rel_err: f64,
    pub worst_draw: Option<GradDraw>,
}

/// Parameter groups as (name, indices into the raw vector).
fn groups(head: HeadKind) -> Vec<(&'static str, Vec<usize>)> {
    match head {
        HeadKind::Niw => vec![
            ("mean", vec![0, 1, 2]),
            ("kappa", vec![3]),
            ("nu", vec![4]),
            ("chol_psi", (5..RAW_NIW_LEN).collect()),
        ],
        HeadKind::Nig => ["gamma", "nu", "alpha", "beta"]
            .iter()
            .enumerate()
            .map(|(k, &n)| (n, (0..3).map(|c| 4 * c + k).collect()))
            .collect(),
        HeadKind::Hetero => vec![("mean", vec![0, 1, 2]), ("log_var", vec![3, 4, 5])],
    }
}

fn raw_len(head: HeadKind) -> usize {
    match head {
        HeadKind::Niw => RAW_NIW_LEN,
        HeadKind::Nig => 12,
        HeadKind::Hetero => 6,
    }
}

fn unpack_nig(v: &[f64]) -> [RawNig; 3] {
    core::array::from_fn(|c| RawNig {
        gamma_raw: v[4 * c],
        nu_raw: v[4 * c + 1],
        alpha_raw: v[4 * c + 2],
        beta_raw: v[4 * c + 3],
    })
}

fn loss_at(d: &GradDraw, v: &[f64]) -> Result<f64> {
    let x = Vec3::from(d.target);
    Ok(match d.head {
        HeadKind::Niw => {
            let raw = RawNiw::from_array(v.try_into().expect("raw NIW length"));
            niw_loss(&raw_to_niw(&raw, d.loss.eps)?, &x, &d.loss)?
        }
        HeadKind::Nig => {
            let r = unpack_nig(v);
            let p = [
                raw_to_nig(&r[0], d.loss.eps)?,
                raw_to_nig(&r[1], d.loss.eps)?,
                raw_to_nig(&r[2], d.loss.eps)?,
            ];
            xyz_nig_loss(&p, &x, &d.loss)
        }
        HeadKind::Hetero => hetero_loss(&Vec3::new(v[0], v[1], v[2]), &Vec3::new(v[3], v[4], v[5]), &x),
    })
}

fn analytic(d: &GradDraw) -> Result<Vec<f64>> {
    let x = Vec3::from(d.target);
    Ok(match d.head {
        HeadKind::Niw => {
            let raw = RawNiw::from_array(d.raw.as_slice().try_into().expect("raw NIW length"));
            niw_loss_and_grad(&raw, &x, &d.loss)?.1.to_array().to_vec()
        }
        HeadKind::Nig => {
            let (_, g) = xyz_nig_loss_and_grad(&unpack_nig(&d.raw), &x, &d.loss)?;
            g.iter()
                .flat_map(|g| [g.gamma_raw, g.nu_raw, g.alpha_raw, g.beta_raw])
                .collect()
        }
        HeadKind::Hetero => {
            let (_, gm, gl) = hetero_loss_grad(
                &Vec3::new(d.raw[0], d.raw[1], d.raw[2]),
                &Vec3::new(d.raw[3], d.raw[4], d.raw[5]),
                &x,
            );
            vec![gm[0], gm[1], gm[2], gl[0], gl[1], gl[2]]
        }
    })
}

/// Relative error with an absolute floor so components near zero do not
/// dominate.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Per-group maximum relative error of one draw.
pub fn check_draw(d: &GradDraw) -> Result<Vec<GroupError>> {
    if d.raw.len() != raw_len(d.head) {
        return Err(EvidentError::Config(format!(
            "draw has {} raw values, the {} head needs {}",
            d.raw.len(),
            d.head.as_str(),
            raw_len(d.head)
        )));
    }
    if !(d.step > 0.0) {
        return Err(EvidentError::Config("finite-difference step must be positive".into()));
    }
    let g = analytic(d)?;
    let mut per = vec![0.0; g.len()];
    for k in 0..g.len() {
        let mut a = d.raw.clone();
        let mut b = d.raw.clone();
        a[k] += d.step;
        b[k] -= d.step;
        let num = (loss_at(d, &a)? - loss_at(d, &b)?) / (2.0 * d.step);
        per[k] = rel_err(g[k], num);
    }
    Ok(groups(d.head)
        .into_iter()
        .map(|(name, idx)| GroupError {
            group: name.to_string(),
            max_rel_err: idx.iter().map(|&i| per[i]).fold(0.0, f64::max),
        })
        .collect())
}

pub fn random_draw(head: HeadKind, rng: &mut ChaCha8Rng, loss: LossConfig, step: f64) -> GradDraw {
    let raw = (0..raw_len(head)).map(|_| rng.random_range(-1.5..1.5)).collect();
    let target = core::array::from_fn(|_| rng.random_range(-1.5..1.5));
    GradDraw {
        head,
        raw,
        target,
        loss,
        step,
    }
}

pub fn run_gradcheck(
    head: HeadKind,
    trials: usize,
    step: f64,
    tol: f64,
    seed: u64,
    loss: LossConfig,
) -> Result<GradcheckSummary> {
    if trials == 0 {
        return Err(EvidentError::Config("--trials must be >= 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(EvidentError::Config("--tol must be >= 0".into()));
    }
    loss.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<GroupError> = Vec::new();
    let mut worst: Option<(f64, GradDraw)> = None;
    for _ in 0..trials {
        let d = random_draw(head, &mut rng, loss, step);
        let errs = check_draw(&d)?;
        let m = errs.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
        if groups.is_empty() {
            groups = errs;
        } else {
            for (acc, e) in groups.iter_mut().zip(errs) {
                acc.max_rel_err = acc.max_rel_err.max(e.max_rel_err);
            }
        }
        if worst.as_ref().is_none_or(|(w, _)| m > *w) {
            worst = Some((m, d));
        }
    }
    let (worst_rel_err, draw) = worst.expect("at least one trial");
    let passed = worst_rel_err <= tol;
    Ok(GradcheckSummary {
        head,
        trials,
        step,
        tol,
        groups,
        passed,
        worst_rel_err,
        worst_draw: (!passed).then_some(draw),
    })
}
