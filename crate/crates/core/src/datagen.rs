//! Synthetic piecewise-planar scenes with heteroscedastic noise and hard regions.
//!
//! The "frozen backbone" prediction is the ground truth plus per-pixel Gaussian
//! noise whose scale is `base_sigma` outside the hard region and
//! `hard_region_sigma` inside it. Features expose the pixel position, local
//! geometry and a noisy copy of the log noise scale, so the noise level is
//! learnable but the realized error is not.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::grid::{Grid, Mask, PointMap, ScalarMap, Vec3};
use crate::metrics::ring_band;

/// Number of informative feature channels; extra channels are noise.
pub const INFORMATIVE_FEATURES: usize = 8;
/// Standard deviation of the log-noise proxy feature.
pub const PROXY_LOG_NOISE: f64 = 0.1;
/// Radius of the noisy boundary band for [`HardRegionShape::ObjectWithBoundary`].
pub const OBJECT_RING_RADIUS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum HardRegionShape {
    /// Thresholded sum of random Gaussian bumps.
    Blob,
    /// A straight band at a random angle.
    Band,
    /// An elliptical object; the noise sits in the band around its boundary.
    ObjectWithBoundary,
}

impl HardRegionShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            HardRegionShape::Blob => "blob",
            HardRegionShape::Band => "band",
            HardRegionShape::ObjectWithBoundary => "object-with-boundary",
        }
    }
}

impl FromStr for HardRegionShape {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blob" => Ok(Self::Blob),
            "band" => Ok(Self::Band),
            "object-with-boundary" | "object" => Ok(Self::ObjectWithBoundary),
            other => Err(CoreError::Usage(format!("unknown hard-region shape '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub n_planes: usize,
    pub base_sigma: f64,
    pub hard_region_sigma: f64,
    pub hard_region_fraction: f64,
    pub feature_dim: usize,
    pub seed: u64,
    pub hard_region_shape: HardRegionShape,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            n_planes: 6,
            base_sigma: 0.01,
            hard_region_sigma: 0.05,
            hard_region_fraction: 0.3,
            feature_dim: INFORMATIVE_FEATURES,
            seed: 0,
            hard_region_shape: HardRegionShape::Blob,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Usage(format!("scene config: {m}")));
        if self.height < 8 || self.width < 8 {
            return bad("height and width must be >= 8");
        }
        if self.n_planes < 1 {
            return bad("n_planes must be >= 1");
        }
        if !(self.base_sigma > 0.0) || !(self.hard_region_sigma > 0.0) {
            return bad("sigmas must be positive");
        }
        if !(0.0..1.0).contains(&self.hard_region_fraction) {
            return bad("hard_region_fraction must be in [0, 1)");
        }
        if self.feature_dim < 1 {
            return bad("feature_dim must be >= 1");
        }
        Ok(())
    }
}

/// One generated view.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample {
    pub features: Grid,
    pub gt: PointMap,
    pub base_pred: PointMap,
    pub mask: Mask,
    pub noise_sigma_map: ScalarMap,
    pub hard_mask: Mask,
}

impl SceneSample {
    pub fn height(&self) -> usize {
        self.gt.height()
    }

    pub fn width(&self) -> usize {
        self.gt.width()
    }

    /// Checks that every map has the same `H x W` and the geometry is finite.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let ok = self.features.same_dims(h, w)
            && self.base_pred.same_dims(h, w)
            && (self.mask.height(), self.mask.width()) == (h, w)
            && (self.noise_sigma_map.height(), self.noise_sigma_map.width()) == (h, w)
            && (self.hard_mask.height(), self.hard_mask.width()) == (h, w);
        if !ok {
            return Err(CoreError::Usage(format!("scene sample maps are not all {h}x{w}")));
        }
        let finite = |p: &PointMap| p.points().iter().all(|x| x.iter().all(|v| v.is_finite()));
        if !self.features.is_finite() || !finite(&self.gt) || !finite(&self.base_pred) {
            return Err(CoreError::InvalidInput(
                "scene sample contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

struct Plane {
    seed_px: (f64, f64),
    // inverse depth = a + b * xn + c * yn in normalized camera coordinates
    a: f64,
    b: f64,
    c: f64,
}

/// Values at or above the `q`-quantile (by sorted position) of `v`.
fn top_fraction(v: &[f64], fraction: f64) -> Vec<bool> {
    let n = v.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    if k == 0 {
        return vec![false; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut out = vec![false; n];
    for &i in &order[..k] {
        out[i] = true;
    }
    out
}

fn hard_region(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let (h, w) = (cfg.height, cfg.width);
    let frac = cfg.hard_region_fraction;
    let diag = ((h * h + w * w) as f64).sqrt();
    match cfg.hard_region_shape {
        HardRegionShape::Blob => {
            let bumps: Vec<(f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.random_range(0.0..w as f64),
                        rng.random_range(0.0..h as f64),
                        rng.random_range(0.08..0.2) * diag,
                    )
                })
                .collect();
            let field: Vec<f64> = (0..h * w)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    bumps
                        .iter()
                        .map(|&(cx, cy, s)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp())
                        .sum()
                })
                .collect();
            top_fraction(&field, frac)
        }
        HardRegionShape::Band => {
            let theta = rng.random_range(0.0..core::f64::consts::PI);
            let (cx, cy) = (
                rng.random_range(0.3..0.7) * w as f64,
                rng.random_range(0.3..0.7) * h as f64,
            );
            let (nx, ny) = (theta.cos(), theta.sin());
            let closeness: Vec<f64> = (0..h * w)
                .map(|i| -(((i % w) as f64 - cx) * nx + ((i / w) as f64 - cy) * ny).abs())
                .collect();
            top_fraction(&closeness, frac)
        }
        HardRegionShape::ObjectWithBoundary => {
            if frac == 0.0 {
                return vec![false; h * w];
            }
            // Ellipse with area ~ fraction of the image, fully inside the frame when possible.
            let area = frac * (h * w) as f64;
            let aspect = rng.random_range(0.6..1.6);
            let ra = (area * aspect / core::f64::consts::PI).sqrt().min(0.45 * w as f64);
            let rb = (area / (aspect * core::f64::consts::PI)).sqrt().min(0.45 * h as f64);
            let cx = rng.random_range(ra.min(0.5 * w as f64)..=(w as f64 - ra).max(0.5 * w as f64));
            let cy = rng.random_range(rb.min(0.5 * h as f64)..=(h as f64 - rb).max(0.5 * h as f64));
            (0..h * w)
                .map(|i| {
                    let (x, y) = ((i % w) as f64 + 0.5 - cx, (i / w) as f64 + 0.5 - cy);
                    (x / ra).powi(2) + (y / rb).powi(2) <= 1.0
                })
                .collect()
        }
    }
}

/// Generates one scene; identical configs give bitwise-identical samples.
pub fn generate_scene(cfg: &SceneConfig) -> Result<SceneSample> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let n = h * w;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Pinhole camera with a ~53 degree horizontal field of view.
    let f = w as f64;
    let (cx, cy) = (0.5 * w as f64, 0.5 * h as f64);
    let planes: Vec<Plane> = (0..cfg.n_planes)
        .map(|_| {
            let z0: f64 = rng.random_range(0.8..2.5);
            Plane {
                seed_px: (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)),
                a: 1.0 / z0,
                b: rng.random_range(-0.25..0.25) / z0,
                c: rng.random_range(-0.25..0.25) / z0,
            }
        })
        .collect();

    let mut region = vec![0usize; n];
    let mut gt = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for i in 0..n {
        let (u, v) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
        let k = (0..planes.len())
            .min_by(|&a, &b| {
                let da = (u - planes[a].seed_px.0).powi(2) + (v - planes[a].seed_px.1).powi(2);
                let db = (u - planes[b].seed_px.0).powi(2) + (v - planes[b].seed_px.1).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        region[i] = k;
        let p = &planes[k];
        let (xn, yn) = ((u - cx) / f, (v - cy) / f);
        let z = (1.0 / (p.a + p.b * xn + p.c * yn)).clamp(0.3, 3.0);
        gt.push(Vec3::new(xn * z, yn * z, z));
        // a Z + b X + c Y = 1 on the plane; orient the normal towards the camera.
        let nrm = Vec3::new(p.b, p.c, p.a).normalize();
        normals.push(-nrm);
    }

    let hard = hard_region(cfg, &mut rng);
    let noisy: Vec<bool> = match cfg.hard_region_shape {
        HardRegionShape::ObjectWithBoundary => ring_band(&Mask::new(h, w, hard.clone())?, OBJECT_RING_RADIUS)?
            .values()
            .to_vec(),
        _ => hard.clone(),
    };
    let sigma: Vec<f64> = noisy
        .iter()
        .map(|&b| if b { cfg.hard_region_sigma } else { cfg.base_sigma })
        .collect();

    let base_pred: Vec<Vec3> = gt
        .iter()
        .zip(&sigma)
        .map(|(x, &s)| {
            let e: [f64; 3] = core::array::from_fn(|_| StandardNormal.sample(&mut rng));
            x + Vec3::from(e) * s
        })
        .collect();

    let invalid_rate = rng.random_range(0.02..0.05);
    let valid: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= invalid_rate).collect();

    let edge = |i: usize| -> f64 {
        let (r, c) = (i / w, i % w);
        let mut diff = false;
        if r > 0 {
            diff |= region[i - w] != region[i];
        }
        if r + 1 < h {
            diff |= region[i + w] != region[i];
        }
        if c > 0 {
            diff |= region[i - 1] != region[i];
        }
        if c + 1 < w {
            diff |= region[i + 1] != region[i];
        }
        diff as u8 as f64
    };
    let fd = cfg.feature_dim;
    let mut feats = Vec::with_capacity(n * fd);
    for i in 0..n {
        let proxy_noise: f64 = StandardNormal.sample(&mut rng);
        let informative = [
            sigma[i].ln() + PROXY_LOG_NOISE * proxy_noise,
            ((i % w) as f64 + 0.5) / w as f64,
            ((i / w) as f64 + 0.5) / h as f64,
            gt[i].z,
            normals[i].x,
            normals[i].y,
            normals[i].z,
            edge(i),
        ];
        for c in 0..fd {
            feats.push(if c < INFORMATIVE_FEATURES {
                informative[c]
            } else {
                StandardNormal.sample(&mut rng)
            });
        }
    }

    Ok(SceneSample {
        features: Grid::from_vec(h, w, fd, feats)?,
        gt: PointMap::new(h, w, gt)?,
        base_pred: PointMap::new(h, w, base_pred)?,
        mask: Mask::new(h, w, valid)?,
        noise_sigma_map: ScalarMap::new(h, w, sigma)?,
        hard_mask: Mask::new(h, w, hard)?,
    })
}

/// Heuristic confidence in `(0, 1]` from the prediction alone.
///
/// Local noise is estimated from the 8 neighbours of each pixel without using
/// the pixel itself: two second differences that vanish on a locally planar
/// surface (the corner cross difference and the difference of the horizontal
/// and vertical neighbour sums). The spread `s` maps to `1 / (1 + s / median(s))`.
/// Invalid neighbours are replaced by the nearest valid in-image point
/// (the centre when none), border pixels replicate.
pub fn confidence_proxy(pred: &PointMap, mask: &Mask) -> Result<ScalarMap> {
    let (h, w) = (pred.height(), pred.width());
    if (mask.height(), mask.width()) != (h, w) {
        return Err(CoreError::Usage("mask does not match pointmap".into()));
    }
    let pts = pred.points();
    let at = |r: isize, c: isize, centre: usize| -> Vec3 {
        let rr = r.clamp(0, h as isize - 1) as usize;
        let cc = c.clamp(0, w as isize - 1) as usize;
        let j = rr * w + cc;
        if mask.values()[j] {
            pts[j]
        } else {
            pts[centre]
        }
    };
    let mut spread = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            let d1 = at(r - 1, c - 1, i) + at(r + 1, c + 1, i) - at(r - 1, c + 1, i) - at(r + 1, c - 1, i);
            let d2 = at(r, c - 1, i) + at(r, c + 1, i) - at(r - 1, c, i) - at(r + 1, c, i);
            spread[i] = ((d1.norm_squared() + d2.norm_squared()) / 8.0).sqrt();
        }
    }
    let mut valid: Vec<f64> = mask.indices().iter().map(|&i| spread[i]).collect();
    valid.sort_by(f64::total_cmp);
    let med = valid.get(valid.len() / 2).copied().unwrap_or(1.0).max(1e-12);
    ScalarMap::new(h, w, spread.iter().map(|s| 1.0 / (1.0 + s / med)).collect())
}
