//! Criteria 1-5: exact property suites.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use evident_core::alignment::{apply_sim3, point_errors, umeyama_sim3, Sim3Transform};
use evident_core::evidential::{
    niw_decompose, niw_loss, niw_loss_and_grad, niw_predictive, raw_to_nig, raw_to_niw, studentt1_logpdf,
    studentt_logpdf, xyz_nig_decompose, xyz_nig_loss, xyz_nig_loss_and_grad, LossConfig, NigParams, RawNig, RawNiw,
    StudentTMv,
};
use evident_core::grid::{Grid, Mask, PointMap, ScalarMap, Vec3};
use evident_core::metrics::{
    aurc, auroc_fpr_values, ause, pointcloud_metrics, ring_band, risk_coverage_values, sparsification_values,
    spearman_rho_values,
};
use evident_core::predictor::{hetero_loss, hetero_loss_grad};
use evident_core::refinement::{gated_refine, smooth, tv_penalty, SmoothingKernel};
use evident_core::CoreError;
use nalgebra::{Matrix3, Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles;
use crate::Outcome;

fn within(t: Instant, limit: Duration) -> Result<(), String> {
    let e = t.elapsed();
    if e < limit {
        Ok(())
    } else {
        Err(format!("took {e:.1?}, limit {limit:?}"))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn fd_worst(x: &[f64], g: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    const H: f64 = 1e-5;
    (0..x.len())
        .map(|k| {
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[k] += H;
            b[k] -= H;
            rel_err(g[k], (f(&a) - f(&b)) / (2.0 * H))
        })
        .fold(0.0, f64::max)
}

pub fn gradients() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = LossConfig {
        lambda_evi: 0.1,
        ..Default::default()
    };
    let draws = 150;
    let mut worst = [0.0f64; 3];
    let r = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.5..1.5)).collect() };
    for _ in 0..draws {
        let a = r(11, &mut rng);
        let x = Vec3::from_vec(r(3, &mut rng));
        let f = |v: &[f64]| {
            niw_loss(
                &raw_to_niw(&RawNiw::from_array(v.try_into().unwrap()), cfg.eps).unwrap(),
                &x,
                &cfg,
            )
            .unwrap()
        };
        let g = niw_loss_and_grad(&RawNiw::from_array(a.as_slice().try_into().unwrap()), &x, &cfg)
            .unwrap()
            .1
            .to_array();
        worst[0] = worst[0].max(fd_worst(&a, &g, f));

        let v = r(12, &mut rng);
        let x = Vec3::from_vec(r(3, &mut rng));
        let unpack = |v: &[f64]| -> [RawNig; 3] {
            core::array::from_fn(|c| RawNig {
                gamma_raw: v[4 * c],
                nu_raw: v[4 * c + 1],
                alpha_raw: v[4 * c + 2],
                beta_raw: v[4 * c + 3],
            })
        };
        let f = |v: &[f64]| {
            let p = unpack(v).map(|r| raw_to_nig(&r, cfg.eps).unwrap());
            xyz_nig_loss(&p, &x, &cfg)
        };
        let g: Vec<f64> = xyz_nig_loss_and_grad(&unpack(&v), &x, &cfg)
            .unwrap()
            .1
            .iter()
            .flat_map(|g| [g.gamma_raw, g.nu_raw, g.alpha_raw, g.beta_raw])
            .collect();
        worst[1] = worst[1].max(fd_worst(&v, &g, f));

        let v = r(6, &mut rng);
        let x = Vec3::from_vec(r(3, &mut rng));
        let split = |v: &[f64]| (Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]));
        let f = |v: &[f64]| {
            let (m, lv) = split(v);
            hetero_loss(&m, &lv, &x)
        };
        let (m, lv) = split(&v);
        let (_, gm, gl) = hetero_loss_grad(&m, &lv, &x);
        worst[2] = worst[2].max(fd_worst(&v, &[gm[0], gm[1], gm[2], gl[0], gl[1], gl[2]], f));
    }
    let detail = format!(
        "max rel err niw {:.1e}, nig {:.1e}, hetero {:.1e} over {draws} draws each",
        worst[0], worst[1], worst[2]
    );
    ensure(worst.iter().all(|&w| w <= 1e-4), || detail.clone())?;
    within(t, Duration::from_secs(10))?;
    Ok(detail)
}

fn random_lower(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let mut l = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..=i {
            l[(i, j)] = if i == j {
                rng.random_range(0.3..1.5)
            } else {
                rng.random_range(-0.5..0.5)
            };
        }
    }
    l
}

pub fn distributions() -> Outcome {
    let t = Instant::now();
    // (a) tan substitution onto (-pi/2, pi/2), composite Simpson.
    let n = 400_000;
    let h = PI / n as f64;
    let mut worst_a = 0.0f64;
    for &(mu, lambda, df) in &[(0.0, 1.0, 1.5), (0.7, 0.3, 3.0), (-2.0, 4.0, 10.0)] {
        let f = |k: usize| {
            if k == 0 || k == n {
                return 0.0;
            }
            let th = -FRAC_PI_2 + k as f64 * h;
            studentt1_logpdf(th.tan(), mu, lambda, df).exp() / th.cos().powi(2)
        };
        let s: f64 = (1..n).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * f(k)).sum();
        worst_a = worst_a.max((s * h / 3.0 - 1.0).abs());
    }
    ensure(worst_a <= 1e-6, || {
        format!("(a) 1-d normalization off by {worst_a:.2e}")
    })?;

    // (b) importance sampling from independent Cauchy axes.
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let l = random_lower(&mut rng);
    let dist = StudentTMv {
        location: Vec3::new(0.2, -0.1, 0.3),
        scale: l * l.transpose(),
        dof: 5.0,
    };
    let gamma = 1.5;
    let samples = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = Vec3::from_fn(|_, _| gamma * (PI * (rng.random::<f64>() - 0.5)).tan());
        let lq: f64 = x
            .iter()
            .map(|&v| -(PI * gamma * (1.0 + (v / gamma).powi(2))).ln())
            .sum();
        acc += (studentt_logpdf(&dist, &x).unwrap() - lq).exp();
    }
    let est = acc / samples as f64;
    ensure((est - 1.0).abs() <= 1e-2, || {
        format!("(b) 3-d Monte-Carlo normalization {est}")
    })?;

    // (c) Gaussian limit.
    let mut worst_c = 0.0f64;
    for _ in 0..20 {
        let l = random_lower(&mut rng);
        let cov = l * l.transpose();
        let mu = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let x = mu + Vec3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let r = x - mu;
        let maha = (r.transpose() * cov.try_inverse().unwrap() * r)[(0, 0)];
        let gauss = -0.5 * (3.0 * (2.0 * PI).ln() + cov.determinant().ln() + maha);
        let st = studentt_logpdf(
            &StudentTMv {
                location: mu,
                scale: cov,
                dof: 1e6,
            },
            &x,
        )
        .unwrap();
        worst_c = worst_c.max((st - gauss).abs());
    }
    ensure(worst_c <= 1e-3, || format!("(c) Gaussian limit off by {worst_c:.2e}"))?;

    // (d) + (e)
    let mut worst_e = 0.0f64;
    for _ in 0..200 {
        let a: [f64; 11] = core::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let p = raw_to_niw(&RawNiw::from_array(&a), 1e-6).unwrap();
        let d = niw_decompose(&p).unwrap();
        ensure(d.total == d.alea + d.epi, || "(d) NIW total != alea + epi".into())?;
        let cov = niw_predictive(&p).covariance().unwrap();
        worst_e = worst_e.max((cov - d.total).abs().max() / d.total.abs().max());

        let ps: [NigParams; 3] = core::array::from_fn(|_| {
            NigParams::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(0.01..5.0),
                rng.random_range(1.01..6.0),
                rng.random_range(0.01..3.0),
            )
            .unwrap()
        });
        let d = xyz_nig_decompose(&ps).unwrap();
        ensure(d.total == d.alea + d.epi, || "(d) NIG total != alea + epi".into())?;
    }
    ensure(worst_e <= 1e-12, || {
        format!("(e) covariance identity off by {worst_e:.2e}")
    })?;
    within(t, Duration::from_secs(60))?;
    Ok(format!(
        "quadrature err {worst_a:.1e}, MC mass {est:.4}, Gaussian-limit err {worst_c:.1e}, covariance rel err {worst_e:.1e}"
    ))
}

pub fn metric_oracles() -> Outcome {
    const TOL: f64 = 1e-12;
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let instances = 60;
    let inst = |rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<f64>) {
        let n = rng.random_range(2..=100);
        let coarse = rng.random_bool(0.33);
        let u = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..5) as f64
                } else {
                    rng.random()
                }
            })
            .collect();
        let e = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
        (u, e)
    };
    for i in 0..instances {
        let (u, e) = inst(&mut rng);
        let a = aurc(&risk_coverage_values(&u, &e, 100).unwrap());
        ensure((a - oracles::aurc(&u, &e, 100)).abs() <= TOL, || {
            format!("AURC mismatch on instance {i}")
        })?;
        let s = ause(&sparsification_values(&u, &e, 100).unwrap());
        ensure((s - oracles::ause(&u, &e, 100)).abs() <= TOL, || {
            format!("AUSE mismatch on instance {i}")
        })?;
        let ok = match (spearman_rho_values(&u, &e), oracles::spearman(&u, &e)) {
            (Ok(a), Some(b)) => (a - b).abs() <= TOL,
            (Err(CoreError::UndefinedMetric(_)), None) => true,
            _ => false,
        };
        ensure(ok, || format!("Spearman mismatch on instance {i}"))?;
        let l: Vec<bool> = (0..u.len()).map(|k| k % 2 == 0 || rng.random_bool(0.3)).collect();
        if l.iter().any(|&x| !x) {
            let r = auroc_fpr_values(&u, &l).unwrap();
            ensure((r.auroc - oracles::auroc(&u, &l)).abs() <= TOL, || {
                format!("AUROC mismatch on instance {i}")
            })?;
            ensure(r.fpr_at_95tpr == oracles::fpr95(&u, &l), || {
                format!("FPR@95 mismatch on instance {i}")
            })?;
        }
        let (h, w) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let pt = |rng: &mut ChaCha8Rng| Vec3::new(rng.random(), rng.random(), rng.random::<f64>() * 0.2);
        let gt = PointMap::new(h, w, (0..h * w).map(|_| pt(&mut rng)).collect()).unwrap();
        let pred = PointMap::new(h, w, gt.points().iter().map(|g| g + 0.05 * pt(&mut rng)).collect()).unwrap();
        let mask = Mask::new(h, w, (0..h * w).map(|k| k == 0 || rng.random_bool(0.8)).collect()).unwrap();
        let th = rng.random_range(0.005..0.1);
        let m = pointcloud_metrics(&pred, &gt, &mask, th).unwrap();
        let idx = mask.indices();
        let p: Vec<Vec3> = idx.iter().map(|&k| pred.points()[k]).collect();
        let g: Vec<Vec3> = idx.iter().map(|&k| gt.points()[k]).collect();
        let (acc, comp, prec, rec) = oracles::cloud(&p, &g, th);
        ensure(
            (m.accuracy - acc).abs() <= TOL
                && (m.completeness - comp).abs() <= TOL
                && m.precision == prec
                && m.recall == rec,
            || format!("point-cloud mismatch on instance {i}"),
        )?;
    }
    let e = [0.4, 0.1, 0.9, 0.3, 0.7];
    ensure(ause(&sparsification_values(&e, &e, 100).unwrap()) == 0.0, || {
        "AUSE(u=e) != 0".into()
    })?;
    let r = auroc_fpr_values(&[0.9, 0.8, 0.7, 0.2, 0.1], &[true, true, true, false, false]).unwrap();
    ensure(r.auroc == 1.0, || format!("perfect separation AUROC {}", r.auroc))?;
    let r = auroc_fpr_values(&[0.9, 0.95, 0.5, 0.1], &[true, false, false, false]).unwrap();
    ensure(r.fpr_at_95tpr == 1.0 / 3.0, || {
        format!("hand FPR@95 {}", r.fpr_at_95tpr)
    })?;
    within(t, Duration::from_secs(30))?;
    Ok(format!(
        "{instances} random instances exact to {TOL:e}; AUSE(u=e)=0, AUROC=1, FPR@95=1/3"
    ))
}

fn random_sim3(rng: &mut ChaCha8Rng) -> Sim3Transform {
    let axis = Unit::new_normalize(Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
    let rot = *Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1)).matrix();
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    Sim3Transform::new(scale, rot, Vec3::from_fn(|_, _| rng.random_range(-5.0..5.0))).unwrap()
}

fn random_cloud(rng: &mut ChaCha8Rng, h: usize, w: usize) -> PointMap {
    let pts = (0..h * w)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..3.0),
            )
        })
        .collect();
    PointMap::new(h, w, pts).unwrap()
}

pub fn alignment() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst_fit = 0.0f64;
    for _ in 0..200 {
        let tr = random_sim3(&mut rng);
        let src = random_cloud(&mut rng, 6, 7);
        let dst = apply_sim3(&tr, &src, None).unwrap();
        let fit = umeyama_sim3(&src, &dst, &Mask::full(6, 7)).unwrap();
        let e = ((fit.scale - tr.scale).abs() / tr.scale)
            .max((fit.rotation - tr.rotation).abs().max())
            .max((fit.translation - tr.translation).abs().max() / (1.0 + tr.translation.norm()));
        worst_fit = worst_fit.max(e);
    }
    ensure(worst_fit <= 1e-9, || format!("recovery error {worst_fit:.2e}"))?;
    let mut worst_inv = 0.0f64;
    for _ in 0..100 {
        let gt = random_cloud(&mut rng, 5, 8);
        let pred = PointMap::new(
            5,
            8,
            gt.points()
                .iter()
                .map(|g| g + Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05)))
                .collect(),
        )
        .unwrap();
        let mask = Mask::new(5, 8, (0..40).map(|i| i % 7 != 3).collect()).unwrap();
        let moved = apply_sim3(&random_sim3(&mut rng), &pred, None).unwrap();
        let a = point_errors(&pred, &gt, &mask, true).unwrap().valid_errors();
        let b = point_errors(&moved, &gt, &mask, true).unwrap().valid_errors();
        worst_inv = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst_inv, f64::max);
    }
    ensure(worst_inv <= 1e-8, || {
        format!("aligned-error invariance {worst_inv:.2e}")
    })?;
    let line = PointMap::new(
        3,
        4,
        (0..12)
            .map(|i| Vec3::new(i as f64, 2.0 * i as f64, -(i as f64)))
            .collect(),
    )
    .unwrap();
    let moved = apply_sim3(&random_sim3(&mut rng), &line, None).unwrap();
    ensure(
        matches!(
            umeyama_sim3(&line, &moved, &Mask::full(3, 4)),
            Err(CoreError::DegenerateGeometry(_))
        ),
        || "collinear input not rejected".into(),
    )?;
    within(t, Duration::from_secs(10))?;
    Ok(format!(
        "recovery err {worst_fit:.1e}, invariance err {worst_inv:.1e}, collinear rejected"
    ))
}

pub fn refinement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let grid = |rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize| {
        Grid::from_vec(h, w, c, (0..h * w * c).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
    };
    for _ in 0..50 {
        let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
        for c in [1, 3] {
            let g = grid(&mut rng, h, w, c);
            ensure(smooth(&g, &SmoothingKernel::identity(c)).unwrap() == g, || {
                "identity smoothing changed the field".into()
            })?;
        }
    }
    let base = PointMap::from_grid(&grid(&mut rng, 7, 9, 3)).unwrap();
    let delta = PointMap::from_grid(&grid(&mut rng, 7, 9, 3)).unwrap();
    ensure(
        gated_refine(&base, &delta, &ScalarMap::filled(7, 9, -800.0)).unwrap() == base,
        || "closed gate changed the base".into(),
    )?;
    for _ in 0..50 {
        let (h, w) = (rng.random_range(1..10), rng.random_range(1..10));
        let g: Vec<f64> = (0..h * w).map(|_| rng.random_range(-4.0..4.0)).collect();
        let s = |r: usize, c: usize| 1.0 / (1.0 + (-g[r * w + c]).exp());
        let (mut total, mut pairs) = (0.0, 0usize);
        for r in 0..h {
            for c in 0..w {
                if c + 1 < w {
                    total += (s(r, c + 1) - s(r, c)).abs();
                    pairs += 1;
                }
                if r + 1 < h {
                    total += (s(r + 1, c) - s(r, c)).abs();
                    pairs += 1;
                }
            }
        }
        let want = if pairs == 0 { 0.0 } else { total / pairs as f64 };
        let got = tv_penalty(&ScalarMap::new(h, w, g.clone()).unwrap());
        ensure((got - want).abs() <= 1e-12, || {
            format!("tv {got} vs brute force {want}")
        })?;
    }
    Ok("identity smoothing exact, closed gate exact, TV matches brute force".into())
}

/// Ring construction against exhaustive morphology (part of criterion 8).
pub fn ring_matches_brute_force() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..60 {
        let (h, w) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let p = rng.random_range(0.1..0.9);
        let vals: Vec<bool> = (0..h * w).map(|_| rng.random_bool(p)).collect();
        let r = rng.random_range(1..=4);
        let ring = ring_band(&Mask::new(h, w, vals.clone()).unwrap(), r).unwrap();
        for row in 0..h {
            for col in 0..w {
                let (any, every) = oracles::window(&vals, h, w, r, row, col);
                ensure(ring.get(row, col) == (any && !every), || {
                    format!("ring mismatch at ({row},{col}), r={r}")
                })?;
            }
        }
    }
    Ok(())
}
