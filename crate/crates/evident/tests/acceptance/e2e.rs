//! Criteria 6-10: end-to-end runs on generated scenes.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use evident::cli;
use evident::manifest::Dataset;
use evident::parallel::Rayon;
use evident::pipeline::{evaluate, ringcheck, select_sigma0, EvalOptions, EvalOutput, Method, UncertaintySource};
use evident_core::alignment::point_errors;
use evident_core::datagen::{generate_scene, HardRegionShape, SceneConfig, SceneSample};
use evident_core::evidential::{ReadoutMode, DEFAULT_EPS};
use evident_core::grid::ScalarMap;
use evident_core::metrics::{average_ranks, image_metrics};
use evident_core::predictor::{
    ensemble_sample, moment_match, train, train_ensemble, Architecture, DensePredictor, ForwardMode, TrainConfig,
};

use crate::suites::ring_matches_brute_force;
use crate::Outcome;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenes(cfg: &SceneConfig, seeds: std::ops::Range<u64>, tag: &str) -> Dataset {
    let samples: Vec<SceneSample> = seeds
        .clone()
        .map(|seed| generate_scene(&SceneConfig { seed, ..cfg.clone() }).unwrap())
        .collect();
    Dataset {
        dir: PathBuf::new(),
        ids: seeds.map(|s| format!("{tag}_{s}")).collect(),
        samples,
    }
}

fn pool() -> &'static Rayon {
    static POOL: OnceLock<Rayon> = OnceLock::new();
    POOL.get_or_init(|| Rayon::from_env().expect("thread pool"))
}

fn arch() -> Architecture {
    Architecture {
        hidden_width: 32,
        ..Default::default()
    }
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        base_lr: 1e-2,
        epochs,
        batch_size: 8,
        ..Default::default()
    }
}

fn fit(arch: Architecture, data: &Dataset, epochs: usize) -> DensePredictor {
    let init = DensePredictor::initialized_for(arch, &data.samples, 0).unwrap();
    train(&init, &data.samples, &train_cfg(epochs), pool()).unwrap().0
}

struct Synthetic {
    test: Dataset,
    model: DensePredictor,
    train_time: Duration,
}

/// 64 training and 16 test scenes at 64x64 with blob-shaped hard regions.
fn synthetic() -> &'static Synthetic {
    static S: OnceLock<Synthetic> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = SceneConfig {
            hard_region_fraction: 0.35,
            ..Default::default()
        };
        let t = Instant::now();
        let train_set = scenes(&cfg, 0..64, "train");
        let test = scenes(&cfg, 1000..1016, "test");
        let model = fit(arch(), &train_set, 30);
        Synthetic {
            test,
            model,
            train_time: t.elapsed(),
        }
    })
}

fn eval(method: &Method, data: &Dataset, readout: ReadoutMode, source: UncertaintySource) -> EvalOutput {
    let opts = EvalOptions {
        readout: Some(readout),
        source,
        ..Default::default()
    };
    evaluate(method, data, &opts, pool()).unwrap()
}

pub fn end_to_end() -> Outcome {
    let t = Instant::now();
    let s = synthetic();
    let m = Method::Head(s.model.clone());
    let model = eval(&m, &s.test, ReadoutMode::Epi, UncertaintySource::Predicted)
        .report
        .dataset;
    let constant = eval(&m, &s.test, ReadoutMode::Epi, UncertaintySource::Constant)
        .report
        .dataset;
    let oracle = eval(&m, &s.test, ReadoutMode::Epi, UncertaintySource::Oracle)
        .report
        .dataset;
    let conf = eval(&m, &s.test, ReadoutMode::Conf, UncertaintySource::Predicted)
        .report
        .dataset;
    let rho = model.spearman_rho.unwrap_or(f64::NAN);
    let detail = format!(
        "rho {rho:.3}; AURC {:.4} (const {:.4}, conf {:.4}); AUSE {:.4} (const {:.4}, conf {:.4}, oracle {:.4}); train {:.1?}",
        model.aurc, constant.aurc, conf.aurc, model.ause, constant.ause, conf.ause, oracle.ause, s.train_time
    );
    ensure(rho >= 0.5, || format!("(a) failed: {detail}"))?;
    ensure(
        model.aurc < constant.aurc && model.aurc < conf.aurc && model.ause < constant.ause && model.ause < conf.ause,
        || format!("(b) failed: {detail}"),
    )?;
    let gap = model.ause - oracle.ause;
    let const_gap = constant.ause - oracle.ause;
    ensure(gap <= 0.5 * const_gap, || {
        format!("(c) failed, gap ratio {:.3}: {detail}", gap / const_gap)
    })?;
    ensure(t.elapsed() < Duration::from_secs(600), || {
        format!("took {:.1?}", t.elapsed())
    })?;
    Ok(format!("{detail}; AUSE gap ratio {:.3}", gap / const_gap))
}

pub fn readout_ablation() -> Outcome {
    let s = synthetic();
    let m = Method::Head(s.model.clone());
    let aurc = |r| eval(&m, &s.test, r, UncertaintySource::Predicted).report.dataset.aurc;
    let (epi, total, alea) = (
        aurc(ReadoutMode::Epi),
        aurc(ReadoutMode::Total),
        aurc(ReadoutMode::Alea),
    );
    ensure([epi, total, alea].iter().all(|v| v.is_finite()), || {
        "non-finite readout AURC".into()
    })?;
    let ordered = epi <= total && total <= alea + 1e-6;
    let hi = epi.max(total).max(alea);
    let lo = epi.min(total).min(alea);
    let ordering = if ordered {
        "epi <= total <= alea".to_string()
    } else {
        let mut v = [("epi", epi), ("total", total), ("alea", alea)];
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        format!(
            "observed {} < {} < {} (spread {:.1}%)",
            v[0].0,
            v[1].0,
            v[2].0,
            100.0 * (hi - lo) / lo
        )
    };

    // Strictly increasing transforms that are exact in floating point:
    // scaling by a power of two, and replacement by average ranks.
    for (k, sample) in s.test.samples.iter().enumerate() {
        let out = s
            .model
            .forward(&sample.features, &sample.base_pred, ForwardMode::Deterministic)
            .unwrap();
        let e = point_errors(&out.refined, &sample.gt, &sample.mask, true).unwrap();
        for mode in [ReadoutMode::Epi, ReadoutMode::Total, ReadoutMode::Alea] {
            let u = out.uncertainty_map(mode, DEFAULT_EPS).unwrap();
            let scaled = ScalarMap::new(u.height(), u.width(), u.values().iter().map(|v| v * 8.0).collect()).unwrap();
            let ranked = ScalarMap::new(u.height(), u.width(), average_ranks(u.values())).unwrap();
            let base = image_metrics(&u, &e, 100).unwrap().0;
            for v in [&scaled, &ranked] {
                let t = image_metrics(v, &e, 100).unwrap().0;
                ensure(
                    (t.aurc, t.ause, t.spearman_rho) == (base.aurc, base.ause, base.spearman_rho),
                    || {
                        format!(
                            "rank metrics changed under a monotone transform (image {k}, {})",
                            mode.as_str()
                        )
                    },
                )?;
            }
        }
    }
    Ok(format!(
        "AURC epi {epi:.5}, total {total:.5}, alea {alea:.5}; {ordering}; monotone invariance exact"
    ))
}

pub fn ring_band() -> Outcome {
    ring_matches_brute_force()?;
    let object = |hard: f64| SceneConfig {
        hard_region_sigma: hard,
        hard_region_shape: HardRegionShape::ObjectWithBoundary,
        ..Default::default()
    };
    let mut means = Vec::new();
    for hard in [0.01, 0.05] {
        let cfg = object(hard);
        let model = fit(arch(), &scenes(&cfg, 0..32, "train"), 20);
        let test = scenes(&cfg, 2000..2020, "test");
        let r = ringcheck(&Method::Head(model), &test, 3, None, &EvalOptions::default(), pool())
            .map_err(|e| e.to_string())?;
        ensure(r.ring.n_scored >= 20, || {
            format!("only {} samples scored", r.ring.n_scored)
        })?;
        means.push(r.ring.auroc);
    }
    let detail = format!(
        "negative control AUROC {:.3}, positive (5x noise) AUROC {:.3}, ring morphology exact",
        means[0], means[1]
    );
    ensure((0.45..=0.55).contains(&means[0]) && means[1] >= 0.7, || detail.clone())?;
    Ok(detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

pub fn baselines() -> Outcome {
    const K: usize = 5;
    let cfg = SceneConfig {
        hard_region_fraction: 0.35,
        ..Default::default()
    };
    let train_set = scenes(&cfg, 0..16, "train");
    let val = scenes(&cfg, 500..504, "val");
    let test = scenes(&cfg, 1000..1008, "test");

    let dropout_model = fit(Architecture { dropout: 0.1, ..arch() }, &train_set, 5);
    let mc = Method::McDropout {
        model: dropout_model,
        t: 16,
    };
    let s_mc = select_sigma0(&mc, &val, 0, pool()).map_err(|e| e.to_string())?;
    let opts = |s0| EvalOptions {
        sigma0_sq: Some(s0),
        ..Default::default()
    };
    let mc_out = evaluate(&mc, &test, &opts(s_mc), pool()).map_err(|e| e.to_string())?;
    let mc_nll = mc_out.report.dataset.nll.unwrap_or(f64::NAN);

    let members = train_ensemble(&arch(), &train_set.samples, &train_cfg(5), K, pool()).map_err(|e| e.to_string())?;
    let ens = Method::Ensemble {
        members: members.clone(),
    };
    let s_ens = select_sigma0(&ens, &val, 0, pool()).map_err(|e| e.to_string())?;
    let ens_out = evaluate(&ens, &test, &opts(s_ens), pool()).map_err(|e| e.to_string())?;
    let ens_nll = ens_out.report.dataset.nll.unwrap_or(f64::NAN);
    ensure(mc_nll.is_finite() && ens_nll.is_finite(), || {
        format!("NLL mc {mc_nll}, ensemble {ens_nll}")
    })?;

    // Two-pass moments computed here, independently of the library.
    let sample = &test.samples[0];
    let draws = ensemble_sample(&members, &sample.features, &sample.base_pred).map_err(|e| e.to_string())?;
    let mm = moment_match(&draws, s_ens).map_err(|e| e.to_string())?;
    let n = draws.len() as f64;
    let mut worst = 0.0f64;
    for i in 0..sample.mask.values().len() {
        for c in 0..3 {
            let mean = draws.iter().map(|d| d.points()[i][c]).sum::<f64>() / n;
            let var = draws.iter().map(|d| (d.points()[i][c] - mean).powi(2)).sum::<f64>() / (n - 1.0) + s_ens;
            worst = worst
                .max((mm.mean.points()[i][c] - mean).abs() / mean.abs().max(1e-12))
                .max((mm.var[i][c] - var).abs() / var);
        }
    }
    ensure(worst <= 1e-12, || format!("moment match vs two-pass: {worst:.2e}"))?;

    // Single-thread wall clock per sample: one head pass vs K member passes.
    let head = &members[0];
    let timed = |f: &dyn Fn(&SceneSample)| {
        let reps: Vec<f64> = (0..7)
            .map(|_| {
                let t = Instant::now();
                for s in &test.samples[..4] {
                    f(s);
                }
                t.elapsed().as_secs_f64() / 4.0
            })
            .collect();
        median(reps)
    };
    let single = timed(&|s| {
        let o = head
            .forward(&s.features, &s.base_pred, ForwardMode::Deterministic)
            .unwrap();
        std::hint::black_box(o.uncertainty_map(ReadoutMode::Epi, DEFAULT_EPS).unwrap());
    });
    let multi = timed(&|s| {
        let d = ensemble_sample(&members, &s.features, &s.base_pred).unwrap();
        std::hint::black_box(moment_match(&d, s_ens).unwrap().uncertainty_map().unwrap());
    });
    let ratio = multi / single;
    let detail = format!(
        "MC-dropout T=16 NLL {mc_nll:.3} (sigma0^2 {s_mc:e}); ensemble K={K} NLL {ens_nll:.3} (sigma0^2 {s_ens:e}); \
         moments err {worst:.1e}; cost ratio {ratio:.2} ({:.1} ms vs {:.1} ms)",
        multi * 1e3,
        single * 1e3
    );
    let k = K as f64;
    ensure((0.7 * k..=1.3 * k).contains(&ratio), || detail.clone())?;
    Ok(detail)
}

pub fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let root = tmp.path().join(tag);
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        let go =
            |args: &[&str]| cli::run(std::iter::once("evident").chain(args.iter().copied())).map_err(|e| e.to_string());
        go(&[
            "simulate",
            "--n-train",
            "8",
            "--n-val",
            "2",
            "--n-test",
            "4",
            "--height",
            "32",
            "--width",
            "32",
            "--seed",
            "7",
            "--out",
            &p("data"),
        ])?;
        go(&[
            "train",
            "--data",
            &p("data"),
            "--epochs",
            "3",
            "--hidden-width",
            "16",
            "--seed",
            "3",
            "--out",
            &p("model.evpt"),
        ])?;
        go(&[
            "eval",
            "--model",
            &p("model.evpt"),
            "--data",
            &p("data"),
            "--report",
            &p("report.json"),
            "--curves",
            &p("curves"),
        ])?;
        let read = |s: &str| std::fs::read(root.join(s)).map_err(|e| e.to_string());
        Ok((read("report.json")?, read("curves_risk_coverage_pooled.csv")?))
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure(a == b, || "reports differ between identical runs".into())?;
    Ok(format!(
        "report JSON ({} bytes) and curves byte-identical across two runs",
        a.0.len()
    ))
}
