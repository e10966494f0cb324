//! Evaluation of trained heads and sampling baselines over a dataset.

use std::str::FromStr;

use evident_core::alignment::{apply_sim3, point_errors, umeyama_sim3};
use evident_core::datagen::{confidence_proxy, SceneSample};
use evident_core::evidential::{ReadoutMode, DEFAULT_EPS};
use evident_core::exec::Executor;
use evident_core::grid::{ErrorMap, PointMap, ScalarMap, UncertaintyMap};
use evident_core::metrics::{
    auroc_fpr, eval_nll, image_metrics, mean_curves, pointcloud_metrics, ring_band, risk_coverage_values,
    sparsification_values, CurveSeries, ImageMetrics, MetricReport, PointcloudMetrics, PredictiveSource, RingMetrics,
    DEFAULT_F1_THRESHOLD, DEFAULT_GRID_SIZE,
};
use evident_core::predictor::{
    dropout_sample, ensemble_sample, mix_seed, moment_match, select_sigma0_sq, DensePredictor, ForwardMode, HeadKind,
};
use evident_core::CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{EvidentError, Result};
use crate::manifest::Dataset;

pub const REPORT_SCHEMA: &str = "evident-report-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Align {
    Sim3,
    None,
}

impl Align {
    pub fn as_str(&self) -> &'static str {
        match self {
            Align::Sim3 => "sim3",
            Align::None => "none",
        }
    }
}

impl FromStr for Align {
    type Err = EvidentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim3" => Ok(Self::Sim3),
            "none" => Ok(Self::None),
            other => Err(EvidentError::Config(format!("unknown alignment '{other}'"))),
        }
    }
}

/// Where the ranking scores come from. `Oracle` and `Constant` are controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintySource {
    Predicted,
    /// `u := e`, the per-pixel error itself.
    Oracle,
    Constant,
}

impl FromStr for UncertaintySource {
    type Err = EvidentError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predicted" => Ok(Self::Predicted),
            "oracle" => Ok(Self::Oracle),
            "constant" => Ok(Self::Constant),
            other => Err(EvidentError::Config(format!("unknown uncertainty source '{other}'"))),
        }
    }
}

/// What is being evaluated.
#[derive(Clone, Debug)]
pub enum Method {
    Head(DensePredictor),
    McDropout { model: DensePredictor, t: usize },
    Ensemble { members: Vec<DensePredictor> },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Head(m) => m.arch().head.as_str().to_string(),
            Method::McDropout { .. } => "mc-dropout".into(),
            Method::Ensemble { .. } => "ensemble".into(),
        }
    }

    fn feature_dim(&self) -> usize {
        match self {
            Method::Head(m) | Method::McDropout { model: m, .. } => m.arch().feature_dim,
            Method::Ensemble { members } => members.first().map_or(0, |m| m.arch().feature_dim),
        }
    }

    /// Readout used when none is requested.
    pub fn default_readout(&self) -> ReadoutMode {
        match self {
            Method::Head(m) => m.arch().head.default_readout(),
            _ => ReadoutMode::Total,
        }
    }

    pub fn is_sampling(&self) -> bool {
        !matches!(self, Method::Head(_))
    }

    fn validate(&self, readout: ReadoutMode) -> Result<()> {
        match self {
            Method::Head(m) => {
                if m.arch().head == HeadKind::Hetero && readout == ReadoutMode::Epi {
                    return Err(EvidentError::Config(
                        "the Gaussian head has no epistemic readout".into(),
                    ));
                }
            }
            Method::McDropout { model, t } => {
                if *t == 0 || !(model.arch().dropout > 0.0) {
                    return Err(EvidentError::Incompatible(
                        "MC dropout needs T >= 1 and a model trained with dropout".into(),
                    ));
                }
            }
            Method::Ensemble { members } => {
                let first = members
                    .first()
                    .ok_or_else(|| EvidentError::Config("ensemble has no members".into()))?;
                if members.iter().any(|m| m.arch().feature_dim != first.arch().feature_dim) {
                    return Err(EvidentError::Incompatible(
                        "ensemble members disagree on feature_dim".into(),
                    ));
                }
            }
        }
        if self.is_sampling() && !matches!(readout, ReadoutMode::Total | ReadoutMode::Conf) {
            return Err(EvidentError::Config(format!(
                "sampling baselines only provide the 'total' readout, got '{}'",
                readout.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub align: Align,
    /// `None` picks the method's default.
    pub readout: Option<ReadoutMode>,
    pub source: UncertaintySource,
    pub grid_size: usize,
    pub f1_threshold: f64,
    pub eps: f64,
    /// Variance floor for sampling baselines.
    pub sigma0_sq: Option<f64>,
    /// Seed for MC-dropout masks.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            align: Align::Sim3,
            readout: None,
            source: UncertaintySource::Predicted,
            grid_size: DEFAULT_GRID_SIZE,
            f1_threshold: DEFAULT_F1_THRESHOLD,
            eps: DEFAULT_EPS,
            sigma0_sq: None,
            seed: 0,
        }
    }
}

/// One image's prediction: refined pointmap, readout map, and (when the
/// method defines one) the predictive distribution per pixel.
pub struct Prediction {
    pub refined: PointMap,
    pub uncertainty: UncertaintyMap,
    pub predictive: Option<PredictiveSource>,
}

fn confidence_uncertainty(sample: &SceneSample, eps: f64) -> Result<UncertaintyMap> {
    let conf = confidence_proxy(&sample.base_pred, &sample.mask)?;
    let v = conf.values().iter().map(|c| -(c + eps).ln()).collect();
    Ok(ScalarMap::new(conf.height(), conf.width(), v)?)
}

fn check_sample(method: &Method, sample: &SceneSample) -> Result<()> {
    if sample.features.channels() != method.feature_dim() {
        return Err(EvidentError::Incompatible(format!(
            "model expects {} feature channels, data has {}",
            method.feature_dim(),
            sample.features.channels()
        )));
    }
    Ok(())
}

/// Raw samples for a sampling baseline (unused for heads).
fn baseline_samples(method: &Method, sample: &SceneSample, seed: u64) -> Result<Vec<PointMap>> {
    Ok(match method {
        Method::McDropout { model, t } => dropout_sample(model, &sample.features, &sample.base_pred, *t, seed)?,
        Method::Ensemble { members } => ensemble_sample(members, &sample.features, &sample.base_pred)?,
        Method::Head(_) => unreachable!("heads are not sampled"),
    })
}

pub fn predict(
    method: &Method,
    sample: &SceneSample,
    readout: ReadoutMode,
    opts: &EvalOptions,
    index: usize,
) -> Result<Prediction> {
    check_sample(method, sample)?;
    match method {
        Method::Head(m) => {
            let out = m.forward(&sample.features, &sample.base_pred, ForwardMode::Deterministic)?;
            let uncertainty = if readout == ReadoutMode::Conf {
                confidence_uncertainty(sample, opts.eps)?
            } else {
                out.uncertainty_map(readout, opts.eps)?
            };
            Ok(Prediction {
                predictive: Some(out.predictive_source(opts.eps)?),
                refined: out.refined,
                uncertainty,
            })
        }
        _ => {
            let s0 = opts
                .sigma0_sq
                .ok_or_else(|| EvidentError::Config("sampling baselines need sigma0_sq".into()))?;
            let samples = baseline_samples(method, sample, mix_seed(opts.seed, index as u64))?;
            let mm = moment_match(&samples, s0)?;
            let uncertainty = if readout == ReadoutMode::Conf {
                confidence_uncertainty(sample, opts.eps)?
            } else {
                mm.uncertainty_map()?
            };
            Ok(Prediction {
                predictive: Some(mm.predictive_source()),
                refined: mm.mean,
                uncertainty,
            })
        }
    }
}

/// Per-image (averaged) and pooled versions of both curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub risk_coverage_perimg: CurveSeries,
    pub risk_coverage_pooled: CurveSeries,
    pub sparsification_perimg: CurveSeries,
    pub sparsification_pooled: CurveSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    #[serde(flatten)]
    pub metrics: ImageMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub method: String,
    pub readout: ReadoutMode,
    pub align: Align,
    pub uncertainty_source: UncertaintySource,
    pub grid_size: usize,
    /// Dataset metrics are arithmetic means of the per-image values.
    pub aggregation: String,
    /// NLL is always evaluated on unaligned predictions.
    pub nll_alignment: String,
    pub sigma0_sq: Option<f64>,
}

/// The `evident-report-v1` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub schema: String,
    pub meta: ReportMeta,
    pub per_image: Vec<ImageRecord>,
    pub dataset: evident_core::metrics::DatasetMetrics,
    pub pointcloud: Option<PointcloudMetrics>,
    pub ring: Option<RingMetrics>,
    pub warnings: Vec<String>,
}

pub struct EvalOutput {
    pub report: ReportJson,
    pub curves: CurveSet,
}

struct ImageResult {
    metrics: ImageMetrics,
    rc: CurveSeries,
    sp: CurveSeries,
    u: Vec<f64>,
    e: Vec<f64>,
    pc: PointcloudMetrics,
}

fn aligned_prediction(pred: &PointMap, sample: &SceneSample, align: Align) -> Result<PointMap> {
    Ok(match align {
        Align::Sim3 => {
            let t = umeyama_sim3(pred, &sample.gt, &sample.mask)?;
            apply_sim3(&t, pred, Some(&sample.mask))?
        }
        Align::None => pred.clone(),
    })
}

fn evaluate_image(
    method: &Method,
    sample: &SceneSample,
    readout: ReadoutMode,
    opts: &EvalOptions,
    index: usize,
    want_nll: bool,
) -> Result<ImageResult> {
    let p = predict(method, sample, readout, opts, index)?;
    let aligned = aligned_prediction(&p.refined, sample, opts.align)?;
    let e: ErrorMap = point_errors(&aligned, &sample.gt, &sample.mask, false)?;
    let u = match opts.source {
        UncertaintySource::Predicted => p.uncertainty,
        UncertaintySource::Oracle => e.e.clone(),
        UncertaintySource::Constant => ScalarMap::filled(sample.height(), sample.width(), 1.0),
    };
    let (mut metrics, rc, sp) = image_metrics(&u, &e, opts.grid_size)?;
    if want_nll {
        if let Some(src) = &p.predictive {
            metrics.nll = Some(eval_nll(src, &sample.gt, &sample.mask)?);
        }
    }
    let pc = pointcloud_metrics(&aligned, &sample.gt, &sample.mask, opts.f1_threshold)?;
    Ok(ImageResult {
        metrics,
        rc,
        sp,
        u: u.masked(&sample.mask),
        e: e.valid_errors(),
        pc,
    })
}

fn mean_pointcloud(pcs: &[PointcloudMetrics]) -> PointcloudMetrics {
    let n = pcs.len() as f64;
    let m = |f: fn(&PointcloudMetrics) -> f64| pcs.iter().map(f).sum::<f64>() / n;
    PointcloudMetrics {
        accuracy: m(|p| p.accuracy),
        completeness: m(|p| p.completeness),
        chamfer: m(|p| p.chamfer),
        precision: m(|p| p.precision),
        recall: m(|p| p.recall),
        f1: m(|p| p.f1),
        threshold: pcs[0].threshold,
    }
}

pub fn evaluate<E: Executor>(method: &Method, data: &Dataset, opts: &EvalOptions, exec: &E) -> Result<EvalOutput> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput("dataset has no samples".into()).into());
    }
    let readout = opts.readout.unwrap_or_else(|| method.default_readout());
    method.validate(readout)?;
    let mut warnings = Vec::new();
    let want_nll = readout != ReadoutMode::Conf;
    if !want_nll {
        warnings.push("confidence readout defines no likelihood; NLL omitted".to_string());
    }
    let results: Vec<Result<ImageResult>> = exec.map(data.len(), |i| {
        evaluate_image(method, &data.samples[i], readout, opts, i, want_nll)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let per_image: Vec<ImageMetrics> = results.iter().map(|r| r.metrics.clone()).collect();
    let mut report = MetricReport::from_images(per_image)?;
    let pcs: Vec<PointcloudMetrics> = results.iter().map(|r| r.pc).collect();
    report.pointcloud = Some(mean_pointcloud(&pcs));

    let rcs: Vec<CurveSeries> = results.iter().map(|r| r.rc.clone()).collect();
    let sps: Vec<CurveSeries> = results.iter().map(|r| r.sp.clone()).collect();
    let pooled_u: Vec<f64> = results.iter().flat_map(|r| r.u.iter().copied()).collect();
    let pooled_e: Vec<f64> = results.iter().flat_map(|r| r.e.iter().copied()).collect();
    let curves = CurveSet {
        risk_coverage_perimg: mean_curves(&rcs)?,
        risk_coverage_pooled: risk_coverage_values(&pooled_u, &pooled_e, opts.grid_size)?,
        sparsification_perimg: mean_curves(&sps)?,
        sparsification_pooled: sparsification_values(&pooled_u, &pooled_e, opts.grid_size)?,
    };

    let per_image = data
        .ids
        .iter()
        .zip(report.per_image)
        .map(|(id, metrics)| ImageRecord {
            id: id.clone(),
            metrics,
        })
        .collect();
    Ok(EvalOutput {
        report: ReportJson {
            schema: REPORT_SCHEMA.into(),
            meta: ReportMeta {
                method: method.name(),
                readout,
                align: opts.align,
                uncertainty_source: opts.source,
                grid_size: opts.grid_size,
                aggregation: "per-image mean".into(),
                nll_alignment: "none".into(),
                sigma0_sq: if method.is_sampling() { opts.sigma0_sq } else { None },
            },
            per_image,
            dataset: report.dataset,
            pointcloud: report.pointcloud,
            ring: None,
            warnings,
        },
        curves,
    })
}

/// Chooses the baseline variance floor on a validation set (unaligned
/// predictions, as for NLL).
pub fn select_sigma0<E: Executor>(method: &Method, val: &Dataset, seed: u64, exec: &E) -> Result<f64> {
    if !method.is_sampling() {
        return Err(EvidentError::Config(
            "sigma0 selection applies to sampling baselines only".into(),
        ));
    }
    let sets = exec.map(val.len(), |i| -> Result<_> {
        let s = &val.samples[i];
        check_sample(method, s)?;
        // Validation masks use their own seed stream.
        let samples = baseline_samples(method, s, mix_seed(seed ^ 0x5641_4C49_4441_5445, i as u64))?;
        Ok((samples, s.gt.clone(), s.mask.clone()))
    });
    let sets = sets.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(select_sigma0_sq(&sets)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingSample {
    pub id: String,
    pub auroc: Option<f64>,
    pub fpr_at_95tpr: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingReport {
    pub schema: String,
    pub method: String,
    pub readout: ReadoutMode,
    pub ring: RingMetrics,
    pub per_sample: Vec<RingSample>,
}

/// Ring-band AUROC: pixels within `radius` of the hard-region boundary are
/// positives, every other valid pixel a negative; higher uncertainty should
/// rank positives first. Single-class samples are skipped and counted.
pub fn ringcheck<E: Executor>(
    method: &Method,
    data: &Dataset,
    radius: usize,
    readout: Option<ReadoutMode>,
    opts: &EvalOptions,
    exec: &E,
) -> Result<RingReport> {
    if radius == 0 {
        return Err(EvidentError::Config("ring radius must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(CoreError::EmptyInput("dataset has no samples".into()).into());
    }
    let readout = readout.unwrap_or_else(|| method.default_readout());
    method.validate(readout)?;
    let per = exec.map(data.len(), |i| -> Result<RingSample> {
        let s = &data.samples[i];
        let p = predict(method, s, readout, opts, i)?;
        let ring = ring_band(&s.hard_mask, radius)?;
        let id = data.ids[i].clone();
        match auroc_fpr(&p.uncertainty, &ring, &s.mask) {
            Ok(r) => Ok(RingSample {
                id,
                auroc: Some(r.auroc),
                fpr_at_95tpr: Some(r.fpr_at_95tpr),
                n_pos: r.n_pos,
                n_neg: r.n_neg,
                skipped: None,
            }),
            Err(CoreError::UndefinedMetric(why)) => Ok(RingSample {
                id,
                auroc: None,
                fpr_at_95tpr: None,
                n_pos: 0,
                n_neg: 0,
                skipped: Some(why),
            }),
            Err(e) => Err(e.into()),
        }
    });
    let per_sample = per.into_iter().collect::<Result<Vec<_>>>()?;
    let scored: Vec<&RingSample> = per_sample.iter().filter(|r| r.auroc.is_some()).collect();
    let n = scored.len();
    let mean = |f: fn(&RingSample) -> Option<f64>| {
        if n == 0 {
            f64::NAN
        } else {
            scored.iter().filter_map(|r| f(r)).sum::<f64>() / n as f64
        }
    };
    if n == 0 {
        return Err(CoreError::UndefinedMetric("no sample has both ring and non-ring pixels".into()).into());
    }
    Ok(RingReport {
        schema: REPORT_SCHEMA.into(),
        method: method.name(),
        readout,
        ring: RingMetrics {
            auroc: mean(|r| r.auroc),
            fpr_at_95tpr: mean(|r| r.fpr_at_95tpr),
            ring_radius: radius,
            n_scored: n,
            n_skipped: per_sample.len() - n,
        },
        per_sample,
    })
}
