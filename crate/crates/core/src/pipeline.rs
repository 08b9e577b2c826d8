//! The full chain: denoising, kinetic fit, histogram normalization,
//! classification, stochastic watershed and detection.

use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use crate::classify::{cdf_normalize, class_models, kmeans, lda_fit, lda_predict, model_classify, Features};
use crate::config::{ClassifierKind, DensityKind, MetricName, PipelineConfig, Stage};
use crate::detect::{
    background_regions, confidence_maps, detect_regions_excluding, region_stats, render_risk,
    ConfidenceMaps, RegionStats, BETA_A_CLAMP, BETA_B_CLAMP,
};
use crate::error::{Error, Result};
use crate::fca::{default_k_max, denoise_double_fca, Denoised};
use crate::gradient::{vector_gradient, MetricKind};
use crate::io::{encode_label_mask, read_hsr, read_label_mask, write_hsr, write_raster_png, write_rgb_png};
use crate::model::{fit_parameter_maps, ParameterMaps};
use crate::morphology::StructuringElement;
use crate::raster::{HyperImage, LabelField, Raster};
use crate::rng::RngStream;
use crate::stochastic::{
    marginal_pdf, preprocess_classification, probabilistic_gradient, segment_pdf, vector_pdf,
    ContourPdf,
};
use crate::watershed::{minima, Partition, Relief};

/// Stream id of the k-means seeding draws.
const KMEANS_STREAM: u64 = 3;
const KMEANS_MAX_ITER: usize = 100;

/// A pipeline failure tagged with the stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn is_config(&self) -> bool {
        self.source.is_config()
    }
}

fn at<T>(stage: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|source| StageError { stage, source })
}

/// Denoised series and parameter maps of the normalization reference.
#[derive(Clone, Debug)]
pub struct Reference {
    pub denoised: HyperImage,
    pub maps: ParameterMaps,
}

fn k_max(cfg: &PipelineConfig, channels: usize) -> usize {
    cfg.k_max.unwrap_or_else(|| default_k_max(channels))
}

pub fn prepare_reference(series: &HyperImage, cfg: &PipelineConfig) -> Result<Reference> {
    let d = denoise_double_fca(series, cfg.snr_threshold, k_max(cfg, series.channels()))?;
    let maps = fit_parameter_maps(&d.image, cfg.j1)?;
    Ok(Reference {
        denoised: d.image,
        maps,
    })
}

/// Everything the chain computed, up to the configured stage.
#[derive(Clone, Debug, Default)]
pub struct Analysis {
    pub denoised: Option<Denoised>,
    pub maps: Option<ParameterMaps>,
    /// Maps after histogram normalization (the raw maps when disabled).
    pub normalized: Option<ParameterMaps>,
    pub classes: Option<LabelField>,
    pub preprocessed: Option<LabelField>,
    pub pdf: Option<ContourPdf>,
    pub partition: Option<Partition>,
    /// Region count actually used (the request clamped to the minima count).
    pub regions_used: Option<usize>,
    pub stats: Option<RegionStats>,
    pub confidence: Option<ConfidenceMaps>,
}

fn metric_for(name: MetricName, img: &HyperImage) -> MetricKind {
    match name {
        MetricName::Euclidean => MetricKind::Euclidean,
        MetricName::ChiSquared => MetricKind::ChiSquared,
        MetricName::Mahalanobis => MetricKind::mahalanobis_from_image(img),
        MetricName::InverseVariance => MetricKind::inverse_variance_from_image(img),
    }
}

/// Training rows and class ids (`label − 1`) of the labelled pixels.
fn training_set(maps: &ParameterMaps, mask: &LabelField) -> Result<(Features, Vec<u32>)> {
    let img = maps.to_image();
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::DimensionMismatch(format!(
            "training mask {}x{} vs series {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    let all = Features::from_image(&img);
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask.get(i) > 0).collect();
    let labels = idx.iter().map(|&i| mask.get(i) - 1).collect();
    Ok((all.select(&idx), labels))
}

fn standardized(img: &HyperImage) -> Features {
    let mut f = Features::from_image(img);
    let (rows, dim) = (f.rows(), f.dim());
    let mut data = Vec::with_capacity(rows * dim);
    let stats: Vec<(f64, f64)> = (0..dim)
        .map(|j| {
            let r = img.channel_raster(j);
            let sd = r.variance().sqrt();
            (r.mean(), if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    for i in 0..rows {
        for (j, &v) in f.row(i).iter().enumerate() {
            data.push((v - stats[j].0) / stats[j].1);
        }
    }
    f = Features::new(rows, dim, data).expect("same shape");
    f
}

fn classify(
    series_denoised: &HyperImage,
    maps: &ParameterMaps,
    reference: Option<&Reference>,
    training: Option<&LabelField>,
    cfg: &PipelineConfig,
) -> Result<LabelField> {
    let (w, h) = (maps.a.width(), maps.a.height());
    let need_training = || {
        training.ok_or_else(|| Error::Config("the supervised classifiers need a training mask".into()))
    };
    match cfg.classifier {
        ClassifierKind::Lda => {
            let mask = need_training()?;
            let train_maps = reference.map_or(maps, |r| &r.maps);
            let (rows, labels) = training_set(train_maps, mask)?;
            let model = lda_fit(&rows, &labels)?;
            let pred = lda_predict(&model, &Features::from_image(&maps.to_image()))?;
            let n = model.classes.iter().max().map_or(1, |&c| c + 1);
            LabelField::new(w, h, pred, n, None)
        }
        ClassifierKind::Model => {
            let mask = need_training()?;
            let train_img = reference.map_or(series_denoised, |r| &r.denoised);
            // Class models read labels 0..K; unlabelled pixels become void.
            let k = mask.num_classes().saturating_sub(1).max(1);
            let labels: Vec<u32> = mask.labels().iter().map(|&l| if l == 0 { k } else { l - 1 }).collect();
            let field = LabelField::new(mask.width(), mask.height(), labels, k, Some(k))?;
            let models = class_models(train_img, &field, cfg.j1)?;
            model_classify(series_denoised, &models, cfg.j1)
        }
        ClassifierKind::Kmeans => {
            let feats = standardized(&maps.to_image());
            let r = kmeans(
                &feats,
                cfg.kmeans_classes,
                RngStream::new(cfg.seed, KMEANS_STREAM),
                KMEANS_MAX_ITER,
            )?;
            r.label_field(w, h)
        }
    }
}

fn density(
    maps: &ParameterMaps,
    k_hat: &LabelField,
    cfg: &PipelineConfig,
) -> Result<ContourPdf> {
    let img = maps.to_image();
    let mut germs = cfg.germs.clone();
    germs.background_class = cfg.background_label.and_then(|l| l.checked_sub(1));
    let weights = vec![1.0 / img.channels() as f64; img.channels()];
    match cfg.density {
        DensityKind::Marginal => marginal_pdf(&img, &weights, k_hat, &germs, cfg.seed),
        DensityKind::Vectorial => {
            vector_pdf(&img, &metric_for(cfg.metric, &img), k_hat, &germs, cfg.seed)
        }
        DensityKind::Probabilistic => {
            let mpdf = marginal_pdf(&img, &weights, k_hat, &germs, cfg.seed)?;
            let g = vector_gradient(&img, &metric_for(cfg.metric, &img), &StructuringElement::square(3))?;
            probabilistic_gradient(&mpdf, &g)
        }
    }
}

/// Runs the chain on an in-memory series up to `cfg.stage`.
pub fn analyse(
    series: &HyperImage,
    reference: Option<&Reference>,
    training: Option<&LabelField>,
    cfg: &PipelineConfig,
) -> std::result::Result<Analysis, StageError> {
    let mut out = Analysis::default();
    let denoised = at(
        "denoise",
        denoise_double_fca(series, cfg.snr_threshold, k_max(cfg, series.channels())),
    )?;
    info!(
        "denoise: kept {}/{} axes, then {}/{}",
        denoised.report.kept.len(),
        denoised.report.snr.len(),
        denoised.second_report.kept.len(),
        denoised.second_report.snr.len()
    );
    out.denoised = Some(denoised);
    if cfg.stage < Stage::Fit {
        return Ok(out);
    }
    let den = &out.denoised.as_ref().expect("just set").image;

    let maps = at("fit", fit_parameter_maps(den, cfg.j1))?;
    let normalized = if cfg.cdf {
        let reference = reference.ok_or_else(|| StageError {
            stage: "fit",
            source: Error::Config("histogram normalization needs a reference series".into()),
        })?;
        let norm = |m: &Raster, r: &Raster| at("fit", cdf_normalize(m, r).map(|x| x.0));
        ParameterMaps {
            a: norm(&maps.a, &reference.maps.a)?,
            b: norm(&maps.b, &reference.maps.b)?,
            m: norm(&maps.m, &reference.maps.m)?,
            j1: maps.j1,
        }
    } else {
        maps.clone()
    };
    out.maps = Some(maps);
    out.normalized = Some(normalized);
    if cfg.stage < Stage::Classify {
        return Ok(out);
    }
    let normalized = out.normalized.as_ref().expect("just set");

    let classes = at("classify", classify(den, normalized, reference, training, cfg))?;
    let k_hat = preprocess_classification(&classes);
    out.classes = Some(classes);
    if cfg.stage < Stage::Segment {
        out.preprocessed = Some(k_hat);
        return Ok(out);
    }

    let pdf = at("segment", density(normalized, &k_hat, cfg))?;
    out.preprocessed = Some(k_hat);
    let relief = at("segment", Relief::from_raster(&pdf.raster))?;
    let found = minima(&relief).num_classes() as usize;
    let r = cfg.regions.min(found);
    if r < cfg.regions {
        warn!("density has {found} minima, segmenting into {r} regions instead of {}", cfg.regions);
    }
    let partition = at("segment", segment_pdf(&pdf, r))?;
    out.pdf = Some(pdf);
    out.partition = Some(partition);
    out.regions_used = Some(r);
    if cfg.stage < Stage::Detect {
        return Ok(out);
    }
    let partition = out.partition.as_ref().expect("just set");

    let raw = out.maps.as_ref().expect("fit ran");
    let decision_maps = ParameterMaps {
        a: raw.a.clone(),
        b: normalized.b.clone(),
        m: normalized.m.clone(),
        j1: raw.j1,
    };
    let stats = at("detect", region_stats(&decision_maps, partition))?;
    let excluded = if cfg.suppress_background {
        let last = series.channel_raster(series.channels() - 1);
        Some(at("detect", background_regions(partition, &last))?)
    } else {
        None
    };
    let stats = detect_regions_excluding(&stats, cfg.b_threshold, excluded.as_deref());
    out.confidence = Some(at("detect", confidence_maps(&stats, partition))?);
    out.stats = Some(stats);
    Ok(out)
}

/// Diagnostics written next to the artifacts.
#[derive(Serialize)]
struct RunSummary<'a> {
    stage: Stage,
    first_pass_kept_axes: Vec<usize>,
    first_pass_snr: &'a [f64],
    second_pass_kept_axes: Vec<usize>,
    epsilon: f64,
    regions_requested: usize,
    regions_used: Option<usize>,
    detected: Vec<u32>,
    config: &'a PipelineConfig,
}

fn write_image(dir: &Path, name: &str, img: &HyperImage, channel_names: &[&str]) -> Result<()> {
    write_hsr(&dir.join(format!("{name}.hsr")), img)?;
    for (j, ch) in channel_names.iter().enumerate() {
        write_raster_png(&dir.join(format!("{name}_{ch}.png")), &img.channel_raster(j))?;
    }
    Ok(())
}

fn write_labels(dir: &Path, name: &str, f: &LabelField) -> Result<()> {
    fs::write(
        dir.join(format!("{name}.png")),
        encode_label_mask(f.width(), f.height(), f.labels())?,
    )?;
    let as_raster = Raster::new(f.width(), f.height(), f.labels().iter().map(|&l| l as f64).collect())?;
    write_hsr(&dir.join(format!("{name}.hsr")), &HyperImage::from_channels(&[as_raster])?)
}

/// Writes the artifacts of `a` into `dir`.
pub fn write_artifacts(dir: &Path, a: &Analysis, cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(d) = &a.denoised {
        write_hsr(&dir.join("denoised.hsr"), &d.image)?;
        let l = d.image.channels();
        for j in [0, cfg.j1.min(l) - 1, l - 1] {
            write_raster_png(&dir.join(format!("denoised_ch{:03}.png", j + 1)), &d.image.channel_raster(j))?;
        }
    }
    if let Some(m) = &a.maps {
        write_image(dir, "params", &m.to_image(), &["a", "b", "m"])?;
    }
    if let Some(m) = &a.normalized {
        write_image(dir, "params_normalized", &m.to_image(), &["a", "b", "m"])?;
    }
    if let Some(c) = &a.classes {
        write_labels(dir, "classes", c)?;
    }
    if let Some(c) = &a.preprocessed {
        write_labels(dir, "classes_preprocessed", c)?;
    }
    if let Some(p) = &a.pdf {
        write_image(dir, "pdf", &HyperImage::from_channels(&[p.raster.clone()])?, &["0"])?;
    }
    if let Some(p) = &a.partition {
        write_labels(dir, "segmentation", p.field())?;
        write_raster_png(&dir.join("contours.png"), &p.contours().to_raster())?;
    }
    if let Some(c) = &a.confidence {
        let img = HyperImage::from_channels(&[c.beta_a.clone(), c.beta_b.clone()])?;
        write_hsr(&dir.join("confidence.hsr"), &img)?;
        let (w, h) = (c.beta_a.width(), c.beta_a.height());
        write_rgb_png(&dir.join("risk_beta_a.png"), w, h, &render_risk(&c.beta_a, BETA_A_CLAMP))?;
        write_rgb_png(&dir.join("risk_beta_b.png"), w, h, &render_risk(&c.beta_b, BETA_B_CLAMP))?;
    }
    if let Some(s) = &a.stats {
        fs::write(dir.join("report.json"), s.to_json() + "\n")?;
    }
    if let Some(d) = &a.denoised {
        let summary = RunSummary {
            stage: cfg.stage,
            first_pass_kept_axes: d.report.kept.iter().map(|k| k + 1).collect(),
            first_pass_snr: &d.report.snr,
            second_pass_kept_axes: d.second_report.kept.iter().map(|k| k + 1).collect(),
            epsilon: d.epsilon,
            regions_requested: cfg.regions,
            regions_used: a.regions_used,
            detected: a
                .stats
                .as_ref()
                .map(|s| s.detected().map(|r| r.id).collect())
                .unwrap_or_default(),
            config: cfg,
        };
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Internal(e.to_string()))?;
        fs::write(dir.join("run.json"), json + "\n")?;
    }
    Ok(())
}

/// Reads the configured inputs, runs the chain and writes every artifact.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<Analysis, StageError> {
    at("config", cfg.validate())?;
    let input = cfg.input.as_ref().expect("validated");
    let series = at("read", read_hsr(input))?;
    let reference = match (&cfg.reference, cfg.stage >= Stage::Fit) {
        (Some(p), true) => {
            let r = at("read", read_hsr(p))?;
            Some(at("reference", prepare_reference(&r, cfg))?)
        }
        _ => None,
    };
    let training = match (&cfg.training, cfg.stage >= Stage::Classify) {
        (Some(p), true) => Some(at("read", read_label_mask(p))?),
        _ => None,
    };
    let a = analyse(&series, reference.as_ref(), training.as_ref(), cfg)?;
    at("write", write_artifacts(&cfg.output, &a, cfg))?;
    Ok(a)
}
