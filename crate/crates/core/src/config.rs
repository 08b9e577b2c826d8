//! Pipeline configuration: plain-text `key = value` files, with the same keys
//! settable one by one (the command line overrides the file this way).

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::detect::DEFAULT_B_THRESHOLD;
use crate::error::{Error, Result};
use crate::fca::DEFAULT_SNR_THRESHOLD;
use crate::model::DEFAULT_J1;
use crate::stochastic::GermParams;

/// Default number of regions of the final segmentation.
pub const DEFAULT_REGIONS: usize = 20;

/// Last stage to run; stages are ordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Denoise,
    Fit,
    Classify,
    Segment,
    Detect,
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "denoise" => Stage::Denoise,
            "fit" => Stage::Fit,
            "classify" => Stage::Classify,
            "segment" => Stage::Segment,
            "detect" | "run" => Stage::Detect,
            _ => return Err(Error::Config(format!("unknown stage {s:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Linear discriminant trained on a labelled mask.
    Lda,
    /// Unsupervised k-means on standardized parameters.
    Kmeans,
    /// Nearest class line model trained on a labelled mask.
    Model,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lda" => ClassifierKind::Lda,
            "kmeans" => ClassifierKind::Kmeans,
            "model" => ClassifierKind::Model,
            _ => return Err(Error::Config(format!("unknown classifier {s:?}"))),
        })
    }
}

/// Relief from which the segmented contour density is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Marginal,
    Vectorial,
    Probabilistic,
}

impl FromStr for DensityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "marginal" => DensityKind::Marginal,
            "vectorial" => DensityKind::Vectorial,
            "probabilistic" => DensityKind::Probabilistic,
            _ => return Err(Error::Config(format!("unknown density {s:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Euclidean,
    ChiSquared,
    Mahalanobis,
    InverseVariance,
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "euclidean" => MetricName::Euclidean,
            "chi_squared" => MetricName::ChiSquared,
            "mahalanobis" => MetricName::Mahalanobis,
            "inverse_variance" => MetricName::InverseVariance,
            _ => return Err(Error::Config(format!("unknown metric {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    /// Series whose parameter distributions the maps are normalized onto.
    pub reference: Option<PathBuf>,
    /// Label mask of the training pixels (`0` = unlabelled), drawn on the
    /// reference series when there is one, on the input otherwise.
    pub training: Option<PathBuf>,
    pub output: PathBuf,
    pub snr_threshold: f64,
    pub j1: usize,
    /// Number of factorial axes fitted; `None` for `min(L − 1, 100)`.
    pub k_max: Option<usize>,
    pub classifier: ClassifierKind,
    pub kmeans_classes: usize,
    /// Histogram-normalize the parameter maps onto the reference.
    pub cdf: bool,
    pub density: DensityKind,
    /// Metric of the parameter-space gradient (vectorial and probabilistic
    /// densities).
    pub metric: MetricName,
    pub germs: GermParams,
    /// Training label whose class receives no germs.
    pub background_label: Option<u32>,
    pub regions: usize,
    pub b_threshold: f64,
    /// Exclude regions darker than the 5th intensity percentile from detection.
    pub suppress_background: bool,
    pub seed: u64,
    pub threads: Option<usize>,
    pub stage: Stage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            reference: None,
            training: None,
            output: PathBuf::from("out"),
            snr_threshold: DEFAULT_SNR_THRESHOLD,
            j1: DEFAULT_J1,
            k_max: None,
            classifier: ClassifierKind::Lda,
            kmeans_classes: crate::classify::DEFAULT_KMEANS_CLASSES,
            cdf: true,
            density: DensityKind::Marginal,
            metric: MetricName::InverseVariance,
            germs: GermParams::default(),
            background_label: None,
            regions: DEFAULT_REGIONS,
            b_threshold: DEFAULT_B_THRESHOLD,
            suppress_background: false,
            seed: 0,
            threads: None,
            stage: Stage::Detect,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: {value:?} is not a boolean"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" => None,
        v => Some(v),
    }
}

/// Splits a configuration text into `(key, value)` pairs. Blank lines and
/// lines starting with `#` are skipped; dashes in keys read as underscores.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim().replace('-', "_");
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

impl PipelineConfig {
    /// Sets one key. Unknown keys are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.replace('-', "_").as_str() {
            "input" => self.input = optional(value).map(PathBuf::from),
            "reference" => self.reference = optional(value).map(PathBuf::from),
            "training" => self.training = optional(value).map(PathBuf::from),
            "output" => self.output = PathBuf::from(value),
            "snr_threshold" => self.snr_threshold = parse(key, value)?,
            "j1" => self.j1 = parse(key, value)?,
            "k_max" => self.k_max = optional(value).map(|v| parse(key, v)).transpose()?,
            "classifier" => self.classifier = value.parse()?,
            "kmeans_classes" => self.kmeans_classes = parse(key, value)?,
            "cdf" => self.cdf = parse_bool(key, value)?,
            "density" => self.density = value.parse()?,
            "metric" => self.metric = value.parse()?,
            "germs" => {
                let strategy = self.germs.strategy;
                let sigma = self.germs.sigma;
                let bg = self.germs.background_class;
                let mut g = GermParams::parse_spec(value)?;
                if !value.contains("strategy") {
                    g.strategy = strategy;
                }
                if !value.contains("sigma") {
                    g.sigma = sigma;
                }
                g.background_class = bg;
                self.germs = g;
            }
            "strategy" => self.germs.strategy = value.parse()?,
            "sigma" => self.germs.sigma = parse(key, value)?,
            "background_label" => {
                self.background_label = optional(value).map(|v| parse(key, v)).transpose()?
            }
            "regions" => self.regions = parse(key, value)?,
            "b_threshold" => self.b_threshold = parse(key, value)?,
            "suppress_background" => self.suppress_background = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = optional(value).map(|v| parse(key, v)).transpose()?,
            "stage" => self.stage = value.parse()?,
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies every pair of a configuration text over `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_config(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.snr_threshold >= 0.0) {
            return bad(format!("snr threshold {} must be >= 0", self.snr_threshold));
        }
        if self.j1 < 2 {
            return bad(format!("j1 = {} must be at least 2", self.j1));
        }
        if self.k_max == Some(0) {
            return bad("k_max must be at least 1".into());
        }
        if self.kmeans_classes == 0 {
            return bad("kmeans_classes must be at least 1".into());
        }
        if self.regions == 0 {
            return bad("regions must be at least 1".into());
        }
        if !self.b_threshold.is_finite() {
            return bad("b_threshold must be finite".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        self.germs.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.input.is_none() {
            return bad("no input series".into());
        }
        if self.stage >= Stage::Fit && self.cdf && self.reference.is_none() {
            return bad("histogram normalization needs a reference series".into());
        }
        if self.stage >= Stage::Classify
            && matches!(self.classifier, ClassifierKind::Lda | ClassifierKind::Model)
            && self.training.is_none()
        {
            return bad("the supervised classifiers need a training mask".into());
        }
        Ok(())
    }
}
