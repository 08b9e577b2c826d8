//! Morphological and metric-based gradients of scalar and multichannel rasters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::morphology::{dilate, erode, gaussian_filter, leveling, StructuringElement};
use crate::raster::{HyperImage, Raster};

/// Window of the Gaussian reference used by [`smooth_then_gradient`].
pub const LEVELING_WINDOW: usize = 11;
/// Standard deviation of that reference.
pub const LEVELING_SIGMA: f64 = 2.5;

/// Distance between two vector pixels.
#[derive(Clone, Debug)]
pub enum MetricKind {
    Euclidean,
    /// Requires the channel totals of the image (see [`ChiSquaredStats`]).
    ChiSquared,
    /// Mahalanobis distance under a symmetric positive definite covariance.
    Mahalanobis(DMatrix<f64>),
    /// Per-channel standard deviations.
    InverseVariance(Vec<f64>),
}

impl MetricKind {
    /// Mahalanobis metric with the channel covariance of `img`.
    pub fn mahalanobis_from_image(img: &HyperImage) -> Self {
        let (p, l) = (img.pixels(), img.channels());
        let means: Vec<f64> = (0..l)
            .map(|j| img.channel(j).iter().sum::<f64>() / p as f64)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(l, l);
        for a in 0..l {
            for b in a..l {
                let (ca, cb) = (img.channel(a), img.channel(b));
                let s: f64 = ca
                    .iter()
                    .zip(cb)
                    .map(|(x, y)| (x - means[a]) * (y - means[b]))
                    .sum();
                cov[(a, b)] = s / p as f64;
                cov[(b, a)] = s / p as f64;
            }
        }
        MetricKind::Mahalanobis(cov)
    }

    /// Inverse-variance metric with the channel standard deviations of `img`.
    pub fn inverse_variance_from_image(img: &HyperImage) -> Self {
        MetricKind::InverseVariance(
            (0..img.channels())
                .map(|j| img.channel_raster(j).variance().sqrt())
                .collect(),
        )
    }
}

/// Marginal totals needed by the chi-squared distance.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquaredStats {
    /// `f_{.λ_j} = Σ_i f_{λ_j}(x_i)`.
    pub channel_totals: Vec<f64>,
    /// `S = Σ_i Σ_j f_{λ_j}(x_i)`.
    pub grand_total: f64,
}

impl ChiSquaredStats {
    pub fn from_image(img: &HyperImage) -> Result<Self> {
        let channel_totals: Vec<f64> = (0..img.channels())
            .map(|j| img.channel(j).iter().sum())
            .collect();
        if let Some(j) = channel_totals.iter().position(|&t| t <= 0.0) {
            return Err(Error::DegenerateMargin(format!(
                "channel {j} has a non-positive total"
            )));
        }
        let grand_total = channel_totals.iter().sum();
        Ok(ChiSquaredStats {
            channel_totals,
            grand_total,
        })
    }
}

/// A metric with its precomputed state.
#[derive(Clone, Debug)]
pub struct Metric {
    kind: MetricKind,
    chi: Option<ChiSquaredStats>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl Metric {
    pub fn new(kind: MetricKind, chi: Option<ChiSquaredStats>) -> Result<Self> {
        let mut chol = None;
        match &kind {
            MetricKind::ChiSquared if chi.is_none() => {
                return Err(Error::InvalidParameter(
                    "chi-squared distance needs image marginal statistics".into(),
                ))
            }
            MetricKind::Mahalanobis(sigma) => {
                if sigma.nrows() != sigma.ncols() {
                    return Err(Error::InvalidParameter("covariance is not square".into()));
                }
                if (sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
                chol = Some(Cholesky::new(sigma.clone()).ok_or_else(|| {
                    Error::InvalidParameter("covariance is not positive definite".into())
                })?);
            }
            MetricKind::InverseVariance(s) => {
                if let Some(j) = s.iter().position(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidParameter(format!(
                        "standard deviation of channel {j} is not positive"
                    )));
                }
            }
            _ => {}
        }
        Ok(Metric { kind, chi, chol })
    }

    /// Binds a metric to an image, computing the chi-squared totals if needed.
    pub fn for_image(kind: MetricKind, img: &HyperImage) -> Result<Self> {
        let chi = match kind {
            MetricKind::ChiSquared => Some(ChiSquaredStats::from_image(img)?),
            _ => None,
        };
        Metric::new(kind, chi)
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    fn expected_len(&self) -> Option<usize> {
        match &self.kind {
            MetricKind::Euclidean => None,
            MetricKind::ChiSquared => self.chi.as_ref().map(|c| c.channel_totals.len()),
            MetricKind::Mahalanobis(s) => Some(s.nrows()),
            MetricKind::InverseVariance(s) => Some(s.len()),
        }
    }

    pub fn distance(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != v.len() || self.expected_len().is_some_and(|n| n != u.len()) {
            return Err(Error::DimensionMismatch(format!(
                "spectra of length {} and {}",
                u.len(),
                v.len()
            )));
        }
        Ok(match &self.kind {
            MetricKind::Euclidean => u
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            MetricKind::ChiSquared => {
                let chi = self.chi.as_ref().expect("checked at construction");
                let (su, sv): (f64, f64) = (u.iter().sum(), v.iter().sum());
                if su <= 0.0 || sv <= 0.0 {
                    return Err(Error::DegenerateMargin(
                        "chi-squared distance of a pixel with zero total".into(),
                    ));
                }
                u.iter()
                    .zip(v)
                    .zip(&chi.channel_totals)
                    .map(|((a, b), t)| {
                        let d = a / su - b / sv;
                        chi.grand_total / t * d * d
                    })
                    .sum::<f64>()
                    .sqrt()
            }
            MetricKind::Mahalanobis(_) => {
                let d = DVector::from_iterator(u.len(), u.iter().zip(v).map(|(a, b)| a - b));
                let z = self.chol.as_ref().expect("checked at construction").solve(&d);
                d.dot(&z).max(0.0).sqrt()
            }
            MetricKind::InverseVariance(s) => u
                .iter()
                .zip(v)
                .zip(s)
                .map(|((a, b), sd)| {
                    let d = (a - b) / sd;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        })
    }
}

/// `d(u, v)` for the given metric; `stats` is required by the chi-squared
/// distance and ignored otherwise.
pub fn pixel_distance(
    u: &[f64],
    v: &[f64],
    metric: &MetricKind,
    stats: Option<&ChiSquaredStats>,
) -> Result<f64> {
    Metric::new(metric.clone(), stats.cloned())?.distance(u, v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub raster: Raster,
    pub normalized: bool,
}

/// `δ_B f − ε_B f`.
pub fn morph_gradient(ch: &Raster, se: &StructuringElement) -> GradientMap {
    let d = dilate(ch, se);
    let e = erode(ch, se);
    let data = d.data().iter().zip(e.data()).map(|(a, b)| a - b).collect();
    GradientMap {
        raster: Raster::new(ch.width(), ch.height(), data).expect("same grid"),
        normalized: false,
    }
}

/// Max minus min of `d(f(x), f(y))` over the punctured window `y ∈ B(x), y ≠ x`.
pub fn vector_gradient(
    img: &HyperImage,
    metric: &MetricKind,
    se: &StructuringElement,
) -> Result<GradientMap> {
    let metric = Metric::for_image(metric.clone(), img)?;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let spectra: Vec<Vec<f64>> = (0..img.pixels()).map(|i| img.spectrum(i)).collect();
    let offsets: Vec<(isize, isize)> = se
        .offsets()
        .iter()
        .copied()
        .filter(|&o| o != (0, 0))
        .collect();
    let data: Vec<f64> = (0..img.pixels())
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i as isize) % w, (i as isize) / w);
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for &(dx, dy) in &offsets {
                let (xx, yy) = (x + dx, y + dy);
                if xx < 0 || yy < 0 || xx >= w || yy >= h {
                    continue;
                }
                let d = metric.distance(&spectra[i], &spectra[(yy * w + xx) as usize])?;
                hi = hi.max(d);
                lo = lo.min(d);
            }
            Ok(if hi >= lo { hi - lo } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(GradientMap {
        raster: Raster::new(img.width(), img.height(), data)?,
        normalized: false,
    })
}

/// Levels every channel against its Gaussian-smoothed version, then takes the
/// metric gradient.
pub fn smooth_then_gradient(
    img: &HyperImage,
    metric: &MetricKind,
    se: &StructuringElement,
) -> Result<GradientMap> {
    let channels: Vec<Raster> = (0..img.channels())
        .into_par_iter()
        .map(|j| {
            let ch = img.channel_raster(j);
            let reference = gaussian_filter(&ch, LEVELING_WINDOW, LEVELING_SIGMA)?;
            leveling(&ch, &reference)
        })
        .collect::<Result<_>>()?;
    vector_gradient(&HyperImage::from_channels(&channels)?, metric, se)
}

/// Scales to `[0, 1]` by the maximum; an all-zero map stays zero.
pub fn normalize01(g: &GradientMap) -> GradientMap {
    let max = g.raster.max();
    let raster = if max > 0.0 {
        g.raster.map(|v| v / max)
    } else {
        g.raster.clone()
    };
    GradientMap {
        raster,
        normalized: true,
    }
}
