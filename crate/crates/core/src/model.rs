//! Per-pixel kinetic model: a least-squares line on the late part of each
//! time curve plus the amplitude ("rise") of its early transient.
//!
//! Channel `j` (1-based) sits at abscissa `λ_j = j`, one sample per second.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{HyperImage, Raster};

/// Default first channel of the line fit: the 20 transient samples are skipped.
pub const DEFAULT_J1: usize = 21;

/// Slope, intercept and rise maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterMaps {
    pub a: Raster,
    pub b: Raster,
    pub m: Raster,
    /// First channel (1-based) included in the line fit.
    pub j1: usize,
}

impl ParameterMaps {
    /// The maps as a 3-channel series `(a, b, m)`.
    pub fn to_image(&self) -> HyperImage {
        HyperImage::from_channels(&[self.a.clone(), self.b.clone(), self.m.clone()])
            .expect("maps share one grid")
    }

    pub fn from_image(img: &HyperImage, j1: usize) -> Result<Self> {
        if img.channels() != 3 {
            return Err(Error::DimensionMismatch(format!(
                "parameter maps need 3 channels, got {}",
                img.channels()
            )));
        }
        Ok(ParameterMaps {
            a: img.channel_raster(0),
            b: img.channel_raster(1),
            m: img.channel_raster(2),
            j1,
        })
    }
}

/// Ordinary least-squares line `y ≈ a λ + b` over `λ = first, first+1, …`.
pub fn fit_line(samples: &[f64], first: usize) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.len() == 1 {
        return (0.0, samples[0]);
    }
    let lam_mean = first as f64 + (n - 1.0) / 2.0;
    let y_mean = samples.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (k, &y) in samples.iter().enumerate() {
        let dx = (first + k) as f64 - lam_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let a = sxy / sxx;
    (a, y_mean - a * lam_mean)
}

/// Line parameters and rise of one spectrum.
pub fn fit_spectrum(spectrum: &[f64], j1: usize) -> (f64, f64, f64) {
    let (a, b) = fit_line(&spectrum[j1 - 1..], j1);
    let head = &spectrum[..j1 - 1];
    let hi = head.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = head.iter().copied().fold(f64::INFINITY, f64::min);
    (a, b, hi - lo)
}

fn check_j1(channels: usize, j1: usize) -> Result<()> {
    if j1 < 2 || j1 + 1 > channels {
        return Err(Error::InvalidParameter(format!(
            "j1 = {j1} outside 2..={} for {channels} channels",
            channels.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Fits the line on channels `j1..=L` and the rise on channels `1..j1` of
/// every pixel.
pub fn fit_parameter_maps(img: &HyperImage, j1: usize) -> Result<ParameterMaps> {
    check_j1(img.channels(), j1)?;
    let params: Vec<(f64, f64, f64)> = (0..img.pixels())
        .into_par_iter()
        .map(|i| fit_spectrum(&img.spectrum(i), j1))
        .collect();
    let (w, h) = (img.width(), img.height());
    let a = Raster::new(w, h, params.iter().map(|p| p.0).collect())?;
    let b = Raster::new(w, h, params.iter().map(|p| p.1).collect())?;
    let m = Raster::new(w, h, params.iter().map(|p| p.2).collect())?;
    Ok(ParameterMaps { a, b, m, j1 })
}
