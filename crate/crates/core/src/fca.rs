//! Factor correspondence analysis of a series, partial reconstruction, and
//! noise diagnostics.
//!
//! The series is read as a P × L contingency table `N_ij = f_{λ_j}(x_i)`.
//! With `p = N / f`, row masses `r_i`, column masses `c_j` and standardized
//! residuals `s_ij = (p_ij − r_i c_j) / sqrt(r_i c_j)`, the factorial axes are
//! the singular vectors of `s`. Row (pixel) coordinates are
//! `c_iα = σ_α u_iα / sqrt(r_i)`, column (channel) coordinates
//! `d_αj = σ_α v_jα / sqrt(c_j)` and the inertias `μ_α = σ_α²`.
//!
//! Reconstruction from a subset of axes is
//! `f̂_ij = f r_i c_j (1 + Σ_α c_iα d_αj / sqrt(μ_α))`; keeping every axis with
//! nonzero inertia gives back the table.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::morphology::{opening, StructuringElement};
use crate::raster::{HyperImage, Raster};

/// Default maximal lag of the spatial covariance window.
pub const DEFAULT_MAX_LAG: usize = 15;

/// Default SNR threshold for axis selection.
pub const DEFAULT_SNR_THRESHOLD: f64 = 0.3;

/// Default upper bound on the number of fitted axes for `channels` channels.
pub fn default_k_max(channels: usize) -> usize {
    channels.saturating_sub(1).min(100)
}

const PIXEL_CHUNK: usize = 256;

#[derive(Clone, Debug)]
pub struct FcaModel {
    width: usize,
    height: usize,
    /// P × K, row-major (`i * K + k`).
    factor_pixels: Vec<f64>,
    /// K × L, row-major (`k * L + j`).
    channel_factors: Vec<f64>,
    inertias: Vec<f64>,
    total_inertia: f64,
    row_marginals: Vec<f64>,
    col_marginals: Vec<f64>,
    grand_total: f64,
}

impl FcaModel {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.row_marginals.len()
    }

    pub fn channels(&self) -> usize {
        self.col_marginals.len()
    }

    /// Number of fitted axes K.
    pub fn axes(&self) -> usize {
        self.inertias.len()
    }

    pub fn inertias(&self) -> &[f64] {
        &self.inertias
    }

    /// Sum of all inertias, including axes that were not retained.
    pub fn total_inertia(&self) -> f64 {
        self.total_inertia
    }

    pub fn inertia_fractions(&self) -> Vec<f64> {
        if self.total_inertia <= 0.0 {
            return vec![0.0; self.axes()];
        }
        self.inertias
            .iter()
            .map(|m| m / self.total_inertia)
            .collect()
    }

    pub fn row_marginals(&self) -> &[f64] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[f64] {
        &self.col_marginals
    }

    pub fn grand_total(&self) -> f64 {
        self.grand_total
    }

    #[inline]
    pub fn factor_pixel(&self, i: usize, k: usize) -> f64 {
        self.factor_pixels[i * self.axes() + k]
    }

    #[inline]
    pub fn channel_factor(&self, k: usize, j: usize) -> f64 {
        self.channel_factors[k * self.channels() + j]
    }

    /// Coordinates of every pixel on axis `k`, laid out on the image grid.
    pub fn factor_raster(&self, k: usize) -> Raster {
        let kk = self.axes();
        Raster::new(
            self.width,
            self.height,
            (0..self.pixels())
                .map(|i| self.factor_pixels[i * kk + k])
                .collect(),
        )
        .expect("model grid is valid")
    }

    /// The factor pixels of the first `k` axes as a series (one channel per axis).
    pub fn factor_image(&self, k: usize) -> Result<HyperImage> {
        if k == 0 || k > self.axes() {
            return Err(Error::InvalidParameter(format!(
                "factor image with {k} axes, model has {}",
                self.axes()
            )));
        }
        let chans: Vec<Raster> = (0..k).map(|a| self.factor_raster(a)).collect();
        HyperImage::from_channels(&chans)
    }
}

fn check_table(img: &HyperImage) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (p, l) = (img.pixels(), img.channels());
    let mut rows = vec![0.0; p];
    let mut cols = vec![0.0; l];
    for j in 0..l {
        for (i, &v) in img.channel(j).iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeValue {
                    pixel: i,
                    channel: j,
                    value: v,
                });
            }
            rows[i] += v;
            cols[j] += v;
        }
    }
    if let Some(i) = rows.iter().position(|&r| r <= 0.0) {
        return Err(Error::DegenerateMargin(format!("pixel {i} has a zero spectrum")));
    }
    if let Some(j) = cols.iter().position(|&c| c <= 0.0) {
        return Err(Error::DegenerateMargin(format!("channel {j} is identically zero")));
    }
    let total: f64 = rows.iter().sum();
    Ok((rows, cols, total))
}

/// Fits up to `k_max` factorial axes.
pub fn fca_fit(img: &HyperImage, k_max: usize) -> Result<FcaModel> {
    let (rows, cols, total) = check_table(img)?;
    let (p, l) = (img.pixels(), img.channels());
    let r: Vec<f64> = rows.iter().map(|v| v / total).collect();
    let c: Vec<f64> = cols.iter().map(|v| v / total).collect();
    let sqrt_c: Vec<f64> = c.iter().map(|v| v.sqrt()).collect();

    let residual_row = |i: usize, out: &mut [f64]| {
        let sr = r[i].sqrt();
        for j in 0..l {
            let pij = img.value(i, j) / total;
            out[j] = (pij - r[i] * c[j]) / (sr * sqrt_c[j]);
        }
    };

    // Gram matrix sᵀs, accumulated per fixed pixel chunk then summed in
    // chunk order so the result does not depend on scheduling.
    let partials: Vec<Vec<f64>> = (0..p.div_ceil(PIXEL_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut g = vec![0.0; l * l];
            let mut row = vec![0.0; l];
            let end = ((chunk + 1) * PIXEL_CHUNK).min(p);
            for i in chunk * PIXEL_CHUNK..end {
                residual_row(i, &mut row);
                for a in 0..l {
                    let ra = row[a];
                    if ra == 0.0 {
                        continue;
                    }
                    let ga = &mut g[a * l..(a + 1) * l];
                    for b in a..l {
                        ga[b] += ra * row[b];
                    }
                }
            }
            g
        })
        .collect();
    let mut gram = DMatrix::<f64>::zeros(l, l);
    for part in &partials {
        for a in 0..l {
            for b in a..l {
                gram[(a, b)] += part[a * l + b];
            }
        }
    }
    for a in 0..l {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let trace: f64 = (0..l).map(|a| gram[(a, a)]).sum();

    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let tol = 1e-13 + 1e-12 * trace.abs();
    let k_cap = k_max.min(l.saturating_sub(1));
    let axes: Vec<usize> = order
        .into_iter()
        .filter(|&a| eig.eigenvalues[a] > tol)
        .take(k_cap)
        .collect();
    let kk = axes.len();

    let inertias: Vec<f64> = axes.iter().map(|&a| eig.eigenvalues[a]).collect();
    let mut channel_factors = vec![0.0; kk * l];
    for (k, &a) in axes.iter().enumerate() {
        let sigma = inertias[k].sqrt();
        for j in 0..l {
            channel_factors[k * l + j] = sigma * eig.eigenvectors[(j, a)] / sqrt_c[j];
        }
    }

    // c_iα = (s v_α)_i / sqrt(r_i)
    let mut factor_pixels = vec![0.0; p * kk];
    if kk > 0 {
        factor_pixels
            .par_chunks_mut(kk)
            .enumerate()
            .for_each(|(i, out)| {
                let mut row = vec![0.0; l];
                residual_row(i, &mut row);
                let sr = r[i].sqrt();
                for (k, &a) in axes.iter().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..l {
                        acc += row[j] * eig.eigenvectors[(j, a)];
                    }
                    out[k] = acc / sr;
                }
            });
    }

    // Sign convention: the largest-magnitude pixel coordinate is positive.
    for k in 0..kk {
        let mut best = 0.0f64;
        for i in 0..p {
            let v = factor_pixels[i * kk + k];
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            for i in 0..p {
                factor_pixels[i * kk + k] = -factor_pixels[i * kk + k];
            }
            for j in 0..l {
                channel_factors[k * l + j] = -channel_factors[k * l + j];
            }
        }
    }

    Ok(FcaModel {
        width: img.width(),
        height: img.height(),
        factor_pixels,
        channel_factors,
        inertias,
        total_inertia: trace,
        row_marginals: r,
        col_marginals: c,
        grand_total: total,
    })
}

/// Reconstructs the series from the axes in `kept` (zero-based). An empty set
/// yields the independence model `f r_i c_j`.
pub fn fca_reconstruct(model: &FcaModel, kept: &[usize]) -> Result<HyperImage> {
    if let Some(&bad) = kept.iter().find(|&&k| k >= model.axes()) {
        return Err(Error::InvalidParameter(format!(
            "axis {bad} not in model with {} axes",
            model.axes()
        )));
    }
    let (p, l) = (model.pixels(), model.channels());
    let kk = model.axes();
    // Fold 1/sqrt(μ) into the channel factors once.
    let scaled: Vec<(usize, Vec<f64>)> = kept
        .iter()
        .map(|&k| {
            let s = 1.0 / model.inertias[k].sqrt();
            (
                k,
                (0..l).map(|j| model.channel_factor(k, j) * s).collect(),
            )
        })
        .collect();
    let mut data = vec![0.0; p * l];
    let f = model.grand_total;
    data.par_chunks_mut(p).enumerate().for_each(|(j, chan)| {
        let cj = model.col_marginals[j];
        for (i, out) in chan.iter_mut().enumerate() {
            let mut corr = 1.0;
            for (k, d) in &scaled {
                corr += model.factor_pixels[i * kk + k] * d[j];
            }
            *out = f * model.row_marginals[i] * cj * corr;
        }
    });
    HyperImage::new(model.width, model.height, l, data)
}

/// Centered spatial covariance `ḡ(h)` for lags `h ∈ [−H, H]²`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMap {
    max_lag: usize,
    /// `(2H+1)²` values, row-major in `(dy, dx)`, lag `(0, 0)` at the centre.
    values: Vec<f64>,
}

impl CovarianceMap {
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn side(&self) -> usize {
        2 * self.max_lag + 1
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let h = self.max_lag as isize;
        assert!(dx.abs() <= h && dy.abs() <= h, "lag outside window");
        self.values[((dy + h) as usize) * self.side() + (dx + h) as usize]
    }

    pub fn at_origin(&self) -> f64 {
        self.at(0, 0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_raster(&self) -> Raster {
        Raster::new(self.side(), self.side(), self.values.clone()).expect("square window")
    }
}

pub fn spatial_covariance(ch: &Raster, max_lag: usize) -> Result<CovarianceMap> {
    let (w, h) = (ch.width(), ch.height());
    let side = 2 * max_lag + 1;
    if w <= side || h <= side {
        return Err(Error::InvalidParameter(format!(
            "{w}x{h} raster too small for covariance lag {max_lag}"
        )));
    }
    let mean = ch.mean();
    let c: Vec<f64> = ch.data().iter().map(|v| v - mean).collect();
    let hl = max_lag as isize;
    // Lags in the upper half-plane (dy > 0, or dy == 0 and dx >= 0); the rest
    // follow from ḡ(h) = ḡ(−h).
    let half: Vec<(isize, isize)> = (0..=hl)
        .flat_map(|dy| (-hl..=hl).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dy > 0 || dx >= 0)
        .collect();
    let vals: Vec<f64> = half
        .par_iter()
        .map(|&(dx, dy)| {
            let (ax, ay) = (dx.unsigned_abs(), dy as usize);
            let mut acc = 0.0;
            let mut n = 0usize;
            for y in 0..h - ay {
                let (x0, x1) = if dx >= 0 { (0, w - ax) } else { (ax, w) };
                let row = &c[y * w..(y + 1) * w];
                let shifted = &c[(y + ay) * w..(y + ay + 1) * w];
                for x in x0..x1 {
                    acc += row[x] * shifted[(x as isize + dx) as usize];
                }
                n += x1 - x0;
            }
            acc / n as f64
        })
        .collect();
    let mut values = vec![0.0; side * side];
    for (&(dx, dy), &v) in half.iter().zip(&vals) {
        let a = ((dy + hl) as usize) * side + (dx + hl) as usize;
        let b = ((-dy + hl) as usize) * side + (-dx + hl) as usize;
        values[a] = v;
        values[b] = v;
    }
    Ok(CovarianceMap { max_lag, values })
}

/// Largest covariance lag usable on a raster, capped at [`DEFAULT_MAX_LAG`].
pub fn usable_lag(ch: &Raster) -> usize {
    let m = ch.width().min(ch.height());
    DEFAULT_MAX_LAG.min(m.saturating_sub(2) / 2)
}

/// Signal-to-noise ratio from the nugget effect of the covariance:
/// `γḡ(0) / (ḡ(0) − γḡ(0))` with `γ` the opening by a 3×3 square.
///
/// Returns `f64::INFINITY` when the covariance shows no nugget.
pub fn channel_snr(ch: &Raster) -> Result<f64> {
    let lag = usable_lag(ch);
    if lag == 0 {
        return Err(Error::InvalidParameter(format!(
            "{}x{} raster too small to estimate a nugget",
            ch.width(),
            ch.height()
        )));
    }
    channel_snr_with_lag(ch, lag)
}

pub fn channel_snr_with_lag(ch: &Raster, max_lag: usize) -> Result<f64> {
    let first = ch.data()[0];
    if ch.data().iter().all(|&v| v == first) {
        return Err(Error::Undefined("SNR of a constant raster".into()));
    }
    let cov = spatial_covariance(ch, max_lag)?;
    let g0 = cov.at_origin();
    if !(g0 > 0.0) {
        return Err(Error::Undefined("zero covariance at the origin".into()));
    }
    let opened = opening(&cov.to_raster(), &StructuringElement::square(3));
    let centre = opened.get(max_lag, max_lag);
    let signal = centre.max(0.0);
    let noise = g0 - centre;
    if noise <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(signal / noise)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnrReport {
    /// SNR of each fitted axis.
    pub snr: Vec<f64>,
    /// Inertia of each axis as a fraction of the total inertia.
    pub inertia_fraction: Vec<f64>,
    /// Zero-based indices of the retained axes.
    pub kept: Vec<usize>,
}

/// Axes whose SNR is strictly above `threshold`. The result need not be a
/// prefix of the inertia order.
pub fn select_axes(snr: &[f64], threshold: f64) -> Vec<usize> {
    snr.iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(k, _)| k)
        .collect()
}

/// SNR of every factor-pixel raster of `model` and the axes above `threshold`.
pub fn axis_snr_report(model: &FcaModel, threshold: f64) -> Result<SnrReport> {
    let snr: Vec<f64> = (0..model.axes())
        .into_par_iter()
        .map(|k| match channel_snr(&model.factor_raster(k)) {
            Ok(s) => Ok(s),
            // A spatially constant axis carries no signal.
            Err(Error::Undefined(_)) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let kept = select_axes(&snr, threshold);
    Ok(SnrReport {
        inertia_fraction: model.inertia_fractions(),
        snr,
        kept,
    })
}

/// Result of two FCA–reconstruction passes.
#[derive(Clone, Debug)]
pub struct Denoised {
    pub image: HyperImage,
    /// Axis diagnostics of the first FCA.
    pub report: SnrReport,
    /// Axis diagnostics of the second FCA.
    pub second_report: SnrReport,
    /// Minimum of the first reconstruction, removed before the second FCA.
    pub epsilon: f64,
    pub first_pass: HyperImage,
}

fn fit_select_reconstruct(
    img: &HyperImage,
    threshold: f64,
    k_max: usize,
) -> Result<(HyperImage, SnrReport)> {
    let model = fca_fit(img, k_max)?;
    let report = axis_snr_report(&model, threshold)?;
    let recon = fca_reconstruct(&model, &report.kept)?;
    Ok((recon, report))
}

/// Double FCA-reconstruction: `t_ε ∘ ζ̂⁻¹ ∘ ζ ∘ t_−ε ∘ ζ̂⁻¹ ∘ ζ`, with `ε` the
/// minimum of the first reconstruction.
pub fn denoise_double_fca(img: &HyperImage, threshold: f64, k_max: usize) -> Result<Denoised> {
    let (first, report) = fit_select_reconstruct(img, threshold, k_max)?;
    let epsilon = first.min();
    let shifted = first.map(|v| v - epsilon);
    if let Some(pos) = shifted.data().iter().position(|&v| v < 0.0) {
        return Err(Error::Internal(format!(
            "negative value after translation at flat index {pos}"
        )));
    }
    let (second, second_report) = fit_select_reconstruct(&shifted, threshold, k_max)?;
    Ok(Denoised {
        image: second.map(|v| v + epsilon),
        report,
        second_report,
        epsilon,
        first_pass: first,
    })
}

fn check_same(a: &HyperImage, b: &HyperImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Channel-wise absolute residues `|f − f̂|`.
pub fn residues(orig: &HyperImage, recon: &HyperImage) -> Result<HyperImage> {
    check_same(orig, recon)?;
    let data = orig
        .data()
        .iter()
        .zip(recon.data())
        .map(|(a, b)| (a - b).abs())
        .collect();
    HyperImage::new(orig.width(), orig.height(), orig.channels(), data)
}

fn population_variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `Σ_j var(f̂_j) / Σ_j var(f_j − f̂_j)`; `+∞` when the residual has no variance.
pub fn hyper_snr(orig: &HyperImage, recon: &HyperImage) -> Result<f64> {
    check_same(orig, recon)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..orig.channels() {
        let (o, r) = (orig.channel(j), recon.channel(j));
        num += population_variance(r.iter().copied());
        den += population_variance(o.iter().zip(r).map(|(a, b)| a - b));
    }
    if den <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}
