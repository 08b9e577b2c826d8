//! Stochastic watershed: random germs conditioned by a classification,
//! Monte-Carlo contour densities and the probabilistic gradient.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{morph_gradient, normalize01, vector_gradient, GradientMap, MetricKind};
use crate::morphology::{
    closing_by_reconstruction, erode_mask, gaussian_filter, Mask, StructuringElement,
};
use crate::raster::{neighbors4, HyperImage, LabelField, Raster};
use crate::rng::RngStream;
use crate::watershed::{marker_watershed, volume_watershed, Partition, Relief};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GermStrategy {
    UniformPoints,
    RegionalizedPoints,
    BallOneHit,
    BallUnion,
    BallUnionConnected,
}

impl std::str::FromStr for GermStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform_points" => GermStrategy::UniformPoints,
            "regionalized_points" => GermStrategy::RegionalizedPoints,
            "ball_one_hit" => GermStrategy::BallOneHit,
            "ball_union" => GermStrategy::BallUnion,
            "ball_union_connected" => GermStrategy::BallUnionConnected,
            _ => return Err(Error::Config(format!("unknown germ strategy {s:?}"))),
        })
    }
}

/// Largest accepted kernel standard deviation, in pixels.
pub const MAX_SIGMA: f64 = 1000.0;
/// Largest accepted ball radius, in pixels.
pub const MAX_RADIUS: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GermParams {
    /// Germ draws per realisation.
    pub n: usize,
    /// Realisations.
    pub m: usize,
    /// Minimal component area eligible for germs.
    pub s: usize,
    /// Maximal ball radius.
    pub r_max: usize,
    /// Standard deviation of the Parzen kernel.
    pub sigma: f64,
    pub strategy: GermStrategy,
    /// Class treated as already marked (no germs), besides the void class.
    pub background_class: Option<u32>,
}

impl Default for GermParams {
    fn default() -> Self {
        GermParams {
            n: 100,
            m: 100,
            s: 2,
            r_max: 30,
            sigma: 3.0,
            strategy: GermStrategy::BallUnionConnected,
            background_class: None,
        }
    }
}

impl GermParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.s == 0 || self.r_max == 0 {
            return Err(Error::InvalidParameter(
                "N, M, S and Rmax must all be at least 1".into(),
            ));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kernel sigma {} must be positive",
                self.sigma
            )));
        }
        if self.sigma > MAX_SIGMA || self.r_max > MAX_RADIUS {
            return Err(Error::InvalidParameter(format!(
                "sigma {} or Rmax {} exceeds the limits {MAX_SIGMA} and {MAX_RADIUS}",
                self.sigma, self.r_max
            )));
        }
        if self.m > u32::MAX as usize || self.n > u32::MAX as usize {
            return Err(Error::InvalidParameter("too many germs or realisations".into()));
        }
        Ok(())
    }

    /// Parses `N=100,M=100,S=2,Rmax=30` (any subset, any order) over the
    /// defaults.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let mut p = GermParams::default();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("germ setting {item:?} is not key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("{key}: {value:?} is not a count")))
            };
            match key {
                "N" | "n" => p.n = int()?,
                "M" | "m" => p.m = int()?,
                "S" | "s" => p.s = int()?,
                "Rmax" | "rmax" | "r_max" => p.r_max = int()?,
                "sigma" => {
                    p.sigma = value
                        .parse()
                        .map_err(|_| Error::Config(format!("sigma: {value:?} is not a number")))?
                }
                "strategy" => p.strategy = value.parse()?,
                _ => return Err(Error::Config(format!("unknown germ setting {key:?}"))),
            }
        }
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    /// Odd Parzen window covering ±3σ.
    pub fn kernel_window(&self) -> usize {
        2 * (3.0 * self.sigma).ceil() as usize + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdfKind {
    Marginal,
    Vectorial,
    ProbabilisticGradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourPdf {
    pub raster: Raster,
    pub kind: PdfKind,
}

/// Erodes every class by the 3×3 square and fills its holes.
///
/// Eroded pixels keep their class; a filled hole only claims pixels released
/// by the erosion, the lowest class id winning where several holes overlap.
/// Pixels claimed by no class get the void label `num_classes`.
pub fn preprocess_classification(k: &LabelField) -> LabelField {
    let (w, h) = (k.width(), k.height());
    let nc = k.num_classes();
    let se = StructuringElement::square(3);
    let processed: Vec<(Mask, Mask)> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let m = Mask::from_fn(w, h, |x, y| {
                let i = y * w + x;
                !k.is_void(i) && k.get(i) == c
            });
            let eroded = erode_mask(&m, &se);
            let filled = closing_by_reconstruction(&eroded);
            (eroded, filled)
        })
        .collect();
    let mut out = vec![nc; k.len()];
    for (c, (eroded, _)) in processed.iter().enumerate() {
        for (o, &set) in out.iter_mut().zip(eroded.data()) {
            if set {
                *o = c as u32;
            }
        }
    }
    for (c, (_, filled)) in processed.iter().enumerate() {
        for (o, &set) in out.iter_mut().zip(filled.data()) {
            if set && *o == nc {
                *o = c as u32;
            }
        }
    }
    LabelField::new(w, h, out, nc, Some(nc)).expect("labels in range")
}

/// Adds `B(centre, r) ∩ C` to `out` with `label`, where `C` is the component
/// `comp` of `index`.
#[allow(clippy::too_many_arguments)]
fn paint_ball(
    out: &mut [u32],
    index: &[Option<u32>],
    comp: u32,
    centre: usize,
    r: usize,
    label: u32,
    w: usize,
    h: usize,
) {
    let (cx, cy) = ((centre % w) as isize, (centre / w) as isize);
    let r = r as isize;
    for y in (cy - r).max(0)..=(cy + r).min(h as isize - 1) {
        let dy = y - cy;
        for x in (cx - r).max(0)..=(cx + r).min(w as isize - 1) {
            let dx = x - cx;
            let p = y as usize * w + x as usize;
            if dx * dx + dy * dy <= r * r && index[p] == Some(comp) {
                out[p] = label;
            }
        }
    }
}

/// Draws the germs of one realisation. Returns a marker field whose void
/// label (`= marker count`) marks pixels outside every germ.
pub fn sample_germs(k_hat: &LabelField, params: &GermParams, stream: RngStream) -> Result<LabelField> {
    params.validate()?;
    let (w, h) = (k_hat.width(), k_hat.height());
    let n_px = k_hat.len();
    let mut rng = stream.rng();
    const NONE: u32 = u32::MAX;
    let mut out = vec![NONE; n_px];
    let mut count = 0u32;

    if params.strategy == GermStrategy::UniformPoints {
        for _ in 0..params.n {
            let p = rng.gen_range(0..n_px);
            if out[p] == NONE {
                out[p] = count;
                count += 1;
            }
        }
        return finish(w, h, out, count);
    }

    let comps = k_hat.components();
    let eligible: Vec<bool> = (0..comps.len())
        .map(|c| comps.area[c] >= params.s && Some(comps.label[c]) != params.background_class)
        .collect();
    if !eligible.iter().any(|&e| e) {
        return Err(Error::EmptyMarkers);
    }
    let mut marked: Vec<bool> = eligible.iter().map(|e| !e).collect();
    let mut comp_label = vec![NONE; comps.len()];

    for _ in 0..params.n {
        let p = rng.gen_range(0..n_px);
        let Some(c) = comps.index[p] else { continue };
        let cu = c as usize;
        if marked[cu] {
            continue;
        }
        match params.strategy {
            GermStrategy::RegionalizedPoints => {
                marked[cu] = true;
                out[p] = count;
                count += 1;
            }
            GermStrategy::BallOneHit => {
                marked[cu] = true;
                let r = rng.gen_range(1..=params.r_max);
                paint_ball(&mut out, &comps.index, c, p, r, count, w, h);
                count += 1;
            }
            GermStrategy::BallUnion | GermStrategy::BallUnionConnected => {
                if comp_label[cu] == NONE {
                    comp_label[cu] = count;
                    count += 1;
                }
                let r = rng.gen_range(1..=params.r_max);
                paint_ball(&mut out, &comps.index, c, p, r, comp_label[cu], w, h);
            }
            GermStrategy::UniformPoints => unreachable!(),
        }
    }

    if params.strategy == GermStrategy::BallUnionConnected {
        // Relabel the connected pieces of each component's union of balls.
        let mut relabelled = vec![NONE; n_px];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..n_px {
            if out[start] == NONE || relabelled[start] != NONE {
                continue;
            }
            relabelled[start] = next;
            stack.push(start);
            while let Some(p) = stack.pop() {
                for q in neighbors4(p, w, h) {
                    if out[q] != NONE && relabelled[q] == NONE && comps.index[q] == comps.index[p] {
                        relabelled[q] = next;
                        stack.push(q);
                    }
                }
            }
            next += 1;
        }
        out = relabelled;
        count = next;
    }
    finish(w, h, out, count)
}

fn finish(w: usize, h: usize, mut out: Vec<u32>, count: u32) -> Result<LabelField> {
    if count == 0 {
        return Err(Error::EmptyMarkers);
    }
    for l in out.iter_mut().filter(|l| **l == u32::MAX) {
        *l = count;
    }
    LabelField::new(w, h, out, count, Some(count))
}

/// Contour hit counts of `realisations` watersheds of `relief`, the i-th
/// realisation drawing its germs from `stream(i)`.
fn contour_counts(
    relief: &Relief,
    k_hat: &LabelField,
    params: &GermParams,
    realisations: usize,
    stream: impl Fn(usize) -> RngStream + Sync,
) -> Result<Vec<u32>> {
    let n = k_hat.len();
    (0..realisations)
        .into_par_iter()
        .map(|i| -> Result<Vec<u32>> {
            let markers = sample_germs(k_hat, params, stream(i))?;
            let part = marker_watershed(relief, &markers)?;
            Ok(part.contours().data().iter().map(|&b| b as u32).collect())
        })
        .try_reduce(
            || vec![0u32; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

fn smoothed_density(counts: &[u32], total: usize, w: usize, h: usize, params: &GermParams) -> Result<Raster> {
    let mean = Raster::new(w, h, counts.iter().map(|&c| c as f64 / total as f64).collect())?;
    gaussian_filter(&mean, params.kernel_window(), params.sigma)
}

fn check_labels(img_w: usize, img_h: usize, k_hat: &LabelField) -> Result<()> {
    if k_hat.width() != img_w || k_hat.height() != img_h {
        return Err(Error::DimensionMismatch(format!(
            "image {img_w}x{img_h} vs classification {}x{}",
            k_hat.width(),
            k_hat.height()
        )));
    }
    Ok(())
}

/// Smoothed contour density of one channel: `M` watersheds of its
/// morphological gradient, realisation `i` using substream `(channel, i)`.
pub fn channel_pdf(
    ch: &Raster,
    k_hat: &LabelField,
    params: &GermParams,
    seed: u64,
    channel: u32,
) -> Result<Raster> {
    params.validate()?;
    check_labels(ch.width(), ch.height(), k_hat)?;
    let relief = Relief::from_raster(&morph_gradient(ch, &StructuringElement::square(3)).raster)?;
    let counts = contour_counts(&relief, k_hat, params, params.m, |i| {
        RngStream::substream(seed, channel, i as u32)
    })?;
    smoothed_density(&counts, params.m, ch.width(), ch.height(), params)
}

/// Weighted marginal density `Σ_j w_j pdf_j`.
pub fn marginal_pdf(
    img: &HyperImage,
    weights: &[f64],
    k_hat: &LabelField,
    params: &GermParams,
    seed: u64,
) -> Result<ContourPdf> {
    if weights.len() != img.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} channels",
            weights.len(),
            img.channels()
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "channel weights sum to {total}, not 1"
        )));
    }
    let pdfs: Vec<Raster> = (0..img.channels())
        .into_par_iter()
        .map(|j| channel_pdf(&img.channel_raster(j), k_hat, params, seed, j as u32))
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; img.pixels()];
    for (pdf, &wj) in pdfs.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(pdf.data()) {
            *a += wj * v;
        }
    }
    Ok(ContourPdf {
        raster: Raster::new(img.width(), img.height(), acc)?,
        kind: PdfKind::Marginal,
    })
}

/// Density of `M × L` watersheds of the metric gradient of the whole image,
/// realisation `i` using substream `(0, i)`.
pub fn vector_pdf(
    img: &HyperImage,
    metric: &MetricKind,
    k_hat: &LabelField,
    params: &GermParams,
    seed: u64,
) -> Result<ContourPdf> {
    params.validate()?;
    check_labels(img.width(), img.height(), k_hat)?;
    let g = vector_gradient(img, metric, &StructuringElement::square(3))?;
    let relief = Relief::from_raster(&g.raster)?;
    let total = params.m * img.channels();
    let counts = contour_counts(&relief, k_hat, params, total, |i| {
        RngStream::substream(seed, 0, i as u32)
    })?;
    Ok(ContourPdf {
        raster: smoothed_density(&counts, total, img.width(), img.height(), params)?,
        kind: PdfKind::Vectorial,
    })
}

/// `normalize01(normalize01(pdf) + normalize01(g))`.
pub fn probabilistic_gradient(pdf: &ContourPdf, g: &GradientMap) -> Result<ContourPdf> {
    if !pdf.raster.same_shape(&g.raster) {
        return Err(Error::DimensionMismatch("density and gradient grids differ".into()));
    }
    let a = normalize01(&GradientMap {
        raster: pdf.raster.clone(),
        normalized: false,
    });
    let b = normalize01(g);
    let sum = Raster::new(
        a.raster.width(),
        a.raster.height(),
        a.raster.data().iter().zip(b.raster.data()).map(|(x, y)| x + y).collect(),
    )?;
    Ok(ContourPdf {
        raster: normalize01(&GradientMap {
            raster: sum,
            normalized: false,
        })
        .raster,
        kind: PdfKind::ProbabilisticGradient,
    })
}

/// Volume-criterion watershed of a density into `r` regions.
pub fn segment_pdf(pdf: &ContourPdf, r: usize) -> Result<Partition> {
    volume_watershed(&Relief::from_raster(&pdf.raster)?, r)
}
