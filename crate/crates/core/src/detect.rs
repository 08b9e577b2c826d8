//! Per-region statistics of the parameter maps, the tumour-candidate rule and
//! coefficient-of-variation confidence maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterMaps;
use crate::raster::Raster;
use crate::watershed::Partition;

/// Default threshold on the normalized intercept.
pub const DEFAULT_B_THRESHOLD: f64 = 800.0;
/// Display clamp of `β_a`.
pub const BETA_A_CLAMP: f64 = 5.0;
/// Display clamp of `β_b`.
pub const BETA_B_CLAMP: f64 = 1.0;
/// Quantile of the raw intensity under which a region counts as background.
pub const BACKGROUND_QUANTILE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStat {
    pub id: u32,
    pub area: usize,
    pub mean_a: f64,
    pub std_a: f64,
    pub mean_b: f64,
    pub std_b: f64,
    /// `σ_a / E[a]`; `+∞` when the mean is not positive (written as `null`).
    pub beta_a: f64,
    pub beta_b: f64,
    pub detected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionStats {
    pub regions: Vec<RegionStat>,
}

impl RegionStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn detected(&self) -> impl Iterator<Item = &RegionStat> {
        self.regions.iter().filter(|r| r.detected)
    }
}

fn coefficient_of_variation(mean: f64, std: f64) -> f64 {
    if mean > 0.0 {
        std / mean
    } else {
        f64::INFINITY
    }
}

/// Population mean and standard deviation of `a` and `b` in every region.
pub fn region_stats(params: &ParameterMaps, seg: &Partition) -> Result<RegionStats> {
    if params.a.width() != seg.width() || params.a.height() != seg.height() {
        return Err(Error::DimensionMismatch(format!(
            "maps {}x{} vs segmentation {}x{}",
            params.a.width(),
            params.a.height(),
            seg.width(),
            seg.height()
        )));
    }
    let r = seg.region_count();
    let mut n = vec![0usize; r];
    let mut sa = vec![0.0; r];
    let mut sb = vec![0.0; r];
    for (i, &l) in seg.labels().iter().enumerate() {
        n[l as usize] += 1;
        sa[l as usize] += params.a.data()[i];
        sb[l as usize] += params.b.data()[i];
    }
    let mean = |s: &[f64], k: usize| if n[k] > 0 { s[k] / n[k] as f64 } else { 0.0 };
    let ma: Vec<f64> = (0..r).map(|k| mean(&sa, k)).collect();
    let mb: Vec<f64> = (0..r).map(|k| mean(&sb, k)).collect();
    let mut va = vec![0.0; r];
    let mut vb = vec![0.0; r];
    for (i, &l) in seg.labels().iter().enumerate() {
        let k = l as usize;
        va[k] += (params.a.data()[i] - ma[k]).powi(2);
        vb[k] += (params.b.data()[i] - mb[k]).powi(2);
    }
    let regions = (0..r)
        .map(|k| {
            let area = n[k].max(1) as f64;
            let std_a = (va[k] / area).sqrt();
            let std_b = (vb[k] / area).sqrt();
            RegionStat {
                id: k as u32,
                area: n[k],
                mean_a: ma[k],
                std_a,
                mean_b: mb[k],
                std_b,
                beta_a: coefficient_of_variation(ma[k], std_a),
                beta_b: coefficient_of_variation(mb[k], std_b),
                detected: false,
            }
        })
        .collect();
    Ok(RegionStats { regions })
}

/// Flags regions with `mean(a) > 0` and `mean(b) > b_threshold`.
pub fn detect_regions(stats: &RegionStats, b_threshold: f64) -> RegionStats {
    detect_regions_excluding(stats, b_threshold, None)
}

/// [`detect_regions`], never flagging the regions marked in `excluded`.
pub fn detect_regions_excluding(
    stats: &RegionStats,
    b_threshold: f64,
    excluded: Option<&[bool]>,
) -> RegionStats {
    let regions = stats
        .regions
        .iter()
        .map(|r| {
            let skip = excluded.is_some_and(|e| e.get(r.id as usize).copied().unwrap_or(false));
            RegionStat {
                detected: !skip && r.mean_a > 0.0 && r.mean_b > b_threshold,
                ..r.clone()
            }
        })
        .collect();
    RegionStats { regions }
}

/// Regions whose mean `intensity` lies below the image's 5th percentile.
pub fn background_regions(seg: &Partition, intensity: &Raster) -> Result<Vec<bool>> {
    if intensity.width() != seg.width() || intensity.height() != seg.height() {
        return Err(Error::DimensionMismatch("intensity and segmentation grids differ".into()));
    }
    let mut sorted = intensity.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = sorted[((sorted.len() - 1) as f64 * BACKGROUND_QUANTILE).round() as usize];
    let r = seg.region_count();
    let mut sum = vec![0.0; r];
    let mut n = vec![0usize; r];
    for (i, &l) in seg.labels().iter().enumerate() {
        sum[l as usize] += intensity.data()[i];
        n[l as usize] += 1;
    }
    Ok((0..r).map(|k| n[k] > 0 && sum[k] / (n[k] as f64) < q).collect())
}

/// Per-pixel `β_a` clamped to `[0, 5]` and `β_b` clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMaps {
    pub beta_a: Raster,
    pub beta_b: Raster,
}

pub fn confidence_maps(stats: &RegionStats, seg: &Partition) -> Result<ConfidenceMaps> {
    if stats.regions.len() != seg.region_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} region statistics for {} regions",
            stats.regions.len(),
            seg.region_count()
        )));
    }
    let map = |f: &dyn Fn(&RegionStat) -> f64, clamp: f64| {
        let data = seg
            .labels()
            .iter()
            .map(|&l| f(&stats.regions[l as usize]).clamp(0.0, clamp))
            .collect();
        Raster::new(seg.width(), seg.height(), data).expect("same grid")
    };
    Ok(ConfidenceMaps {
        beta_a: map(&|r| r.beta_a, BETA_A_CLAMP),
        beta_b: map(&|r| r.beta_b, BETA_B_CLAMP),
    })
}

/// Blue (`0`, highest risk) to red (`max`, lowest risk) colour ramp.
pub fn risk_color(v: f64, max: f64) -> [u8; 3] {
    let t = (v / max).clamp(0.0, 1.0);
    let t = if t.is_nan() { 1.0 } else { t };
    let r = (255.0 * t).round() as u8;
    [r, 0, 255 - r]
}

/// Renders a confidence map as interleaved RGB bytes.
pub fn render_risk(map: &Raster, max: f64) -> Vec<u8> {
    map.data().iter().flat_map(|&v| risk_color(v, max)).collect()
}
