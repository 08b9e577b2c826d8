//! Rasters, multichannel series and label fields.
//!
//! All rasters are row-major with the origin at the top-left corner. A
//! [`HyperImage`] stores its channels contiguously one after the other
//! (channel-major), which is also the on-disk order of the `.hsr` container.

use crate::error::{Error, Result};

/// A single-channel real raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty raster");
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty raster");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }
}

/// A P-pixel, L-channel real raster series.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl HyperImage {
    /// `data` is channel-major: all pixels of channel 0, then channel 1, ...
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidParameter(format!(
                "series dimensions must be positive, got {width}x{height}x{channels}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(channels))
            .ok_or_else(|| Error::InvalidParameter("series dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height}x{channels} series",
                data.len()
            )));
        }
        Ok(HyperImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_channels(channels: &[Raster]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidParameter("no channels".into()))?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(w * h * channels.len());
        for (j, ch) in channels.iter().enumerate() {
            if ch.width() != w || ch.height() != h {
                return Err(Error::DimensionMismatch(format!(
                    "channel {j} is {}x{}, expected {w}x{h}",
                    ch.width(),
                    ch.height()
                )));
            }
            data.extend_from_slice(ch.data());
        }
        HyperImage::new(w, h, channels.len(), data)
    }

    /// Builds a series from per-pixel spectra (`spectra[i][j]`).
    pub fn from_spectra(width: usize, height: usize, spectra: &[Vec<f64>]) -> Result<Self> {
        if spectra.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} spectra for {width}x{height} pixels",
                spectra.len()
            )));
        }
        let channels = spectra.first().map_or(0, Vec::len);
        let p = width * height;
        let mut data = vec![0.0; p * channels];
        for (i, s) in spectra.iter().enumerate() {
            if s.len() != channels {
                return Err(Error::DimensionMismatch(format!(
                    "spectrum {i} has {} channels, expected {channels}",
                    s.len()
                )));
            }
            for (j, &v) in s.iter().enumerate() {
                data[j * p + i] = v;
            }
        }
        HyperImage::new(width, height, channels, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels P.
    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn value(&self, pixel: usize, channel: usize) -> f64 {
        self.data[channel * self.pixels() + pixel]
    }

    /// Zero-based channel slice.
    #[inline]
    pub fn channel(&self, j: usize) -> &[f64] {
        let p = self.pixels();
        &self.data[j * p..(j + 1) * p]
    }

    pub fn channel_raster(&self, j: usize) -> Raster {
        Raster::new(self.width, self.height, self.channel(j).to_vec())
            .expect("channel shape is valid")
    }

    /// Zero-based spectrum of a pixel.
    pub fn spectrum(&self, i: usize) -> Vec<f64> {
        let p = self.pixels();
        (0..self.channels).map(|j| self.data[j * p + i]).collect()
    }

    /// Channel `j` with the 1-based numbering used in the analysis notation
    /// (`f_{λ_1} … f_{λ_L}`).
    pub fn channel_view(&self, j: usize) -> Result<&[f64]> {
        if j == 0 || j > self.channels {
            return Err(Error::Index {
                what: "channel",
                index: j,
                len: self.channels,
            });
        }
        Ok(self.channel(j - 1))
    }

    /// Vector pixel `i`, 1-based.
    pub fn spectrum_view(&self, i: usize) -> Result<Vec<f64>> {
        if i == 0 || i > self.pixels() {
            return Err(Error::Index {
                what: "pixel",
                index: i,
                len: self.pixels(),
            });
        }
        Ok(self.spectrum(i - 1))
    }

    pub fn same_shape(&self, other: &HyperImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HyperImage {
        HyperImage {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-pixel class assignment, with an optional reserved "void" label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelField {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    num_classes: u32,
    void_id: Option<u32>,
}

/// Connected components of the non-void labels of a [`LabelField`].
#[derive(Clone, Debug)]
pub struct Components {
    /// Component index per pixel, `None` on void pixels.
    pub index: Vec<Option<u32>>,
    /// Class label of each component.
    pub label: Vec<u32>,
    /// Pixel count of each component.
    pub area: Vec<usize>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }
}

impl LabelField {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u32>,
        num_classes: u32,
        void_id: Option<u32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("empty label field".into()));
        }
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {width}x{height} pixels",
                labels.len()
            )));
        }
        if let Some(v) = void_id {
            if v < num_classes {
                return Err(Error::InvalidParameter(format!(
                    "void id {v} collides with class range 0..{num_classes}"
                )));
            }
        }
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= num_classes && Some(l) != void_id)
        {
            return Err(Error::InvalidParameter(format!(
                "label {l} at pixel {i} outside 0..{num_classes}"
            )));
        }
        Ok(LabelField {
            width,
            height,
            labels,
            num_classes,
            void_id,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn void_id(&self) -> Option<u32> {
        self.void_id
    }

    #[inline]
    pub fn is_void(&self, i: usize) -> bool {
        Some(self.labels[i]) == self.void_id
    }

    /// Pixel count per class (void excluded).
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_classes as usize];
        for (i, &l) in self.labels.iter().enumerate() {
            if !self.is_void(i) {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// 4-connected components of every non-void label, in raster order of
    /// their first pixel.
    pub fn components(&self) -> Components {
        let n = self.labels.len();
        let mut index: Vec<Option<u32>> = vec![None; n];
        let mut label = Vec::new();
        let mut area = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if index[start].is_some() || self.is_void(start) {
                continue;
            }
            let id = label.len() as u32;
            let l = self.labels[start];
            index[start] = Some(id);
            stack.push(start);
            let mut count = 0;
            while let Some(p) = stack.pop() {
                count += 1;
                for q in neighbors4(p, self.width, self.height) {
                    if index[q].is_none() && self.labels[q] == l {
                        index[q] = Some(id);
                        stack.push(q);
                    }
                }
            }
            label.push(l);
            area.push(count);
        }
        Components { index, label, area }
    }
}

/// In-domain 4-neighbours of linear pixel index `p`.
#[inline]
pub fn neighbors4(p: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let x = p % width;
    let y = p / width;
    let mut out = [usize::MAX; 4];
    if y > 0 {
        out[0] = p - width;
    }
    if x > 0 {
        out[1] = p - 1;
    }
    if x + 1 < width {
        out[2] = p + 1;
    }
    if y + 1 < height {
        out[3] = p + width;
    }
    out.into_iter().filter(|&q| q != usize::MAX)
}

/// Labels 4-connected components of a binary mask. Returns the component id
/// per pixel (`0` = background, `1..=n` components) and the count `n`.
pub fn label_binary(mask: &[bool], width: usize, height: usize) -> (Vec<u32>, u32) {
    let mut out = vec![0u32; mask.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || out[start] != 0 {
            continue;
        }
        next += 1;
        out[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in neighbors4(p, width, height) {
                if mask[q] && out[q] == 0 {
                    out[q] = next;
                    stack.push(q);
                }
            }
        }
    }
    (out, next)
}
