//! Synthetic perfusion series with known ground truth.
//!
//! The scene holds four tissues with distinct time curves: a flat body
//! background, two low flat lungs, a heart with a sharp first-pass peak and a
//! slow washout, and a round tumour whose signal keeps rising after the
//! wash-in. Positions are jittered by the seed; white Gaussian noise is added
//! and values are clamped at zero.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{HyperImage, LabelField};
use crate::rng::RngStream;

pub const DEFAULT_SIZE: usize = 64;
pub const DEFAULT_CHANNELS: usize = 128;
/// Default noise standard deviation as a fraction of the signal range.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.1;
/// Training pixels per class in [`Phantom::training_mask`].
pub const TRAINING_PIXELS: usize = 80;
/// Training-mask value of the background class.
pub const TRAINING_BACKGROUND: u32 = 4;

/// Last sample of the transient phase; curves are exact lines afterwards.
const TRANSIENT_END: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tissue {
    Background = 0,
    Lung = 1,
    Heart = 2,
    Tumour = 3,
}

impl Tissue {
    pub const ALL: [Tissue; 4] = [Tissue::Background, Tissue::Lung, Tissue::Heart, Tissue::Tumour];

    /// Noise-free signal at time `t` (channel `t`, 1-based).
    pub fn curve(self, t: f64) -> f64 {
        match self {
            Tissue::Background => 600.0,
            Tissue::Lung => 400.0,
            Tissue::Heart => {
                if t <= TRANSIENT_END {
                    1100.0 + 700.0 * (-(t - 8.0) * (t - 8.0) / 8.0).exp()
                } else {
                    1100.0 - 1.5 * (t - TRANSIENT_END)
                }
            }
            Tissue::Tumour => {
                if t <= TRANSIENT_END {
                    900.0 + 250.0 * (1.0 - (-t / 5.0).exp()) / (1.0 - (-4.0f64).exp())
                } else {
                    1150.0 + 2.5 * (t - TRANSIENT_END)
                }
            }
        }
    }
}

/// Max minus min of the noise-free curves over `channels` samples.
pub fn signal_range(channels: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 1..=channels {
        for tissue in Tissue::ALL {
            let v = tissue.curve(t as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    hi - lo
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomParams {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub noise_sigma: f64,
    pub with_tumour: bool,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            seed: 0,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            channels: DEFAULT_CHANNELS,
            noise_sigma: DEFAULT_NOISE_FRACTION * signal_range(DEFAULT_CHANNELS),
            with_tumour: true,
        }
    }
}

impl PhantomParams {
    pub fn with_seed(seed: u64) -> Self {
        PhantomParams {
            seed,
            ..PhantomParams::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub image: HyperImage,
    /// Tissue per pixel, labels as in [`Tissue`].
    pub truth: LabelField,
    pub params: PhantomParams,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        u * u + v * v <= 1.0
    }
}

pub fn phantom(params: &PhantomParams) -> Result<Phantom> {
    let (w, h, l) = (params.width, params.height, params.channels);
    if w < 16 || h < 16 || l < 32 {
        return Err(Error::InvalidParameter(format!(
            "phantom needs at least 16x16x32, got {w}x{h}x{l}"
        )));
    }
    if !(params.noise_sigma >= 0.0) || !params.noise_sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma {} must be finite and non-negative",
            params.noise_sigma
        )));
    }
    let mut geo = RngStream::new(params.seed, 0).rng();
    let s = w.min(h) as f64;
    let mut jitter = |fx: f64, fy: f64| {
        (
            fx * w as f64 + geo.gen_range(-0.03..=0.03) * s,
            fy * h as f64 + geo.gen_range(-0.03..=0.03) * s,
        )
    };
    let (tx, ty) = jitter(0.66, 0.34);
    let (hx, hy) = jitter(0.28, 0.66);
    let (l1x, l1y) = jitter(0.22, 0.22);
    let (l2x, l2y) = jitter(0.72, 0.78);
    let tumour = Ellipse { cx: tx, cy: ty, rx: 0.19 * s, ry: 0.19 * s };
    let heart = Ellipse { cx: hx, cy: hy, rx: 0.14 * s, ry: 0.14 * s };
    let lungs = [
        Ellipse { cx: l1x, cy: l1y, rx: 0.13 * s, ry: 0.09 * s },
        Ellipse { cx: l2x, cy: l2y, rx: 0.14 * s, ry: 0.09 * s },
    ];

    let truth: Vec<u32> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let t = if params.with_tumour && tumour.contains(x, y) {
                Tissue::Tumour
            } else if heart.contains(x, y) {
                Tissue::Heart
            } else if lungs.iter().any(|e| e.contains(x, y)) {
                Tissue::Lung
            } else {
                Tissue::Background
            };
            t as u32
        })
        .collect();

    let noise = Normal::new(0.0, params.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = RngStream::new(params.seed, 1).rng();
    let mut data = Vec::with_capacity(w * h * l);
    for j in 0..l {
        let t = (j + 1) as f64;
        let levels: Vec<f64> = Tissue::ALL.iter().map(|tissue| tissue.curve(t)).collect();
        for &z in &truth {
            let clean = levels[z as usize];
            let v = if params.noise_sigma > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            };
            data.push(v.max(0.0));
        }
    }
    Ok(Phantom {
        image: HyperImage::new(w, h, l, data)?,
        truth: LabelField::new(w, h, truth, Tissue::ALL.len() as u32, None)?,
        params: params.clone(),
    })
}

impl Phantom {
    pub fn tumour_mask(&self) -> Vec<bool> {
        self.truth.labels().iter().map(|&l| l == Tissue::Tumour as u32).collect()
    }

    /// Sparse training labels: `0` unlabelled, then `1` tumour, `2` heart,
    /// `3` lung, `4` background, [`TRAINING_PIXELS`] random pixels each.
    /// Without a tumour, class `1` is absent.
    pub fn training_mask(&self) -> Vec<u32> {
        let mut rng = RngStream::new(self.params.seed, 2).rng();
        let mut out = vec![0u32; self.truth.len()];
        let classes = [Tissue::Tumour, Tissue::Heart, Tissue::Lung, Tissue::Background];
        for (k, tissue) in classes.iter().enumerate() {
            let mut pixels: Vec<usize> = (0..self.truth.len())
                .filter(|&i| self.truth.get(i) == *tissue as u32)
                .collect();
            pixels.shuffle(&mut rng);
            for &p in pixels.iter().take(TRAINING_PIXELS) {
                out[p] = k as u32 + 1;
            }
        }
        out
    }
}
