//! Analysis chain for dynamic contrast-enhanced MRI series.
//!
//! A series is handled as a multichannel image whose channels are the time
//! samples. The chain denoises it by factor correspondence analysis, reduces
//! every pixel's time curve to a handful of model parameters, classifies the
//! pixels, and segments the image with a stochastic watershed whose random
//! germs are conditioned by that classification. Regions are finally screened
//! for tumour-like kinetics.

pub mod classify;
pub mod config;
pub mod detect;
pub mod error;
pub mod fca;
pub mod gradient;
pub mod io;
pub mod model;
pub mod morphology;
pub mod phantom;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod stochastic;
pub mod watershed;

pub use error::{Error, Result};
pub use raster::{HyperImage, LabelField, Raster};
pub use rng::RngStream;
