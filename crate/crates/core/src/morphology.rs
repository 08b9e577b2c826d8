//! Flat grayscale and binary morphology on the square grid.
//!
//! Windows are clamped to the domain: a structuring element centred near the
//! border only sees the pixels that exist.

use crate::error::{Error, Result};
use crate::raster::{label_binary, neighbors4, Raster};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// `n × n` square, `n` odd.
    Square(usize),
    /// Euclidean disk of radius `r`.
    Disk(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    shape: Shape,
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn square(n: usize) -> Self {
        assert!(n % 2 == 1, "square structuring element needs an odd size");
        let h = (n / 2) as isize;
        let offsets = (-h..=h)
            .flat_map(|dy| (-h..=h).map(move |dx| (dx, dy)))
            .collect();
        StructuringElement {
            shape: Shape::Square(n),
            offsets,
        }
    }

    pub fn disk(r: usize) -> Self {
        let ri = r as isize;
        let r2 = ri * ri;
        let offsets = (-ri..=ri)
            .flat_map(|dy| (-ri..=ri).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r2)
            .collect();
        StructuringElement {
            shape: Shape::Disk(r),
            offsets,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }
}

/// A binary raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height || data.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_raster(&self) -> Raster {
        Raster::new(
            self.width,
            self.height,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask shape is valid")
    }
}

fn separable_extremum(f: &Raster, n: usize, take_max: bool) -> Raster {
    let (w, h) = (f.width(), f.height());
    let r = n / 2;
    let pick = |a: f64, b: f64| if take_max { a.max(b) } else { a.min(b) };
    let init = if take_max {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let src = f.data();
    let mut tmp = vec![init; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = row[lo..=hi].iter().copied().fold(init, pick);
        }
    }
    let mut out = vec![init; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let mut acc = init;
            for yy in lo..=hi {
                acc = pick(acc, tmp[yy * w + x]);
            }
            out[y * w + x] = acc;
        }
    }
    Raster::new(w, h, out).expect("shape preserved")
}

fn offset_extremum(f: &Raster, se: &StructuringElement, take_max: bool) -> Raster {
    let (w, h) = (f.width() as isize, f.height() as isize);
    Raster::from_fn(f.width(), f.height(), |x, y| {
        let mut acc = if take_max {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
        for &(dx, dy) in se.offsets() {
            let (xx, yy) = (x as isize + dx, y as isize + dy);
            if xx < 0 || yy < 0 || xx >= w || yy >= h {
                continue;
            }
            let v = f.get(xx as usize, yy as usize);
            acc = if take_max { acc.max(v) } else { acc.min(v) };
        }
        acc
    })
}

fn extremum(f: &Raster, se: &StructuringElement, take_max: bool) -> Raster {
    match se.shape() {
        Shape::Square(n) => separable_extremum(f, n, take_max),
        Shape::Disk(_) => offset_extremum(f, se, take_max),
    }
}

pub fn erode(f: &Raster, se: &StructuringElement) -> Raster {
    extremum(f, se, false)
}

pub fn dilate(f: &Raster, se: &StructuringElement) -> Raster {
    extremum(f, se, true)
}

pub fn opening(f: &Raster, se: &StructuringElement) -> Raster {
    dilate(&erode(f, se), se)
}

pub fn closing(f: &Raster, se: &StructuringElement) -> Raster {
    erode(&dilate(f, se), se)
}

/// Binary erosion: a pixel survives iff every in-domain pixel of its window
/// is set.
pub fn erode_mask(m: &Mask, se: &StructuringElement) -> Mask {
    let e = erode(&m.to_raster(), se);
    Mask {
        width: m.width,
        height: m.height,
        data: e.data().iter().map(|&v| v > 0.5).collect(),
    }
}

/// Fills every hole of the foreground: background pixels whose 4-connected
/// background component does not reach the raster border become foreground.
/// This is the reconstruction by erosion of the mask from a border marker.
pub fn closing_by_reconstruction(m: &Mask) -> Mask {
    let (w, h) = (m.width, m.height);
    let mut reached = vec![false; w * h];
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let on_border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if on_border && !m.data[p] && !reached[p] {
                reached[p] = true;
                stack.push(p);
            }
        }
    }
    while let Some(p) = stack.pop() {
        for q in neighbors4(p, w, h) {
            if !m.data[q] && !reached[q] {
                reached[q] = true;
                stack.push(q);
            }
        }
    }
    Mask {
        width: w,
        height: h,
        data: reached.into_iter().map(|r| !r).collect(),
    }
}

/// Removes 4-connected foreground components with fewer than `min_area` pixels.
pub fn area_opening(m: &Mask, min_area: usize) -> Result<Mask> {
    if min_area == 0 {
        return Err(Error::InvalidParameter("area threshold must be >= 1".into()));
    }
    let (labels, n) = label_binary(&m.data, m.width, m.height);
    let mut area = vec![0usize; n as usize + 1];
    for &l in &labels {
        area[l as usize] += 1;
    }
    Ok(Mask {
        width: m.width,
        height: m.height,
        data: labels
            .iter()
            .map(|&l| l != 0 && area[l as usize] >= min_area)
            .collect(),
    })
}

/// Leveling of `f` towards the marker `reference`.
///
/// Iterates `g ← (f ∧ δg) ∨ εg` from `g = reference` with the 3×3 square until
/// nothing changes. Each step keeps `min(f, ref) ≤ g ≤ max(f, ref)` pointwise.
pub fn leveling(f: &Raster, reference: &Raster) -> Result<Raster> {
    if !f.same_shape(reference) {
        return Err(Error::DimensionMismatch(format!(
            "leveling of {}x{} against {}x{} reference",
            f.width(),
            f.height(),
            reference.width(),
            reference.height()
        )));
    }
    let se = StructuringElement::square(3);
    let mut g = reference.clone();
    // Values only ever come from f or the reference, so the state space is
    // finite; the cap guards against a (never observed) cycle.
    let cap = 4 * f.len() + 16;
    for _ in 0..cap {
        let d = dilate(&g, &se);
        let e = erode(&g, &se);
        let mut changed = false;
        let next: Vec<f64> = f
            .data()
            .iter()
            .zip(d.data())
            .zip(e.data())
            .zip(g.data())
            .map(|(((&fv, &dv), &ev), &gv)| {
                let v = fv.min(dv).max(ev);
                if v != gv {
                    changed = true;
                }
                v
            })
            .collect();
        g = Raster::new(f.width(), f.height(), next)?;
        if !changed {
            return Ok(g);
        }
    }
    log::warn!("leveling stopped at the iteration cap before stabilising");
    Ok(g)
}

/// Unit-sum sampled Gaussian weights for offsets `-(size/2)..=size/2`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Gaussian smoothing with a `size × size` window. Near the border the window
/// is clamped to the domain and the weights renormalised, so constants are
/// preserved exactly.
pub fn gaussian_filter(f: &Raster, size: usize, sigma: f64) -> Result<Raster> {
    if size % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "gaussian window size must be odd, got {size}"
        )));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let k = gaussian_kernel(size, sigma);
    let r = size / 2;
    let (w, h) = (f.width(), f.height());
    let src = f.data();
    // The clamped 2-D window is a product of two intervals, so renormalising
    // each 1-D pass reproduces the renormalised 2-D convolution.
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let (mut acc, mut norm) = (0.0, 0.0);
            for xx in lo..=hi {
                let wt = k[xx + r - x];
                acc += wt * src[y * w + xx];
                norm += wt;
            }
            tmp[y * w + x] = acc / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let (mut acc, mut norm) = (0.0, 0.0);
            for yy in lo..=hi {
                let wt = k[yy + r - y];
                acc += wt * tmp[yy * w + x];
                norm += wt;
            }
            out[y * w + x] = acc / norm;
        }
    }
    Raster::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, |_, _| rng.gen_range(-10.0..10.0))
    }

    fn brute_window(f: &Raster, se: &StructuringElement, take_max: bool) -> Raster {
        Raster::from_fn(f.width(), f.height(), |x, y| {
            let mut vals = Vec::new();
            for yy in 0..f.height() {
                for xx in 0..f.width() {
                    let (dx, dy) = (xx as isize - x as isize, yy as isize - y as isize);
                    if se.offsets().contains(&(dx, dy)) {
                        vals.push(f.get(xx, yy));
                    }
                }
            }
            if take_max {
                vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
            } else {
                vals.into_iter().fold(f64::INFINITY, f64::min)
            }
        })
    }

    #[test]
    fn structuring_elements() {
        assert_eq!(StructuringElement::square(3).offsets().len(), 9);
        let d = StructuringElement::disk(5);
        assert!(d.offsets().contains(&(0, 0)));
        assert!(d.offsets().contains(&(5, 0)));
        assert!(!d.offsets().contains(&(4, 4)));
        for &(dx, dy) in d.offsets() {
            assert!(d.offsets().contains(&(-dx, -dy)));
        }
    }

    #[test]
    fn constant_is_fixed() {
        let f = Raster::filled(7, 5, 3.25);
        let se = StructuringElement::square(3);
        assert_eq!(erode(&f, &se), f);
        assert_eq!(dilate(&f, &se), f);
        assert_eq!(opening(&f, &se), f);
        let g = gaussian_filter(&f, 5, 1.3).unwrap();
        for v in g.data() {
            assert!((v - 3.25).abs() < 1e-12);
        }
        assert_eq!(leveling(&f, &f).unwrap(), f);
        // A flat function is a leveling of anything: the marker is kept.
        let flat = Raster::filled(7, 5, 1.0);
        assert_eq!(leveling(&f, &flat).unwrap(), flat);
    }

    #[test]
    fn single_bright_pixel() {
        let mut f = Raster::filled(7, 7, 0.0);
        f.set(3, 3, 5.0);
        let se = StructuringElement::square(3);
        assert!(erode(&f, &se).data().iter().all(|&v| v == 0.0));
        let d = dilate(&f, &se);
        for y in 0..7 {
            for x in 0..7 {
                let inside = (2..=4).contains(&x) && (2..=4).contains(&y);
                assert_eq!(d.get(x, y), if inside { 5.0 } else { 0.0 });
            }
        }
        let o = opening(&f, &se);
        assert!(o.data().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn window_ops_match_brute_force() {
        for seed in 0..5 {
            let f = random_raster(8, 8, seed);
            for se in [
                StructuringElement::square(3),
                StructuringElement::square(5),
                StructuringElement::disk(2),
            ] {
                assert_eq!(erode(&f, &se), brute_window(&f, &se, false));
                assert_eq!(dilate(&f, &se), brute_window(&f, &se, true));
            }
        }
    }

    #[test]
    fn opening_is_idempotent() {
        let se = StructuringElement::square(3);
        for seed in 0..5 {
            let f = random_raster(12, 9, seed);
            let o = opening(&f, &se);
            assert_eq!(opening(&o, &se), o);
        }
    }

    #[test]
    fn hole_filling() {
        let disk = Mask::from_fn(15, 15, |x, y| {
            let (dx, dy) = (x as f64 - 7.0, y as f64 - 7.0);
            dx * dx + dy * dy <= 25.0
        });
        assert_eq!(closing_by_reconstruction(&disk), disk);
        let annulus = Mask::from_fn(15, 15, |x, y| {
            let (dx, dy) = (x as f64 - 7.0, y as f64 - 7.0);
            let r2 = dx * dx + dy * dy;
            (4.0..=25.0).contains(&r2)
        });
        assert_eq!(closing_by_reconstruction(&annulus), disk);
    }

    #[test]
    fn hole_touching_border_is_kept() {
        // A "U" open at the top border is not a hole.
        let m = Mask::from_fn(5, 4, |x, y| x == 0 || x == 4 || y == 3);
        assert_eq!(closing_by_reconstruction(&m), m);
    }

    #[test]
    fn area_opening_threshold() {
        // Component of 3 pixels and component of 4 pixels.
        let m = Mask::from_fn(9, 3, |x, y| (y == 0 && x < 3) || (y == 2 && (4..8).contains(&x)));
        let kept = area_opening(&m, 4).unwrap();
        assert_eq!(kept.count(), 4);
        assert!(!kept.get(0, 0));
        assert!(kept.get(4, 2));
        assert_eq!(area_opening(&m, 3).unwrap(), m);
        assert!(area_opening(&m, 0).is_err());
    }

    #[test]
    fn leveling_fixed_point_and_bounds() {
        let f = random_raster(16, 16, 3);
        assert_eq!(leveling(&f, &f).unwrap(), f);
        let r = random_raster(16, 16, 4);
        let g = leveling(&f, &r).unwrap();
        for i in 0..f.len() {
            let (a, b) = (f.data()[i], r.data()[i]);
            assert!(g.data()[i] >= a.min(b) && g.data()[i] <= a.max(b));
        }
        assert!(leveling(&f, &Raster::filled(3, 3, 0.0)).is_err());
    }

    #[test]
    fn gaussian_rejects_even_window() {
        assert!(gaussian_filter(&Raster::filled(4, 4, 1.0), 4, 1.0).is_err());
        assert!(gaussian_filter(&Raster::filled(4, 4, 1.0), 3, 0.0).is_err());
    }

    #[test]
    fn gaussian_impulse_reads_back_kernel() {
        let mut f = Raster::filled(41, 41, 0.0);
        f.set(20, 20, 1.0);
        let g = gaussian_filter(&f, 11, 2.0).unwrap();
        let k = gaussian_kernel(11, 2.0);
        let total: f64 = g.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for dy in 0..11 {
            for dx in 0..11 {
                let v = g.get(15 + dx, 15 + dy);
                assert!((v - k[dx] * k[dy]).abs() < 1e-15);
            }
        }
    }
}
