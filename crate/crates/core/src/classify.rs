//! Temporal classification of vector pixels.
//!
//! * k-means (Lloyd iterations, k-means++ seeding) in a Euclidean feature
//!   space such as the factor pixels;
//! * classification by L1 distance between per-class and per-pixel line
//!   models;
//! * linear discriminant analysis trained on labelled pixels;
//! * cdf matching of parameter maps against a reference series.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fit_line, fit_spectrum};
use crate::raster::{HyperImage, LabelField, Raster};
use crate::rng::RngStream;

/// Default number of k-means classes.
pub const DEFAULT_KMEANS_CLASSES: usize = 5;

/// Number of bins of the cdf anamorphosis.
pub const CDF_BINS: usize = 255;

/// Dense row-major feature table (`rows × dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != rows * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {rows} rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Features { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Features::new(rows.len(), dim, data)
    }

    /// One row per pixel, one column per channel.
    pub fn from_image(img: &HyperImage) -> Self {
        let (p, l) = (img.pixels(), img.channels());
        let mut data = vec![0.0; p * l];
        for j in 0..l {
            for (i, &v) in img.channel(j).iter().enumerate() {
                data[i * l + j] = v;
            }
        }
        Features {
            rows: p,
            dim: l,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, indices: &[usize]) -> Features {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Features {
            rows: indices.len(),
            dim: self.dim,
            data,
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<u32>,
    /// `k × dim`, row-major.
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances of the final assignment.
    pub inertia: f64,
    /// Inertia after every assignment step, in order.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn label_field(&self, width: usize, height: usize) -> Result<LabelField> {
        LabelField::new(
            width,
            height,
            self.labels.clone(),
            self.centroids.len() as u32,
            None,
        )
    }
}

fn assign(points: &Features, centroids: &[Vec<f64>], labels: &mut [u32]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let row = points.row(i);
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (k, c) in centroids.iter().enumerate() {
            let d = sq_dist(row, c);
            if d < best_d {
                best_d = d;
                best = k as u32;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
        inertia += best_d;
    }
    (changed, inertia)
}

fn plus_plus_seeds(points: &Features, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centroids = vec![points.row(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd k-means. An empty cluster is re-seeded at the point farthest from
/// its current centroid.
pub fn kmeans(points: &Features, k: usize, rng: RngStream, max_iter: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k-means with {k} classes on {n} points"
        )));
    }
    let mut gen = rng.rng();
    let mut centroids = plus_plus_seeds(points, k, &mut gen);
    let mut labels = vec![u32::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let dim = points.dim();
    loop {
        let (changed, inertia) = assign(points, &centroids, &mut labels);
        if !history.is_empty() && !changed {
            history.push(inertia);
            break;
        }
        history.push(inertia);
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let l = labels[i] as usize;
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            // Moving the farthest point into its own cluster lowers inertia.
            let (far, _) = (0..n)
                .filter(|&i| counts[labels[i] as usize] > 1)
                .map(|i| (i, sq_dist(points.row(i), &centroids[labels[i] as usize])))
                .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if far == usize::MAX {
                continue;
            }
            counts[labels[far] as usize] -= 1;
            labels[far] = c as u32;
            counts[c] = 1;
            centroids[c] = points.row(far).to_vec();
        }
    }
    let inertia = *history.last().expect("at least one assignment");
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        history,
        iterations,
    })
}

/// Mean spectrum of a class and the line fitted on its late part.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub slope: f64,
    pub intercept: f64,
    pub mean_spectrum: Vec<f64>,
}

/// One entry per source class; `None` for classes without pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModelSet {
    pub models: Vec<Option<ClassModel>>,
    pub j1: usize,
}

pub fn class_models(img: &HyperImage, labels: &LabelField, j1: usize) -> Result<ClassModelSet> {
    if labels.len() != img.pixels() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} pixels",
            labels.len(),
            img.pixels()
        )));
    }
    if j1 < 2 || j1 + 1 > img.channels() {
        return Err(Error::InvalidParameter(format!("j1 = {j1} out of range")));
    }
    let k = labels.num_classes() as usize;
    let l = img.channels();
    let mut sums = vec![vec![0.0; l]; k];
    let mut counts = vec![0usize; k];
    for i in 0..img.pixels() {
        if labels.is_void(i) {
            continue;
        }
        let c = labels.get(i) as usize;
        counts[c] += 1;
        for (j, s) in sums[c].iter_mut().enumerate() {
            *s += img.value(i, j);
        }
    }
    let models = sums
        .into_iter()
        .zip(counts)
        .map(|(s, n)| {
            (n > 0).then(|| {
                let mean: Vec<f64> = s.into_iter().map(|v| v / n as f64).collect();
                let (slope, intercept) = fit_line(&mean[j1 - 1..], j1);
                ClassModel {
                    slope,
                    intercept,
                    mean_spectrum: mean,
                }
            })
        })
        .collect();
    Ok(ClassModelSet { models, j1 })
}

/// `Σ_{j=1..L} |(a₁ − a₂) j + (b₁ − b₂)|`.
pub fn line_l1_distance(a1: f64, b1: f64, a2: f64, b2: f64, channels: usize) -> f64 {
    let (da, db) = (a1 - a2, b1 - b2);
    (1..=channels).map(|j| (da * j as f64 + db).abs()).sum()
}

/// Assigns every pixel to the class whose line model is closest in L1 over
/// all channels. Ties go to the lowest class index.
pub fn model_classify(img: &HyperImage, models: &ClassModelSet, j1: usize) -> Result<LabelField> {
    if models.models.iter().all(Option::is_none) {
        return Err(Error::InvalidParameter("no class model present".into()));
    }
    if j1 < 2 || j1 + 1 > img.channels() {
        return Err(Error::InvalidParameter(format!("j1 = {j1} out of range")));
    }
    let l = img.channels();
    let labels: Vec<u32> = (0..img.pixels())
        .map(|i| {
            let (a, b, _) = fit_spectrum(&img.spectrum(i), j1);
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for (k, m) in models.models.iter().enumerate() {
                if let Some(m) = m {
                    let d = line_l1_distance(m.slope, m.intercept, a, b, l);
                    if d < best_d {
                        best_d = d;
                        best = k as u32;
                    }
                }
            }
            best
        })
        .collect();
    LabelField::new(
        img.width(),
        img.height(),
        labels,
        models.models.len() as u32,
        None,
    )
}

/// Linear discriminant model with equal priors.
#[derive(Clone, Debug)]
pub struct LdaModel {
    /// Class labels in training order (sorted ascending).
    pub classes: Vec<u32>,
    pub means: Vec<DVector<f64>>,
    /// Pooled within-class covariance, ridge included.
    pub covariance: DMatrix<f64>,
    pub ridge: f64,
    chol: Cholesky<f64, Dyn>,
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// Squared Mahalanobis distance of `x` to the mean of class index `k`.
    pub fn mahalanobis2(&self, x: &[f64], k: usize) -> f64 {
        let d = DVector::from_column_slice(x) - &self.means[k];
        let z = self.chol.solve(&d);
        d.dot(&z)
    }
}

/// Fits class means and the pooled within-class covariance, with a ridge of
/// `1e-6 · trace / dim` on the diagonal.
pub fn lda_fit(features: &Features, labels: &[u32]) -> Result<LdaModel> {
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} training rows",
            labels.len(),
            features.rows()
        )));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("LDA needs at least two classes".into()));
    }
    let d = features.dim();
    if d > features.rows() {
        return Err(Error::InvalidParameter(format!(
            "feature dimension {d} exceeds {} training rows",
            features.rows()
        )));
    }
    let mut means = Vec::with_capacity(classes.len());
    let mut scatter = DMatrix::<f64>::zeros(d, d);
    for &c in &classes {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if rows.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "class {c} has {} training rows, need at least 2",
                rows.len()
            )));
        }
        let mut mean = DVector::<f64>::zeros(d);
        for &i in &rows {
            mean += DVector::from_column_slice(features.row(i));
        }
        mean /= rows.len() as f64;
        for &i in &rows {
            let dv = DVector::from_column_slice(features.row(i)) - &mean;
            scatter += &dv * dv.transpose();
        }
        means.push(mean);
    }
    let dof = (features.rows() - classes.len()).max(1) as f64;
    let mut covariance = scatter / dof;
    let trace = covariance.trace();
    let ridge = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1.0 };
    for a in 0..d {
        covariance[(a, a)] += ridge;
    }
    let chol = Cholesky::new(covariance.clone())
        .ok_or_else(|| Error::Undefined("pooled covariance is not positive definite".into()))?;
    Ok(LdaModel {
        classes,
        means,
        covariance,
        ridge,
        chol,
    })
}

/// Class of each row: nearest class mean in the pooled Mahalanobis metric,
/// ties to the lowest class.
pub fn lda_predict(model: &LdaModel, features: &Features) -> Result<Vec<u32>> {
    if features.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "features of dimension {}, model expects {}",
            features.dim(),
            model.dim()
        )));
    }
    Ok((0..features.rows())
        .map(|i| {
            let x = features.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for k in 0..model.classes.len() {
                let d = model.mahalanobis2(x, k);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            model.classes[best]
        })
        .collect())
}

/// Centered principal-axis projection fitted on a set of training spectra.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `components × dim`, rows are unit eigenvectors by decreasing variance.
    pub axes: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl Pca {
    pub fn fit(rows: &Features, components: usize) -> Result<Self> {
        let (n, d) = (rows.rows(), rows.dim());
        if n < 2 || components == 0 || components > d {
            return Err(Error::InvalidParameter(format!(
                "PCA with {components} components on {n} rows of dimension {d}"
            )));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(rows.row(i)) {
                *m += v / n as f64;
            }
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let dv = DVector::from_iterator(d, rows.row(i).iter().zip(&mean).map(|(v, m)| v - m));
            cov += &dv * dv.transpose();
        }
        cov /= (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut axes = Vec::with_capacity(components);
        let mut variances = Vec::with_capacity(components);
        for &a in order.iter().take(components) {
            let mut v: Vec<f64> = eig.eigenvectors.column(a).iter().copied().collect();
            // Largest-magnitude loading positive.
            let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            axes.push(v);
            variances.push(eig.eigenvalues[a]);
        }
        Ok(Pca {
            mean,
            axes,
            variances,
        })
    }

    pub fn project(&self, rows: &Features) -> Result<Features> {
        if rows.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "projecting dimension {} with a PCA of dimension {}",
                rows.dim(),
                self.mean.len()
            )));
        }
        let k = self.axes.len();
        let mut data = Vec::with_capacity(rows.rows() * k);
        for i in 0..rows.rows() {
            let r = rows.row(i);
            for ax in &self.axes {
                data.push(
                    r.iter()
                        .zip(&self.mean)
                        .zip(ax)
                        .map(|((v, m), a)| (v - m) * a)
                        .sum(),
                );
            }
        }
        Features::new(rows.rows(), k, data)
    }
}

/// Monotone piecewise-linear transport of one value distribution onto another.
///
/// Knots sit at the quantiles `k / 255` of both distributions, so every one of
/// the 255 bins carries the same probability mass on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfMapping {
    pub source_knots: Vec<f64>,
    pub reference_knots: Vec<f64>,
    pub reference_id: Option<String>,
}

impl CdfMapping {
    pub fn apply(&self, v: f64) -> f64 {
        let xs = &self.source_knots;
        let ys = &self.reference_knots;
        let last = xs.len() - 1;
        if v < xs[0] {
            return ys[0];
        }
        // Largest knot index with xs[i] <= v.
        let i = xs.partition_point(|&x| x <= v) - 1;
        if i >= last {
            return ys[last];
        }
        let (x0, x1) = (xs[i], xs[i + 1]);
        let t = (v - x0) / (x1 - x0);
        ys[i] + t * (ys[i + 1] - ys[i])
    }
}

fn sorted_values(r: &Raster) -> Vec<f64> {
    let mut v = r.data().to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let t = pos - lo as f64;
    sorted[lo] + t * (sorted[lo + 1] - sorted[lo])
}

fn check_nonconstant(r: &Raster, name: &str) -> Result<()> {
    if r.min() == r.max() {
        return Err(Error::InvalidParameter(format!("{name} raster is constant")));
    }
    if r.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} raster has non-finite values")));
    }
    Ok(())
}

/// Fits the mapping from the empirical distribution of `map` onto the one of
/// `reference`.
pub fn cdf_mapping(map: &Raster, reference: &Raster) -> Result<CdfMapping> {
    check_nonconstant(map, "map")?;
    check_nonconstant(reference, "reference")?;
    let (sm, sr) = (sorted_values(map), sorted_values(reference));
    let knots = |s: &[f64]| -> Vec<f64> {
        (0..=CDF_BINS)
            .map(|k| quantile(s, k as f64 / CDF_BINS as f64))
            .collect()
    };
    Ok(CdfMapping {
        source_knots: knots(&sm),
        reference_knots: knots(&sr),
        reference_id: None,
    })
}

/// Histogram anamorphosis of `map` onto the distribution of `reference`.
pub fn cdf_normalize(map: &Raster, reference: &Raster) -> Result<(Raster, CdfMapping)> {
    let mapping = cdf_mapping(map, reference)?;
    Ok((map.map(|v| mapping.apply(v)), mapping))
}
