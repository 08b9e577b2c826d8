//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::VecDeque;

use perfseg::raster::LabelField;
use rand::Rng;

/// In-domain 4-neighbours, written out independently of the library.
pub fn nbrs(p: usize, w: usize, h: usize) -> Vec<usize> {
    let (x, y) = (p % w, p / w);
    let mut v = Vec::new();
    if x > 0 {
        v.push(p - 1);
    }
    if x + 1 < w {
        v.push(p + 1);
    }
    if y > 0 {
        v.push(p - w);
    }
    if y + 1 < h {
        v.push(p + w);
    }
    v
}

/// Bottleneck cost from every marker label to every pixel: the smallest,
/// over 4-paths from the marker, of the largest level on the path. Computed
/// by relaxation to a fixed point.
pub fn bottleneck_costs(levels: &[u16], w: usize, h: usize, markers: &[Option<u32>], k: usize) -> Vec<Vec<u32>> {
    let n = levels.len();
    let mut cost = vec![vec![u32::MAX; n]; k];
    for (p, m) in markers.iter().enumerate() {
        if let Some(l) = m {
            cost[*l as usize][p] = u32::from(levels[p]);
        }
    }
    for c in cost.iter_mut() {
        loop {
            let mut changed = false;
            for p in 0..n {
                for q in nbrs(p, w, h) {
                    if c[q] != u32::MAX {
                        let via = c[q].max(u32::from(levels[p]));
                        if via < c[p] {
                            c[p] = via;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
    cost
}

/// Multi-source BFS distance from every marker label.
pub fn bfs_distances(w: usize, h: usize, markers: &[Option<u32>], k: usize) -> Vec<Vec<usize>> {
    let n = w * h;
    let mut out = vec![vec![usize::MAX; n]; k];
    for (l, d) in out.iter_mut().enumerate() {
        let mut q = VecDeque::new();
        for p in 0..n {
            if markers[p] == Some(l as u32) {
                d[p] = 0;
                q.push_back(p);
            }
        }
        while let Some(p) = q.pop_front() {
            for r in nbrs(p, w, h) {
                if d[r] == usize::MAX {
                    d[r] = d[p] + 1;
                    q.push_back(r);
                }
            }
        }
    }
    out
}

/// Connected components of `{p : pred(p)}` as a component id per pixel.
fn components(w: usize, h: usize, pred: impl Fn(usize) -> bool) -> (Vec<Option<usize>>, usize) {
    let n = w * h;
    let mut id = vec![None; n];
    let mut count = 0;
    for s in 0..n {
        if !pred(s) || id[s].is_some() {
            continue;
        }
        let mut q = vec![s];
        id[s] = Some(count);
        while let Some(p) = q.pop() {
            for r in nbrs(p, w, h) {
                if pred(r) && id[r].is_none() {
                    id[r] = Some(count);
                    q.push(r);
                }
            }
        }
        count += 1;
    }
    (id, count)
}

/// Regional minima by checking every plateau exhaustively. Returns, per
/// pixel, the index of its minimum (ordered by first pixel) or `None`.
pub fn minima_oracle(levels: &[u16], w: usize, h: usize) -> (Vec<Option<usize>>, usize) {
    let n = levels.len();
    // Plateaus are components of equal level.
    let mut plateau = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if plateau[s] != usize::MAX {
            continue;
        }
        let (ids, _) = components(w, h, |p| levels[p] == levels[s]);
        let mine = ids[s];
        for p in 0..n {
            if ids[p] == mine && mine.is_some() {
                plateau[p] = next;
            }
        }
        next += 1;
    }
    let is_min: Vec<bool> = (0..next)
        .map(|pl| {
            (0..n).filter(|&p| plateau[p] == pl).all(|p| {
                nbrs(p, w, h).iter().all(|&q| levels[q] >= levels[p])
            })
        })
        .collect();
    let mut order = Vec::new();
    for p in 0..n {
        if is_min[plateau[p]] && !order.contains(&plateau[p]) {
            order.push(plateau[p]);
        }
    }
    let out = (0..n)
        .map(|p| order.iter().position(|&pl| pl == plateau[p]))
        .collect();
    (out, order.len())
}

/// Volume extinction values by brute force: at every level `h`, the
/// components of `{f ≤ h}` are recomputed from scratch and compared with
/// those of `{f < h}`.
pub fn extinction_oracle(levels: &[u16], w: usize, h: usize) -> Vec<u64> {
    let n = levels.len();
    let (min_of, n_min) = minima_oracle(levels, w, h);
    let mut ext = vec![u64::MAX; n_min];
    // Surviving minimum of each component of the previous level set, keyed
    // by any one pixel of it.
    let mut prev_ids: Vec<Option<usize>> = vec![None; n];
    let mut prev_rep: Vec<usize> = Vec::new();
    let max = *levels.iter().max().unwrap();
    for lvl in 0..=max {
        let (ids, count) = components(w, h, |p| levels[p] <= lvl);
        let mut rep = vec![usize::MAX; count];
        for c in 0..count {
            // Old components contained in the new one.
            let mut olds: Vec<usize> = (0..n)
                .filter(|&p| ids[p] == Some(c))
                .filter_map(|p| prev_ids[p])
                .collect();
            olds.sort();
            olds.dedup();
            if olds.is_empty() {
                let p = (0..n).find(|&p| ids[p] == Some(c)).unwrap();
                rep[c] = min_of[p].expect("a new component starts at a minimum");
                continue;
            }
            let vol = |o: usize| -> u64 {
                (0..n)
                    .filter(|&p| prev_ids[p] == Some(o))
                    .map(|p| u64::from(lvl - levels[p]))
                    .sum()
            };
            let mut ranked: Vec<(u64, usize)> = olds.iter().map(|&o| (vol(o), prev_rep[o])).collect();
            ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(v, m) in &ranked[1..] {
                ext[m] = v;
            }
            rep[c] = ranked[0].1;
        }
        prev_ids = ids;
        prev_rep = rep;
    }
    ext
}

/// Random relief with values in `0..levels` and `k` distinct single-pixel
/// markers.
pub fn random_relief_and_markers(
    rng: &mut impl Rng,
    w: usize,
    h: usize,
    levels: u16,
    k: usize,
) -> (Vec<u16>, Vec<Option<u32>>) {
    let n = w * h;
    let relief: Vec<u16> = (0..n).map(|_| rng.gen_range(0..levels)).collect();
    let mut markers = vec![None; n];
    let mut placed = 0;
    while placed < k.min(n) {
        let p = rng.gen_range(0..n);
        if markers[p].is_none() {
            markers[p] = Some(placed as u32);
            placed += 1;
        }
    }
    (relief, markers)
}

pub fn marker_field(w: usize, h: usize, markers: &[Option<u32>], k: usize) -> LabelField {
    let labels = markers.iter().map(|m| m.unwrap_or(k as u32)).collect();
    LabelField::new(w, h, labels, k as u32, Some(k as u32)).unwrap()
}

/// Every region of `labels` is 4-connected and every id in `0..r` is used.
pub fn partition_ok(labels: &[u32], w: usize, h: usize, r: usize) -> bool {
    (0..r as u32).all(|l| {
        let (_, count) = components(w, h, |p| labels[p] == l);
        count == 1
    }) && labels.iter().all(|&l| (l as usize) < r)
}

/// Kolmogorov–Smirnov distance between two samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            _ => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Least-squares line through `(first + k, y_k)` by Cramer's rule on the
/// raw normal equations.
pub fn ols_oracle(y: &[f64], first: usize) -> (f64, f64) {
    let n = y.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (k, &v) in y.iter().enumerate() {
        let x = (first + k) as f64;
        sx += x;
        sxx += x * x;
        sy += v;
        sxy += x * v;
    }
    let det = n * sxx - sx * sx;
    ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
}

/// Max minus min over the clamped `(2r+1)²` window, by direct scan.
pub fn window_range(data: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for yy in y - r as isize..=y + r as isize {
                for xx in x - r as isize..=x + r as isize {
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        let v = data[yy as usize * w + xx as usize];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
            hi - lo
        })
        .collect()
}

/// Pixels within Chebyshev distance `r` of a label change.
pub fn boundary_band(labels: &[u32], w: usize, h: usize, r: usize) -> Vec<bool> {
    let edge: Vec<bool> = (0..w * h)
        .map(|p| nbrs(p, w, h).iter().any(|&q| labels[q] != labels[p]))
        .collect();
    (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as isize, (p / w) as isize);
            let r = r as isize;
            (y - r..=y + r).any(|yy| {
                (x - r..=x + r).any(|xx| {
                    xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h && edge[yy as usize * w + xx as usize]
                })
            })
        })
        .collect()
}

pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
