//! Marker-controlled watershed by hierarchical-queue flooding, regional
//! minima, and selection of minima by volume extinction.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::morphology::Mask;
use crate::raster::{neighbors4, LabelField, Raster};

/// Default number of flooding levels.
pub const DEFAULT_LEVELS: usize = 4096;

/// A relief quantized to `levels` integer grey levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relief {
    width: usize,
    height: usize,
    values: Vec<u16>,
    levels: usize,
}

impl Relief {
    /// Linear, order-preserving quantization of `r` onto `0..levels`.
    pub fn quantize(r: &Raster, levels: usize) -> Result<Self> {
        if !(2..=65536).contains(&levels) {
            return Err(Error::InvalidParameter(format!(
                "{levels} quantization levels (need 2..=65536)"
            )));
        }
        if let Some(i) = r.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite relief value at pixel {i}"
            )));
        }
        let (lo, hi) = (r.min(), r.max());
        let scale = if hi > lo {
            (levels - 1) as f64 / (hi - lo)
        } else {
            0.0
        };
        let values = r
            .data()
            .iter()
            .map(|&v| (((v - lo) * scale).round() as usize).min(levels - 1) as u16)
            .collect();
        Ok(Relief {
            width: r.width(),
            height: r.height(),
            values,
            levels,
        })
    }

    /// [`Relief::quantize`] with [`DEFAULT_LEVELS`].
    pub fn from_raster(r: &Raster) -> Result<Self> {
        Relief::quantize(r, DEFAULT_LEVELS)
    }

    /// A relief given directly by its levels.
    pub fn from_levels(width: usize, height: usize, values: Vec<u16>, levels: usize) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} levels for {width}x{height} pixels",
                values.len()
            )));
        }
        if levels < 2 || values.iter().any(|&v| v as usize >= levels) {
            return Err(Error::InvalidParameter("relief level out of range".into()));
        }
        Ok(Relief {
            width,
            height,
            values,
            levels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }
}

/// A segmentation into `R` labelled regions `0..R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    field: LabelField,
}

impl Partition {
    pub fn new(field: LabelField) -> Result<Self> {
        if field.void_id().is_some_and(|v| field.labels().contains(&v)) {
            return Err(Error::InvalidParameter("partition has unlabelled pixels".into()));
        }
        Ok(Partition { field })
    }

    pub fn field(&self) -> &LabelField {
        &self.field
    }

    pub fn labels(&self) -> &[u32] {
        self.field.labels()
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn height(&self) -> usize {
        self.field.height()
    }

    pub fn region_count(&self) -> usize {
        self.field.num_classes() as usize
    }

    /// Pixels having a 4-neighbour in another region.
    pub fn contours(&self) -> Mask {
        let (w, h) = (self.width(), self.height());
        let l = self.labels();
        let data = (0..l.len())
            .map(|p| neighbors4(p, w, h).any(|q| l[q] != l[p]))
            .collect();
        Mask::new(w, h, data).expect("same grid")
    }
}

fn check_grid(relief: &Relief, field: &LabelField) -> Result<()> {
    if relief.width != field.width() || relief.height != field.height() {
        return Err(Error::DimensionMismatch(format!(
            "relief {}x{} vs markers {}x{}",
            relief.width,
            relief.height,
            field.width(),
            field.height()
        )));
    }
    Ok(())
}

/// Floods `relief` from the non-void pixels of `markers`.
///
/// Marker labels are compacted to `0..R` in increasing label order, so with
/// consecutive marker labels the region id equals the marker label.
/// A pixel takes the label of the first wave that reaches it; waves at equal
/// level are served first in, first out.
pub fn marker_watershed(relief: &Relief, markers: &LabelField) -> Result<Partition> {
    check_grid(relief, markers)?;
    let n = relief.values.len();
    let mut remap = vec![u32::MAX; markers.num_classes() as usize];
    for i in 0..n {
        if !markers.is_void(i) {
            remap[markers.get(i) as usize] = 0;
        }
    }
    let mut regions = 0u32;
    for r in remap.iter_mut().filter(|r| **r == 0) {
        *r = regions;
        regions += 1;
    }
    if regions == 0 {
        return Err(Error::NoMarkers);
    }

    const UNSET: u32 = u32::MAX;
    let mut label = vec![UNSET; n];
    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); relief.levels];
    for i in 0..n {
        if !markers.is_void(i) {
            label[i] = remap[markers.get(i) as usize];
            queues[relief.values[i] as usize].push_back(i);
        }
    }
    let (w, h) = (relief.width, relief.height);
    let mut level = 0;
    while level < queues.len() {
        let Some(p) = queues[level].pop_front() else {
            level += 1;
            continue;
        };
        for q in neighbors4(p, w, h) {
            if label[q] == UNSET {
                label[q] = label[p];
                queues[(relief.values[q] as usize).max(level)].push_back(q);
            }
        }
    }
    debug_assert!(label.iter().all(|&l| l != UNSET));
    Ok(Partition {
        field: LabelField::new(w, h, label, regions, None)?,
    })
}

/// Regional minima: 4-connected plateaus without a strictly lower neighbour,
/// labelled `0..n` in raster order of their first pixel. Every other pixel
/// carries the void label `n`.
pub fn minima(relief: &Relief) -> LabelField {
    let (w, h) = (relief.width, relief.height);
    let v = &relief.values;
    let n = v.len();
    let mut plateau = vec![u32::MAX; n];
    let mut out = vec![u32::MAX; n];
    let mut count = 0u32;
    let mut members = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if plateau[start] != u32::MAX {
            continue;
        }
        plateau[start] = 0;
        members.clear();
        stack.push(start);
        let mut is_min = true;
        while let Some(p) = stack.pop() {
            members.push(p);
            for q in neighbors4(p, w, h) {
                if v[q] < v[p] {
                    is_min = false;
                } else if v[q] == v[p] && plateau[q] == u32::MAX {
                    plateau[q] = 0;
                    stack.push(q);
                }
            }
        }
        if is_min {
            for &p in &members {
                out[p] = count;
            }
            count += 1;
        }
    }
    for l in out.iter_mut().filter(|l| **l == u32::MAX) {
        *l = count;
    }
    LabelField::new(w, h, out, count, Some(count)).expect("labels in range")
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut p: usize) -> usize {
        while self.parent[p] != p {
            self.parent[p] = self.parent[self.parent[p]];
            p = self.parent[p];
        }
        p
    }
}

/// Volume extinction value of every regional minimum (indexed as in
/// [`minima`]), measured in quantized level units.
///
/// The basin of a minimum is flooded level by level. When basins meet at
/// level `h`, the one of largest volume `Σ_{f<h} (h − f)` survives (equal
/// volumes: the minimum with the lowest first pixel), and every other one
/// dies with its volume at `h` as extinction value. The last survivor gets
/// `u64::MAX`.
pub fn volume_extinction(relief: &Relief) -> Vec<u64> {
    let mins = minima(relief);
    let n_min = mins.num_classes() as usize;
    let (w, h) = (relief.width, relief.height);
    let v = &relief.values;
    let n = v.len();

    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); relief.levels];
    for (p, &l) in v.iter().enumerate() {
        by_level[l as usize].push(p);
    }

    let mut uf = UnionFind {
        parent: (0..n).collect(),
    };
    let mut active = vec![false; n];
    // Per root: pixel count, level sum and the surviving minimum.
    let mut count = vec![0u64; n];
    let mut sum = vec![0u64; n];
    let mut rep = vec![u32::MAX; n];
    let mut extinction = vec![u64::MAX; n_min];

    let mut old_roots = Vec::new();
    for (lvl, pixels) in by_level.iter().enumerate() {
        if pixels.is_empty() {
            continue;
        }
        let hl = lvl as u64;
        old_roots.clear();
        for &p in pixels {
            for q in neighbors4(p, w, h) {
                if active[q] {
                    old_roots.push(uf.find(q));
                }
            }
        }
        old_roots.sort_unstable();
        old_roots.dedup();
        let snapshot: Vec<(usize, u64, u32)> = old_roots
            .iter()
            .map(|&r| (r, count[r] * hl - sum[r], rep[r]))
            .collect();

        for &p in pixels {
            active[p] = true;
            count[p] = 1;
            sum[p] = hl;
            for q in neighbors4(p, w, h) {
                if !active[q] {
                    continue;
                }
                let (a, b) = (uf.find(p), uf.find(q));
                if a != b {
                    uf.parent[b] = a;
                    count[a] += count[b];
                    sum[a] += sum[b];
                }
            }
        }

        // Old basins merged at this level compete by volume.
        let mut groups: Vec<(usize, usize, u64, u32)> = snapshot
            .iter()
            .map(|&(r, vol, m)| (uf.find(r), r, vol, m))
            .collect();
        groups.sort_unstable_by_key(|g| (g.0, std::cmp::Reverse(g.2), g.3));
        let mut i = 0;
        while i < groups.len() {
            let root = groups[i].0;
            let winner = groups[i].3;
            let mut j = i + 1;
            while j < groups.len() && groups[j].0 == root {
                extinction[groups[j].3 as usize] = groups[j].2;
                j += 1;
            }
            rep[root] = winner;
            i = j;
        }
        // Components holding no older pixel are new minima.
        for &p in pixels {
            let r = uf.find(p);
            if rep[r] == u32::MAX {
                rep[r] = mins.get(p);
            }
        }
    }
    extinction
}

/// Indices of the `r` minima with the largest extinction values (ties: lower
/// index first), in that ranking order.
pub fn rank_minima(extinction: &[u64], r: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..extinction.len() as u32).collect();
    order.sort_by_key(|&m| (std::cmp::Reverse(extinction[m as usize]), m));
    order.truncate(r);
    order
}

/// Watershed from the `r` minima of largest volume extinction.
pub fn volume_watershed(relief: &Relief, r: usize) -> Result<Partition> {
    if r == 0 {
        return Err(Error::InvalidParameter("region count must be at least 1".into()));
    }
    let mins = minima(relief);
    let found = mins.num_classes() as usize;
    if found < r {
        return Err(Error::TooFewMinima { found, requested: r });
    }
    let mut kept = rank_minima(&volume_extinction(relief), r);
    kept.sort_unstable();
    let mut relabel = vec![r as u32; found];
    for (k, &m) in kept.iter().enumerate() {
        relabel[m as usize] = k as u32;
    }
    let markers: Vec<u32> = (0..mins.len())
        .map(|i| {
            if mins.is_void(i) {
                r as u32
            } else {
                relabel[mins.get(i) as usize]
            }
        })
        .collect();
    let markers = LabelField::new(relief.width, relief.height, markers, r as u32, Some(r as u32))?;
    marker_watershed(relief, &markers)
}
