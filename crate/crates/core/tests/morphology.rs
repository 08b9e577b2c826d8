mod common;

use perfseg::morphology::{
    area_opening, closing_by_reconstruction, dilate, erode, gaussian_filter, leveling, opening, Mask,
    StructuringElement,
};
use perfseg::raster::Raster;
use proptest::prelude::*;

fn raster(w: usize, h: usize) -> impl Strategy<Value = Raster> {
    prop::collection::vec(-100.0f64..100.0, w * h).prop_map(move |d| Raster::new(w, h, d).unwrap())
}

fn element() -> impl Strategy<Value = StructuringElement> {
    prop_oneof![
        (0usize..3).prop_map(|k| StructuringElement::square(2 * k + 1)),
        (0usize..4).prop_map(StructuringElement::disk),
    ]
}

/// Pixels of `!m` reachable from the border, by flood fill.
fn outside(m: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut seen = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h)
        .filter(|&p| {
            let (x, y) = (p % w, p / w);
            (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !m[p]
        })
        .collect();
    for &p in &stack {
        seen[p] = true;
    }
    while let Some(p) = stack.pop() {
        for q in common::nbrs(p, w, h) {
            if !m[q] && !seen[q] {
                seen[q] = true;
                stack.push(q);
            }
        }
    }
    seen
}

fn blobs(w: usize, h: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(prop::bool::weighted(0.55), w * h)
}

proptest! {
    #[test]
    fn dilation_is_dual_to_erosion(f in raster(9, 7), se in element()) {
        let neg = f.map(|v| -v);
        let d = dilate(&f, &se);
        let e = erode(&neg, &se);
        for (a, b) in d.data().iter().zip(e.data()) {
            prop_assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn erosion_below_dilation_above(f in raster(8, 8), se in element()) {
        let (e, d) = (erode(&f, &se), dilate(&f, &se));
        for i in 0..f.len() {
            prop_assert!(e.data()[i] <= f.data()[i] && f.data()[i] <= d.data()[i]);
        }
    }

    #[test]
    fn opening_is_idempotent(f in raster(10, 6), se in element()) {
        let o = opening(&f, &se);
        prop_assert_eq!(opening(&o, &se), o);
    }

    #[test]
    fn hole_filling_matches_border_flood(m in blobs(12, 9)) {
        let filled = closing_by_reconstruction(&Mask::new(12, 9, m.clone()).unwrap());
        let out = outside(&m, 12, 9);
        for p in 0..m.len() {
            prop_assert_eq!(filled.data()[p], !out[p]);
        }
    }

    #[test]
    fn area_opening_matches_component_filter(m in blobs(10, 10), s in 1usize..8) {
        let mask = Mask::new(10, 10, m.clone()).unwrap();
        let kept = area_opening(&mask, s).unwrap();
        // Component area of every foreground pixel by flood fill.
        for p in 0..m.len() {
            let area = if m[p] {
                let mut seen = vec![false; m.len()];
                let mut stack = vec![p];
                seen[p] = true;
                let mut n = 0;
                while let Some(q) = stack.pop() {
                    n += 1;
                    for r in common::nbrs(q, 10, 10) {
                        if m[r] && !seen[r] {
                            seen[r] = true;
                            stack.push(r);
                        }
                    }
                }
                n
            } else {
                0
            };
            prop_assert_eq!(kept.data()[p], m[p] && area >= s);
        }
        // Anti-extensive and idempotent.
        prop_assert!(kept.data().iter().zip(&m).all(|(k, o)| !*k || *o));
        prop_assert_eq!(area_opening(&kept, s).unwrap(), kept);
    }

    #[test]
    fn leveling_stays_between_signal_and_reference(f in raster(16, 16), r in raster(16, 16)) {
        let g = leveling(&f, &r).unwrap();
        for i in 0..f.len() {
            let (a, b) = (f.data()[i], r.data()[i]);
            prop_assert!(a.min(b) <= g.data()[i] && g.data()[i] <= a.max(b));
        }
        prop_assert_eq!(leveling(&g, &r).unwrap(), g);
    }
}

#[test]
fn leveling_against_box_blur() {
    let f = Raster::from_fn(16, 16, |x, y| ((x * 7 + y * 13) % 11) as f64 * if (x + y) % 5 == 0 { 4.0 } else { 1.0 });
    let blur = Raster::from_fn(16, 16, |x, y| {
        let mut s = 0.0;
        let mut n = 0.0;
        for yy in y.saturating_sub(1)..=(y + 1).min(15) {
            for xx in x.saturating_sub(1)..=(x + 1).min(15) {
                s += f.get(xx, yy);
                n += 1.0;
            }
        }
        s / n
    });
    let g = leveling(&f, &blur).unwrap();
    for i in 0..f.len() {
        let (a, b) = (f.data()[i], blur.data()[i]);
        assert!(a.min(b) <= g.data()[i] && g.data()[i] <= a.max(b));
    }
}

#[test]
fn gaussian_matches_direct_convolution() {
    let (w, h, size, sigma) = (17, 13, 11, 2.0);
    let f = Raster::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 23) as f64 - 5.0);
    let got = gaussian_filter(&f, size, sigma).unwrap();
    let r = (size / 2) as isize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    let k = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                    acc += k * f.get(xx as usize, yy as usize);
                    wsum += k;
                }
            }
            let want = acc / wsum;
            let have = got.get(x as usize, y as usize);
            assert!((want - have).abs() < 1e-9, "({x},{y}): {have} vs {want}");
        }
    }
}

#[test]
fn window_extrema_match_scan() {
    let f = Raster::from_fn(8, 8, |x, y| ((x * 5 + y * 3 + x * y) % 9) as f64);
    let range = common::window_range(f.data(), 8, 8, 1);
    let se = StructuringElement::square(3);
    let (d, e) = (dilate(&f, &se), erode(&f, &se));
    for i in 0..64 {
        assert_eq!(d.data()[i] - e.data()[i], range[i]);
    }
}
