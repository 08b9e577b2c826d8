use perfseg::detect::{
    confidence_maps, detect_regions, region_stats, render_risk, risk_color, BETA_A_CLAMP,
    DEFAULT_B_THRESHOLD,
};
use perfseg::model::ParameterMaps;
use perfseg::raster::{LabelField, Raster};
use perfseg::watershed::Partition;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn maps(a: Vec<f64>, b: Vec<f64>, w: usize, h: usize) -> ParameterMaps {
    ParameterMaps {
        a: Raster::new(w, h, a).unwrap(),
        b: Raster::new(w, h, b).unwrap(),
        m: Raster::filled(w, h, 0.0),
        j1: 21,
    }
}

/// Vertical stripes of random widths: every label is one connected region.
fn stripes(rng: &mut ChaCha8Rng, w: usize, h: usize, r: u32) -> Partition {
    let mut cuts: Vec<usize> = (1..w).collect();
    for i in 0..cuts.len() {
        let j = rng.gen_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut cuts = cuts[..r as usize - 1].to_vec();
    cuts.sort_unstable();
    let labels = (0..w * h).map(|p| cuts.iter().filter(|&&c| p % w >= c).count() as u32).collect();
    Partition::new(LabelField::new(w, h, labels, r, None).unwrap()).unwrap()
}

fn random_case(seed: u64) -> (ParameterMaps, Partition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (17, 9);
    let seg = stripes(&mut rng, w, h, 5);
    let a = (0..w * h).map(|_| rng.gen_range(-0.5..3.0)).collect();
    let b = (0..w * h).map(|_| rng.gen_range(0.0..1500.0)).collect();
    (maps(a, b, w, h), seg)
}

#[test]
fn statistics_match_direct_accumulation() {
    for seed in 0..10 {
        let (m, seg) = random_case(seed);
        let s = region_stats(&m, &seg).unwrap();
        let mut total = 0;
        for r in &s.regions {
            let members: Vec<usize> = (0..seg.labels().len()).filter(|&i| seg.labels()[i] == r.id).collect();
            let n = members.len() as f64;
            let mean = |v: &Raster| members.iter().map(|&i| v.data()[i]).sum::<f64>() / n;
            let sd = |v: &Raster, mu: f64| (members.iter().map(|&i| (v.data()[i] - mu).powi(2)).sum::<f64>() / n).sqrt();
            let (ma, mb) = (mean(&m.a), mean(&m.b));
            assert_eq!(r.area, members.len());
            assert!((r.mean_a - ma).abs() < 1e-12 && (r.mean_b - mb).abs() < 1e-9);
            assert!((r.std_a - sd(&m.a, ma)).abs() < 1e-12 && (r.std_b - sd(&m.b, mb)).abs() < 1e-9);
            if ma > 0.0 {
                assert!((r.beta_a - sd(&m.a, ma) / ma).abs() < 1e-12);
            } else {
                assert_eq!(r.beta_a, f64::INFINITY);
            }
            total += r.area;
        }
        assert_eq!(total, seg.labels().len());
    }
}

#[test]
fn threshold_is_strict() {
    let seg = Partition::new(LabelField::new(3, 1, vec![0, 1, 2], 3, None).unwrap()).unwrap();
    let m = maps(vec![0.5, 0.5, -0.1], vec![800.0, 801.0, 5000.0], 3, 1);
    let s = detect_regions(&region_stats(&m, &seg).unwrap(), DEFAULT_B_THRESHOLD);
    let flags: Vec<bool> = s.regions.iter().map(|r| r.detected).collect();
    assert_eq!(flags, vec![false, true, false]);
    assert_eq!(s.detected().count(), 1);
}

#[test]
fn zero_mean_slope_is_least_confident() {
    let seg = Partition::new(LabelField::new(4, 1, vec![0, 0, 1, 1], 2, None).unwrap()).unwrap();
    let m = maps(vec![-2.0, 2.0, 1.0, 1.0], vec![10.0, 10.0, 10.0, 10.0], 4, 1);
    let s = region_stats(&m, &seg).unwrap();
    assert_eq!(s.regions[0].beta_a, f64::INFINITY);
    let c = confidence_maps(&s, &seg).unwrap();
    assert_eq!(c.beta_a.data(), &[BETA_A_CLAMP, BETA_A_CLAMP, 0.0, 0.0]);
    // Rendered as the top of the ramp.
    assert_eq!(&render_risk(&c.beta_a, BETA_A_CLAMP)[..3], &[255, 0, 0]);
    let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
    assert!(json[0]["beta_a"].is_null());
    assert_eq!(json[1]["beta_a"], 0.0);
}

#[test]
fn clamped_values_saturate_the_ramp() {
    assert_eq!(risk_color(7.0, BETA_A_CLAMP), risk_color(BETA_A_CLAMP, BETA_A_CLAMP));
    assert_eq!(risk_color(7.0, BETA_A_CLAMP), [255, 0, 0]);
    let reds: Vec<u8> = (0..=50).map(|i| risk_color(i as f64 * 0.1, BETA_A_CLAMP)[0]).collect();
    assert!(reds.windows(2).all(|w| w[0] <= w[1]));
    let blues: Vec<u8> = (0..=50).map(|i| risk_color(i as f64 * 0.1, BETA_A_CLAMP)[2]).collect();
    assert!(blues.windows(2).all(|w| w[0] >= w[1]));
}

proptest! {
    #[test]
    fn coefficients_of_variation_ignore_scale(seed in 0u64..500, c in 0.01f64..100.0) {
        let (m, seg) = random_case(seed);
        let scaled = maps(m.a.data().iter().map(|v| v * c).collect(), m.b.data().iter().map(|v| v * c).collect(), 17, 9);
        let s = region_stats(&m, &seg).unwrap();
        let t = region_stats(&scaled, &seg).unwrap();
        for (x, y) in s.regions.iter().zip(&t.regions) {
            if x.beta_a.is_finite() {
                prop_assert!((x.beta_a - y.beta_a).abs() < 1e-9 * x.beta_a.max(1.0));
            } else {
                prop_assert!(y.beta_a.is_infinite());
            }
            prop_assert!((x.beta_b - y.beta_b).abs() < 1e-9 * x.beta_b.max(1.0));
        }
    }

    #[test]
    fn raising_intercepts_never_unflags(seed in 0u64..500, bump in 0.0f64..500.0, t in 0.0f64..1500.0) {
        let (m, seg) = random_case(seed);
        let raised = maps(m.a.data().to_vec(), m.b.data().iter().map(|v| v + bump).collect(), 17, 9);
        let before = detect_regions(&region_stats(&m, &seg).unwrap(), t);
        let after = detect_regions(&region_stats(&raised, &seg).unwrap(), t);
        for (x, y) in before.regions.iter().zip(&after.regions) {
            prop_assert!(!x.detected || y.detected);
        }
        // And a higher threshold never flags more.
        let strict = detect_regions(&region_stats(&m, &seg).unwrap(), t + bump);
        for (x, y) in before.regions.iter().zip(&strict.regions) {
            prop_assert!(x.detected || !y.detected);
        }
    }
}
