//! Replays the checked-in fuzz seeds with the fuzz targets' own checks.

use std::fs;
use std::path::PathBuf;

use perfseg::config::{parse_config, PipelineConfig};
use perfseg::io::{decode_hsr, decode_label_mask, encode_hsr, encode_label_mask};
use perfseg::stochastic::GermParams;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

fn accepted<T, E>(target: &str, f: impl Fn(&[u8]) -> Result<T, E>) -> Vec<String> {
    seeds(target).into_iter().filter(|(_, b)| f(b).is_ok()).map(|(n, _)| n).collect()
}

#[test]
fn hsr_seeds() {
    for (_, bytes) in seeds("hsr_decode") {
        if let Ok(img) = decode_hsr(&bytes) {
            assert_eq!(encode_hsr(&img), bytes);
        }
    }
    assert_eq!(
        accepted("hsr_decode", decode_hsr),
        ["negative_zero.hsr", "single_sample.hsr", "tiny_2x2x3.hsr"]
    );
}

#[test]
fn label_mask_seeds() {
    for (_, bytes) in seeds("label_mask_decode") {
        if let Ok(m) = decode_label_mask(&bytes) {
            let again = encode_label_mask(m.width(), m.height(), m.labels()).unwrap();
            assert_eq!(decode_label_mask(&again).unwrap().labels(), m.labels());
        }
    }
    assert_eq!(
        accepted("label_mask_decode", decode_label_mask),
        ["bilevel.png", "grey16.png", "grey8.png"]
    );
    let (_, grey16) = &seeds("label_mask_decode")[1];
    assert_eq!(decode_label_mask(grey16).unwrap().labels(), &[0, 300, 1000, 65535]);
}

#[test]
fn config_seeds() {
    let apply = |b: &[u8]| {
        let text = std::str::from_utf8(b).unwrap();
        parse_config(text)?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        cfg.validate().map(|_| cfg)
    };
    assert_eq!(accepted("config_parse", apply), ["full.cfg", "minimal.cfg"]);
}

#[test]
fn germ_spec_seeds() {
    let parse = |b: &[u8]| GermParams::parse_spec(std::str::from_utf8(b).unwrap());
    for (_, b) in seeds("germ_spec_parse") {
        if let Ok(p) = parse(&b) {
            assert!(p.validate().is_ok());
            assert_eq!(p.kernel_window() % 2, 1);
        }
    }
    assert_eq!(
        accepted("germ_spec_parse", parse),
        ["defaults.txt", "empty.txt", "strategy.txt", "subset.txt"]
    );
}
