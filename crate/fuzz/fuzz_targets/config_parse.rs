#![no_main]

use libfuzzer_sys::fuzz_target;
use perfseg::config::{parse_config, PipelineConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_config(text);
    let mut cfg = PipelineConfig::default();
    if cfg.apply_text(text).is_ok() {
        let _ = cfg.validate();
    }
});
