#![no_main]

use libfuzzer_sys::fuzz_target;
use perfseg::stochastic::GermParams;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = GermParams::parse_spec(text) {
        assert!(p.validate().is_ok());
        assert_eq!(p.kernel_window() % 2, 1);
    }
});
