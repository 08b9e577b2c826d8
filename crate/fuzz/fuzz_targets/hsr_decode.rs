#![no_main]

use libfuzzer_sys::fuzz_target;
use perfseg::io::{decode_hsr, encode_hsr};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_hsr(data) {
        // Accepted inputs are canonical: re-encoding gives the same bytes.
        assert_eq!(encode_hsr(&img), data);
    }
});
