#![no_main]

use libfuzzer_sys::fuzz_target;
use perfseg::io::{decode_label_mask, encode_label_mask};

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = decode_label_mask(data) {
        let again = encode_label_mask(mask.width(), mask.height(), mask.labels()).unwrap();
        assert_eq!(decode_label_mask(&again).unwrap().labels(), mask.labels());
    }
});
