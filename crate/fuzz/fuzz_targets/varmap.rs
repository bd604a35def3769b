#![no_main]
use libfuzzer_sys::fuzz_target;
use varad_core::io::varmap::{decode_varmap, encode_varmap};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = decode_varmap(data) {
        assert_eq!(map.scores.len(), map.height * map.width);
        assert_eq!(encode_varmap(&map), data);
    }
});
