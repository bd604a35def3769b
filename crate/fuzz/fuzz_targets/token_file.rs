#![no_main]
use libfuzzer_sys::fuzz_target;
use varad_core::tokenizer::{decode_token_file, encode_token_file};

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = decode_token_file(data) {
        // the format has no slack, so anything accepted re-encodes to itself
        assert_eq!(encode_token_file(&file), data);
        let channels = file.grids.first().map_or(0, |g| g.channels());
        let _ = file.check(file.grids.len(), channels);
    }
});
