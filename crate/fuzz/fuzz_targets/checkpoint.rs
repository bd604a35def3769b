#![no_main]
use libfuzzer_sys::fuzz_target;
use varad_core::io::checkpoint::{decode_checkpoint, encode_checkpoint};
use varad_core::trainer::{model_from_ckpt, resume_from_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = decode_checkpoint(data) else {
        return;
    };
    // metadata whitespace is not preserved, so compare from the first re-encoding on
    let bytes = encode_checkpoint(&ckpt);
    let again = decode_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(encode_checkpoint(&again), bytes);

    let _ = model_from_ckpt::<f32>(&ckpt);
    let _ = resume_from_checkpoint::<f64>(&ckpt, None);
});
