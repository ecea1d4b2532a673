#![no_main]

use libfuzzer_sys::fuzz_target;
use mfd_core::model::ModelCheckpoint;

// Decoding arbitrary bytes must never panic. When it succeeds, the result
// must rehydrate into parameters and survive an encode/decode round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = ModelCheckpoint::from_bytes(data) else {
        return;
    };
    ckpt.to_params().expect("decoded checkpoint rehydrates");
    let bytes = ckpt.to_bytes().expect("decoded checkpoint re-encodes");
    let again = ModelCheckpoint::from_bytes(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(again, ckpt);
});
