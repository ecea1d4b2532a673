#![no_main]

use libfuzzer_sys::fuzz_target;
use mfd_core::data::LabeledDataset;

// The binary dataset format is positional with no slack, so any input that
// decodes must re-encode to the very same bytes. Decoding must never panic.
fuzz_target!(|data: &[u8]| {
    let Ok(ds) = LabeledDataset::from_bytes(data) else {
        return;
    };
    let bytes = ds.to_bytes();
    assert_eq!(bytes, data, "accepted input re-encodes byte for byte");
    let again = LabeledDataset::from_bytes(&bytes).expect("re-encoded dataset decodes");
    assert_eq!(again, ds);
});
