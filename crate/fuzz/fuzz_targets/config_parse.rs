#![no_main]

use libfuzzer_sys::fuzz_target;
use mfd_core::experiment::ExperimentConfig;

// Parsing arbitrary text must never panic, and any accepted config must
// serialize back out and reparse to the same canonical JSON.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_json(text) else {
        return;
    };
    let json = cfg.to_json().expect("accepted config serializes");
    let again = ExperimentConfig::from_json(&json).expect("canonical JSON reparses");
    assert_eq!(again.to_json().expect("reparse serializes"), json);
});
