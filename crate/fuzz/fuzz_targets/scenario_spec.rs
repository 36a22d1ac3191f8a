#![no_main]
use libfuzzer_sys::fuzz_target;

use divae_core::scmgen::ScenarioSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<ScenarioSpec>(data) {
        let _ = spec.validate();
    }
});
