#![no_main]
use libfuzzer_sys::fuzz_target;

use divae_core::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let _ = ExperimentConfig::from_json_slice(data);
});
