#![no_main]
use libfuzzer_sys::fuzz_target;

use divae_core::divvae::ModelParams;

fuzz_target!(|data: &[u8]| {
    let _ = ModelParams::from_json_slice(data);
});
