#![no_main]
use libfuzzer_sys::fuzz_target;

use divae_core::scmgen::Dataset;

fuzz_target!(|data: &[u8]| {
    // Split at the first NUL: main table, then optional latent table.
    match data.iter().position(|&b| b == 0) {
        Some(i) => {
            let _ = Dataset::read_csv(&data[..i], Some(&data[i + 1..]));
        }
        None => {
            let _ = Dataset::read_csv(data, None::<&[u8]>);
        }
    }
});
