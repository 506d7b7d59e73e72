#![no_main]

use fqrt_fluid::config::apply_override;
use fqrt_fluid::model::{validate_params, ModelParams};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut p = ModelParams::canonical();
    let before = p;
    match apply_override(&mut p, text) {
        Ok(()) => {
            let _ = validate_params(&p);
        }
        Err(_) => assert_eq!(p, before),
    }
});
