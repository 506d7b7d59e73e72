#![no_main]

use fqrt_fluid::config::parse_state;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = parse_state(text) {
        assert!(x.to_array().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
});
