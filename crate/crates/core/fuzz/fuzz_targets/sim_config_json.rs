#![no_main]

use fqrt_fluid::sim::SimConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SimConfig::from_json(text) {
        let _ = cfg.validate();
        let _ = cfg.pool_sizes();
    }
});
