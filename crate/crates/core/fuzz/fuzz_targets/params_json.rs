#![no_main]

use fqrt_fluid::config::{params_from_json, params_to_json};
use fqrt_fluid::model::validate_params;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(p) = params_from_json(text) else { return };
    let _ = validate_params(&p);
    let again = params_from_json(&params_to_json(&p)).expect("serialized params parse");
    assert_eq!(again, p);
});
