#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = asmc::config::parse_config(text) {
        // floats may move by an ulp through serde_json, so only require that it reparses
        let json = serde_json::to_string(&cfg).unwrap();
        asmc::config::parse_config(&json).unwrap();
    }
});
