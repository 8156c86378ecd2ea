#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(methods) = asmc::samplers::parse_method_list(text) {
        assert!(!methods.is_empty());
        let labels: Vec<&str> = methods.iter().map(|m| m.label()).collect();
        assert_eq!(asmc::samplers::parse_method_list(&labels.join(",")).unwrap(), methods);
    }
});
