#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ys) = asmc::io::parse_dataset(text) {
        assert!(ys.iter().all(|y| y.is_finite()));
        // anything accepted must survive a write/read cycle unchanged
        let again = asmc::io::parse_dataset(&asmc::io::format_dataset(&ys)).unwrap();
        assert_eq!(ys, again);
    }
});
