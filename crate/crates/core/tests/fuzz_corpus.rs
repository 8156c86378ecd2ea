//! Replays the checked-in fuzz corpus through the parsers on a stable toolchain.

use std::fs;
use std::path::Path;

fn corpus(name: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(name);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty());
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect()
}

#[test]
fn dataset_seeds() {
    for (name, text) in corpus("dataset_parse") {
        let parsed = asmc::io::parse_dataset(&text);
        let expect_ok = !matches!(name.as_str(), "nonfinite.txt" | "two_per_line.txt");
        assert_eq!(parsed.is_ok(), expect_ok, "{name}");
        if let Ok(ys) = parsed {
            assert_eq!(asmc::io::parse_dataset(&asmc::io::format_dataset(&ys)).unwrap(), ys, "{name}");
        }
    }
}

#[test]
fn config_seeds() {
    for (name, text) in corpus("config_json") {
        let parsed = asmc::config::parse_config(&text);
        assert_eq!(parsed.is_ok(), name != "unknown_key.json", "{name}");
    }
}

#[test]
fn method_list_seeds() {
    for (name, text) in corpus("method_list") {
        let parsed = asmc::samplers::parse_method_list(&text);
        assert_eq!(parsed.is_ok(), name != "empty_items.txt", "{name}");
    }
}
