#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = bcgan::dataset::parse_manifest(text) {
            for (_, label) in rows {
                assert!(label.is_finite());
            }
        }
    }
});
