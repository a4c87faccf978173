#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = bcgan::psd::ResponseMap::parse_csv(text) {
            // an accepted map must be usable: serialize and invert a probe
            let csv = map.encode_csv();
            let again = bcgan::psd::ResponseMap::parse_csv(&csv).expect("re-parse of own csv");
            let probe = bcgan::psd::PsdParams { slope: -1.0, intercept: 3.0 };
            if let Ok(a) = map.invert_temperature(probe) {
                let b = again.invert_temperature(probe).expect("invert on round-tripped map");
                assert!(a.is_finite() && b.is_finite());
            }
        }
    }
});
