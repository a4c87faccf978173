#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = bcgan::image::decode_pgm(data) {
        // anything we accept must survive an encode/decode round trip
        let encoded = bcgan::image::encode_pgm(&img);
        let again = bcgan::image::decode_pgm(&encoded).expect("re-decode of encoded pgm");
        assert_eq!(img, again);
    }
});
