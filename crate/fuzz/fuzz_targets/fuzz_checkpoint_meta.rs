#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = fer_core::checkpoint::parse_meta(text) {
            let round = fer_core::checkpoint::format_meta(&meta);
            let _ = fer_core::checkpoint::parse_meta(&round);
        }
    }
});
