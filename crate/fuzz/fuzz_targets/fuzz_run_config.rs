#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = fer_core::runconfig::parse_run_config(text) {
            // accepted configs are semantically valid
            assert!(cfg.train.validate().is_ok());
            assert!(cfg.loss.validate().is_ok());
        }
    }
});
