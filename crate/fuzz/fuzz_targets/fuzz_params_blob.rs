#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tensors) = fer_core::checkpoint::decode_tensors(data) {
        // decode bounds allocation, so re-encoding is safe and stable
        let bytes = fer_core::checkpoint::encode_tensors(&tensors);
        let again = fer_core::checkpoint::decode_tensors(&bytes).expect("round trip");
        assert_eq!(again.len(), tensors.len());
    }
});
