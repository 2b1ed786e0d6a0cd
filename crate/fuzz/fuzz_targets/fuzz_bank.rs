#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(bank) = fer_core::bank::parse_bank(text) {
            // an accepted bank must satisfy its shape invariants and
            // re-serialize to something it can parse again
            assert_eq!(bank.n_categories(), bank.categories().len());
            let round = fer_core::bank::format_bank(&bank);
            let again = fer_core::bank::parse_bank(&round).expect("round trip");
            assert_eq!(again.categories(), bank.categories());
        }
    }
});
