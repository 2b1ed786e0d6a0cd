#![no_main]

use libfuzzer_sys::fuzz_target;

// Input is a categories body and a manifest CSV body separated by the
// first NUL byte; the CSV is parsed against whatever category set the
// first half yields.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (cats_bytes, rest) = data.split_at(split);
    let csv_bytes = rest.get(1..).unwrap_or(&[]);
    let (Ok(cats_text), Ok(csv_text)) =
        (std::str::from_utf8(cats_bytes), std::str::from_utf8(csv_bytes))
    else {
        return;
    };
    let Ok(categories) = fer_core::category::CategorySet::parse(cats_text) else {
        return;
    };
    if let Ok(rows) = fer_core::manifest::parse_manifest_csv(csv_text, &categories) {
        // every accepted row must carry a label the category set knows
        for row in rows {
            assert!(categories.index_of(&row.label).is_some());
        }
    }
});
