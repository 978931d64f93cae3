#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for dim in 1..=4 {
        if let Ok(rows) = nldm::encoder::parse_embeddings(text, dim, "fuzz") {
            for (word, v) in rows {
                assert!(!word.is_empty());
                assert_eq!(v.len(), dim);
                assert!(v.iter().all(|x| x.is_finite()));
            }
        }
    }
});
