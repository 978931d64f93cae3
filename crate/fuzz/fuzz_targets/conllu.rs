#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = nldm::data::parse_conllu(text, "fuzz") {
        for s in &corpus {
            assert!(!s.words.is_empty());
            assert_eq!(s.words.len(), s.labels.len());
            if let Some(heads) = &s.heads {
                assert_eq!(heads.len(), s.words.len());
                assert!(heads.iter().all(|&h| h <= heads.len()));
            }
        }
    }
});
