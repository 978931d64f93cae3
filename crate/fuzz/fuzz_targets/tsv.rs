#![no_main]

use libfuzzer_sys::fuzz_target;
use nldm::data::{parse_tsv, write_tsv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = parse_tsv(text, "fuzz") {
        let again = parse_tsv(&write_tsv(&corpus), "round-trip").expect("written corpus parses");
        assert_eq!(again, corpus);
    }
});
