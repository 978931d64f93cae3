#![no_main]

use libfuzzer_sys::fuzz_target;
use nldm_cli::{config_args, parse_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse_config(text) {
        for (key, value) in &entries {
            assert!(!key.is_empty() && !key.contains('_'));
            assert!(!value.is_empty());
        }
        let args = config_args(&entries);
        assert!(args.len() <= 2 * entries.len());
    }
});
