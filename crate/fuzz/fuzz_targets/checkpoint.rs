#![no_main]

use libfuzzer_sys::fuzz_target;
use nldm::train::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        let bytes = ckpt.to_bytes().expect("decoded checkpoint re-encodes");
        let again = Checkpoint::from_bytes(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.model.config, ckpt.model.config);
    }
});
