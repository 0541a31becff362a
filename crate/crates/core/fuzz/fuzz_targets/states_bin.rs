#![no_main]

use dynabc::io::StatesFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = StatesFile::decode(data) {
        assert_eq!(f.encode().expect("decoded file re-encodes"), data);
    }
});
