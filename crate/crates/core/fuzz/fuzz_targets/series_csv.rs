#![no_main]

use dynabc::io::{read_series, series_to_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = read_series(data) {
        let text = series_to_string(&s).expect("decoded series re-encodes");
        let again = read_series(text.as_bytes()).expect("re-encoded series decodes");
        assert_eq!(series_to_string(&again).unwrap(), text);
    }
});
