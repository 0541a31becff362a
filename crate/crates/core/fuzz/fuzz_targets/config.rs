#![no_main]

use dynabc::io::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = text.parse::<RunConfig>() {
        // anything accepted must echo to a file that parses to the same config
        let again: RunConfig = cfg.echo().parse().expect("echo parses");
        assert_eq!(again.fingerprint(), cfg.fingerprint());
    }
});
