#![no_main]
use libfuzzer_sys::fuzz_target;

use ambiroom_cli::sidecar::parse_sidecar;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = parse_sidecar(text) {
        let text = s.to_toml();
        assert_eq!(parse_sidecar(&text).expect("re-parse").to_toml(), text);
    }
});
