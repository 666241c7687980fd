#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ambiroom_cli::config::parse_config(text) {
        let _ = cfg.room_spec();
        let _ = cfg.array_spec();
    }
});
