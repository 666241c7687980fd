#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = ambiroom::hrtf::load_hrtf(data) {
        // a parsed container must survive a write/read cycle
        let again = ambiroom::hrtf::load_hrtf(&set.to_bytes()).expect("re-read of a valid container");
        assert_eq!(again.n_dirs(), set.n_dirs());
        assert_eq!(again.taps(), set.taps());
    }
});
