#![no_main]

use flycap::modelist::parse_mode_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(modes) = parse_mode_list(text) {
        let cells = modes[0].cells();
        assert!(modes.iter().all(|m| m.cells() == cells));
    }
});
