#![no_main]

use ergodyn::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    // Accepted configs were validated against their system, so resolving it again cannot fail.
    if let Ok(cfg) = parse_config(src) {
        cfg.system_spec().expect("accepted config resolves its system");
    }
});
