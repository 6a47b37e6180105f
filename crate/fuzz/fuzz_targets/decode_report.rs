#![no_main]

use ergodyn::report::{decode_report, encode_report};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(report) = decode_report(data) else { return };
    // A decoded report re-encodes, and the encoding is a fixed point.
    let text = encode_report(&report).expect("decoded reports hold only finite values");
    let again = decode_report(text.as_bytes()).expect("encoded reports decode");
    assert_eq!(encode_report(&again).unwrap(), text);
});
