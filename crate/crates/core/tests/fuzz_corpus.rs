//! Replays the checked-in fuzz corpus through the same properties the fuzz
//! targets assert, so the seeds stay meaningful on a stable toolchain.

use std::fs;
use std::path::PathBuf;

use ergodyn::config::parse_config;
use ergodyn::report::{decode_report, encode_report};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut entries: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn config_seeds_parse_or_fail_cleanly() {
    let seeds = corpus("parse_config");
    let accepted = seeds
        .iter()
        .filter(|(_, bytes)| {
            let src = std::str::from_utf8(bytes).unwrap();
            parse_config(src).map(|cfg| cfg.system_spec().unwrap()).is_ok()
        })
        .count();
    // Seven seeds are valid configs; the rest exercise the error paths.
    assert_eq!((accepted, seeds.len()), (7, 10));
}

#[test]
fn report_seeds_are_encoding_fixed_points() {
    let mut decoded = 0;
    for (name, bytes) in corpus("decode_report") {
        let Ok(report) = decode_report(&bytes) else { continue };
        let text = encode_report(&report).unwrap();
        // Seeds were written by the encoder, so they already are the fixed point.
        assert_eq!(text.as_bytes(), bytes.as_slice(), "{name}");
        assert_eq!(encode_report(&decode_report(text.as_bytes()).unwrap()).unwrap(), text);
        decoded += 1;
    }
    assert_eq!(decoded, 6);
}
