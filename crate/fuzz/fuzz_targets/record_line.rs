#![no_main]

use cfdriver_core::io::{parse_record_line, parse_records, record_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_record_line(text) {
        assert_eq!(parse_record_line(&record_line(&r)).expect("written record parses"), r);
    }
    if let Err((line, _)) = parse_records(text) {
        assert!(line >= 1 && line <= text.lines().count());
    }
});
