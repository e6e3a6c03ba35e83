#![no_main]

use cfdriver_core::cf::CfRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = CfRecord::from_line(text) {
        assert_eq!(CfRecord::from_line(&r.to_line()).expect("written line parses"), r);
    }
});
