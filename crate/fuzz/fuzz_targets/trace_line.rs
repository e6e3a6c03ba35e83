#![no_main]

use cfdriver_core::world::trace::parse_trace_line;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_trace_line(text);
});
