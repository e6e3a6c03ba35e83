#![no_main]

use cfdriver_core::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::from_str(text) {
        let again = Config::from_str(&cfg.to_text()).expect("rendered config parses");
        assert_eq!(again, cfg);
    }
});
