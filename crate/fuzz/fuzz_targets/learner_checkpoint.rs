#![no_main]

use cfdriver_core::learner::LearnerModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = LearnerModel::from_json(text) {
        assert_eq!(LearnerModel::from_json(&m.to_json()).expect("written checkpoint parses"), m);
    }
});
