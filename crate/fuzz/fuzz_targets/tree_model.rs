#![no_main]

use cfdriver_core::trees::TreeModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = TreeModel::from_json(text) {
        let x = vec![0.5; m.n_features];
        let _ = m.predict_proba(&x);
        assert_eq!(TreeModel::from_json(&m.to_json()).expect("written model parses"), m);
    }
});
