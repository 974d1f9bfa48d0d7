#![no_main]

use bmi_curate::eval::{compute_metrics, PredictionRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rec) = PredictionRecord::from_json_line(text) {
        let m = compute_metrics(std::slice::from_ref(&rec)).expect("valid record");
        assert!(m.mape_percent >= 0.0 && m.mae_bmi >= 0.0 && m.n == 1);
    }
});
