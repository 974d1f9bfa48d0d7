#![no_main]

use bmi_curate::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_json(text) {
        let _ = cfg.validate();
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).expect("re-parse"), cfg);
    }
});
