#![no_main]

use bmi_curate::posture::ClusterModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = ClusterModel::from_json(text) {
        assert_eq!(ClusterModel::from_json(&model.to_json()).expect("re-parse"), model);
    }
});
