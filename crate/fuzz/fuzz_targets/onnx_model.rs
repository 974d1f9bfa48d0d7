#![no_main]

use bmi_curate::eval::{BmiModel, ImageTensor};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = BmiModel::from_bytes(data, [3, 224, 224]) else { return };
    let _ = model.predict(&ImageTensor::zeros([3, 224, 224]));
});
