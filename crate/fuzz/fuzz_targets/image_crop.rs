#![no_main]

use bmi_curate::crop::{crop_image, decode_image, CropRect, Perspective};
use bmi_curate::eval::{preprocess_image, PreprocessSpec};
use image::GenericImageView;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(img) = decode_image(data) else { return };
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 || (w as u64) * (h as u64) > 1 << 22 {
        return;
    }
    let rect = CropRect {
        x: w as f64 / 4.0,
        y: h as f64 / 4.0,
        width: w as f64 / 2.0,
        height: h as f64 / 2.0,
        perspective: Perspective::FullBody,
    };
    if let Ok(c) = crop_image(&img, (w, h), &rect) {
        assert!(c.width() <= w && c.height() <= h);
    }
    let spec = PreprocessSpec { width: 16, height: 16, ..PreprocessSpec::default() };
    let t = preprocess_image(&img, &spec).expect("decoded image preprocesses");
    assert!(t.data.iter().all(|v| v.is_finite()));
});
