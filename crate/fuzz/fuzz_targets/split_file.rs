#![no_main]

use bmi_curate::split::SplitAssignment;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(split) = SplitAssignment::from_jsonl(text) {
        let again = split.to_jsonl().join("\n");
        assert_eq!(SplitAssignment::from_jsonl(&again).expect("re-parse"), split);
    }
});
