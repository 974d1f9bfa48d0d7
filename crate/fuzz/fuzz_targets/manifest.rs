#![no_main]

use bmi_curate::ingest::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = parse_manifest(text) else { return };
    let non_blank = text.lines().filter(|l| !l.trim().is_empty()).count();
    assert_eq!(m.total_lines(), non_blank);
    // Accepted records survive a write/read cycle unchanged.
    let again: String = m.records.iter().map(|r| r.to_json_line() + "\n").collect();
    let back = parse_manifest(&again).expect("re-parse");
    assert!(back.rejects.is_empty());
    assert_eq!(back.records, m.records);
});
