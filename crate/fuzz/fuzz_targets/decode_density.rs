#![no_main]

use hmq_core::PointDensity;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = PointDensity::from_json(text) {
        assert!(d.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        let back = PointDensity::from_json(&d.to_json()).expect("round trip decodes");
        assert_eq!(d, back);
    }
});
