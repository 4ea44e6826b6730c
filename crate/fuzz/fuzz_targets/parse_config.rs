#![no_main]

use hmq_detect::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        // An accepted config re-serializes to one that parses to the same hash.
        let echo = serde_json::to_string(&cfg).expect("config serializes");
        let back = ExperimentConfig::parse(&echo).expect("echoed config parses");
        assert_eq!(cfg.hash(), back.hash());
    }
});
