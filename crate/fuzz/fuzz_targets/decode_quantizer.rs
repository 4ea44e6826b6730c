#![no_main]

use hmq_core::Quantizer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(q) = Quantizer::from_json(text) {
        let b = q.boundaries();
        assert!(b.windows(2).all(|w| w[0] < w[1]), "boundaries not increasing");
        let y = 0.5 * (b[0] + b[b.len() - 1]);
        assert!(q.quantize(y).is_ok_and(|j| j < q.n_cells()));
        let back = Quantizer::from_json(&q.to_json()).expect("round trip decodes");
        assert_eq!(q, back);
    }
});
