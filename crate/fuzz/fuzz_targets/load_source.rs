#![no_main]

use libfuzzer_sys::fuzz_target;
use vldsrc::source::{load_source, AnySource};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(src) = load_source(text) else {
        return;
    };
    // accepted documents re-load unchanged
    let again = load_source(&src.to_json_string()).expect("round trip");
    assert_eq!(again.mode(), src.mode());
    match &src {
        AnySource::Rational(s) => assert_eq!(again, AnySource::Rational(s.clone())),
        AnySource::Float(s) => {
            let m = s.measures();
            assert!(m.h.is_finite() && m.h >= 0.0);
        }
    }
});
