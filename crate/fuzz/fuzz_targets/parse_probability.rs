#![no_main]

use libfuzzer_sys::fuzz_target;
use vldsrc::mass::{format_rational, parse_probability, parse_rational};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(r) = parse_rational(&text) {
        assert_eq!(parse_rational(&format_rational(&r)).expect("canonical form parses"), r);
    }
    let _ = parse_probability(&text);
});
