#![no_main]

use libfuzzer_sys::fuzz_target;
use vldsrc::sweep::parse_n_list;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(v) = parse_n_list(&text) {
        assert!(v.iter().all(|&n| n >= 1));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
});
