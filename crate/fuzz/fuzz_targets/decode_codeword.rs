#![no_main]

use libfuzzer_sys::fuzz_target;
use vldsrc::coding::{build_code, BinaryString, CodeRunner, Criterion};
use vldsrc::fixtures::binary_pair;
use vldsrc::lift::Budget;
use vldsrc::mass::Rational;

// first three bytes pick the side-information sequence, the rest are codeword bits
fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let src = binary_pair();
    let eps = Rational::new(1.into(), 5.into());
    let plan = build_code(&src, 3, &eps, Criterion::Avg, Budget::default()).expect("fixture plan");
    let runner = CodeRunner::new(&plan, &src).expect("runner");
    let ys: Vec<usize> = data[..3].iter().map(|b| usize::from(b & 1)).collect();
    let bits: String = data[3..].iter().take(64).map(|b| if b & 1 == 1 { '1' } else { '0' }).collect();
    let w = BinaryString::parse_bits(&bits).expect("binary digits");
    if let Ok(xs) = runner.decode(&w, &ys) {
        // a decodable codeword is the rank of what it decodes to
        let (rank, _) = runner.rank_and_keep(&xs, &ys).expect("decoded block ranks");
        assert_eq!(&rank, w.index());
    }
});
