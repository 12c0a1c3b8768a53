//! Replays the fuzz seed corpus through the same checks the fuzz targets make,
//! plus the outcome each seed was written to pin down.

use std::path::PathBuf;

use num_bigint::BigInt;
use vldsrc::coding::{build_code, BinaryString, CodeRunner, Criterion};
use vldsrc::fixtures::binary_pair;
use vldsrc::lift::Budget;
use vldsrc::mass::{format_rational, parse_probability, parse_rational, Rational};
use vldsrc::source::{load_source, AnySource, Mode};
use vldsrc::sweep::parse_n_list;

fn seed(target: &str, name: &str) -> Vec<u8> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fuzz", "corpus", target, name].iter().collect();
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn text(target: &str, name: &str) -> String {
    String::from_utf8(seed(target, name)).expect("utf-8 seed")
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

#[test]
fn load_source_seeds() {
    for (name, accepted) in [
        ("appendix_i.json", true),
        ("float_uniform.json", true),
        ("duplicate_label.json", false),
        ("non_unit_total.json", false),
    ] {
        let loaded = load_source(&text("load_source", name));
        assert_eq!(loaded.is_ok(), accepted, "{name}");
        let Ok(src) = loaded else { continue };
        let again = load_source(&src.to_json_string()).expect("round trip");
        assert_eq!(again.mode(), src.mode());
        match &src {
            AnySource::Rational(s) => assert_eq!(again, AnySource::Rational(s.clone())),
            AnySource::Float(s) => {
                assert_eq!(src.mode(), Mode::Float);
                assert!((s.measures().h - 1.0).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn parse_probability_seeds() {
    for (name, expected) in [
        ("fraction", Some(q(1, 6))),
        ("short_decimal", Some(q(1, 8))),
        ("long_decimal", Some(q(1, 6))),
        ("exponent", Some(q(1, 1000))),
        ("zero_denominator", None),
    ] {
        let t = text("parse_probability", name);
        if let Ok(r) = parse_rational(&t) {
            assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }
        assert_eq!(parse_probability(&t).ok(), expected, "{name}");
    }
}

#[test]
fn parse_n_list_seeds() {
    assert!(parse_n_list(&text("parse_n_list", "empty_range")).is_err());
    assert_eq!(parse_n_list(&text("parse_n_list", "geometric")).unwrap(), [4, 8, 16, 32, 64, 128, 256]);
    assert_eq!(parse_n_list(&text("parse_n_list", "mixed")).unwrap(), [1, 2, 3, 4, 6]);
}

#[test]
fn decode_codeword_seeds() {
    let src = binary_pair();
    let plan = build_code(&src, 3, &q(1, 5), Criterion::Avg, Budget::default()).unwrap();
    let runner = CodeRunner::new(&plan, &src).unwrap();
    for (name, decodable) in [("empty_word", true), ("short", true), ("long", false)] {
        let data = seed("decode_codeword", name);
        let ys: Vec<usize> = data[..3].iter().map(|b| usize::from(b & 1)).collect();
        let bits: String = data[3..].iter().map(|b| if b & 1 == 1 { '1' } else { '0' }).collect();
        let w = BinaryString::parse_bits(&bits).unwrap();
        let decoded = runner.decode(&w, &ys);
        assert_eq!(decoded.is_ok(), decodable, "{name}");
        let Ok(xs) = decoded else { continue };
        let (rank, _) = runner.rank_and_keep(&xs, &ys).unwrap();
        assert_eq!(&rank, w.index(), "{name}");
    }
}
