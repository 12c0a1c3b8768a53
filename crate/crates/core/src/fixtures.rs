//! Named reference sources.

use crate::error::{Error, Result};
use crate::mass::Rational;
use crate::source::{AnySource, JointSource};

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub source: AnySource,
    pub provenance: &'static str,
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn labels(range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| i.to_string()).collect()
}

/// The three-point source `P = (1/2, 1/3, 1/6)` without side-information, on
/// which the swap-and-drop optimality argument breaks at `eps = 1/6`.
pub fn appendix_i() -> JointSource<Rational> {
    JointSource::without_side_information(vec![q(1, 2), q(1, 3), q(1, 6)]).expect("valid fixture")
}

/// `Y` uniform on `{0, 1}`; `X` is a point mass given `Y = 0` and uniform on
/// eight symbols given `Y = 1`. `H = 1.5`, `V_c = 0`, `V_u = 2.25`.
pub fn source_b() -> JointSource<Rational> {
    let mut point = vec![q(0, 1); 8];
    point[0] = q(1, 1);
    JointSource::from_conditionals(labels(0..8), labels(0..2), &[q(1, 2), q(1, 2)], &[point, vec![q(1, 8); 8]])
        .expect("valid fixture")
}

/// `X` and `Y` independent and uniform on `{0, 1}`.
pub fn independent_binary() -> JointSource<Rational> {
    JointSource::new(labels(0..2), labels(0..2), vec![vec![q(1, 4); 2]; 2]).expect("valid fixture")
}

/// Binary `X` with a biased binary side-information; both conditional
/// varentropies are positive and differ, so `0 < V_c < V_u`.
pub fn binary_pair() -> JointSource<Rational> {
    JointSource::from_conditionals(
        labels(0..2),
        labels(0..2),
        &[q(1, 3), q(2, 3)],
        &[vec![q(3, 4), q(1, 4)], vec![q(1, 8), q(7, 8)]],
    )
    .expect("valid fixture")
}

/// `Y` uniform on `{0, 1}` with `𝓥(X|0) = 1/4` and `𝓥(X|1) = 1`.
pub fn jensen_pair() -> JointSource<Rational> {
    JointSource::from_conditionals(
        labels(0..5),
        labels(0..2),
        &[q(1, 2), q(1, 2)],
        &[
            vec![q(1, 2), q(1, 4), q(1, 4), q(0, 1), q(0, 1)],
            vec![q(1, 2), q(1, 8), q(1, 8), q(1, 8), q(1, 8)],
        ],
    )
    .expect("valid fixture")
}

pub fn point_mass() -> JointSource<Rational> {
    JointSource::without_side_information(vec![q(1, 1)]).expect("valid fixture")
}

/// Truncation of the source with `P_Y(y) ∝ 1/y²` and `X | Y = y` geometric
/// with parameter `1/y`.
///
/// `Y` is cut to `{1, ..., y_max}` and each conditional row to the shortest
/// prefix whose discarded mass is at most `tail_tol`; both are renormalized.
pub fn truncate_appendix_b(y_max: usize, tail_tol: f64) -> Result<JointSource<f64>> {
    if y_max == 0 {
        return Err(Error::validation("y_max", "must be at least 1"));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::validation("tail_tol", "must lie in (0, 1)"));
    }
    let zeta: f64 = (1..=y_max).map(|y| 1.0 / (y * y) as f64).sum();
    let y_marginal: Vec<f64> = (1..=y_max).map(|y| 1.0 / ((y * y) as f64 * zeta)).collect();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(y_max);
    for y in 1..=y_max {
        let p = 1.0 / y as f64;
        let keep = if y == 1 {
            1
        } else {
            // (1 - p)^k <= tail_tol
            ((tail_tol.ln() / (1.0 - p).ln()).ceil() as usize).max(1)
        };
        let row: Vec<f64> = (0..keep).map(|k| (1.0 - p).powi(k as i32) * p).collect();
        let total: f64 = row.iter().sum();
        rows.push(row.into_iter().map(|m| m / total).collect());
    }
    let x_len = rows.iter().map(Vec::len).max().unwrap_or(1);
    let x_alphabet = (1..=x_len).map(|x| x.to_string()).collect();
    let y_alphabet = (1..=y_max).map(|y| y.to_string()).collect();
    let pmf = (0..x_len)
        .map(|x| {
            rows.iter()
                .zip(&y_marginal)
                .map(|(row, py)| row.get(x).map_or(0.0, |c| c * py))
                .collect()
        })
        .collect();
    JointSource::new(x_alphabet, y_alphabet, pmf)
}

pub fn all() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "appendix-i",
            source: appendix_i().into(),
            provenance: "three-point source P = (1/2, 1/3, 1/6) without side-information",
        },
        Fixture {
            name: "source-b",
            source: source_b().into(),
            provenance: "Y uniform; X point mass given Y=0, uniform on 8 symbols given Y=1",
        },
        Fixture {
            name: "independent-binary",
            source: independent_binary().into(),
            provenance: "X and Y independent uniform bits",
        },
        Fixture {
            name: "binary-pair",
            source: binary_pair().into(),
            provenance: "binary X with biased binary side-information, 0 < V_c < V_u",
        },
        Fixture {
            name: "jensen-pair",
            source: jensen_pair().into(),
            provenance: "conditional varentropies 1/4 and 1 with equal side-information mass",
        },
        Fixture {
            name: "point-mass",
            source: point_mass().into(),
            provenance: "degenerate single-symbol source",
        },
        Fixture {
            name: "appendix-b",
            source: truncate_appendix_b(8, 1e-9).expect("valid fixture").into(),
            provenance: "P_Y ∝ 1/y², X|Y=y geometric(1/y), truncated to y ≤ 8 with tail 1e-9",
        },
    ]
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().into_iter().find(|f| f.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_round_trips_through_the_loader() {
        for f in all() {
            let text = f.source.to_json_string();
            let back = crate::source::load_source(&text).unwrap();
            assert_eq!(back.mode(), f.source.mode(), "{}", f.name);
        }
    }

    #[test]
    fn appendix_b_degenerates_at_one() {
        let src = truncate_appendix_b(1, 1e-9).unwrap();
        assert_eq!(src.x_len(), 1);
        assert_eq!(src.measures().h, 0.0);
    }

    #[test]
    fn appendix_b_geometric_varentropy() {
        let src = truncate_appendix_b(3, 1e-9).unwrap();
        let m = src.measures();
        // y(y-1) log2(y/(y-1))^2 at y = 2 and y = 3
        assert!((m.per_y[1].variance - 2.0).abs() < 1e-6);
        let v3 = 6.0 * (1.5f64).log2().powi(2);
        assert!((m.per_y[2].variance - v3).abs() < 1e-6);
        assert!(truncate_appendix_b(3, 1.0).is_err());
        assert!(truncate_appendix_b(0, 0.1).is_err());
    }

    #[test]
    fn appendix_b_third_moment_is_finite_at_fifty() {
        let src = truncate_appendix_b(50, 1e-9).unwrap();
        let m = src.measures();
        assert!(m.t_u.is_finite() && m.t_u > 0.0);
        // per-y varentropy grows with y towards log2(e)^2
        let v: Vec<f64> = m.per_y.iter().map(|c| c.variance).collect();
        assert!(v.windows(2).skip(1).all(|w| w[1] > w[0]));
    }
}
