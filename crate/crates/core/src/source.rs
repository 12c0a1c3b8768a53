//! Finite correlated sources `(X, Y)` and their single-letter information measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mass::{parse_rational, Mass, Rational};

/// Tolerance on the total mass of a float-mode document.
pub const FLOAT_TOTAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rational,
    Float,
}

/// Joint pmf of `(X, Y)` on finite alphabets.
///
/// Side-information symbols with zero marginal mass are dropped on
/// construction. Zero-mass `x` symbols are kept in the table but never enter a
/// conditional support.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSource<P: Mass> {
    x_alphabet: Vec<String>,
    y_alphabet: Vec<String>,
    /// `pmf[x][y] = P(X = x, Y = y)`.
    pmf: Vec<Vec<P>>,
    y_marginal: Vec<P>,
}

/// Conditional law of `X` given one side-information symbol, sorted by
/// non-increasing mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRow<P: Mass> {
    /// Index of the side-information symbol.
    pub y: usize,
    pub probs_sorted: Vec<P>,
    /// `perm[rank]` is the `x` index holding the `rank`-th largest mass
    /// (ranks are 0-based here; the code layer shifts them to 1-based).
    pub perm: Vec<usize>,
}

impl<P: Mass> ConditionalRow<P> {
    /// Inverse of `perm`: rank (0-based) of an `x` index, `None` off the support.
    pub fn rank_of(&self, x: usize) -> Option<usize> {
        self.perm.iter().position(|&s| s == x)
    }
}

/// Per-side-information measures `(𝓗(X|y), 𝓥(X|y), 𝓣(X|y))` in bits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalMeasures {
    pub y: String,
    pub prob: f64,
    pub entropy: f64,
    pub variance: f64,
    pub third_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureSet {
    /// Conditional entropy `H(X|Y)`.
    pub h: f64,
    /// Conditional information variance `V_c(X|Y)`.
    pub v_c: f64,
    /// Unconditional information variance `V_u(X|Y)`.
    pub v_u: f64,
    /// Unconditional third absolute central moment `T_u(X|Y)`.
    pub t_u: f64,
    pub per_y: Vec<ConditionalMeasures>,
}

impl<P: Mass> JointSource<P> {
    pub fn new(x_alphabet: Vec<String>, y_alphabet: Vec<String>, pmf: Vec<Vec<P>>) -> Result<Self> {
        if x_alphabet.is_empty() {
            return Err(Error::validation("x_alphabet", "empty alphabet"));
        }
        if y_alphabet.is_empty() {
            return Err(Error::validation("y_alphabet", "empty alphabet"));
        }
        check_unique(&x_alphabet, "x_alphabet")?;
        check_unique(&y_alphabet, "y_alphabet")?;
        if pmf.len() != x_alphabet.len() {
            return Err(Error::validation(
                "pmf",
                format!("expected {} rows (one per x symbol), found {}", x_alphabet.len(), pmf.len()),
            ));
        }
        for (i, row) in pmf.iter().enumerate() {
            if row.len() != y_alphabet.len() {
                return Err(Error::validation(
                    format!("pmf[{i}]"),
                    format!("expected {} entries (one per y symbol), found {}", y_alphabet.len(), row.len()),
                ));
            }
            for (j, m) in row.iter().enumerate() {
                if m.is_negative() || !m.to_f64().is_finite() {
                    return Err(Error::validation(format!("pmf[{i}][{j}]"), "negative mass"));
                }
            }
        }
        let total = P::sum(pmf.iter().flatten());
        let unit = if P::EXACT {
            total == P::one()
        } else {
            (total.to_f64() - 1.0).abs() <= FLOAT_TOTAL_TOL
        };
        if !unit {
            return Err(Error::validation(
                "pmf",
                format!("non-unit total {}", total.to_f64()),
            ));
        }
        let pmf: Vec<Vec<P>> = if P::EXACT {
            pmf
        } else {
            pmf.iter().map(|row| row.iter().map(|m| m.div(&total)).collect()).collect()
        };

        let keep: Vec<usize> = (0..y_alphabet.len())
            .filter(|&j| !P::sum(pmf.iter().map(|row| &row[j])).is_zero())
            .collect();
        let y_alphabet: Vec<String> = keep.iter().map(|&j| y_alphabet[j].clone()).collect();
        let pmf: Vec<Vec<P>> = pmf
            .into_iter()
            .map(|row| keep.iter().map(|&j| row[j].clone()).collect())
            .collect();
        let y_marginal = (0..y_alphabet.len())
            .map(|j| P::sum(pmf.iter().map(|row| &row[j])))
            .collect();
        Ok(JointSource {
            x_alphabet,
            y_alphabet,
            pmf,
            y_marginal,
        })
    }

    /// Build from a side-information marginal and per-`y` conditional rows
    /// (`conditionals[y][x] = P(x|y)`).
    pub fn from_conditionals(
        x_alphabet: Vec<String>,
        y_alphabet: Vec<String>,
        y_marginal: &[P],
        conditionals: &[Vec<P>],
    ) -> Result<Self> {
        if conditionals.len() != y_marginal.len() {
            return Err(Error::validation("conditionals", "one row per y symbol required"));
        }
        let pmf = (0..x_alphabet.len())
            .map(|x| {
                y_marginal
                    .iter()
                    .zip(conditionals)
                    .map(|(py, row)| py.mul(row.get(x).unwrap_or(&P::zero())))
                    .collect()
            })
            .collect();
        Self::new(x_alphabet, y_alphabet, pmf)
    }

    /// Source without side-information (`|Y| = 1`), labelled `1..=k`.
    pub fn without_side_information(probs: Vec<P>) -> Result<Self> {
        let x_alphabet = (1..=probs.len()).map(|i| i.to_string()).collect();
        let pmf = probs.into_iter().map(|p| vec![p]).collect();
        Self::new(x_alphabet, vec!["0".to_string()], pmf)
    }

    pub fn x_alphabet(&self) -> &[String] {
        &self.x_alphabet
    }

    pub fn y_alphabet(&self) -> &[String] {
        &self.y_alphabet
    }

    pub fn x_len(&self) -> usize {
        self.x_alphabet.len()
    }

    pub fn y_len(&self) -> usize {
        self.y_alphabet.len()
    }

    pub fn joint(&self, x: usize, y: usize) -> &P {
        &self.pmf[x][y]
    }

    pub fn pmf(&self) -> &[Vec<P>] {
        &self.pmf
    }

    pub fn y_marginal(&self) -> &[P] {
        &self.y_marginal
    }

    pub fn conditional(&self, x: usize, y: usize) -> P {
        self.pmf[x][y].div(&self.y_marginal[y])
    }

    pub fn x_index(&self, label: &str) -> Option<usize> {
        self.x_alphabet.iter().position(|s| s == label)
    }

    pub fn y_index(&self, label: &str) -> Option<usize> {
        self.y_alphabet.iter().position(|s| s == label)
    }

    /// Number of `(x, y)` pairs with positive joint mass.
    pub fn support_size(&self) -> usize {
        self.pmf.iter().flatten().filter(|m| !m.is_zero()).count()
    }

    /// Conditional information density `-log2 P(x|y)` in bits.
    pub fn info_density(&self, x: usize, y: usize) -> Result<f64> {
        if x >= self.x_len() || y >= self.y_len() {
            return Err(Error::domain(format!("symbol index ({x}, {y}) out of range")));
        }
        let p = self.conditional(x, y);
        if p.is_zero() {
            return Err(Error::domain(format!(
                "P(x={}|y={}) = 0 has no finite information density",
                self.x_alphabet[x], self.y_alphabet[y]
            )));
        }
        Ok(-p.log2())
    }

    /// One row per side-information symbol; stable sort so ties keep ascending
    /// original symbol index.
    pub fn sorted_rows(&self) -> Vec<ConditionalRow<P>> {
        (0..self.y_len())
            .map(|y| {
                let mut support: Vec<(usize, P)> = (0..self.x_len())
                    .filter(|&x| !self.pmf[x][y].is_zero())
                    .map(|x| (x, self.conditional(x, y)))
                    .collect();
                support.sort_by(|a, b| b.1.cmp_mass(&a.1));
                let (perm, probs_sorted) = support.into_iter().unzip();
                ConditionalRow { y, probs_sorted, perm }
            })
            .collect()
    }

    pub fn measures(&self) -> MeasureSet {
        let mut per_y = Vec::with_capacity(self.y_len());
        for y in 0..self.y_len() {
            let probs: Vec<f64> = (0..self.x_len())
                .map(|x| self.conditional(x, y))
                .filter(|p| !p.is_zero())
                .map(|p| p.to_f64())
                .collect();
            let dens: Vec<f64> = (0..self.x_len())
                .map(|x| self.conditional(x, y))
                .filter(|p| !p.is_zero())
                // `0.0 -` keeps a certain outcome at +0 rather than -0
                .map(|p| 0.0 - p.log2())
                .collect();
            let entropy: f64 = probs.iter().zip(&dens).map(|(p, d)| p * d).sum();
            let variance = probs.iter().zip(&dens).map(|(p, d)| p * (d - entropy).powi(2)).sum();
            let third_moment = probs
                .iter()
                .zip(&dens)
                .map(|(p, d)| p * (d - entropy).abs().powi(3))
                .sum();
            per_y.push(ConditionalMeasures {
                y: self.y_alphabet[y].clone(),
                prob: self.y_marginal[y].to_f64(),
                entropy,
                variance,
                third_moment,
            });
        }
        let h: f64 = per_y.iter().map(|m| m.prob * m.entropy).sum();
        let v_c = per_y.iter().map(|m| m.prob * m.variance).sum();
        let mut v_u = 0.0;
        let mut t_u = 0.0;
        for (x, row) in self.pmf.iter().enumerate() {
            for (y, joint) in row.iter().enumerate() {
                if joint.is_zero() {
                    continue;
                }
                let dev = -self.conditional(x, y).log2() - h;
                let w = joint.to_f64();
                v_u += w * dev * dev;
                t_u += w * dev.abs().powi(3);
            }
        }
        MeasureSet { h, v_c, v_u, t_u, per_y }
    }

    pub fn to_float(&self) -> JointSource<f64> {
        JointSource {
            x_alphabet: self.x_alphabet.clone(),
            y_alphabet: self.y_alphabet.clone(),
            pmf: self.pmf.iter().map(|r| r.iter().map(Mass::to_f64).collect()).collect(),
            y_marginal: self.y_marginal.iter().map(Mass::to_f64).collect(),
        }
    }

    pub fn to_document(&self) -> SourceDocument {
        SourceDocument {
            mode: if P::EXACT { Mode::Rational } else { Mode::Float },
            x_alphabet: self.x_alphabet.clone(),
            y_alphabet: self.y_alphabet.clone(),
            pmf: self.pmf.iter().map(|r| r.iter().map(Mass::to_json).collect()).collect(),
        }
    }
}

fn check_unique(labels: &[String], path: &str) -> Result<()> {
    for (i, a) in labels.iter().enumerate() {
        if labels[..i].contains(a) {
            return Err(Error::validation(format!("{path}[{i}]"), format!("duplicate symbol {a:?}")));
        }
    }
    Ok(())
}

/// Wire form of a source.
///
/// `{"mode": "rational"|"float", "x_alphabet": [...], "y_alphabet": [...],
/// "pmf": [[...]]}` with `pmf[i][j] = P(X = x_i, Y = y_j)`; rational entries
/// are `"p/q"` strings, float entries are numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDocument {
    pub mode: Mode,
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    pub pmf: Vec<Vec<serde_json::Value>>,
}

/// A loaded source in whichever mode its document declared.
#[derive(Debug, Clone, PartialEq)]
pub enum AnySource {
    Rational(JointSource<Rational>),
    Float(JointSource<f64>),
}

impl AnySource {
    pub fn mode(&self) -> Mode {
        match self {
            AnySource::Rational(_) => Mode::Rational,
            AnySource::Float(_) => Mode::Float,
        }
    }

    pub fn to_document(&self) -> SourceDocument {
        match self {
            AnySource::Rational(s) => s.to_document(),
            AnySource::Float(s) => s.to_document(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("source documents always serialize")
    }
}

impl From<JointSource<Rational>> for AnySource {
    fn from(s: JointSource<Rational>) -> Self {
        AnySource::Rational(s)
    }
}

impl From<JointSource<f64>> for AnySource {
    fn from(s: JointSource<f64>) -> Self {
        AnySource::Float(s)
    }
}

/// Parse and validate a JSON source document.
pub fn load_source(text: &str) -> Result<AnySource> {
    let doc: SourceDocument = serde_json::from_str(text)?;
    source_from_document(&doc)
}

pub fn source_from_document(doc: &SourceDocument) -> Result<AnySource> {
    match doc.mode {
        Mode::Rational => {
            let pmf = parse_table(&doc.pmf, |path, v| match v {
                serde_json::Value::String(s) => parse_rational(s).map_err(|e| match e {
                    Error::Validation { message, .. } => Error::validation(path, message),
                    other => other,
                }),
                _ => Err(Error::validation(path, "rational mode expects \"p/q\" strings")),
            })?;
            JointSource::new(doc.x_alphabet.clone(), doc.y_alphabet.clone(), pmf).map(AnySource::Rational)
        }
        Mode::Float => {
            let pmf = parse_table(&doc.pmf, |path, v| {
                v.as_f64().ok_or_else(|| Error::validation(path, "float mode expects numbers"))
            })?;
            JointSource::new(doc.x_alphabet.clone(), doc.y_alphabet.clone(), pmf).map(AnySource::Float)
        }
    }
}

fn parse_table<P>(
    rows: &[Vec<serde_json::Value>],
    parse: impl Fn(String, &serde_json::Value) -> Result<P>,
) -> Result<Vec<Vec<P>>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| parse(format!("pmf[{i}][{j}]"), v))
                .collect()
        })
        .collect()
}
