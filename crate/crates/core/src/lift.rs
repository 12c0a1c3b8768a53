//! Exact n-letter laws of an i.i.d. source through method-of-types enumeration.
//!
//! The conditional law of `X^n` given `Y^n = y^n` depends on `y^n` only
//! through its type (the count of each side-information symbol), so all
//! n-letter quantities are sums over side-information types of per-type
//! computations on conditional type classes.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::cutoff::ValueSpectrum;
use crate::error::{Error, Result};
use crate::mass::Mass;
use crate::source::JointSource;

/// Default ceiling on the number of joint type classes.
pub const DEFAULT_MAX_TYPES: u64 = 100_000_000;

/// Environment variable that overrides [`DEFAULT_MAX_TYPES`].
pub const MAX_TYPES_ENV: &str = "VLDSRC_MAX_TYPES";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_types: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_types: DEFAULT_MAX_TYPES,
        }
    }
}

impl Budget {
    pub fn new(max_types: u64) -> Self {
        Budget { max_types }
    }

    /// Budget from [`MAX_TYPES_ENV`], falling back to the default.
    pub fn from_env() -> Self {
        std::env::var(MAX_TYPES_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map_or_else(Budget::default, Budget::new)
    }
}

/// Number of compositions of `n` into `m` nonnegative parts, `C(n+m-1, m-1)`.
pub fn composition_count(n: u32, m: usize) -> u128 {
    if m == 0 {
        return u128::from(n == 0);
    }
    let k = (m - 1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n + i) / i stays integral at every step
        acc = match acc.checked_mul(u128::from(n) + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic stream of compositions of `total` into `parts` parts.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Option<Vec<u32>>,
}

impl Compositions {
    pub fn new(total: u32, parts: usize) -> Self {
        let current = match parts {
            0 if total == 0 => Some(Vec::new()),
            0 => None,
            _ => {
                let mut v = vec![0; parts];
                v[parts - 1] = total;
                Some(v)
            }
        };
        Compositions { current }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.take()?;
        let m = out.len();
        if m >= 2 {
            // rightmost non-last position that can be incremented
            let mut next = out.clone();
            let last = next[m - 1];
            if last > 0 {
                next[m - 2] += 1;
                next[m - 1] = last - 1;
                self.current = Some(next);
            } else if let Some(i) = (0..m - 1).rev().find(|&i| next[i] > 0 && i > 0) {
                // carry: move everything after i-1 back to the last slot
                let moved: u32 = next[i..].iter().sum();
                for v in &mut next[i..] {
                    *v = 0;
                }
                next[i - 1] += 1;
                next[m - 1] = moved - 1;
                self.current = Some(next);
            }
        }
        Some(out)
    }
}

pub(crate) fn factorials(n: u32) -> Vec<BigUint> {
    let mut f = Vec::with_capacity(n as usize + 1);
    f.push(BigUint::one());
    for i in 1..=n {
        let next = &f[i as usize - 1] * BigUint::from(i);
        f.push(next);
    }
    f
}

pub(crate) fn multinomial(fact: &[BigUint], counts: &[u32]) -> BigUint {
    let total: u32 = counts.iter().sum();
    let den = counts.iter().fold(BigUint::one(), |acc, &c| acc * &fact[c as usize]);
    &fact[total as usize] / den
}

/// A joint type class: all `(x^n, y^n)` pairs with the same symbol-pair counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeClass<P: Mass> {
    /// `counts[x][y]`.
    pub counts: Vec<Vec<u32>>,
    /// Number of sequence pairs in the class, `n! / Π counts!`.
    pub weight: BigUint,
    /// Probability of one sequence pair, `Π P(x, y)^count`.
    pub likelihood: P,
}

/// A side-information type: `counts[y]` occurrences of each symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct YType<P: Mass> {
    pub counts: Vec<u32>,
    /// Number of side-information sequences with this type.
    pub sequences: BigUint,
    /// Probability of one such sequence.
    pub sequence_prob: P,
}

impl<P: Mass> YType<P> {
    /// Total probability of the type, `sequences · sequence_prob`.
    pub fn mass(&self) -> P {
        P::from_biguint(&self.sequences).mul(&self.sequence_prob)
    }
}

/// Equal-likelihood block of `x^n` sequences for one side-information type.
#[derive(Debug, Clone, PartialEq)]
pub struct RankClass<P: Mass> {
    /// Numerator of the conditional probability `P(x^n | y^n)` of each member
    /// sequence over [`RankSpectrum::unit`].
    pub key: P::Scaled,
    pub count: BigUint,
    /// First (1-based) rank occupied by the class.
    pub start: BigUint,
}

impl<P: Mass> RankClass<P> {
    /// One past the last rank of the class.
    pub fn end(&self) -> BigUint {
        &self.start + &self.count
    }
}

/// Rank variable `ς⁻¹(X^n)` given a side-information type: classes in
/// strictly decreasing likelihood order occupying consecutive rank intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSpectrum<P: Mass> {
    pub classes: Vec<RankClass<P>>,
    /// Shared unit of the class likelihoods.
    pub unit: P,
}

impl<P: Mass> RankSpectrum<P> {
    fn from_unsorted(mut pairs: Vec<(P::Scaled, BigUint)>, unit: P) -> Self {
        pairs.sort_by(|a, b| P::scaled_cmp(&b.0, &a.0));
        let mut classes: Vec<RankClass<P>> = Vec::with_capacity(pairs.len());
        let mut next_start = BigUint::one();
        for (key, count) in pairs {
            match classes.last_mut() {
                Some(last) if P::scaled_same(&last.key, &key) => {
                    last.count += &count;
                }
                _ => {
                    if let Some(last) = classes.last() {
                        next_start = last.end();
                    }
                    classes.push(RankClass {
                        key,
                        count,
                        start: next_start.clone(),
                    });
                }
            }
        }
        RankSpectrum { classes, unit }
    }

    /// Conditional probability of each member sequence of a class.
    pub fn likelihood_of(&self, class: &RankClass<P>) -> P {
        P::unscale(&class.key, &self.unit)
    }

    /// `Σ likelihood · count` over classes, as a numerator.
    fn scaled_mass<'c>(classes: impl Iterator<Item = (&'c RankClass<P>, BigUint)>) -> P::Scaled {
        classes.fold(P::scaled_zero(), |acc, (c, k)| P::scaled_add(&acc, &P::scaled_mul_count(&c.key, &k)))
    }

    /// Mass of `count` sequences of `class`.
    pub fn mass_of(&self, class: &RankClass<P>, count: &BigUint) -> P {
        P::unscale(&P::scaled_mul_count(&class.key, count), &self.unit)
    }

    /// `Σ_k likelihood_k · count_k` over `(class, count)` pairs of this spectrum.
    pub fn mass_of_runs<'c>(&self, runs: impl Iterator<Item = (&'c RankClass<P>, BigUint)>) -> P {
        P::unscale(&Self::scaled_mass(runs), &self.unit)
    }

    /// Total number of sequences with positive conditional mass.
    pub fn support(&self) -> BigUint {
        self.classes.last().map_or_else(BigUint::zero, |c| c.end() - BigUint::one())
    }

    /// `Σ likelihood · count`, equal to one.
    pub fn total_mass(&self) -> P {
        self.mass_of_runs(self.classes.iter().map(|c| (c, c.count.clone())))
    }

    /// Conditional law of `⌊log2 rank⌋`, indexed by the floor-log value.
    ///
    /// A class occupying ranks `[s, s + c)` contributes `likelihood ·
    /// |[s, s + c) ∩ [2^j, 2^{j+1})|` to value `j`.
    pub fn floor_log_masses(&self) -> Vec<P> {
        let mut out: Vec<P::Scaled> = Vec::new();
        for class in &self.classes {
            for (j, overlap) in split_at_powers_of_two(&class.start, &class.count) {
                if out.len() <= j {
                    out.resize(j + 1, P::scaled_zero());
                }
                out[j] = P::scaled_add(&out[j], &P::scaled_mul_count(&class.key, &overlap));
            }
        }
        out.iter().map(|m| P::unscale(m, &self.unit)).collect()
    }

    pub fn floor_log_spectrum(&self) -> ValueSpectrum<P> {
        spectrum_from_indexed(self.floor_log_masses())
    }

    /// Conditional law of the information density `-log2 P(X^n | y^n)`.
    pub fn iota_spectrum(&self) -> ValueSpectrum<P> {
        ValueSpectrum::from_likelihoods(
            self.classes
                .iter()
                .map(|c| (self.likelihood_of(c), self.mass_of(c, &c.count)))
                .collect::<Vec<_>>(),
        )
        .expect("rank classes carry unit mass")
    }

    /// `(-log2 likelihood, mass)` of every class in `f64`, with masses scaled
    /// by `2^log2_weight`; stays finite where the likelihoods underflow.
    pub fn log_domain_classes(&self, log2_weight: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let log_unit = self.unit.log2();
        self.classes.iter().map(move |c| {
            let log_l = P::scaled_log2(&c.key) + log_unit;
            ((-log_l).max(0.0), (log2_weight + log_l + crate::mass::log2_biguint(&c.count)).exp2())
        })
    }

    /// Index of the class containing a 1-based rank.
    pub fn class_of_rank(&self, rank: &BigUint) -> Option<usize> {
        let idx = self.classes.partition_point(|c| &c.end() <= rank);
        (idx < self.classes.len() && &self.classes[idx].start <= rank).then_some(idx)
    }
}

/// Split `[start, start + count)` at powers of two: `(j, overlap)` pairs with
/// overlap lengths summing to `count`.
pub fn split_at_powers_of_two(start: &BigUint, count: &BigUint) -> Vec<(usize, BigUint)> {
    let mut out = Vec::new();
    if count.is_zero() {
        return out;
    }
    let end = start + count;
    let last = &end - BigUint::one();
    let j_lo = start.bits() as usize - 1;
    let j_hi = last.bits() as usize - 1;
    for j in j_lo..=j_hi {
        let lo_edge = BigUint::one() << j;
        let hi_edge = BigUint::one() << (j + 1);
        let lo = if *start > lo_edge { start.clone() } else { lo_edge };
        let hi = if end < hi_edge { end.clone() } else { hi_edge };
        out.push((j, hi - lo));
    }
    out
}

pub(crate) fn spectrum_from_indexed<P: Mass>(masses: Vec<P>) -> ValueSpectrum<P> {
    ValueSpectrum::from_pairs(masses.into_iter().enumerate().map(|(j, m)| (j as f64, m)).collect::<Vec<_>>())
        .expect("floor-log masses carry unit mass")
}

/// Conditional type classes of one side-information type, with the member
/// conditional types kept for sequence ranking.
#[derive(Debug, Clone)]
pub struct RankTable<P: Mass> {
    pub spectrum: RankSpectrum<P>,
    /// `members[k]` lists the conditional types merged into class `k`; each is
    /// flattened over `(y, support position)`.
    pub members: Vec<Vec<Vec<u32>>>,
}

/// n-fold i.i.d. product of a source.
#[derive(Debug, Clone)]
pub struct ProductLift<'a, P: Mass> {
    src: &'a JointSource<P>,
    n: u32,
    /// Per side-information symbol: `x` indices with positive conditional mass, ascending.
    supports: Vec<Vec<usize>>,
    /// Conditional probabilities aligned with `supports`.
    cond: Vec<Vec<P>>,
    /// `key_pow[y][i][k]`: numerator of `cond[y][i]^k` over `unit_pow[y][k]`.
    key_pow: Vec<Vec<Vec<P::Scaled>>>,
    unit_pow: Vec<Vec<P>>,
    y_pow: Vec<Vec<P>>,
    fact: Vec<BigUint>,
}

impl<'a, P: Mass> ProductLift<'a, P> {
    pub fn new(src: &'a JointSource<P>, n: u32, budget: Budget) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("blocklength n must be at least 1"));
        }
        let required = composition_count(n, src.support_size());
        if required > u128::from(budget.max_types) {
            return Err(Error::BudgetExceeded {
                required,
                budget: budget.max_types,
            });
        }
        let supports: Vec<Vec<usize>> = (0..src.y_len())
            .map(|y| (0..src.x_len()).filter(|&x| !src.joint(x, y).is_zero()).collect())
            .collect();
        let cond: Vec<Vec<P>> = supports
            .iter()
            .enumerate()
            .map(|(y, xs)| xs.iter().map(|&x| src.conditional(x, y)).collect())
            .collect();
        let powers = |p: &P| {
            let mut v = Vec::with_capacity(n as usize + 1);
            v.push(P::one());
            for k in 1..=n as usize {
                let next = v[k - 1].mul(p);
                v.push(next);
            }
            v
        };
        let mut key_pow = Vec::with_capacity(cond.len());
        let mut unit_pow = Vec::with_capacity(cond.len());
        for row in &cond {
            let (keys, unit) = P::scale_row(row);
            key_pow.push(
                keys.iter()
                    .map(|k| {
                        let mut v = Vec::with_capacity(n as usize + 1);
                        v.push(P::scaled_one());
                        for j in 1..=n as usize {
                            let next = P::scaled_mul(&v[j - 1], k);
                            v.push(next);
                        }
                        v
                    })
                    .collect(),
            );
            unit_pow.push(powers(&unit));
        }
        let y_pow = src.y_marginal().iter().map(powers).collect();
        Ok(ProductLift {
            src,
            n,
            supports,
            cond,
            key_pow,
            unit_pow,
            y_pow,
            fact: factorials(n),
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn source(&self) -> &JointSource<P> {
        self.src
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn conditional_probs(&self) -> &[Vec<P>] {
        &self.cond
    }

    pub fn factorials(&self) -> &[BigUint] {
        &self.fact
    }

    /// Number of joint type classes, `C(n + m - 1, m - 1)` for support size `m`.
    pub fn joint_type_count(&self) -> u128 {
        composition_count(self.n, self.src.support_size())
    }

    /// Every side-information type, in lexicographic order of counts.
    pub fn y_types(&self) -> Vec<YType<P>> {
        Compositions::new(self.n, self.src.y_len())
            .map(|counts| self.y_type(counts))
            .collect()
    }

    pub fn y_type(&self, counts: Vec<u32>) -> YType<P> {
        let sequence_prob = counts
            .iter()
            .enumerate()
            .fold(P::one(), |acc, (y, &k)| acc.mul(&self.y_pow[y][k as usize]));
        YType {
            sequences: multinomial(&self.fact, &counts),
            sequence_prob,
            counts,
        }
    }

    /// Type of a concrete side-information sequence (symbol indices).
    pub fn y_type_of(&self, y_seq: &[usize]) -> Result<YType<P>> {
        if y_seq.len() != self.n as usize {
            return Err(Error::domain(format!("expected {} side-information symbols", self.n)));
        }
        let mut counts = vec![0u32; self.src.y_len()];
        for &y in y_seq {
            *counts
                .get_mut(y)
                .ok_or_else(|| Error::domain(format!("side-information index {y} out of range")))? += 1;
        }
        Ok(self.y_type(counts))
    }

    /// Per side-information symbol, the merged list of `(likelihood, count,
    /// member compositions)` for `k` occurrences.
    fn row_classes(&self, y: usize, k: u32) -> Vec<(P::Scaled, BigUint, Vec<Vec<u32>>)> {
        let s = self.supports[y].len();
        let mut items: Vec<(P::Scaled, BigUint, Vec<u32>)> = Compositions::new(k, s)
            .map(|comp| {
                let key = comp
                    .iter()
                    .enumerate()
                    .fold(P::scaled_one(), |acc, (i, &c)| P::scaled_mul(&acc, &self.key_pow[y][i][c as usize]));
                (key, multinomial(&self.fact, &comp), comp)
            })
            .collect();
        items.sort_by(|a, b| P::scaled_cmp(&b.0, &a.0));
        let mut merged: Vec<(P::Scaled, BigUint, Vec<Vec<u32>>)> = Vec::new();
        for (l, c, comp) in items {
            match merged.last_mut() {
                Some(last) if P::scaled_same(&last.0, &l) => {
                    last.1 += c;
                    last.2.push(comp);
                }
                _ => merged.push((l, c, vec![comp])),
            }
        }
        merged
    }

    /// Shared unit of the conditional likelihoods given a side-information type.
    fn type_unit(&self, counts: &[u32]) -> P {
        counts
            .iter()
            .enumerate()
            .fold(P::one(), |acc, (y, &k)| acc.mul(&self.unit_pow[y][k as usize]))
    }

    fn combine(&self, yt: &YType<P>, keep_members: bool) -> (Vec<(P::Scaled, BigUint)>, Vec<Vec<Vec<u32>>>) {
        let mut acc: Vec<(P::Scaled, BigUint, Vec<Vec<u32>>)> =
            vec![(P::scaled_one(), BigUint::one(), vec![Vec::new()])];
        for (y, &k) in yt.counts.iter().enumerate() {
            let row = self.row_classes(y, k);
            let mut next = Vec::with_capacity(acc.len() * row.len());
            for (l, c, members) in &acc {
                for (lr, cr, mr) in &row {
                    let joined = if keep_members {
                        members
                            .iter()
                            .flat_map(|m| {
                                mr.iter().map(move |r| {
                                    let mut v = m.clone();
                                    v.extend_from_slice(r);
                                    v
                                })
                            })
                            .collect()
                    } else {
                        Vec::new()
                    };
                    next.push((P::scaled_mul(l, lr), c * cr, joined));
                }
            }
            acc = next;
        }
        let mut pairs = Vec::with_capacity(acc.len());
        let mut members = Vec::with_capacity(acc.len());
        for (l, c, m) in acc {
            pairs.push((l, c));
            members.push(m);
        }
        (pairs, members)
    }

    /// Rank variable given a side-information type.
    pub fn rank_spectrum(&self, yt: &YType<P>) -> RankSpectrum<P> {
        RankSpectrum::from_unsorted(self.combine(yt, false).0, self.type_unit(&yt.counts))
    }

    /// Rank classes with member conditional types, for sequence (un)ranking.
    pub fn rank_table(&self, yt: &YType<P>) -> RankTable<P> {
        let (pairs, members) = self.combine(yt, true);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by(|&a, &b| P::scaled_cmp(&pairs[b].0, &pairs[a].0));
        let mut grouped: Vec<(P::Scaled, BigUint)> = Vec::new();
        let mut grouped_members: Vec<Vec<Vec<u32>>> = Vec::new();
        for i in order {
            let (l, c) = &pairs[i];
            match grouped.last_mut() {
                Some(last) if P::scaled_same(&last.0, l) => {
                    last.1 += c;
                    grouped_members.last_mut().expect("aligned").extend(members[i].iter().cloned());
                }
                _ => {
                    grouped.push((l.clone(), c.clone()));
                    grouped_members.push(members[i].clone());
                }
            }
        }
        let spectrum = RankSpectrum::from_unsorted(grouped, self.type_unit(&yt.counts));
        RankTable {
            spectrum,
            members: grouped_members,
        }
    }

    /// Stream of every joint type class, generated lazily.
    pub fn joint_types(&self) -> impl Iterator<Item = TypeClass<P>> + '_ {
        let support: Vec<(usize, usize)> = (0..self.src.x_len())
            .flat_map(|x| (0..self.src.y_len()).map(move |y| (x, y)))
            .filter(|&(x, y)| !self.src.joint(x, y).is_zero())
            .collect();
        Compositions::new(self.n, support.len()).map(move |comp| {
            let mut counts = vec![vec![0u32; self.src.y_len()]; self.src.x_len()];
            let mut likelihood = P::one();
            for (&(x, y), &c) in support.iter().zip(&comp) {
                counts[x][y] = c;
                likelihood = likelihood.mul(&self.src.joint(x, y).pow(c));
            }
            TypeClass {
                weight: multinomial(&self.fact, &comp),
                likelihood,
                counts,
            }
        })
    }

    /// Conditional rank spectra for every side-information type, in the order
    /// of [`ProductLift::y_types`]. Types are processed in parallel; the result
    /// does not depend on the worker count.
    pub fn conditional_rank_spectra(&self) -> Vec<(YType<P>, RankSpectrum<P>)> {
        self.y_types()
            .into_par_iter()
            .map(|yt| {
                let rs = self.rank_spectrum(&yt);
                (yt, rs)
            })
            .collect()
    }

    /// Flattened conditional type of `(x^n, y^n)`, aligned with [`RankTable::members`].
    pub fn conditional_type_of(&self, x_seq: &[usize], y_seq: &[usize]) -> Result<Vec<u32>> {
        let offsets = self.offsets();
        let mut t = vec![0u32; *offsets.last().expect("offsets end with the total")];
        if x_seq.len() != y_seq.len() || x_seq.len() != self.n as usize {
            return Err(Error::domain(format!("expected sequences of length {}", self.n)));
        }
        for (&x, &y) in x_seq.iter().zip(y_seq) {
            let pos = self
                .supports
                .get(y)
                .and_then(|s| s.binary_search(&x).ok())
                .ok_or_else(|| Error::domain(format!("pair (x={x}, y={y}) has zero probability")))?;
            t[offsets[y] + pos] += 1;
        }
        Ok(t)
    }

    pub(crate) fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.supports.len() + 1);
        o.push(0);
        for s in &self.supports {
            o.push(o.last().unwrap() + s.len());
        }
        o
    }

    /// Conditional likelihood of a flattened conditional type.
    pub fn type_likelihood(&self, t: &[u32]) -> P {
        let offsets = self.offsets();
        let counts: Vec<u32> = (0..self.supports.len())
            .map(|y| t[offsets[y]..offsets[y + 1]].iter().sum())
            .collect();
        P::unscale(&self.type_key(t), &self.type_unit(&counts))
    }

    /// Numerator of [`ProductLift::type_likelihood`] over the unit of its
    /// side-information type.
    fn type_key(&self, t: &[u32]) -> P::Scaled {
        let offsets = self.offsets();
        let mut l = P::scaled_one();
        for y in 0..self.supports.len() {
            for i in 0..self.supports[y].len() {
                l = P::scaled_mul(&l, &self.key_pow[y][i][t[offsets[y] + i] as usize]);
            }
        }
        l
    }

    /// Number of completions of the positions `from..` of `y_seq` whose
    /// symbol counts bring `used` exactly to `target`.
    fn completions(&self, y_seq: &[usize], from: usize, used: &[u32], target: &[u32], offsets: &[usize]) -> BigUint {
        let mut remaining_per_y = vec![0u32; self.supports.len()];
        for &y in &y_seq[from..] {
            remaining_per_y[y] += 1;
        }
        let mut total = BigUint::one();
        for (y, &slots) in remaining_per_y.iter().enumerate() {
            let range = offsets[y]..offsets[y + 1];
            let mut need = Vec::with_capacity(range.len());
            for i in range {
                match target[i].checked_sub(used[i]) {
                    Some(r) => need.push(r),
                    None => return BigUint::zero(),
                }
            }
            if need.iter().sum::<u32>() != slots {
                return BigUint::zero();
            }
            total *= multinomial(&self.fact, &need);
        }
        total
    }

    /// 1-based rank of `x^n` given `y^n`: decreasing conditional likelihood,
    /// ties broken by lexicographic order of symbol indices.
    pub fn rank_of(&self, table: &RankTable<P>, x_seq: &[usize], y_seq: &[usize]) -> Result<BigUint> {
        let t = self.conditional_type_of(x_seq, y_seq)?;
        let l = self.type_key(&t);
        let k = table
            .spectrum
            .classes
            .binary_search_by(|c| {
                if P::scaled_same(&c.key, &l) {
                    Ordering::Equal
                } else {
                    P::scaled_cmp(&l, &c.key)
                }
            })
            .map_err(|_| Error::Invariant("sequence likelihood missing from rank table".into()))?;
        let offsets = self.offsets();
        let mut used = vec![0u32; t.len()];
        let mut before = BigUint::zero();
        for (i, (&x, &y)) in x_seq.iter().zip(y_seq).enumerate() {
            let pos_x = self.supports[y].binary_search(&x).expect("checked by conditional_type_of");
            for a in 0..pos_x {
                used[offsets[y] + a] += 1;
                for m in &table.members[k] {
                    before += self.completions(y_seq, i + 1, &used, m, &offsets);
                }
                used[offsets[y] + a] -= 1;
            }
            used[offsets[y] + pos_x] += 1;
        }
        Ok(&table.spectrum.classes[k].start + before)
    }

    /// Inverse of [`ProductLift::rank_of`].
    pub fn unrank(&self, table: &RankTable<P>, rank: &BigUint, y_seq: &[usize]) -> Result<Vec<usize>> {
        if y_seq.len() != self.n as usize {
            return Err(Error::domain(format!("expected {} side-information symbols", self.n)));
        }
        let k = table
            .spectrum
            .class_of_rank(rank)
            .ok_or_else(|| Error::domain(format!("rank {rank} outside the conditional support")))?;
        let mut offset = rank - &table.spectrum.classes[k].start;
        let offsets = self.offsets();
        let mut used = vec![0u32; offsets[self.supports.len()]];
        let mut out = Vec::with_capacity(y_seq.len());
        for (i, &y) in y_seq.iter().enumerate() {
            let mut chosen = None;
            for a in 0..self.supports[y].len() {
                used[offsets[y] + a] += 1;
                let c: BigUint = table.members[k]
                    .iter()
                    .map(|m| self.completions(y_seq, i + 1, &used, m, &offsets))
                    .sum();
                if offset < c {
                    chosen = Some(a);
                    break;
                }
                offset -= c;
                used[offsets[y] + a] -= 1;
            }
            let a = chosen.ok_or_else(|| Error::Invariant("unranking ran past the class".into()))?;
            out.push(self.supports[y][a]);
        }
        Ok(out)
    }
}

/// Every joint type class of the n-fold product.
pub fn enumerate_joint_types<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    budget: Budget,
) -> Result<Vec<TypeClass<P>>> {
    let lift = ProductLift::new(src, n, budget)?;
    Ok(lift.joint_types().collect())
}

/// Exact law of `ι(X^n | Y^n)`, either pooled over side-information types or
/// conditional on one type.
pub fn iota_spectrum_n<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    conditioning: Option<&[u32]>,
    budget: Budget,
) -> Result<ValueSpectrum<P>> {
    let lift = ProductLift::new(src, n, budget)?;
    match conditioning {
        Some(counts) => {
            let yt = checked_y_type(&lift, counts)?;
            Ok(lift.rank_spectrum(&yt).iota_spectrum())
        }
        None => {
            let parts: Vec<(P, RankSpectrum<P>)> = lift
                .conditional_rank_spectra()
                .into_iter()
                .map(|(yt, rs)| (yt.mass(), rs))
                .collect();
            let pairs: Vec<(P, P)> = parts
                .iter()
                .flat_map(|(w, rs)| rs.classes.iter().map(move |c| (rs.likelihood_of(c), w.mul(&rs.mass_of(c, &c.count)))))
                .collect();
            ValueSpectrum::from_likelihoods(pairs)
        }
    }
}

/// Conditional law of `⌊log2 ς⁻¹(X^n)⌋` given a side-information type.
pub fn floor_log_rank_spectrum<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    y_counts: &[u32],
    budget: Budget,
) -> Result<ValueSpectrum<P>> {
    let lift = ProductLift::new(src, n, budget)?;
    let yt = checked_y_type(&lift, y_counts)?;
    Ok(lift.rank_spectrum(&yt).floor_log_spectrum())
}

/// Law of `⌊log2 ς⁻¹(X^n)⌋` pooled over side-information.
pub fn pooled_floor_log_rank_spectrum<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    budget: Budget,
) -> Result<ValueSpectrum<P>> {
    let lift = ProductLift::new(src, n, budget)?;
    let mut pooled: Vec<P> = Vec::new();
    for (yt, rs) in lift.conditional_rank_spectra() {
        let w = yt.mass();
        for (j, m) in rs.floor_log_masses().into_iter().enumerate() {
            if pooled.len() <= j {
                pooled.resize(j + 1, P::zero());
            }
            pooled[j] = pooled[j].add(&w.mul(&m));
        }
    }
    Ok(spectrum_from_indexed(pooled))
}

fn checked_y_type<P: Mass>(lift: &ProductLift<'_, P>, counts: &[u32]) -> Result<YType<P>> {
    if counts.len() != lift.source().y_len() || counts.iter().sum::<u32>() != lift.n() {
        return Err(Error::domain(format!(
            "side-information type must have {} counts summing to {}",
            lift.source().y_len(),
            lift.n()
        )));
    }
    Ok(lift.y_type(counts.to_vec()))
}
