//! Optimal variable-length stochastic codes with side-information.
//!
//! `L*` is read off the floor-log rank spectrum: under the maximum error
//! criterion the ε-cutoff is applied separately for every side-information
//! type, under the average criterion once on the pooled spectrum. The codes
//! realizing these values send the rank-`k` sequence to the `k`-th binary
//! string `b_k` (`∅, 0, 1, 00, 01, ...`) for ranks up to a threshold `κ`,
//! randomize the boundary rank `κ + 1`, and send everything else to `∅`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutoff::{expected_cutoff, expected_cutoff_exact, is_one, ValueSpectrum};
use crate::error::{Error, Result};
use crate::lift::{spectrum_from_indexed, split_at_powers_of_two, Budget, ProductLift, RankSpectrum, RankTable, YType};
use crate::mass::{Mass, Rational};
use crate::source::JointSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Max,
    Avg,
}

impl Criterion {
    pub const ALL: [Criterion; 2] = [Criterion::Max, Criterion::Avg];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Max => "max",
            Criterion::Avg => "avg",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Criterion::Max),
            "avg" => Ok(Criterion::Avg),
            other => Err(Error::validation("criterion", format!("expected max or avg, got {other:?}"))),
        }
    }
}

/// The `i`-th binary string (1-based) in length-lexicographic order:
/// `b_1 = ∅, b_2 = 0, b_3 = 1, b_4 = 00, ...`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinaryString(BigUint);

impl BinaryString {
    pub fn empty() -> Self {
        BinaryString(BigUint::one())
    }

    /// Panics on index zero.
    pub fn from_index(index: BigUint) -> Self {
        assert!(!index.is_zero(), "binary string indices start at 1");
        BinaryString(index)
    }

    pub fn index(&self) -> &BigUint {
        &self.0
    }

    /// `ℓ(b_i) = ⌊log2 i⌋`.
    pub fn len(&self) -> u64 {
        self.0.bits() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_one()
    }

    /// Parse a string of `0`/`1` characters.
    pub fn parse_bits(bits: &str) -> Result<Self> {
        if !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::validation("codeword", format!("not a binary string: {bits:?}")));
        }
        let digits = format!("1{bits}");
        BigUint::parse_bytes(digits.as_bytes(), 2)
            .map(BinaryString)
            .ok_or_else(|| Error::validation("codeword", "unparseable binary string"))
    }
}

impl fmt::Display for BinaryString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0.to_str_radix(2);
        f.write_str(&s[1..])
    }
}

/// `Σ_{r ∈ [start, start + count)} ⌊log2 r⌋`.
pub fn floor_log_sum(start: &BigUint, count: &BigUint) -> BigUint {
    split_at_powers_of_two(start, count)
        .into_iter()
        .map(|(j, overlap)| overlap * BigUint::from(j))
        .sum()
}

/// n-letter spectra shared by every ε and criterion at one blocklength.
#[derive(Debug)]
pub struct BlockAnalysis<P: Mass> {
    n: u32,
    entropy: f64,
    parts: Vec<(YType<P>, RankSpectrum<P>)>,
    weights: Vec<P>,
    cond_floor: Vec<ValueSpectrum<P>>,
    pooled_floor: ValueSpectrum<P>,
    cond_iota: OnceLock<Vec<ValueSpectrum<f64>>>,
    pooled_iota: OnceLock<ValueSpectrum<f64>>,
}

/// One-shot sandwich around `L*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<P: Mass> {
    pub lower: f64,
    pub exact: P,
    pub upper: f64,
}

impl<P: Mass> Bounds<P> {
    pub fn holds(&self) -> bool {
        let e = self.exact.to_f64();
        let slack = 1e-9 * (1.0 + self.upper.abs());
        self.lower <= e + slack && e <= self.upper + slack
    }
}

impl<P: Mass> BlockAnalysis<P> {
    pub fn new(src: &JointSource<P>, n: u32, budget: Budget) -> Result<Self> {
        let lift = ProductLift::new(src, n, budget)?;
        let parts = lift.conditional_rank_spectra();
        let weights: Vec<P> = parts.iter().map(|(yt, _)| yt.mass()).collect();
        let cond_masses: Vec<Vec<P>> = parts.par_iter().map(|(_, rs)| rs.floor_log_masses()).collect();
        let mut pooled: Vec<P> = Vec::new();
        for (w, masses) in weights.iter().zip(&cond_masses) {
            for (j, m) in masses.iter().enumerate() {
                if pooled.len() <= j {
                    pooled.resize(j + 1, P::zero());
                }
                pooled[j] = pooled[j].add(&w.mul(m));
            }
        }
        let cond_floor = cond_masses.into_iter().map(spectrum_from_indexed).collect();
        Ok(BlockAnalysis {
            n,
            entropy: f64::from(n) * src.measures().h,
            parts,
            weights,
            cond_floor,
            pooled_floor: spectrum_from_indexed(pooled),
            cond_iota: OnceLock::new(),
            pooled_iota: OnceLock::new(),
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// `H(X^n | Y^n) = n H(X|Y)`.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn parts(&self) -> &[(YType<P>, RankSpectrum<P>)] {
        &self.parts
    }

    pub fn conditional_floor_log(&self) -> &[ValueSpectrum<P>] {
        &self.cond_floor
    }

    pub fn pooled_floor_log(&self) -> &ValueSpectrum<P> {
        &self.pooled_floor
    }

    /// Conditional information-density laws per side-information type, in
    /// `f64` (values and masses come from logarithms of the exact likelihoods).
    pub fn conditional_iota(&self) -> &[ValueSpectrum<f64>] {
        self.cond_iota.get_or_init(|| {
            self.parts
                .par_iter()
                .map(|(_, rs)| {
                    ValueSpectrum::from_pairs(rs.log_domain_classes(0.0).collect::<Vec<_>>())
                        .expect("rank classes carry mass")
                })
                .collect()
        })
    }

    /// Pooled information-density law, in `f64`.
    pub fn pooled_iota(&self) -> &ValueSpectrum<f64> {
        self.pooled_iota.get_or_init(|| {
            let pairs: Vec<(f64, f64)> = self
                .parts
                .iter()
                .zip(&self.weights)
                .flat_map(|((_, rs), w)| rs.log_domain_classes(w.log2()))
                .collect();
            ValueSpectrum::from_pairs(pairs).expect("pooled law carries mass")
        })
    }

    /// Exact optimal average codeword length.
    pub fn lstar(&self, eps: &P, criterion: Criterion) -> Result<P> {
        match criterion {
            Criterion::Avg => expected_cutoff_exact(&self.pooled_floor, eps),
            Criterion::Max => {
                let mut total = P::zero();
                for (w, spec) in self.weights.iter().zip(&self.cond_floor) {
                    total = total.add(&w.mul(&expected_cutoff_exact(spec, eps)?));
                }
                Ok(total)
            }
        }
    }

    /// ε-cutoff entropy matching the criterion: conditional for `max`,
    /// unconditional for `avg`.
    pub fn cutoff_entropy(&self, eps: &P, criterion: Criterion) -> Result<f64> {
        match criterion {
            Criterion::Avg => expected_cutoff(self.pooled_iota(), &eps.to_f64()),
            Criterion::Max => {
                let mut total = 0.0;
                for (w, spec) in self.weights.iter().zip(self.conditional_iota()) {
                    total += w.to_f64() * expected_cutoff(spec, &eps.to_f64())?;
                }
                Ok(total)
            }
        }
    }

    /// `lower = upper - log2(nH + 1) - log2 e`, `upper` = matching cutoff entropy.
    pub fn bounds(&self, eps: &P, criterion: Criterion) -> Result<Bounds<P>> {
        let upper = self.cutoff_entropy(eps, criterion)?;
        let lower = upper - (self.entropy + 1.0).log2() - std::f64::consts::LOG2_E;
        Ok(Bounds {
            lower,
            exact: self.lstar(eps, criterion)?,
            upper,
        })
    }
}

/// Optimal average codeword length `L*_criterion(n, eps)`.
pub fn lstar<P: Mass>(src: &JointSource<P>, n: u32, eps: &P, criterion: Criterion, budget: Budget) -> Result<P> {
    BlockAnalysis::new(src, n, budget)?.lstar(eps, criterion)
}

pub fn one_shot_bounds<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    eps: &P,
    criterion: Criterion,
    budget: Budget,
) -> Result<Bounds<P>> {
    BlockAnalysis::new(src, n, budget)?.bounds(eps, criterion)
}

/// Keep threshold for one side-information type.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold<P: Mass> {
    /// Ranks `1..=keep` are always encoded.
    pub keep: BigUint,
    /// Mass retained at rank `keep + 1`: conditional on the side-information
    /// type under `max`, pooled over side-information under `avg`.
    pub gamma: P,
    /// Probability that the boundary rank emits `b_{keep+1}` instead of `∅`.
    pub boundary_keep: P,
}

/// Optimal stochastic code for one blocklength, error level and criterion.
#[derive(Debug, Clone)]
pub struct CodePlan<P: Mass> {
    pub criterion: Criterion,
    pub eps: P,
    pub n: u32,
    pub y_types: Vec<YType<P>>,
    pub tables: Vec<RankTable<P>>,
    /// One threshold per side-information type; identical entries under `avg`.
    pub thresholds: Vec<Threshold<P>>,
}

/// Threshold of the top-mass keep rule over a nonincreasing per-rank mass
/// given as `(first rank, run length, mass per rank)` segments.
fn threshold_over_segments<P: Mass>(segments: impl Iterator<Item = (BigUint, BigUint, P)>, target: &P) -> Threshold<P> {
    let mut cum = P::zero();
    let mut last_end = BigUint::one();
    for (start, len, per_rank) in segments {
        if per_rank.is_zero() || len.is_zero() {
            continue;
        }
        let seg_mass = per_rank.mul(&P::from_biguint(&len));
        let after = cum.add(&seg_mass);
        if after.at_most(target) {
            cum = after;
            last_end = &start + &len;
            continue;
        }
        let room = target.sub(&cum);
        let mut k_in = room.floor_div(&per_rank);
        if k_in >= len {
            k_in = &len - BigUint::one();
        }
        let gamma = room.sub(&per_rank.mul(&P::from_biguint(&k_in))).clamp_unit();
        let gamma = if gamma.is_negative() { P::zero() } else { gamma };
        let boundary_keep = gamma.div(&per_rank).clamp_unit();
        return Threshold {
            keep: start - BigUint::one() + k_in,
            gamma,
            boundary_keep,
        };
    }
    Threshold {
        keep: last_end - BigUint::one(),
        gamma: P::zero(),
        boundary_keep: P::zero(),
    }
}

fn class_segments<P: Mass>(rs: &RankSpectrum<P>) -> impl Iterator<Item = (BigUint, BigUint, P)> + '_ {
    rs.classes.iter().map(|c| (c.start.clone(), c.count.clone(), rs.likelihood_of(c)))
}

/// Pooled per-rank mass `P{ς⁻¹(X^n) = r}` as constant runs.
fn pooled_segments<P: Mass>(weights: &[P], spectra: &[&RankSpectrum<P>]) -> Vec<(BigUint, BigUint, P)> {
    let mut events: BTreeMap<BigUint, (P, P)> = BTreeMap::new();
    for (w, rs) in weights.iter().zip(spectra) {
        for c in &rs.classes {
            let density = w.mul(&rs.likelihood_of(c));
            let e = events.entry(c.start.clone()).or_insert((P::zero(), P::zero()));
            e.0 = e.0.add(&density);
            let e = events.entry(c.end()).or_insert((P::zero(), P::zero()));
            e.1 = e.1.add(&density);
        }
    }
    let mut out = Vec::with_capacity(events.len());
    let mut density = P::zero();
    let mut prev: Option<BigUint> = None;
    for (pos, (add, sub)) in events {
        if let Some(p) = prev.take() {
            out.push((p.clone(), &pos - &p, density.clone()));
        }
        density = density.add(&add).sub(&sub);
        if !P::EXACT && density.to_f64() < 0.0 {
            density = P::zero();
        }
        prev = Some(pos);
    }
    out
}

/// Build the optimal code: per-type thresholds under `max`, one pooled
/// threshold under `avg`.
pub fn build_code<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    eps: &P,
    criterion: Criterion,
    budget: Budget,
) -> Result<CodePlan<P>> {
    if eps.is_negative() || is_one(eps) {
        return Err(Error::domain(format!(
            "code construction needs eps in [0, 1), got {}",
            eps.to_f64()
        )));
    }
    let lift = ProductLift::new(src, n, budget)?;
    let y_types = lift.y_types();
    let tables: Vec<RankTable<P>> = y_types.par_iter().map(|yt| lift.rank_table(yt)).collect();
    let target = P::one().sub(eps);
    let thresholds = match criterion {
        Criterion::Max => tables
            .iter()
            .map(|t| threshold_over_segments(class_segments(&t.spectrum), &target))
            .collect(),
        Criterion::Avg => {
            let weights: Vec<P> = y_types.iter().map(YType::mass).collect();
            let spectra: Vec<&RankSpectrum<P>> = tables.iter().map(|t| &t.spectrum).collect();
            let t = threshold_over_segments(pooled_segments(&weights, &spectra).into_iter(), &target);
            vec![t; tables.len()]
        }
    };
    Ok(CodePlan {
        criterion,
        eps: eps.clone(),
        n,
        y_types,
        tables,
        thresholds,
    })
}

/// Outcome of encoding one source block.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub rank: BigUint,
    pub codeword: BinaryString,
    pub decoded: Vec<usize>,
}

impl Transmission {
    pub fn is_error(&self) -> bool {
        self.codeword.index() != &self.rank
    }
}

impl<P: Mass> CodePlan<P> {
    fn type_index(&self, counts: &[u32]) -> Result<usize> {
        self.y_types
            .iter()
            .position(|yt| yt.counts == counts)
            .ok_or_else(|| Error::domain("side-information type not covered by the plan"))
    }

    /// Analytic `E[ℓ(F(X^n, Y^n))]`.
    pub fn expected_length(&self) -> P {
        let mut total = P::zero();
        for ((yt, table), th) in self.y_types.iter().zip(&self.tables).zip(&self.thresholds) {
            let rs = &table.spectrum;
            let boundary = &th.keep + BigUint::one();
            let mut cond = rs.mass_of_runs(rs.classes.iter().take_while(|c| c.start <= th.keep).map(|c| {
                let kept_end = if c.end() <= boundary { c.end() } else { boundary.clone() };
                (c, floor_log_sum(&c.start, &(&kept_end - &c.start)))
            }));
            if let Some(k) = rs.class_of_rank(&boundary) {
                let l = &rs.likelihood_of(&rs.classes[k]);
                let len = P::from_u64(boundary.bits() - 1);
                cond = cond.add(&l.mul(&th.boundary_keep).mul(&len));
            }
            total = total.add(&yt.mass().mul(&cond));
        }
        total
    }

    /// Analytic `P{X^n ≠ g(F(X^n, Y^n), Y^n) | type}` for every side-information
    /// type. A dropped block decodes to the rank-1 sequence, so dropping rank 1
    /// is not an error.
    pub fn conditional_errors(&self) -> Vec<P> {
        self.tables
            .iter()
            .zip(&self.thresholds)
            .map(|(table, th)| {
                let rs = &table.spectrum;
                let boundary = &th.keep + BigUint::one();
                let mut correct = rs.mass_of_runs(rs.classes.iter().take_while(|c| c.start <= th.keep).map(|c| {
                    let kept_end = if c.end() <= boundary { c.end() } else { boundary.clone() };
                    (c, &kept_end - &c.start)
                }));
                if let Some(k) = rs.class_of_rank(&boundary) {
                    let l = &rs.likelihood_of(&rs.classes[k]);
                    let keep = if boundary.is_one() { P::one() } else { th.boundary_keep.clone() };
                    correct = correct.add(&l.mul(&keep));
                }
                P::one().sub(&correct).clamp_unit()
            })
            .collect()
    }

    /// Analytic `P{X^n ≠ X̂^n}`.
    pub fn error_probability(&self) -> P {
        P::sum(
            self.y_types
                .iter()
                .zip(self.conditional_errors())
                .map(|(yt, e)| yt.mass().mul(&e))
                .collect::<Vec<_>>()
                .iter(),
        )
    }
}

/// Plan bound to its source, able to encode and decode concrete blocks.
#[derive(Debug)]
pub struct CodeRunner<'a, P: Mass> {
    plan: &'a CodePlan<P>,
    lift: ProductLift<'a, P>,
}

impl<'a, P: Mass> CodeRunner<'a, P> {
    pub fn new(plan: &'a CodePlan<P>, src: &'a JointSource<P>) -> Result<Self> {
        let lift = ProductLift::new(src, plan.n, Budget::new(u64::MAX))?;
        if lift.y_types().len() != plan.y_types.len() {
            return Err(Error::domain("plan was built for a different source"));
        }
        Ok(CodeRunner { plan, lift })
    }

    /// Rank of `x^n` given `y^n` and the probability that it is sent as `b_rank`.
    pub fn rank_and_keep(&self, x_seq: &[usize], y_seq: &[usize]) -> Result<(BigUint, f64)> {
        let yt = self.lift.y_type_of(y_seq)?;
        let k = self.plan.type_index(&yt.counts)?;
        let th = &self.plan.thresholds[k];
        let rank = self.lift.rank_of(&self.plan.tables[k], x_seq, y_seq)?;
        let keep = if rank <= th.keep {
            1.0
        } else if rank == &th.keep + BigUint::one() {
            th.boundary_keep.to_f64()
        } else {
            0.0
        };
        Ok((rank, keep))
    }

    /// Rank of `x^n` given `y^n` and the emitted codeword; `u ∈ [0, 1)`
    /// drives the boundary draw.
    pub fn encode(&self, x_seq: &[usize], y_seq: &[usize], u: f64) -> Result<(BigUint, BinaryString)> {
        let (rank, keep) = self.rank_and_keep(x_seq, y_seq)?;
        let index = if u < keep { rank.clone() } else { BigUint::one() };
        Ok((rank, BinaryString::from_index(index)))
    }

    /// Encoder followed by the deterministic rank-inverting decoder.
    pub fn encode_decode(&self, x_seq: &[usize], y_seq: &[usize], u: f64) -> Result<Transmission> {
        let (rank, codeword) = self.encode(x_seq, y_seq, u)?;
        let decoded = self.decode(&codeword, y_seq)?;
        Ok(Transmission { rank, codeword, decoded })
    }

    pub fn decode(&self, codeword: &BinaryString, y_seq: &[usize]) -> Result<Vec<usize>> {
        let yt = self.lift.y_type_of(y_seq)?;
        let k = self.plan.type_index(&yt.counts)?;
        self.lift.unrank(&self.plan.tables[k], codeword.index(), y_seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub seed: u64,
    pub mean_length: f64,
    pub length_stderr: f64,
    pub error_rate: f64,
    pub error_stderr: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct CodeTally {
    len_sum: u128,
    len_sq_sum: u128,
    errors: u64,
}

impl CodeTally {
    fn record(&mut self, len: u64, error: bool) {
        self.len_sum += u128::from(len);
        self.len_sq_sum += u128::from(len) * u128::from(len);
        self.errors += u64::from(error);
    }

    fn merge(mut self, other: CodeTally) -> CodeTally {
        self.len_sum += other.len_sum;
        self.len_sq_sum += other.len_sq_sum;
        self.errors += other.errors;
        self
    }
}

/// Precomputed behaviour of one joint block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockOutcome {
    /// `ℓ(b_rank)`.
    pub len: u64,
    pub log_rank: f64,
    /// Probability that the block is sent as `b_rank`.
    pub keep: f64,
    pub rank_is_one: bool,
}

impl BlockOutcome {
    fn new(rank: &BigUint, keep: f64) -> Self {
        BlockOutcome {
            len: rank.bits() - 1,
            log_rank: crate::mass::log2_biguint(rank),
            keep,
            rank_is_one: rank.is_one(),
        }
    }
}

/// Largest number of joint blocks tabulated up front.
const TABULATE_LIMIT: usize = 1 << 16;

/// Outcome of every joint block, indexed by base-`pairs.len()` digits, when
/// there are few enough blocks.
pub(crate) fn tabulate<P: Mass>(
    runner: &CodeRunner<'_, P>,
    pairs: &[(usize, usize)],
    n: usize,
) -> Result<Option<Vec<BlockOutcome>>> {
    let Some(total) = u32::try_from(n).ok().and_then(|n| pairs.len().checked_pow(n)) else {
        return Ok(None);
    };
    if total > TABULATE_LIMIT {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(total);
    let mut xs = vec![0; n];
    let mut ys = vec![0; n];
    for s in 0..total {
        let mut rest = s;
        for i in 0..n {
            (xs[i], ys[i]) = pairs[rest % pairs.len()];
            rest /= pairs.len();
        }
        let (rank, keep) = runner.rank_and_keep(&xs, &ys)?;
        out.push(BlockOutcome::new(&rank, keep));
    }
    Ok(Some(out))
}

/// Draw one block, returning its outcome; the block index is assembled from
/// `n` single-letter draws, first letter least significant.
pub(crate) fn draw_outcome<R: Rng, P: Mass>(
    rng: &mut R,
    sampler: &crate::sim::JointSampler,
    table: &Option<Vec<BlockOutcome>>,
    runner: &CodeRunner<'_, P>,
    xs: &mut [usize],
    ys: &mut [usize],
) -> Result<BlockOutcome> {
    if let Some(table) = table {
        let mut s = 0;
        let mut scale = 1;
        for _ in 0..xs.len() {
            s += sampler.draw_index(rng) * scale;
            scale *= sampler.pairs().len();
        }
        Ok(table[s])
    } else {
        sampler.draw_block(rng, xs, ys);
        let (rank, keep) = runner.rank_and_keep(xs, ys)?;
        Ok(BlockOutcome::new(&rank, keep))
    }
}

/// Monte Carlo estimate of the code's mean length and error rate.
pub fn simulate_code<P: Mass>(plan: &CodePlan<P>, src: &JointSource<P>, trials: u64, seed: u64) -> Result<SimulationReport> {
    if trials == 0 {
        return Err(Error::validation("trials", "must be positive"));
    }
    let runner = CodeRunner::new(plan, src)?;
    let sampler = crate::sim::JointSampler::new(src);
    let n = plan.n as usize;
    let table = tabulate(&runner, sampler.pairs(), n)?;
    let tallies: Vec<Result<CodeTally>> = crate::sim::run_chunks(trials, seed, |rng, count| {
        let mut tally = CodeTally::default();
        let mut xs = vec![0; n];
        let mut ys = vec![0; n];
        for _ in 0..count {
            let o = draw_outcome(rng, &sampler, &table, &runner, &mut xs, &mut ys)?;
            let kept = rng.gen::<f64>() < o.keep;
            tally.record(if kept { o.len } else { 0 }, !kept && !o.rank_is_one);
        }
        Ok(tally)
    });
    let mut total = CodeTally::default();
    for t in tallies {
        total = total.merge(t?);
    }
    let (mean_length, length_stderr) =
        crate::sim::mean_and_stderr(total.len_sum as f64, total.len_sq_sum as f64, trials);
    let (error_rate, error_stderr) = crate::sim::mean_and_stderr(total.errors as f64, total.errors as f64, trials);
    Ok(SimulationReport {
        trials,
        seed,
        mean_length,
        length_stderr,
        error_rate,
        error_stderr,
    })
}

/// Stochastic code for a single-letter source without side-information:
/// symbols are `1..=|S|`, `encoder[m - 1]` is the law of the codeword for `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticCode {
    pub encoder: Vec<BTreeMap<BinaryString, Rational>>,
    pub decoder: BTreeMap<BinaryString, usize>,
}

impl StochasticCode {
    pub fn expected_length(&self, pmf: &[Rational]) -> Rational {
        let mut total = q(0, 1);
        for (p, row) in pmf.iter().zip(&self.encoder) {
            for (w, q) in row {
                total += p * q * Rational::from_integer(w.len().into());
            }
        }
        total
    }

    /// An unassigned codeword counts as a decoding error.
    pub fn error_probability(&self, pmf: &[Rational]) -> Rational {
        let mut total = q(0, 1);
        for (m, (p, row)) in pmf.iter().zip(&self.encoder).enumerate() {
            for (w, q) in row {
                if self.decoder.get(w) != Some(&(m + 1)) {
                    total += p * q;
                }
            }
        }
        total
    }

    fn send_to_empty(&mut self, m: usize, w: &BinaryString) {
        let row = &mut self.encoder[m - 1];
        if let Some(mass) = row.remove(w) {
            *row.entry(BinaryString::empty()).or_insert_with(|| q(0, 1)) += mass;
        }
    }

    fn interchange(&mut self, a: usize, b: usize) {
        self.encoder.swap(a - 1, b - 1);
        for v in self.decoder.values_mut() {
            if *v == a {
                *v = b;
            } else if *v == b {
                *v = a;
            }
        }
    }
}

fn bits(s: &str) -> BinaryString {
    BinaryString::parse_bits(s).expect("literal binary string")
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

/// Starting code on three symbols whose repair by swap-and-drop overshoots
/// the error budget: `1 -> 0 | 1` w.p. `5/6 | 1/6`, `2 -> ∅`, `3 -> 0 | 1`
/// evenly, decoded by `0 -> 1, ∅ -> 2, 1 -> 3`.
pub fn counterexample_code() -> StochasticCode {
    StochasticCode {
        encoder: vec![
            BTreeMap::from([(bits("0"), q(5, 6)), (bits("1"), q(1, 6))]),
            BTreeMap::from([(bits(""), q(1, 1))]),
            BTreeMap::from([(bits("0"), q(1, 2)), (bits("1"), q(1, 2))]),
        ],
        decoder: BTreeMap::from([(bits("0"), 1), (bits(""), 2), (bits("1"), 3)]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub label: &'static str,
    pub code: StochasticCode,
    pub expected_length: Rational,
    pub error: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlawedTrace {
    pub eps: Rational,
    pub steps: Vec<TraceStep>,
    /// `L*` of the source at `eps`, for comparison with the final step.
    pub optimum: Rational,
    /// Final error strictly above `eps`.
    pub violates_error_budget: bool,
}

/// Replay the swap-and-drop normalization of a stochastic code. The source
/// must be sorted nonincreasing with `P(1) + ... + P(M) = 1 - eps` for some `M`.
pub fn flawed_procedure_trace(pmf: &[Rational], eps: &Rational, initial: StochasticCode) -> Result<FlawedTrace> {
    if initial.encoder.len() != pmf.len() {
        return Err(Error::domain("code and source have different alphabets"));
    }
    if pmf.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::domain("source probabilities must be nonincreasing"));
    }
    let src = JointSource::without_side_information(pmf.to_vec())?;
    let target = q(1, 1) - eps;
    let mut cum = q(0, 1);
    let big_m = pmf
        .iter()
        .position(|p| {
            cum += p;
            cum == target
        })
        .map(|i| i + 1)
        .ok_or_else(|| Error::domain("no prefix of the source carries mass exactly 1 - eps"))?;

    let mut steps = Vec::new();
    let mut push = |label, code: &StochasticCode| {
        steps.push(TraceStep {
            label,
            code: code.clone(),
            expected_length: code.expected_length(pmf),
            error: code.error_probability(pmf),
        });
    };
    let mut code = initial;
    push("initial", &code);

    for m in 1..=pmf.len() {
        let mismatched: Vec<BinaryString> = code.encoder[m - 1]
            .keys()
            .filter(|w| !w.is_empty() && code.decoder.get(*w) != Some(&m))
            .cloned()
            .collect();
        for w in mismatched {
            code.send_to_empty(m, &w);
        }
    }
    push("drop-mismatched", &code);

    for i in 1..=big_m {
        let w = BinaryString::from_index(BigUint::from(i));
        if let Some(&m0) = code.decoder.get(&w) {
            if m0 != i {
                code.interchange(m0, i);
            }
        }
    }
    push("interchange", &code);

    for m in big_m + 1..=pmf.len() {
        code.encoder[m - 1] = BTreeMap::from([(BinaryString::empty(), q(1, 1))]);
    }
    push("final", &code);

    let final_error = steps.last().map(|s| s.error.clone()).unwrap_or_default();
    Ok(FlawedTrace {
        eps: eps.clone(),
        violates_error_budget: final_error > *eps,
        optimum: lstar(&src, 1, eps, Criterion::Avg, Budget::default())?,
        steps,
    })
}

/// The trace on `P = (1/2, 1/3, 1/6)` at `eps = 1/6` from [`counterexample_code`].
pub fn counterexample_trace() -> FlawedTrace {
    flawed_procedure_trace(&[q(1, 2), q(1, 3), q(1, 6)], &q(1, 6), counterexample_code()).expect("fixture trace")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn budget() -> Budget {
        Budget::default()
    }

    #[test]
    fn binary_strings_enumerate_in_length_lex_order() {
        let rendered: Vec<String> = (1u32..=7).map(|i| BinaryString::from_index(i.into()).to_string()).collect();
        assert_eq!(rendered, ["", "0", "1", "00", "01", "10", "11"]);
        for i in 1u32..200 {
            let b = BinaryString::from_index(i.into());
            assert_eq!(BinaryString::parse_bits(&b.to_string()).unwrap(), b);
            assert_eq!(b.len(), u64::from(31 - i.leading_zeros()));
        }
        assert!(BinaryString::parse_bits("012").is_err());
    }

    #[test]
    fn floor_log_sum_matches_direct_sum() {
        for start in 1u32..40 {
            for count in 0u32..70 {
                let direct: u32 = (start..start + count).map(|r| 31 - r.leading_zeros()).sum();
                assert_eq!(floor_log_sum(&start.into(), &count.into()), BigUint::from(direct));
            }
        }
    }

    #[test]
    fn appendix_i_average_optimum_is_one_third() {
        let l = lstar(&fixtures::appendix_i(), 1, &q(1, 6), Criterion::Avg, budget()).unwrap();
        assert_eq!(l, q(1, 3));
    }

    #[test]
    fn source_b_criteria_differ() {
        let src = fixtures::source_b();
        let eps = q(1, 4);
        assert_eq!(lstar(&src, 1, &eps, Criterion::Max, budget()).unwrap(), q(1, 2));
        assert_eq!(lstar(&src, 1, &eps, Criterion::Avg, budget()).unwrap(), q(1, 4));

        let avg = build_code(&src, 1, &eps, Criterion::Avg, budget()).unwrap();
        assert_eq!(avg.thresholds[0].keep, BigUint::from(4u32));
        assert_eq!(avg.thresholds[0].gamma, q(0, 1));
        assert_eq!(avg.expected_length(), q(1, 4));
        assert_eq!(avg.error_probability(), q(1, 4));

        let max = build_code(&src, 1, &eps, Criterion::Max, budget()).unwrap();
        let point = max.y_types.iter().position(|yt| yt.counts == [1, 0]).unwrap();
        assert_eq!(max.thresholds[point].keep, BigUint::zero());
        assert_eq!(max.thresholds[point].gamma, q(3, 4));
        assert_eq!(max.expected_length(), q(1, 2));
        // the point-mass row loses nothing by dropping its only symbol
        assert_eq!(max.error_probability(), q(1, 8));
    }

    #[test]
    fn plans_attain_lstar_exactly() {
        for src in [fixtures::binary_pair(), fixtures::jensen_pair(), fixtures::source_b()] {
            for n in 1..=3 {
                let block = BlockAnalysis::new(&src, n, budget()).unwrap();
                for eps in [q(0, 1), q(1, 10), q(1, 4), q(1, 2), q(9, 10)] {
                    for c in Criterion::ALL {
                        let plan = build_code(&src, n, &eps, c, budget()).unwrap();
                        assert_eq!(plan.expected_length(), block.lstar(&eps, c).unwrap(), "n={n} eps={eps} {c}");
                        let err = plan.error_probability();
                        assert!(err <= eps);
                        let all_keep = plan.thresholds.iter().all(|t| !t.keep.is_zero());
                        if all_keep {
                            assert_eq!(err, eps, "n={n} eps={eps} {c}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn float_plan_tracks_rational_plan() {
        let src = fixtures::binary_pair();
        let f = src.to_float();
        for c in Criterion::ALL {
            let exact = build_code(&src, 3, &q(1, 5), c, budget()).unwrap().expected_length();
            let approx = build_code(&f, 3, &0.2, c, budget()).unwrap().expected_length();
            assert!((exact.to_f64() - approx).abs() < 1e-12);
        }
    }

    #[test]
    fn eps_one_is_rejected_for_codes() {
        assert!(build_code(&fixtures::binary_pair(), 1, &q(1, 1), Criterion::Max, budget()).is_err());
        assert_eq!(lstar(&fixtures::binary_pair(), 2, &q(1, 1), Criterion::Max, budget()).unwrap(), q(0, 1));
    }

    #[test]
    fn encoder_and_decoder_invert_kept_ranks() {
        let src = fixtures::binary_pair();
        let plan = build_code(&src, 3, &q(1, 5), Criterion::Avg, budget()).unwrap();
        let runner = CodeRunner::new(&plan, &src).unwrap();
        let mut seen = 0;
        for s in 0..64usize {
            let xs: Vec<usize> = (0..3).map(|i| (s >> i) & 1).collect();
            let ys: Vec<usize> = (0..3).map(|i| (s >> (i + 3)) & 1).collect();
            let t = runner.encode_decode(&xs, &ys, 0.0).unwrap();
            if t.rank <= plan.thresholds[0].keep {
                assert_eq!(t.decoded, xs);
                assert!(!t.is_error());
                seen += 1;
            } else if t.rank > &plan.thresholds[0].keep + BigUint::one() {
                assert!(t.codeword.is_empty());
                assert!(t.is_error());
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn counterexample_trace_steps() {
        let t = counterexample_trace();
        let got: Vec<(Rational, Rational)> = t.steps.iter().map(|s| (s.expected_length.clone(), s.error.clone())).collect();
        assert_eq!(
            got,
            [(q(2, 3), q(1, 6)), (q(1, 2), q(1, 6)), (q(13, 36), q(5, 36)), (q(5, 18), q(2, 9))]
        );
        assert!(t.violates_error_budget);
        assert_eq!(t.optimum, q(1, 3));
    }

    #[test]
    fn trace_requires_an_exact_prefix() {
        let pmf = [q(1, 2), q(1, 3), q(1, 6)];
        assert!(flawed_procedure_trace(&pmf, &q(1, 5), counterexample_code()).is_err());
    }

    #[test]
    fn simulation_is_reproducible_and_close() {
        let src = fixtures::appendix_i();
        let plan = build_code(&src, 1, &q(1, 6), Criterion::Avg, budget()).unwrap();
        let a = simulate_code(&plan, &src, 200_000, 11).unwrap();
        assert_eq!(a, simulate_code(&plan, &src, 200_000, 11).unwrap());
        assert!((a.mean_length - 1.0 / 3.0).abs() < 4.0 * a.length_stderr);
        assert!((a.error_rate - 1.0 / 6.0).abs() < 4.0 * a.error_stderr);
    }

    #[test]
    fn general_simulation_path_agrees_with_analysis() {
        // 4 joint pairs at n = 9 exceeds the tabulation limit
        let src = fixtures::binary_pair();
        let plan = build_code(&src, 9, &q(1, 4), Criterion::Max, budget()).unwrap();
        let r = simulate_code(&plan, &src, 100_000, 3).unwrap();
        let l = plan.expected_length().to_f64();
        assert!((r.mean_length - l).abs() < 5.0 * r.length_stderr, "{} vs {l}", r.mean_length);
        let e = plan.error_probability().to_f64();
        assert!((r.error_rate - e).abs() < 5.0 * r.error_stderr);
    }

    proptest! {
        #[test]
        fn lstar_is_nonincreasing_in_eps(a in 0u32..=20, b in 0u32..=20) {
            let (lo, hi) = (a.min(b), a.max(b));
            let src = fixtures::binary_pair();
            let block = BlockAnalysis::new(&src, 3, budget()).unwrap();
            for c in Criterion::ALL {
                let l_lo = block.lstar(&q(lo.into(), 20), c).unwrap();
                let l_hi = block.lstar(&q(hi.into(), 20), c).unwrap();
                prop_assert!(l_hi <= l_lo);
            }
            prop_assert!(block.lstar(&q(lo.into(), 20), Criterion::Avg).unwrap() <= block.lstar(&q(lo.into(), 20), Criterion::Max).unwrap());
        }
    }
}
