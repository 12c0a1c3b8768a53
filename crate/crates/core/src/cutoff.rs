//! ε-cutoff transformation of a nonnegative discrete random variable and the
//! resulting ε-cutoff entropies.
//!
//! For a spectrum `Z` and `0 <= eps < 1` the cutoff point `eta` and boundary
//! randomization `beta ∈ [0, 1)` solve `P{Z > eta} + beta P{Z = eta} = eps`.
//! The transformed variable keeps every value below `eta`, keeps the atom at
//! `eta` with probability `1 - beta` and zeroes everything above.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::mass::Mass;
use crate::source::JointSource;

/// Absolute tolerance used to merge float values into one atom.
pub const VALUE_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom<P: Mass> {
    pub value: f64,
    pub mass: P,
}

/// Law of a nonnegative discrete random variable as atoms with strictly
/// increasing values and positive masses.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSpectrum<P: Mass> {
    atoms: Vec<Atom<P>>,
    /// Exact likelihood behind each atom when the spectrum is an
    /// information-density law (`value = -log2 key`).
    exact_keys: Option<Vec<P>>,
    /// `upper_tails[i] = P{Z > value_i}`, nonincreasing in `i`.
    upper_tails: Vec<P>,
    /// `lower_moments[i] = Σ_{j<i} value_j mass_j`.
    lower_moments: Vec<f64>,
    /// [`Self::lower_moments`] in the mass type, for integer-valued spectra.
    lower_moments_exact: Option<Vec<P>>,
}

/// Solution of the cutoff equation for one spectrum and error level.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffSpec<P: Mass> {
    pub eta: f64,
    /// Index of the cutoff atom in the spectrum.
    pub eta_index: usize,
    pub beta: P,
    pub eps: P,
}

impl<P: Mass> ValueSpectrum<P> {
    /// Group `(value, mass)` pairs into atoms. Values closer than
    /// [`VALUE_MERGE_TOL`] merge; zero masses are discarded.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, P)>) -> Result<Self> {
        let mut pairs: Vec<(f64, P)> = pairs.into_iter().filter(|(_, m)| !m.is_zero()).collect();
        for (v, m) in &pairs {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::domain(format!("spectrum value {v} is not a nonnegative real")));
            }
            if m.is_negative() {
                return Err(Error::domain("negative spectrum mass"));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<Atom<P>> = Vec::with_capacity(pairs.len());
        for (value, mass) in pairs {
            match atoms.last_mut() {
                Some(last) if (value - last.value).abs() <= VALUE_MERGE_TOL => {
                    last.mass = last.mass.add(&mass);
                }
                _ => atoms.push(Atom { value, mass }),
            }
        }
        if atoms.is_empty() {
            return Err(Error::domain("spectrum has no mass"));
        }
        Ok(Self::assemble(atoms, None))
    }

    /// Information-density spectrum from `(likelihood, mass)` pairs: the value
    /// of each atom is `-log2 likelihood`, and atoms are grouped by likelihood
    /// equality (exact in rational mode).
    pub fn from_likelihoods(pairs: impl IntoIterator<Item = (P, P)>) -> Result<Self> {
        let mut pairs: Vec<(P, P)> = pairs.into_iter().filter(|(_, m)| !m.is_zero()).collect();
        if pairs.iter().any(|(l, _)| l.is_zero() || l.is_negative()) {
            return Err(Error::domain("likelihood keys must be positive"));
        }
        // decreasing likelihood = increasing value
        pairs.sort_by(|a, b| b.0.cmp_mass(&a.0));
        let mut atoms: Vec<Atom<P>> = Vec::with_capacity(pairs.len());
        let mut keys: Vec<P> = Vec::with_capacity(pairs.len());
        for (key, mass) in pairs {
            match keys.last() {
                Some(last) if last.same_likelihood(&key) => {
                    let a = atoms.last_mut().expect("atoms and keys stay aligned");
                    a.mass = a.mass.add(&mass);
                }
                _ => {
                    atoms.push(Atom { value: (-key.log2()).max(0.0), mass });
                    keys.push(key);
                }
            }
        }
        if atoms.is_empty() {
            return Err(Error::domain("spectrum has no mass"));
        }
        Ok(Self::assemble(atoms, Some(keys)))
    }

    fn assemble(atoms: Vec<Atom<P>>, exact_keys: Option<Vec<P>>) -> Self {
        let mut upper_tails = vec![P::zero(); atoms.len()];
        let mut tail = P::zero();
        for (i, a) in atoms.iter().enumerate().rev() {
            upper_tails[i] = tail.clone();
            tail = tail.add(&a.mass);
        }
        let lower_moments = std::iter::once(0.0)
            .chain(atoms.iter().scan(0.0, |acc, a| {
                *acc += a.value * a.mass.to_f64();
                Some(*acc)
            }))
            .collect();
        let lower_moments_exact = atoms.iter().all(|a| a.value.fract() == 0.0).then(|| {
            std::iter::once(P::zero())
                .chain(atoms.iter().scan(P::zero(), |acc, a| {
                    *acc = acc.add(&P::from_u64(a.value as u64).mul(&a.mass));
                    Some(acc.clone())
                }))
                .collect()
        });
        ValueSpectrum {
            atoms,
            exact_keys,
            upper_tails,
            lower_moments,
            lower_moments_exact,
        }
    }

    pub fn atoms(&self) -> &[Atom<P>] {
        &self.atoms
    }

    pub fn exact_keys(&self) -> Option<&[P]> {
        self.exact_keys.as_deref()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> P {
        P::sum(self.atoms.iter().map(|a| &a.mass))
    }

    pub fn mean(&self) -> f64 {
        self.lower_moments[self.atoms.len()]
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.atoms.iter().map(|a| (a.value - mu).powi(2) * a.mass.to_f64()).sum()
    }

    /// True when every value is a nonnegative integer, so expectations can be
    /// carried in the mass type.
    pub fn is_integral(&self) -> bool {
        self.atoms.iter().all(|a| a.value.fract() == 0.0)
    }

    /// Mixture `Σ_i w_i · spectrum_i`, regrouped.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (P, &'a ValueSpectrum<P>)>) -> Result<Self> {
        let parts: Vec<(P, &ValueSpectrum<P>)> = parts.into_iter().collect();
        if parts.iter().all(|(_, s)| s.exact_keys.is_some()) {
            let pairs = parts.iter().flat_map(|(w, s)| {
                let keys = s.exact_keys.as_ref().expect("checked above");
                keys.iter().zip(&s.atoms).map(move |(k, a)| (k.clone(), w.mul(&a.mass)))
            });
            return Self::from_likelihoods(pairs.collect::<Vec<_>>());
        }
        Self::from_pairs(
            parts
                .iter()
                .flat_map(|(w, s)| s.atoms.iter().map(move |a| (a.value, w.mul(&a.mass))))
                .collect::<Vec<_>>(),
        )
    }

    /// CSV rows `value,mass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,mass\n");
        for a in &self.atoms {
            let mass = match a.mass.to_json() {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            out.push_str(&format!("{},{}\n", a.value, mass));
        }
        out
    }
}

fn check_eps<P: Mass>(eps: &P, allow_one: bool) -> Result<()> {
    let one = P::one();
    let ok = !eps.is_negative()
        && match eps.cmp_mass(&one) {
            Ordering::Less => true,
            Ordering::Equal => allow_one,
            Ordering::Greater => false,
        };
    if ok {
        Ok(())
    } else if allow_one {
        Err(Error::domain(format!("eps = {} outside [0, 1]", eps.to_f64())))
    } else {
        Err(Error::domain(format!("eps = {} outside [0, 1)", eps.to_f64())))
    }
}

pub(crate) fn is_one<P: Mass>(eps: &P) -> bool {
    eps.cmp_mass(&P::one()) != Ordering::Less
}

/// Solve the cutoff equation: `eta` is the smallest atom whose strict upper
/// tail is at most `eps`, which forces `beta ∈ [0, 1)`.
pub fn cutoff_spec<P: Mass>(spec: &ValueSpectrum<P>, eps: &P) -> Result<CutoffSpec<P>> {
    check_eps(eps, false)?;
    let idx = spec.upper_tails.partition_point(|t| !t.at_most(eps));
    let tail = &spec.upper_tails[idx];
    let atom = &spec.atoms[idx];
    let beta = eps.sub(tail).div(&atom.mass);
    let beta = if beta.is_negative() { P::zero() } else { beta };
    Ok(CutoffSpec {
        eta: atom.value,
        eta_index: idx,
        beta,
        eps: eps.clone(),
    })
}

/// `E[<Z>_eps]` by direct summation over the retained atoms.
pub fn expected_cutoff<P: Mass>(spec: &ValueSpectrum<P>, eps: &P) -> Result<f64> {
    check_eps(eps, true)?;
    if is_one(eps) {
        return Ok(0.0);
    }
    let cut = cutoff_spec(spec, eps)?;
    let below = spec.lower_moments[cut.eta_index];
    let edge = &spec.atoms[cut.eta_index];
    let kept = P::one().sub(&cut.beta).mul(&edge.mass).to_f64();
    Ok(below + cut.eta * kept)
}

/// `E[<Z>_eps]` carried exactly in the mass type; requires integer values.
pub fn expected_cutoff_exact<P: Mass>(spec: &ValueSpectrum<P>, eps: &P) -> Result<P> {
    check_eps(eps, true)?;
    let Some(lower) = &spec.lower_moments_exact else {
        return Err(Error::domain("exact cutoff expectation needs integer-valued atoms"));
    };
    if is_one(eps) {
        return Ok(P::zero());
    }
    let cut = cutoff_spec(spec, eps)?;
    let as_mass = |v: f64| P::from_u64(v as u64);
    let total = &lower[cut.eta_index];
    let edge = &spec.atoms[cut.eta_index];
    let kept = P::one().sub(&cut.beta).mul(&edge.mass);
    Ok(total.add(&as_mass(edge.value).mul(&kept)))
}

/// `E[<Z>_eps]` through the integrated tail,
/// `(1 - eps) E[Z] - ∫_eta^∞ P{Z > t} dt - eps (eta - E[Z])`.
pub fn expected_cutoff_integral<P: Mass>(spec: &ValueSpectrum<P>, eps: &P) -> Result<f64> {
    check_eps(eps, true)?;
    if is_one(eps) {
        return Ok(0.0);
    }
    let cut = cutoff_spec(spec, eps)?;
    let mean = spec.mean();
    let integrated_tail: f64 = spec.atoms[cut.eta_index + 1..]
        .iter()
        .map(|a| (a.value - cut.eta) * a.mass.to_f64())
        .sum();
    let e = eps.to_f64();
    Ok((1.0 - e) * mean - integrated_tail - e * (cut.eta - mean))
}

/// Minimum of `E[(1 - d(Z)) Z]` over drop maps `d: values → [0, 1]` with
/// `E[d(Z)] <= eps`, solved as a fractional knapsack that spends the drop
/// budget on the largest values first. Independent of [`cutoff_spec`].
pub fn min_kept_oracle<P: Mass>(spec: &ValueSpectrum<P>, eps: &P) -> Result<f64> {
    check_eps(eps, true)?;
    let mut budget = eps.to_f64();
    let mut items: Vec<(f64, f64)> = spec.atoms.iter().map(|a| (a.value, a.mass.to_f64())).collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut kept = 0.0;
    for (value, mass) in items {
        let dropped = budget.min(mass).max(0.0);
        budget -= dropped;
        kept += (mass - dropped) * value;
    }
    Ok(kept)
}

/// Law of `ι(X|Y)` given `Y = y`.
pub fn conditional_iota_spectrum<P: Mass>(src: &JointSource<P>, y: usize) -> ValueSpectrum<P> {
    let pairs = (0..src.x_len()).map(|x| {
        let p = src.conditional(x, y);
        (p.clone(), p)
    });
    ValueSpectrum::from_likelihoods(pairs.collect::<Vec<_>>()).expect("conditional rows carry unit mass")
}

/// Unconditional law of `ι(X|Y)`, a mixture over side-information symbols.
pub fn iota_spectrum<P: Mass>(src: &JointSource<P>) -> ValueSpectrum<P> {
    let pairs = (0..src.y_len()).flat_map(|y| {
        (0..src.x_len()).map(move |x| (src.conditional(x, y), src.joint(x, y).clone()))
    });
    ValueSpectrum::from_likelihoods(pairs.collect::<Vec<_>>()).expect("sources carry unit mass")
}

/// Conditional ε-cutoff entropy: the cutoff is applied separately for every
/// side-information symbol.
pub fn cond_cutoff_entropy<P: Mass>(src: &JointSource<P>, eps: &P) -> Result<f64> {
    check_eps(eps, true)?;
    let mut total = 0.0;
    for y in 0..src.y_len() {
        let spec = conditional_iota_spectrum(src, y);
        total += src.y_marginal()[y].to_f64() * expected_cutoff(&spec, eps)?;
    }
    Ok(total)
}

/// Unconditional ε-cutoff entropy: one cutoff on the pooled information density.
pub fn uncond_cutoff_entropy<P: Mass>(src: &JointSource<P>, eps: &P) -> Result<f64> {
    expected_cutoff(&iota_spectrum(src), eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mass::Rational;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn spec(pairs: &[(f64, Rational)]) -> ValueSpectrum<Rational> {
        ValueSpectrum::from_pairs(pairs.to_vec()).unwrap()
    }

    #[test]
    fn floor_log_spectrum_of_three_point_source() {
        let s = spec(&[(0.0, q(1, 2)), (1.0, q(1, 2))]);
        let c = cutoff_spec(&s, &q(1, 6)).unwrap();
        assert_eq!((c.eta, c.beta.clone()), (1.0, q(1, 3)));
        assert_eq!(expected_cutoff_exact(&s, &q(1, 6)).unwrap(), q(1, 3));
        assert!((expected_cutoff(&s, &q(1, 6)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_error_keeps_everything() {
        let s = spec(&[(0.0, q(1, 4)), (1.0, q(1, 2)), (2.0, q(1, 4))]);
        let c = cutoff_spec(&s, &q(0, 1)).unwrap();
        assert_eq!((c.eta, c.beta), (2.0, q(0, 1)));
        assert_eq!(expected_cutoff(&s, &q(0, 1)).unwrap(), s.mean());
        let c = cutoff_spec(&s, &q(1, 4)).unwrap();
        assert_eq!((c.eta, c.beta), (1.0, q(0, 1)));
    }

    #[test]
    fn partial_boundary_atom() {
        let s = spec(&[(0.0, q(3, 8)), (1.0, q(1, 2)), (2.0, q(1, 8))]);
        let c = cutoff_spec(&s, &q(1, 4)).unwrap();
        assert_eq!((c.eta, c.beta.clone()), (1.0, q(1, 4)));
        assert_eq!(expected_cutoff_exact(&s, &q(1, 4)).unwrap(), q(3, 8));
        for f in [expected_cutoff, expected_cutoff_integral, min_kept_oracle] {
            assert!((f(&s, &q(1, 4)).unwrap() - 0.375).abs() < 1e-15);
        }
    }

    #[test]
    fn single_atom_oracle() {
        let s = ValueSpectrum::from_pairs([(5.0, 1.0)]).unwrap();
        assert!((min_kept_oracle(&s, &0.2).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(min_kept_oracle(&s, &0.0).unwrap(), 5.0);
        assert!((expected_cutoff(&s, &0.2).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn eps_domain() {
        let s = spec(&[(1.0, q(1, 1))]);
        assert!(cutoff_spec(&s, &q(1, 1)).is_err());
        assert!(cutoff_spec(&s, &q(-1, 10)).is_err());
        assert!(expected_cutoff(&s, &q(11, 10)).is_err());
        assert_eq!(expected_cutoff(&s, &q(1, 1)).unwrap(), 0.0);
        assert_eq!(expected_cutoff_exact(&s, &q(1, 1)).unwrap(), q(0, 1));
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(ValueSpectrum::from_pairs([(-1.0, 1.0)]).is_err());
        assert!(ValueSpectrum::from_pairs([(f64::NAN, 1.0)]).is_err());
        assert!(ValueSpectrum::<f64>::from_pairs([]).is_err());
        assert!(ValueSpectrum::from_likelihoods([(0.0, 1.0)]).is_err());
    }

    #[test]
    fn cutoff_entropies_of_three_point_source() {
        let src = fixtures::appendix_i();
        let oracle = 0.5 * 1.0 + (1.0 / 3.0) * 3f64.log2();
        let c = cond_cutoff_entropy(&src, &q(1, 6)).unwrap();
        let u = uncond_cutoff_entropy(&src, &q(1, 6)).unwrap();
        assert!((c - oracle).abs() < 1e-12);
        assert!((u - oracle).abs() < 1e-12);
        assert!((c - 1.028321).abs() < 1e-6);
        let h = src.measures().h;
        assert!((cond_cutoff_entropy(&src, &q(0, 1)).unwrap() - h).abs() < 1e-12);
        assert_eq!(uncond_cutoff_entropy(&src, &q(1, 1)).unwrap(), 0.0);
    }

    #[test]
    fn source_b_conditioning_increases_cutoff() {
        let src = fixtures::source_b();
        let eps = q(1, 4);
        let u = uncond_cutoff_entropy(&src, &eps).unwrap();
        let c = cond_cutoff_entropy(&src, &eps).unwrap();
        assert!(u <= c);
        // pooled: {0: 1/2, 3: 1/2}; dropping 1/4 of the value-3 atom
        assert!((u - 0.75).abs() < 1e-12);
        // per-y: 0 for the point mass, 3 * 3/4 for the uniform row
        assert!((c - 1.125).abs() < 1e-12);
    }

    #[test]
    fn exact_keys_prevent_double_atoms() {
        let s = ValueSpectrum::from_likelihoods([(q(1, 4), q(1, 4)), (q(1, 2), q(1, 2)), (q(1, 4), q(1, 4))]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.exact_keys().unwrap(), [q(1, 2), q(1, 4)]);
        assert_eq!(s.atoms()[1].mass, q(1, 2));
    }

    fn arb_spectrum() -> impl Strategy<Value = ValueSpectrum<f64>> {
        prop::collection::vec((0u32..40, 1u32..100), 1..20).prop_map(|raw| {
            let total: u32 = raw.iter().map(|r| r.1).sum();
            let pairs: Vec<(f64, f64)> =
                raw.iter().map(|&(v, m)| (v as f64 * 0.5, m as f64 / total as f64)).collect();
            ValueSpectrum::from_pairs(pairs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cutoff_equation_holds(s in arb_spectrum(), e in 0.0f64..0.999) {
            let c = cutoff_spec(&s, &e).unwrap();
            let tail: f64 = s.atoms()[c.eta_index + 1..].iter().map(|a| a.mass).sum();
            prop_assert!((tail + c.beta * s.atoms()[c.eta_index].mass - e).abs() < 1e-12);
            prop_assert!((0.0..1.0).contains(&c.beta));
        }

        #[test]
        fn monotone_in_eps(s in arb_spectrum(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(expected_cutoff(&s, &hi).unwrap() <= expected_cutoff(&s, &lo).unwrap() + 1e-12);
        }

        #[test]
        fn dominance_orders_cutoffs(s in arb_spectrum(), shift in prop::collection::vec(0u32..3, 20), e in 0.0f64..1.0) {
            // pushing each atom up yields a stochastically larger variable
            let up = ValueSpectrum::from_pairs(
                s.atoms().iter().zip(&shift).map(|(a, d)| (a.value + *d as f64, a.mass)).collect::<Vec<_>>(),
            ).unwrap();
            prop_assert!(expected_cutoff(&up, &e).unwrap() >= expected_cutoff(&s, &e).unwrap() - 1e-12);
        }
    }
}
