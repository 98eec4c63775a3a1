//! Sparse multi-mode bosonic Fock states and classical mixtures.
//!
//! States are maps from mode occupations to complex amplitudes. Mixed
//! states are weighted lists of pure states; every mixture produced by
//! the protocol (phase-averaged down-conversion, post-measurement
//! conditionals, channel averages) is classical, so this representation
//! is exact. All operations are pure functions on immutable values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Tolerance used by normalization checks.
pub const NORM_TOL: f64 = 1e-12;

/// Default amplitude prune tolerance. Set to 0.0 to keep every term.
pub const DEFAULT_PRUNE_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn label(self) -> char {
        match self {
            Polarization::H => 'H',
            Polarization::V => 'V',
        }
    }
}

/// One optical mode: a spatial path plus a polarization.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId {
    pub spatial: u16,
    pub pol: Polarization,
}

impl ModeId {
    pub const fn new(spatial: u16, pol: Polarization) -> Self {
        ModeId { spatial, pol }
    }

    pub const fn h(spatial: u16) -> Self {
        ModeId::new(spatial, Polarization::H)
    }

    pub const fn v(spatial: u16) -> Self {
        ModeId::new(spatial, Polarization::V)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.spatial, self.pol.label())
    }
}

impl fmt::Debug for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// The set of modes a state is defined on. Modes absent from a term's
/// occupation are in the vacuum.
pub type ModeRegistry = BTreeSet<ModeId>;

/// Build a registry from a list of modes.
pub fn registry_of(modes: &[ModeId]) -> ModeRegistry {
    modes.iter().copied().collect()
}

/// Registry holding both polarizations of each listed spatial label.
pub fn spatial_registry(spatials: &[u16]) -> ModeRegistry {
    spatials
        .iter()
        .flat_map(|&s| [ModeId::h(s), ModeId::v(s)])
        .collect()
}

/// A photon-number occupation: canonically ordered, zero counts absent.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Occupation(Vec<(ModeId, u32)>);

impl Occupation {
    pub fn empty() -> Self {
        Occupation(Vec::new())
    }

    /// Canonicalizes: sorts by mode, merges duplicates, drops zeros.
    pub fn new(counts: &[(ModeId, u32)]) -> Self {
        let mut map: BTreeMap<ModeId, u32> = BTreeMap::new();
        for &(m, n) in counts {
            if n > 0 {
                *map.entry(m).or_insert(0) += n;
            }
        }
        Occupation(map.into_iter().collect())
    }

    pub fn count(&self, mode: ModeId) -> u32 {
        self.0
            .binary_search_by_key(&mode, |&(m, _)| m)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&(_, n)| n).sum()
    }

    pub fn total_in(&self, modes: &[ModeId]) -> u32 {
        modes.iter().map(|&m| self.count(m)).sum()
    }

    pub fn is_vacuum(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeId, u32)> + '_ {
        self.0.iter().copied()
    }

    pub fn modes(&self) -> impl Iterator<Item = ModeId> + '_ {
        self.0.iter().map(|&(m, _)| m)
    }

    /// Merge with an occupation over a disjoint mode set.
    pub fn merged(&self, other: &Occupation) -> Occupation {
        let mut counts: Vec<(ModeId, u32)> = self.0.clone();
        counts.extend(other.iter());
        Occupation::new(&counts)
    }

    /// Split into (restricted to `modes`, rest).
    pub fn split(&self, modes: &ModeRegistry) -> (Occupation, Occupation) {
        let (inside, outside): (Vec<_>, Vec<_>) =
            self.0.iter().partition(|&&(m, _)| modes.contains(&m));
        (Occupation(inside), Occupation(outside))
    }
}

impl fmt::Debug for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "|vac>");
        }
        write!(f, "|")?;
        for (i, (m, n)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{n}_{m}")?;
        }
        write!(f, ">")
    }
}

/// Sparse pure state: occupation -> amplitude over a fixed registry.
#[derive(Clone, PartialEq)]
pub struct PureState {
    registry: ModeRegistry,
    terms: BTreeMap<Occupation, Complex64>,
}

impl PureState {
    /// The vacuum over `registry` (amplitude 1 on the empty occupation).
    pub fn vacuum(registry: ModeRegistry) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Occupation::empty(), Complex64::new(1.0, 0.0));
        PureState { registry, terms }
    }

    /// The zero vector (no terms).
    pub fn zero(registry: ModeRegistry) -> Self {
        PureState {
            registry,
            terms: BTreeMap::new(),
        }
    }

    /// A single Fock basis state |occ>.
    pub fn basis(registry: ModeRegistry, occ: Occupation) -> Result<Self> {
        let mut s = PureState::zero(registry);
        s.check_occupation(&occ)?;
        s.terms.insert(occ, Complex64::new(1.0, 0.0));
        Ok(s)
    }

    pub fn from_terms(
        registry: ModeRegistry,
        terms: Vec<(Occupation, Complex64)>,
    ) -> Result<Self> {
        let mut s = PureState::zero(registry);
        for (occ, amp) in terms {
            s.check_occupation(&occ)?;
            let entry = s.terms.entry(occ).or_insert(Complex64::new(0.0, 0.0));
            *entry += amp;
        }
        s.terms.retain(|_, a| a.norm_sqr() > 0.0);
        Ok(s)
    }

    fn check_occupation(&self, occ: &Occupation) -> Result<()> {
        for m in occ.modes() {
            if !self.registry.contains(&m) {
                return Err(Error::UnknownMode(m));
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> &ModeRegistry {
        &self.registry
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, Complex64)> + '_ {
        self.terms.iter().map(|(o, &a)| (o, a))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.terms
            .get(occ)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|(o, &a)| (o.clone(), c * a)).collect();
        PureState {
            registry: self.registry.clone(),
            terms,
        }
    }

    /// Term-wise sum; registries must match.
    pub fn add(&self, other: &PureState) -> Result<Self> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let mut terms = self.terms.clone();
        for (occ, amp) in other.terms() {
            let e = terms.entry(occ.clone()).or_insert(Complex64::new(0.0, 0.0));
            *e += amp;
        }
        terms.retain(|_, a| a.norm_sqr() > 0.0);
        Ok(PureState {
            registry: self.registry.clone(),
            terms,
        })
    }

    /// Drop amplitudes with modulus below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(_, a)| a.norm() >= tol)
            .map(|(o, &a)| (o.clone(), a))
            .collect();
        PureState {
            registry: self.registry.clone(),
            terms,
        }
    }

    /// Largest total photon number among the stored terms.
    pub fn max_photons(&self) -> u32 {
        self.terms.keys().map(|o| o.total()).max().unwrap_or(0)
    }

    /// Weight held in each total-photon-number sector.
    pub fn photon_number_weights(&self) -> BTreeMap<u32, f64> {
        let mut w = BTreeMap::new();
        for (occ, amp) in self.terms() {
            *w.entry(occ.total()).or_insert(0.0) += amp.norm_sqr();
        }
        w
    }

    /// Grow the registry by vacuum modes.
    pub fn with_modes(&self, extra: &[ModeId]) -> Self {
        let mut registry = self.registry.clone();
        registry.extend(extra.iter().copied());
        PureState {
            registry,
            terms: self.terms.clone(),
        }
    }

    /// Debug serialization: a sorted list of `{occupation, re, im}`.
    pub fn to_debug_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(occ, amp)| {
                let occ_map: serde_json::Map<String, Value> = occ
                    .iter()
                    .map(|(m, n)| (m.to_string(), json!(n)))
                    .collect();
                json!({ "occupation": occ_map, "re": amp.re, "im": amp.im })
            })
            .collect();
        Value::Array(terms)
    }
}

impl fmt::Debug for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PureState[")?;
        for (i, (occ, amp)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.4}{:+.4}i){:?}", amp.re, amp.im, occ)?;
        }
        write!(f, "]")
    }
}

/// Tensor product of states on disjoint mode sets.
pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState> {
    if let Some(&m) = a.registry.intersection(&b.registry).next() {
        return Err(Error::OverlappingModes(m));
    }
    let registry: ModeRegistry = a.registry.union(&b.registry).copied().collect();
    let mut terms = BTreeMap::new();
    for (oa, aa) in a.terms() {
        for (ob, ab) in b.terms() {
            terms.insert(oa.merged(ob), aa * ab);
        }
    }
    Ok(PureState { registry, terms })
}

/// Inner product <a|b>; registries must match.
pub fn overlap(a: &PureState, b: &PureState) -> Result<Complex64> {
    if a.registry != b.registry {
        return Err(Error::RegistryMismatch);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    // Iterate the smaller map.
    let (small, large, conj_small) = if a.terms.len() <= b.terms.len() {
        (&a.terms, &b.terms, true)
    } else {
        (&b.terms, &a.terms, false)
    };
    for (occ, &amp) in small {
        if let Some(&other) = large.get(occ) {
            acc += if conj_small {
                amp.conj() * other
            } else {
                other.conj() * amp
            };
        }
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bell {
    Plus,
    Minus,
}

/// |Phi+-> on spatial modes (a, b): (|1_aH 1_bH> +- |1_aV 1_bV>)/sqrt(2).
pub fn bell_state(which: Bell, a: u16, b: u16) -> PureState {
    let registry = spatial_registry(&[a, b]);
    let hh = Occupation::new(&[(ModeId::h(a), 1), (ModeId::h(b), 1)]);
    let vv = Occupation::new(&[(ModeId::v(a), 1), (ModeId::v(b), 1)]);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sign = match which {
        Bell::Plus => 1.0,
        Bell::Minus => -1.0,
    };
    PureState::from_terms(
        registry,
        vec![
            (hh, Complex64::new(r, 0.0)),
            (vv, Complex64::new(sign * r, 0.0)),
        ],
    )
    .expect("bell state construction cannot fail")
}

/// Classical mixture of pure states over a shared registry.
///
/// Component states are kept normalized; the weights carry the
/// probability. The weight sum may be below one for truncated sources;
/// callers track the dropped weight separately.
#[derive(Clone, Debug)]
pub struct MixedEnsemble {
    registry: ModeRegistry,
    components: Vec<(f64, PureState)>,
}

impl MixedEnsemble {
    /// Wrap a pure state; a sub-normalized input becomes weight = |psi|^2.
    pub fn from_pure(state: PureState) -> Result<Self> {
        let w = state.norm_sqr();
        if w == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let registry = state.registry.clone();
        Ok(MixedEnsemble {
            registry,
            components: vec![(w, state.normalized()?)],
        })
    }

    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let registry = components
            .first()
            .map(|(_, s)| s.registry.clone())
            .ok_or(Error::ZeroNorm)?;
        for (w, s) in &components {
            if s.registry != registry {
                return Err(Error::RegistryMismatch);
            }
            if *w < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "weight",
                    value: *w,
                    constraint: "weight >= 0",
                });
            }
        }
        let components = components.into_iter().filter(|(w, _)| *w > 0.0).collect();
        Ok(MixedEnsemble {
            registry,
            components,
        })
    }

    pub fn registry(&self) -> &ModeRegistry {
        &self.registry
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|(w, _)| w).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.weight_sum() - 1.0).abs() <= tol
            && self.components.iter().all(|(_, s)| s.is_normalized(tol))
    }

    pub fn normalized(&self) -> Result<Self> {
        let total = self.weight_sum();
        if total == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(1.0 / total))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        MixedEnsemble {
            registry: self.registry.clone(),
            components: self
                .components
                .iter()
                .map(|(w, s)| (w * factor, s.clone()))
                .collect(),
        }
    }

    /// Merge another ensemble over the same registry.
    pub fn merged(&self, other: &MixedEnsemble) -> Result<Self> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let mut components = self.components.clone();
        components.extend(other.components.iter().cloned());
        MixedEnsemble::new(components)
    }

    /// Exact partial trace over `modes`.
    ///
    /// Each pure component splits by its occupation on the discarded
    /// modes; every split keeps full coherence on the remaining modes,
    /// so the resulting ensemble represents the reduced state exactly.
    pub fn trace_out(&self, modes: &ModeRegistry) -> Result<MixedEnsemble> {
        for m in modes {
            if !self.registry.contains(m) {
                return Err(Error::UnknownMode(*m));
            }
        }
        let kept_registry: ModeRegistry = self.registry.difference(modes).copied().collect();
        let mut components = Vec::new();
        for (w, psi) in &self.components {
            let mut groups: BTreeMap<Occupation, Vec<(Occupation, Complex64)>> = BTreeMap::new();
            for (occ, amp) in psi.terms() {
                let (traced, kept) = occ.split(modes);
                groups.entry(traced).or_default().push((kept, amp));
            }
            for (_, terms) in groups {
                let group_w: f64 = terms.iter().map(|(_, a)| a.norm_sqr()).sum();
                if group_w == 0.0 {
                    continue;
                }
                let state =
                    PureState::from_terms(kept_registry.clone(), terms)?.normalized()?;
                components.push((w * group_w, state));
            }
        }
        MixedEnsemble::new(components)
    }

    /// Sum_i w_i |<target|psi_i>|^2 for a normalized pure target.
    pub fn fidelity_to(&self, target: &PureState) -> Result<f64> {
        let mut f = 0.0;
        for (w, psi) in &self.components {
            f += w * overlap(target, psi)?.norm_sqr();
        }
        Ok(f)
    }

    /// Fidelity to |Phi+-> on the spatial pair (a, b).
    ///
    /// The ensemble must be defined on exactly the four polarization
    /// modes of the two named spatial labels.
    pub fn fidelity_to_bell(&self, which: Bell, a: u16, b: u16) -> Result<f64> {
        let expected = spatial_registry(&[a, b]);
        if self.registry != expected {
            return Err(Error::RegistryMismatch);
        }
        let target = bell_state(which, a, b);
        let f = self.fidelity_to(&target)? / self.weight_sum().max(f64::MIN_POSITIVE);
        Ok(f)
    }

    /// Weight per total-photon-number sector, summed over components.
    pub fn photon_number_weights(&self) -> BTreeMap<u32, f64> {
        let mut out = BTreeMap::new();
        for (w, psi) in &self.components {
            for (n, sector) in psi.photon_number_weights() {
                *out.entry(n).or_insert(0.0) += w * sector;
            }
        }
        out
    }

    /// Tr[rho |x><y|] = Sum_i w_i <y|psi_i><psi_i|x>; a probe for
    /// operator-level equality checks in tests.
    pub fn matrix_element(&self, x: &PureState, y: &PureState) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, psi) in &self.components {
            acc += overlap(y, psi)? * overlap(psi, x)? * *w;
        }
        Ok(acc)
    }

    pub fn to_debug_json(&self) -> Value {
        let comps: Vec<Value> = self
            .components
            .iter()
            .map(|(w, s)| json!({ "weight": w, "state": s.to_debug_json() }))
            .collect();
        Value::Array(comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn occupation_canonical_order() {
        let a = Occupation::new(&[(ModeId::v(2), 1), (ModeId::h(1), 2)]);
        let b = Occupation::new(&[(ModeId::h(1), 2), (ModeId::v(2), 1)]);
        assert_eq!(a, b);
        assert_eq!(a.total(), 3);
        assert_eq!(a.count(ModeId::h(1)), 2);
        assert_eq!(a.count(ModeId::h(9)), 0);
    }

    #[test]
    fn tensor_single_term_product() {
        // |1>_1H tensor |1>_2H -> amplitude 1 on {1H:1, 2H:1}
        let a = PureState::basis(
            registry_of(&[ModeId::h(1), ModeId::v(1)]),
            Occupation::new(&[(ModeId::h(1), 1)]),
        )
        .unwrap();
        let b = PureState::basis(
            registry_of(&[ModeId::h(2), ModeId::v(2)]),
            Occupation::new(&[(ModeId::h(2), 1)]),
        )
        .unwrap();
        let t = tensor(&a, &b).unwrap();
        let expect = Occupation::new(&[(ModeId::h(1), 1), (ModeId::h(2), 1)]);
        assert_eq!(t.amplitude(&expect), c(1.0, 0.0));
        assert_eq!(t.num_terms(), 1);
    }

    #[test]
    fn tensor_rejects_overlapping_modes() {
        let a = PureState::vacuum(registry_of(&[ModeId::h(1)]));
        let b = PureState::vacuum(registry_of(&[ModeId::h(1), ModeId::v(1)]));
        assert!(matches!(
            tensor(&a, &b),
            Err(Error::OverlappingModes(m)) if m == ModeId::h(1)
        ));
    }

    #[test]
    fn bell_overlaps() {
        let plus = bell_state(Bell::Plus, 6, 2);
        let minus = bell_state(Bell::Minus, 6, 2);
        assert!((overlap(&plus, &plus).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        // Orthogonal Bell states: exactly zero.
        assert_eq!(overlap(&plus, &minus).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn overlap_general_superposition() {
        // <Phi+| (alpha |1_6H 1_2H> + beta |1_6V 1_2V>) = (alpha + beta)/sqrt(2)
        let alpha = c(0.3, 0.4);
        let beta = c(-0.2, 0.1);
        let reg = spatial_registry(&[6, 2]);
        let psi = PureState::from_terms(
            reg,
            vec![
                (
                    Occupation::new(&[(ModeId::h(6), 1), (ModeId::h(2), 1)]),
                    alpha,
                ),
                (
                    Occupation::new(&[(ModeId::v(6), 1), (ModeId::v(2), 1)]),
                    beta,
                ),
            ],
        )
        .unwrap();
        let got = overlap(&bell_state(Bell::Plus, 6, 2), &psi).unwrap();
        let want = (alpha + beta) / 2.0_f64.sqrt();
        assert!((got - want).norm() < 1e-15);
    }

    #[test]
    fn overlap_conjugate_symmetry() {
        let reg = spatial_registry(&[1, 2]);
        let a = PureState::from_terms(
            reg.clone(),
            vec![
                (Occupation::new(&[(ModeId::h(1), 1)]), c(0.6, 0.1)),
                (Occupation::new(&[(ModeId::v(2), 2)]), c(-0.3, 0.7)),
            ],
        )
        .unwrap();
        let b = PureState::from_terms(
            reg,
            vec![
                (Occupation::new(&[(ModeId::h(1), 1)]), c(0.2, -0.5)),
                (Occupation::new(&[(ModeId::h(2), 1)]), c(0.9, 0.0)),
            ],
        )
        .unwrap();
        let ab = overlap(&a, &b).unwrap();
        let ba = overlap(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-15);
    }

    #[test]
    fn overlap_rejects_registry_mismatch() {
        let a = PureState::vacuum(registry_of(&[ModeId::h(1)]));
        let b = PureState::vacuum(registry_of(&[ModeId::h(2)]));
        assert!(matches!(overlap(&a, &b), Err(Error::RegistryMismatch)));
    }

    #[test]
    fn trace_out_vacuum_modes_is_registry_shrink() {
        let psi = bell_state(Bell::Plus, 6, 2).with_modes(&[ModeId::h(9), ModeId::v(9)]);
        let e = MixedEnsemble::from_pure(psi).unwrap();
        let reduced = e.trace_out(&spatial_registry(&[9])).unwrap();
        assert_eq!(reduced.components().len(), 1);
        let f = reduced.fidelity_to_bell(Bell::Plus, 6, 2).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trace_out_bell_gives_uniform_mixture() {
        // (|0 0> + |1 1>)/sqrt(2) reduced to one mode -> {1/2 vacuum, 1/2 one photon}
        let ma = ModeId::h(1);
        let mb = ModeId::h(2);
        let reg = registry_of(&[ma, mb]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let psi = PureState::from_terms(
            reg,
            vec![
                (Occupation::empty(), c(r, 0.0)),
                (Occupation::new(&[(ma, 1), (mb, 1)]), c(r, 0.0)),
            ],
        )
        .unwrap();
        let e = MixedEnsemble::from_pure(psi).unwrap();
        let reduced = e.trace_out(&registry_of(&[mb])).unwrap();
        assert_eq!(reduced.components().len(), 2);
        for (w, _) in reduced.components() {
            assert!((w - 0.5).abs() < 1e-15);
        }
        let total: f64 = reduced.weight_sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_out_rejects_unknown_mode() {
        let e = MixedEnsemble::from_pure(bell_state(Bell::Plus, 6, 2)).unwrap();
        let err = e.trace_out(&registry_of(&[ModeId::h(7)]));
        assert!(matches!(err, Err(Error::UnknownMode(_))));
    }

    #[test]
    fn fidelity_of_bell_is_one() {
        let e = MixedEnsemble::from_pure(bell_state(Bell::Plus, 6, 2)).unwrap();
        assert!((e.fidelity_to_bell(Bell::Plus, 6, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(e.fidelity_to_bell(Bell::Minus, 6, 2).unwrap() < 1e-15);
    }

    #[test]
    fn debug_json_is_sorted_and_stable() {
        let psi = bell_state(Bell::Plus, 6, 2);
        let v = psi.to_debug_json();
        let s = serde_json::to_string(&v).unwrap();
        // Mode 2 sorts before mode 6; HH term before VV term.
        assert_eq!(
            s,
            "[{\"im\":0.0,\"occupation\":{\"2H\":1,\"6H\":1},\"re\":0.7071067811865476},\
             {\"im\":0.0,\"occupation\":{\"2V\":1,\"6V\":1},\"re\":0.7071067811865476}]"
        );
    }
}
