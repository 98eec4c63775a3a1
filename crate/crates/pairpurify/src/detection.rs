//! Photon-number-diagonal POVMs for imperfect detectors, dark-count
//! convolution, and conditional measurement on classical mixtures.
//!
//! A detector with quantum efficiency `eta` registers each incident
//! photon independently with probability `eta`. Conventional detectors
//! only distinguish "click" from "no click"; single-photon detectors
//! resolve zero, one, or multiple photocounts. Dark counts are Poisson
//! with mean `nu` per run, independent of real counts, and are folded
//! into the POVM diagonals analytically so the outcome sets stay
//! complete exactly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fock::{MixedEnsemble, ModeId, ModeRegistry, PureState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorKind {
    Conventional,
    SinglePhoton,
}

/// An imperfect detector: efficiency `eta`, mean dark counts `nu`.
#[derive(Clone, Copy, Debug)]
pub struct DetectorModel {
    pub kind: DetectorKind,
    pub eta: f64,
    pub nu: f64,
}

impl DetectorModel {
    pub fn new(kind: DetectorKind, eta: f64, nu: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: eta,
                constraint: "0 <= eta <= 1",
            });
        }
        if nu < 0.0 {
            return Err(Error::InvalidParameter {
                name: "nu",
                value: nu,
                constraint: "nu >= 0",
            });
        }
        Ok(DetectorModel { kind, eta, nu })
    }

    pub fn ideal(kind: DetectorKind) -> Self {
        DetectorModel {
            kind,
            eta: 1.0,
            nu: 0.0,
        }
    }
}

/// A photon-number-diagonal POVM element: `diag[m]` is the outcome
/// weight given `m` photons at the detector. Built for `m <= n_max`.
#[derive(Clone, Debug)]
pub struct PovmElement {
    diag: Vec<f64>,
}

impl PovmElement {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        for &d in &diag {
            if !(-1e-12..=1.0 + 1e-12).contains(&d) {
                return Err(Error::PovmWeight(d));
            }
        }
        Ok(PovmElement { diag })
    }

    pub fn n_max(&self) -> u32 {
        self.diag.len() as u32 - 1
    }

    pub fn weight(&self, m: u32) -> Result<f64> {
        self.diag.get(m as usize).copied().ok_or(Error::PovmRange {
            built_for: self.n_max(),
            queried: m,
        })
    }

    /// Scale every diagonal entry (used for dark-only outcome pieces).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        PovmElement::new(self.diag.iter().map(|d| d * c).collect())
    }

    /// `1 - diag`, the complementary outcome.
    pub fn complement(&self) -> Self {
        PovmElement {
            diag: self.diag.iter().map(|d| 1.0 - d).collect(),
        }
    }

    /// Entry-wise sum with another element.
    pub fn plus(&self, other: &PovmElement) -> Result<Self> {
        if self.diag.len() != other.diag.len() {
            return Err(Error::BadShape);
        }
        PovmElement::new(
            self.diag
                .iter()
                .zip(&other.diag)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

fn binomial(m: u32, n: u32) -> f64 {
    if n > m {
        return 0.0;
    }
    let mut acc = 1.0;
    for k in 0..n {
        acc *= f64::from(m - k) / f64::from(n - k);
    }
    acc
}

/// POVM element for exactly `n` photocounts at efficiency `eta`:
/// `diag(m) = C(m, n) eta^n (1 - eta)^(m - n)` for `m >= n`.
pub fn povm_n(eta: f64, n: u32, n_max: u32) -> Result<PovmElement> {
    check_eta(eta)?;
    let diag = (0..=n_max)
        .map(|m| {
            if m < n {
                0.0
            } else {
                binomial(m, n) * eta.powi(n as i32) * (1.0 - eta).powi((m - n) as i32)
            }
        })
        .collect();
    PovmElement::new(diag)
}

/// Conventional detector: click means at least one photocount.
/// No click: `(1 - eta)^m`; click: `1 - (1 - eta)^m`.
pub fn povm_conventional(eta: f64, clicked: bool, n_max: u32) -> Result<PovmElement> {
    check_eta(eta)?;
    let diag = (0..=n_max)
        .map(|m| {
            let none = (1.0 - eta).powi(m as i32);
            if clicked {
                1.0 - none
            } else {
                none
            }
        })
        .collect();
    PovmElement::new(diag)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SinglePhotonOutcome {
    None,
    One,
    Multi,
}

/// Single-photon (number-resolving up to "multi") detector outcomes:
/// none `(1 - eta)^m`, one `m eta (1 - eta)^(m-1)`,
/// multi `1 - (1 - eta + m eta)(1 - eta)^(m-1)`.
pub fn povm_single(eta: f64, outcome: SinglePhotonOutcome, n_max: u32) -> Result<PovmElement> {
    check_eta(eta)?;
    let diag = (0..=n_max)
        .map(|m| match outcome {
            SinglePhotonOutcome::None => (1.0 - eta).powi(m as i32),
            SinglePhotonOutcome::One => {
                if m == 0 {
                    0.0
                } else {
                    f64::from(m) * eta * (1.0 - eta).powi(m as i32 - 1)
                }
            }
            SinglePhotonOutcome::Multi => {
                if m < 2 {
                    0.0
                } else {
                    1.0 - (1.0 - eta + f64::from(m) * eta) * (1.0 - eta).powi(m as i32 - 1)
                }
            }
        })
        .collect();
    PovmElement::new(diag)
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            constraint: "0 <= eta <= 1",
        })
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "nu",
            value: nu,
            constraint: "nu >= 0",
        })
    }
}

/// The complete outcome set of one detector.
#[derive(Clone, Debug)]
pub enum DetectorOutcomes {
    Conventional {
        no_click: PovmElement,
        click: PovmElement,
    },
    SinglePhoton {
        none: PovmElement,
        one: PovmElement,
        multi: PovmElement,
    },
}

impl DetectorOutcomes {
    /// Outcome set without dark counts.
    pub fn base(kind: DetectorKind, eta: f64, n_max: u32) -> Result<Self> {
        Ok(match kind {
            DetectorKind::Conventional => DetectorOutcomes::Conventional {
                no_click: povm_conventional(eta, false, n_max)?,
                click: povm_conventional(eta, true, n_max)?,
            },
            DetectorKind::SinglePhoton => DetectorOutcomes::SinglePhoton {
                none: povm_single(eta, SinglePhotonOutcome::None, n_max)?,
                one: povm_single(eta, SinglePhotonOutcome::One, n_max)?,
                multi: povm_single(eta, SinglePhotonOutcome::Multi, n_max)?,
            },
        })
    }

    /// Convolve with Poisson(`nu`) dark counts. Reported counts are
    /// real plus dark, so:
    /// conventional: no-click' = e^{-nu} no-click, click' = 1 - no-click';
    /// single photon: none' = e^{-nu} none,
    /// one' = e^{-nu}(one + nu none), multi' = 1 - none' - one'.
    /// Completeness is preserved exactly.
    pub fn with_dark_counts(&self, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        let damp = (-nu).exp();
        Ok(match self {
            DetectorOutcomes::Conventional { no_click, .. } => {
                let no_click = no_click.scaled(damp)?;
                let click = no_click.complement();
                DetectorOutcomes::Conventional { no_click, click }
            }
            DetectorOutcomes::SinglePhoton { none, one, .. } => {
                let none_dark = none.scaled(damp)?;
                let one_dark = one.plus(&none.scaled(nu)?)?.scaled(damp)?;
                let multi_dark = none_dark.plus(&one_dark)?.complement();
                DetectorOutcomes::SinglePhoton {
                    none: none_dark,
                    one: one_dark,
                    multi: multi_dark,
                }
            }
        })
    }

    /// Full outcome set for a detector model (dark counts included).
    pub fn for_model(model: &DetectorModel, n_max: u32) -> Result<Self> {
        let base = DetectorOutcomes::base(model.kind, model.eta, n_max)?;
        if model.nu > 0.0 {
            base.with_dark_counts(model.nu)
        } else {
            Ok(base)
        }
    }

    pub fn elements(&self) -> Vec<(&'static str, &PovmElement)> {
        match self {
            DetectorOutcomes::Conventional { no_click, click } => {
                vec![("no_click", no_click), ("click", click)]
            }
            DetectorOutcomes::SinglePhoton { none, one, multi } => {
                vec![("none", none), ("one", one), ("multi", multi)]
            }
        }
    }

    /// The no-count element (used for vetoes).
    pub fn none(&self) -> &PovmElement {
        match self {
            DetectorOutcomes::Conventional { no_click, .. } => no_click,
            DetectorOutcomes::SinglePhoton { none, .. } => none,
        }
    }

    /// The element that heralds a coincidence: "click" for conventional
    /// detectors, "exactly one count" for single-photon detectors.
    pub fn herald(&self) -> &PovmElement {
        match self {
            DetectorOutcomes::Conventional { click, .. } => click,
            DetectorOutcomes::SinglePhoton { one, .. } => one,
        }
    }

    /// The any-count element: `1 - none` (postselection clicks).
    pub fn any_count(&self) -> PovmElement {
        self.none().complement()
    }
}

/// A diagonal measurement: each assignment applies one POVM element to
/// the total photon count across a group of modes (a physical detector
/// can watch both polarizations of a spatial path).
#[derive(Clone, Debug, Default)]
pub struct Measurement {
    assignments: Vec<(Vec<ModeId>, PovmElement)>,
}

impl Measurement {
    pub fn new() -> Self {
        Measurement::default()
    }

    pub fn with(mut self, modes: Vec<ModeId>, element: PovmElement) -> Self {
        self.assignments.push((modes, element));
        self
    }

    pub fn assignments(&self) -> &[(Vec<ModeId>, PovmElement)] {
        &self.assignments
    }

    pub fn measured_modes(&self) -> ModeRegistry {
        self.assignments
            .iter()
            .flat_map(|(modes, _)| modes.iter().copied())
            .collect()
    }

    fn validate(&self, registry: &ModeRegistry) -> Result<()> {
        let mut seen = ModeRegistry::new();
        for (modes, _) in &self.assignments {
            for m in modes {
                if !registry.contains(m) {
                    return Err(Error::UnknownMode(*m));
                }
                if !seen.insert(*m) {
                    return Err(Error::OverlappingModes(*m));
                }
            }
        }
        Ok(())
    }
}

/// Probabilities below this are reported as zero-probability outcomes.
pub const ZERO_PROBABILITY: f64 = 1e-300;

pub struct MeasureOutcome {
    pub probability: f64,
    /// None when the outcome probability underflows to zero.
    pub conditional: Option<MixedEnsemble>,
}

/// Condition an ensemble on a diagonal measurement outcome WITHOUT
/// discarding the measured modes.
///
/// Each pure component splits by the vector of total photon counts in
/// the assignment groups; the POVM weights depend only on those totals,
/// so the split keeps all remaining coherence and is exact.
pub fn condition_on(ensemble: &MixedEnsemble, m: &Measurement) -> Result<MeasureOutcome> {
    m.validate(ensemble.registry())?;
    let mut probability = 0.0;
    let mut components = Vec::new();
    for (w, psi) in ensemble.components() {
        let mut groups: BTreeMap<Vec<u32>, Vec<(crate::fock::Occupation, num_complex::Complex64)>> =
            BTreeMap::new();
        for (occ, amp) in psi.terms() {
            let key: Vec<u32> = m
                .assignments
                .iter()
                .map(|(modes, _)| occ.total_in(modes))
                .collect();
            groups.entry(key).or_default().push((occ.clone(), amp));
        }
        for (key, terms) in groups {
            let mut povm_w = 1.0;
            for (counts, (_, element)) in key.iter().zip(&m.assignments) {
                povm_w *= element.weight(*counts)?;
            }
            if povm_w == 0.0 {
                continue;
            }
            let group_norm: f64 = terms.iter().map(|(_, a)| a.norm_sqr()).sum();
            let p = w * povm_w * group_norm;
            if p <= 0.0 {
                continue;
            }
            probability += p;
            let state = PureState::from_terms(ensemble.registry().clone(), terms)?
                .normalized()?;
            components.push((p, state));
        }
    }
    if probability < ZERO_PROBABILITY {
        return Ok(MeasureOutcome {
            probability: 0.0,
            conditional: None,
        });
    }
    let conditional = MixedEnsemble::new(components)?.scaled(1.0 / probability);
    Ok(MeasureOutcome {
        probability,
        conditional: Some(conditional),
    })
}

/// Measure and destroy: condition on the outcome, then trace out every
/// measured mode. Exactly the post-measurement reduced state for
/// diagonal POVMs.
pub fn measure(ensemble: &MixedEnsemble, m: &Measurement) -> Result<MeasureOutcome> {
    let outcome = condition_on(ensemble, m)?;
    match outcome.conditional {
        None => Ok(outcome),
        Some(cond) => {
            let traced = cond.trace_out(&m.measured_modes())?;
            Ok(MeasureOutcome {
                probability: outcome.probability,
                conditional: Some(traced),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{bell_state, registry_of, Bell, ModeId, Occupation};
    use num_complex::Complex64;

    #[test]
    fn povm_n_values() {
        // eta = 1: diag(m) = delta_{m,n}.
        let p = povm_n(1.0, 2, 6).unwrap();
        for m in 0..=6 {
            let want = if m == 2 { 1.0 } else { 0.0 };
            assert_eq!(p.weight(m).unwrap(), want);
        }
        // eta = 0.5, n = 1, m = 2: 2 * 0.5 * 0.5 = 0.5.
        let p = povm_n(0.5, 1, 6).unwrap();
        assert!((p.weight(2).unwrap() - 0.5).abs() < 1e-15);
        // Completeness: sum over n of diag_n(m) = 1 for m <= 6.
        for m in 0..=6u32 {
            let total: f64 = (0..=m)
                .map(|n| povm_n(0.37, n, 6).unwrap().weight(m).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(povm_n(1.5, 0, 6).is_err());
    }

    #[test]
    fn povm_conventional_values() {
        let click = povm_conventional(1.0, true, 6).unwrap();
        for m in 1..=6 {
            assert_eq!(click.weight(m).unwrap(), 1.0);
        }
        let click = povm_conventional(0.5, true, 6).unwrap();
        assert!((click.weight(2).unwrap() - 0.75).abs() < 1e-15);
        // Click and no-click sum to one for all m.
        let no_click = povm_conventional(0.5, false, 6).unwrap();
        for m in 0..=6 {
            let s = click.weight(m).unwrap() + no_click.weight(m).unwrap();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn povm_single_values() {
        let one = povm_single(1.0, SinglePhotonOutcome::One, 6).unwrap();
        for m in 0..=6 {
            let want = if m == 1 { 1.0 } else { 0.0 };
            assert_eq!(one.weight(m).unwrap(), want);
        }
        let one = povm_single(0.5, SinglePhotonOutcome::One, 6).unwrap();
        assert!((one.weight(2).unwrap() - 0.5).abs() < 1e-15);
        // Three outcomes sum to one for m <= 6.
        for eta in [0.0, 0.3, 0.7, 1.0] {
            let set = DetectorOutcomes::base(DetectorKind::SinglePhoton, eta, 6).unwrap();
            for m in 0..=6 {
                let total: f64 = set
                    .elements()
                    .iter()
                    .map(|(_, e)| e.weight(m).unwrap())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dark_count_convolution() {
        // nu = 0 leaves the outcome set unchanged.
        let base = DetectorOutcomes::base(DetectorKind::Conventional, 0.4, 6).unwrap();
        let darked = base.with_dark_counts(0.0).unwrap();
        for ((_, a), (_, b)) in base.elements().iter().zip(darked.elements().iter()) {
            for m in 0..=6 {
                assert_eq!(a.weight(m).unwrap(), b.weight(m).unwrap());
            }
        }
        // Vacuum mode, conventional: click probability 1 - e^{-nu}.
        let nu = 1e-6;
        let darked = base.with_dark_counts(nu).unwrap();
        let click = match &darked {
            DetectorOutcomes::Conventional { click, .. } => click,
            _ => unreachable!(),
        };
        assert!((click.weight(0).unwrap() - (1.0 - (-nu).exp())).abs() < 1e-18);
        // Vacuum, single photon: one-count probability nu e^{-nu}.
        let nu = 1e-4;
        let single = DetectorOutcomes::base(DetectorKind::SinglePhoton, 0.4, 6)
            .unwrap()
            .with_dark_counts(nu)
            .unwrap();
        let one = match &single {
            DetectorOutcomes::SinglePhoton { one, .. } => one,
            _ => unreachable!(),
        };
        assert!((one.weight(0).unwrap() - nu * (-nu).exp()).abs() < 1e-18);
        // Completeness preserved exactly.
        for m in 0..=6 {
            let total: f64 = single
                .elements()
                .iter()
                .map(|(_, e)| e.weight(m).unwrap())
                .sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
        assert!(base.with_dark_counts(-0.1).is_err());
    }

    #[test]
    fn measure_vacuum_mode_with_pi0_is_certain() {
        let psi = bell_state(Bell::Plus, 6, 2).with_modes(&[ModeId::h(9)]);
        let e = MixedEnsemble::from_pure(psi).unwrap();
        let pi0 = povm_n(0.7, 0, 6).unwrap();
        let m = Measurement::new().with(vec![ModeId::h(9)], pi0);
        let out = measure(&e, &m).unwrap();
        assert!((out.probability - 1.0).abs() < 1e-14);
        let cond = out.conditional.unwrap();
        let f = cond.fidelity_to_bell(Bell::Plus, 6, 2).unwrap();
        assert!((f - 1.0).abs() < 1e-14);
    }

    #[test]
    fn conditioning_preserves_group_coherence() {
        // A click on the whole spatial path 6 must not destroy the
        // H/V coherence of a Bell pair.
        let e = MixedEnsemble::from_pure(bell_state(Bell::Plus, 6, 2)).unwrap();
        let click = povm_conventional(0.5, true, 6).unwrap();
        let m = Measurement::new().with(vec![ModeId::h(6), ModeId::v(6)], click);
        let out = condition_on(&e, &m).unwrap();
        assert!((out.probability - 0.5).abs() < 1e-14);
        let cond = out.conditional.unwrap();
        let f = cond.fidelity_to_bell(Bell::Plus, 6, 2).unwrap();
        assert!((f - 1.0).abs() < 1e-12, "coherence lost: f = {f}");
    }

    #[test]
    fn zero_probability_outcome_has_no_conditional() {
        let reg = registry_of(&[ModeId::h(1)]);
        let vac = PureState::vacuum(reg);
        let e = MixedEnsemble::from_pure(vac).unwrap();
        // Exactly one count on a vacuum mode with nu = 0: impossible.
        let one = povm_single(0.9, SinglePhotonOutcome::One, 6).unwrap();
        let m = Measurement::new().with(vec![ModeId::h(1)], one);
        let out = measure(&e, &m).unwrap();
        assert_eq!(out.probability, 0.0);
        assert!(out.conditional.is_none());
    }

    #[test]
    fn measurement_rejects_overlapping_assignments() {
        let e = MixedEnsemble::from_pure(bell_state(Bell::Plus, 6, 2)).unwrap();
        let p = povm_conventional(0.5, true, 6).unwrap();
        let m = Measurement::new()
            .with(vec![ModeId::h(6)], p.clone())
            .with(vec![ModeId::h(6)], p);
        assert!(matches!(
            condition_on(&e, &m),
            Err(Error::OverlappingModes(_))
        ));
    }

    #[test]
    fn conditional_consistency_reconstructs_partial_trace() {
        // Sum over a complete outcome set of p * conditional equals the
        // plain partial trace.
        let reg = registry_of(&[ModeId::h(1), ModeId::v(1), ModeId::h(2)]);
        let psi = PureState::from_terms(
            reg,
            vec![
                (
                    Occupation::new(&[(ModeId::h(1), 1), (ModeId::h(2), 1)]),
                    Complex64::new(0.6, 0.0),
                ),
                (
                    Occupation::new(&[(ModeId::v(1), 2)]),
                    Complex64::new(0.0, 0.5),
                ),
                (Occupation::empty(), Complex64::new(0.624499799839840, 0.0)),
            ],
        )
        .unwrap();
        let e = MixedEnsemble::from_pure(psi).unwrap();
        let set = DetectorOutcomes::base(DetectorKind::SinglePhoton, 0.6, 6).unwrap();
        let measured = vec![ModeId::h(1), ModeId::v(1)];

        let direct = e.trace_out(&registry_of(&measured)).unwrap();
        let mut total_p = 0.0;
        let mut mixed: Option<MixedEnsemble> = None;
        for (_, element) in set.elements() {
            let m = Measurement::new().with(measured.clone(), element.clone());
            let out = measure(&e, &m).unwrap();
            total_p += out.probability;
            if let Some(cond) = out.conditional {
                let piece = cond.scaled(out.probability);
                mixed = Some(match mixed {
                    None => piece,
                    Some(acc) => acc.merged(&piece).unwrap(),
                });
            }
        }
        assert!((total_p - 1.0).abs() < 1e-12);
        let mixed = mixed.unwrap();
        // Compare as operators through matrix elements on a probe set.
        let probes: Vec<PureState> = [
            Occupation::empty(),
            Occupation::new(&[(ModeId::h(2), 1)]),
        ]
        .into_iter()
        .map(|occ| PureState::basis(registry_of(&[ModeId::h(2)]), occ).unwrap())
        .collect();
        for x in &probes {
            for y in &probes {
                let a = direct.matrix_element(x, y).unwrap();
                let b = mixed.matrix_element(x, y).unwrap();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
