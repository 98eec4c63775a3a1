//! The full purification circuit: source state in spatial modes 1-4,
//! a 90-degree rotation on mode 3, a polarizing beam splitter taking
//! modes (1, 3) to (6, 5), 45-degree plates on modes 5 and 4, detection
//! on modes 5 and 4 (called 5' and 4' downstream of the plates), and a
//! surviving pair in modes 6 (Alice) and 2 (Bob).
//!
//! A coincidence between one detector on mode 5 and one on mode 4
//! heralds the pair. Combinations whose heralded state is the
//! odd-parity Bell state are corrected by a phase flip on mode 2V; the
//! flip angle is calibrated once from the circuit itself so that any
//! choice of the physically undetermined element phases yields the same
//! reported statistics.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detection::{povm_n, DetectorKind, DetectorModel, DetectorOutcomes, Measurement};
use crate::error::{Error, Result};
use crate::fock::{
    spatial_registry, tensor, Bell, MixedEnsemble, ModeId, ModeRegistry, Polarization, PureState,
    DEFAULT_PRUNE_TOL,
};
use crate::optics::{pbs, phase_shift, r45, r90, r90_rotation, LinearTransform, Truncation};
use crate::sources::{ideal_pair, phase_averaged_pdc, PairSpec, PdcSpec};

/// Spatial mode kept by Alice after the beam splitter.
pub const OUT_ALICE: u16 = 6;
/// Spatial mode kept by Bob.
pub const OUT_BOB: u16 = 2;
/// Alice's detected spatial mode (5' after the plate).
pub const DET_ALICE: u16 = 5;
/// Bob's detected spatial mode (4' after the plate).
pub const DET_BOB: u16 = 4;

/// One coincidence combination: which of Alice's two detectors fired
/// together with which of Bob's.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combination {
    /// D_5'H with D_4'H
    HH,
    /// D_5'V with D_4'V
    VV,
    /// D_5'H with D_4'V
    HV,
    /// D_5'V with D_4'H
    VH,
}

impl Combination {
    pub const ALL: [Combination; 4] = [
        Combination::HH,
        Combination::VV,
        Combination::HV,
        Combination::VH,
    ];

    pub fn alice_pol(self) -> Polarization {
        match self {
            Combination::HH | Combination::HV => Polarization::H,
            Combination::VV | Combination::VH => Polarization::V,
        }
    }

    pub fn bob_pol(self) -> Polarization {
        match self {
            Combination::HH | Combination::VH => Polarization::H,
            Combination::VV | Combination::HV => Polarization::V,
        }
    }

    pub fn alice_mode(self) -> ModeId {
        ModeId::new(DET_ALICE, self.alice_pol())
    }

    pub fn bob_mode(self) -> ModeId {
        ModeId::new(DET_BOB, self.bob_pol())
    }

    pub fn alice_veto_mode(self) -> ModeId {
        match self.alice_pol() {
            Polarization::H => ModeId::v(DET_ALICE),
            Polarization::V => ModeId::h(DET_ALICE),
        }
    }

    pub fn bob_veto_mode(self) -> ModeId {
        match self.bob_pol() {
            Polarization::H => ModeId::v(DET_BOB),
            Polarization::V => ModeId::h(DET_BOB),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Combination::HH => "5'H+4'H",
            Combination::VV => "5'V+4'V",
            Combination::HV => "5'H+4'V",
            Combination::VH => "5'V+4'H",
        }
    }
}

/// Detector models per named detector.
#[derive(Clone, Debug)]
pub struct DetectorBank {
    pub d5h: DetectorModel,
    pub d5v: DetectorModel,
    pub d4h: DetectorModel,
    pub d4v: DetectorModel,
    pub d6: Option<DetectorModel>,
    pub d2: Option<DetectorModel>,
}

impl DetectorBank {
    /// All six detectors share one model.
    pub fn uniform(model: DetectorModel) -> Self {
        DetectorBank {
            d5h: model,
            d5v: model,
            d4h: model,
            d4v: model,
            d6: Some(model),
            d2: Some(model),
        }
    }

    pub fn ideal(kind: DetectorKind) -> Self {
        DetectorBank::uniform(DetectorModel::ideal(kind))
    }

    fn coincidence_model(&self, mode: ModeId) -> Result<&DetectorModel> {
        match (mode.spatial, mode.pol) {
            (DET_ALICE, Polarization::H) => Ok(&self.d5h),
            (DET_ALICE, Polarization::V) => Ok(&self.d5v),
            (DET_BOB, Polarization::H) => Ok(&self.d4h),
            (DET_BOB, Polarization::V) => Ok(&self.d4v),
            _ => Err(Error::UnknownMode(mode)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Source {
    Ideal(PairSpec),
    Pdc(PdcSpec),
    /// A caller-supplied mixture on the eight polarization modes of
    /// spatial labels 1-4. Weights are used as-is, so sub-normalized
    /// ensembles propagate their missing weight into the probabilities.
    Supplied(MixedEnsemble),
}

/// Undetermined element phases: the paper fixes none of the reflection
/// or rotation phases, so the artifact treats them as a gauge. Each
/// field adds a phase shifter on the listed modes at the listed point
/// in the circuit. All reported statistics are invariant under any
/// assignment, which the acceptance suite asserts.
#[derive(Clone, Debug)]
pub struct Gauge {
    /// Use the determinant +1 rotation (`a_H -> a_V, a_V -> -a_H`)
    /// instead of the swap for the 90-degree plate.
    pub r90_rotation: bool,
    /// Phases on (3H, 3V) after the 90-degree plate.
    pub post_r90: [f64; 2],
    /// Phases on (5H, 5V, 6H, 6V) after the beam splitter.
    pub post_pbs: [f64; 4],
    /// Phases on (4H, 4V) before Bob's 45-degree plate.
    pub pre_r45_bob: [f64; 2],
    /// Phases on (5H, 5V, 4H, 4V) after the 45-degree plates.
    pub post_r45: [f64; 4],
}

impl Default for Gauge {
    fn default() -> Self {
        Gauge {
            r90_rotation: false,
            post_r90: [0.0; 2],
            post_pbs: [0.0; 4],
            pre_r45_bob: [0.0; 2],
            post_r45: [0.0; 4],
        }
    }
}

impl Gauge {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phase = |_: u32| rng.gen_range(0.0..std::f64::consts::TAU);
        Gauge {
            post_r90: [phase(0), phase(1)],
            post_pbs: [phase(2), phase(3), phase(4), phase(5)],
            pre_r45_bob: [phase(6), phase(7)],
            post_r45: [phase(8), phase(9), phase(10), phase(11)],
            r90_rotation: rng.gen_bool(0.5),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: Source,
    pub detectors: DetectorBank,
    pub combinations: Vec<Combination>,
    /// Discard events with counts at the two non-heralding detectors.
    pub veto: bool,
    /// Additionally condition on counts at D_6 and D_2.
    pub postselect: bool,
    pub n_max: u32,
    pub prune_tol: f64,
    pub gauge: Gauge,
}

impl RunConfig {
    pub fn new(source: Source, detectors: DetectorBank) -> Self {
        RunConfig {
            source,
            detectors,
            combinations: Combination::ALL.to_vec(),
            veto: true,
            postselect: false,
            n_max: 4,
            prune_tol: DEFAULT_PRUNE_TOL,
            gauge: Gauge::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_max < 4 {
            return Err(Error::InvalidParameter {
                name: "n_max",
                value: f64::from(self.n_max),
                constraint: "n_max >= 4 (the protocol routes four photons)",
            });
        }
        if self.combinations.is_empty() {
            return Err(Error::Config("no coincidence combinations selected".into()));
        }
        if self.postselect && (self.detectors.d6.is_none() || self.detectors.d2.is_none()) {
            return Err(Error::Config(
                "postselection requires models for D_6 and D_2".into(),
            ));
        }
        if let Source::Supplied(e) = &self.source {
            if *e.registry() != spatial_registry(&[1, 2, 3, 4]) {
                return Err(Error::Config(
                    "supplied source must live on spatial modes 1-4".into(),
                ));
            }
        }
        Ok(())
    }

    fn truncation(&self) -> Truncation {
        Truncation {
            n_max: self.n_max,
            prune_tol: self.prune_tol,
        }
    }
}

/// Everything one run reports. The success/error split refers to one
/// coincidence combination (they are all equal by symmetry); `p_total`
/// sums the selected combinations. `p_e0`/`p_e1` are the weights of the
/// zero- and one-photon sectors of the heralded pair, times `p`.
#[derive(Clone, Debug)]
pub struct RunStatistics {
    pub p: f64,
    pub p_total: f64,
    pub p_s: f64,
    pub p_e: f64,
    pub p_e0: f64,
    pub p_e1: f64,
    /// Fidelity of the corrected, aggregated output to the even Bell
    /// state on modes (6, 2). Zero when no event survives.
    pub fidelity: f64,
    pub output: Option<MixedEnsemble>,
    pub dropped_weight: f64,
    pub per_combination: Vec<(Combination, f64)>,
    pub elapsed_seconds: f64,
}

/// The circuit as an ordered list of element transforms.
pub fn circuit_stages(gauge: &Gauge) -> Vec<LinearTransform> {
    let mut stages = Vec::new();
    stages.push(if gauge.r90_rotation {
        r90_rotation(3)
    } else {
        r90(3)
    });
    for (mode, phi) in [
        (ModeId::h(3), gauge.post_r90[0]),
        (ModeId::v(3), gauge.post_r90[1]),
    ] {
        if phi != 0.0 {
            stages.push(phase_shift(mode, phi));
        }
    }
    stages.push(pbs(1, 3, OUT_ALICE, DET_ALICE).expect("distinct labels"));
    for (mode, phi) in [
        (ModeId::h(DET_ALICE), gauge.post_pbs[0]),
        (ModeId::v(DET_ALICE), gauge.post_pbs[1]),
        (ModeId::h(OUT_ALICE), gauge.post_pbs[2]),
        (ModeId::v(OUT_ALICE), gauge.post_pbs[3]),
    ] {
        if phi != 0.0 {
            stages.push(phase_shift(mode, phi));
        }
    }
    for (mode, phi) in [
        (ModeId::h(DET_BOB), gauge.pre_r45_bob[0]),
        (ModeId::v(DET_BOB), gauge.pre_r45_bob[1]),
    ] {
        if phi != 0.0 {
            stages.push(phase_shift(mode, phi));
        }
    }
    stages.push(r45(DET_ALICE));
    stages.push(r45(DET_BOB));
    for (mode, phi) in [
        (ModeId::h(DET_ALICE), gauge.post_r45[0]),
        (ModeId::v(DET_ALICE), gauge.post_r45[1]),
        (ModeId::h(DET_BOB), gauge.post_r45[2]),
        (ModeId::v(DET_BOB), gauge.post_r45[3]),
    ] {
        if phi != 0.0 {
            stages.push(phase_shift(mode, phi));
        }
    }
    stages
}

fn apply_stages(
    ensemble: &MixedEnsemble,
    stages: &[LinearTransform],
    trunc: Truncation,
) -> Result<(MixedEnsemble, f64)> {
    let mut state = ensemble.clone();
    let mut dropped = 0.0;
    for stage in stages {
        let (next, d) = stage.apply_ensemble(&state, trunc)?;
        state = next;
        dropped += d;
    }
    Ok((state, dropped))
}

/// Calibrate the per-combination correction.
///
/// The balanced two-pair input is pushed through the circuit and
/// projected exactly onto one photon at each heralding detector. The
/// conditional pair is `(c_HH |1_6H 1_2H> + c_VV |1_6V 1_2V>)/...`;
/// the correction is the phase shifter on mode 2V that turns it into
/// the even Bell state. In the default gauge this reduces to the
/// identity for the HH/VV combinations and the V-side phase flip for
/// the HV/VH ones.
fn calibrated_corrections(gauge: &Gauge) -> Result<Vec<(Combination, LinearTransform)>> {
    let input = tensor(
        &ideal_pair(&PairSpec::balanced(), (1, 2)),
        &ideal_pair(&PairSpec::balanced(), (3, 4)),
    )?;
    let ensemble = MixedEnsemble::from_pure(input)?;
    let trunc = Truncation::exact(4);
    let (state, _) = apply_stages(&ensemble, &circuit_stages(gauge), trunc)?;

    let mut corrections = Vec::with_capacity(4);
    for comb in Combination::ALL {
        let project_one = povm_n(1.0, 1, 4)?;
        let project_zero = povm_n(1.0, 0, 4)?;
        let m = Measurement::new()
            .with(vec![comb.alice_mode()], project_one.clone())
            .with(vec![comb.bob_mode()], project_one)
            .with(vec![comb.alice_veto_mode()], project_zero.clone())
            .with(vec![comb.bob_veto_mode()], project_zero);
        let out = crate::detection::measure(&state, &m)?;
        let cond = out.conditional.ok_or(Error::ZeroNorm)?;
        debug_assert_eq!(cond.components().len(), 1);
        let pair = &cond.components()[0].1;
        let hh = pair.amplitude(&crate::fock::Occupation::new(&[
            (ModeId::h(OUT_ALICE), 1),
            (ModeId::h(OUT_BOB), 1),
        ]));
        let vv = pair.amplitude(&crate::fock::Occupation::new(&[
            (ModeId::v(OUT_ALICE), 1),
            (ModeId::v(OUT_BOB), 1),
        ]));
        if hh.norm() < 1e-9 || vv.norm() < 1e-9 {
            return Err(Error::ZeroNorm);
        }
        let delta = (vv / hh).arg();
        corrections.push((comb, phase_shift(ModeId::v(OUT_BOB), -delta)));
    }
    Ok(corrections)
}

fn source_ensemble(config: &RunConfig) -> Result<(MixedEnsemble, f64)> {
    match &config.source {
        Source::Ideal(spec) => {
            let pairs = tensor(
                &ideal_pair(spec, (1, 2)),
                &ideal_pair(spec, (3, 4)),
            )?;
            Ok((MixedEnsemble::from_pure(pairs)?, 0.0))
        }
        Source::Pdc(spec) => {
            let e = phase_averaged_pdc(spec, (1, 2, 3, 4), config.n_max);
            let dropped = 1.0 - e.weight_sum();
            Ok((e, dropped))
        }
        Source::Supplied(e) => Ok((e.clone(), 0.0)),
    }
}

/// Run the protocol and collect every reported statistic.
pub fn run(config: &RunConfig) -> Result<RunStatistics> {
    config.validate()?;
    let started = Instant::now();
    let trunc = config.truncation();

    let (source, dropped_source) = source_ensemble(config)?;
    let stages = circuit_stages(&config.gauge);
    let (state, dropped_circuit) = apply_stages(&source, &stages, trunc)?;
    let corrections = calibrated_corrections(&config.gauge)?;

    let detector_modes: ModeRegistry = [
        ModeId::h(DET_ALICE),
        ModeId::v(DET_ALICE),
        ModeId::h(DET_BOB),
        ModeId::v(DET_BOB),
    ]
    .into_iter()
    .collect();

    let mut per_combination = Vec::new();
    let mut outputs: Vec<(f64, MixedEnsemble)> = Vec::new();
    let mut first_split: Option<(f64, f64, f64, f64)> = None;

    for &comb in &config.combinations {
        let herald_a =
            DetectorOutcomes::for_model(config.detectors.coincidence_model(comb.alice_mode())?, config.n_max)?;
        let herald_b =
            DetectorOutcomes::for_model(config.detectors.coincidence_model(comb.bob_mode())?, config.n_max)?;
        let mut m = Measurement::new()
            .with(vec![comb.alice_mode()], herald_a.herald().clone())
            .with(vec![comb.bob_mode()], herald_b.herald().clone());
        if config.veto {
            let veto_a = DetectorOutcomes::for_model(
                config.detectors.coincidence_model(comb.alice_veto_mode())?,
                config.n_max,
            )?;
            let veto_b = DetectorOutcomes::for_model(
                config.detectors.coincidence_model(comb.bob_veto_mode())?,
                config.n_max,
            )?;
            m = m
                .with(vec![comb.alice_veto_mode()], veto_a.none().clone())
                .with(vec![comb.bob_veto_mode()], veto_b.none().clone());
        }

        let out = crate::detection::measure(&state, &m)?;
        let mut p_c = out.probability;
        let mut cond = out.conditional;

        // Non-heralding detector modes absorb their photons either way.
        if let Some(c) = cond {
            let leftover: ModeRegistry = c
                .registry()
                .intersection(&detector_modes)
                .copied()
                .collect();
            cond = Some(if leftover.is_empty() {
                c
            } else {
                c.trace_out(&leftover)?
            });
        }

        if config.postselect {
            if let Some(c) = &cond {
                let d6 = config.detectors.d6.as_ref().expect("validated");
                let d2 = config.detectors.d2.as_ref().expect("validated");
                let ps = Measurement::new()
                    .with(
                        vec![ModeId::h(OUT_ALICE), ModeId::v(OUT_ALICE)],
                        DetectorOutcomes::for_model(d6, config.n_max)?.any_count(),
                    )
                    .with(
                        vec![ModeId::h(OUT_BOB), ModeId::v(OUT_BOB)],
                        DetectorOutcomes::for_model(d2, config.n_max)?.any_count(),
                    );
                let selected = crate::detection::condition_on(c, &ps)?;
                p_c *= selected.probability;
                cond = selected.conditional;
            }
        }

        let corrected = match cond {
            Some(c) => {
                let correction = &corrections
                    .iter()
                    .find(|(other, _)| *other == comb)
                    .expect("all combinations calibrated")
                    .1;
                Some(correction.apply_ensemble(&c, trunc)?.0)
            }
            None => None,
        };

        if first_split.is_none() {
            first_split = Some(match &corrected {
                Some(c) => {
                    let f = c.fidelity_to_bell(Bell::Plus, OUT_ALICE, OUT_BOB)?;
                    let sectors = c.photon_number_weights();
                    let total: f64 = sectors.values().sum();
                    let w0 = sectors.get(&0).copied().unwrap_or(0.0) / total;
                    let w1 = sectors.get(&1).copied().unwrap_or(0.0) / total;
                    (p_c * f, p_c * (1.0 - f), p_c * w0, p_c * w1)
                }
                None => (0.0, 0.0, 0.0, 0.0),
            });
        }
        per_combination.push((comb, p_c));
        if let Some(c) = corrected {
            outputs.push((p_c, c));
        }
    }

    let p = per_combination[0].1;
    let p_total: f64 = per_combination.iter().map(|(_, p)| p).sum();
    let (p_s, p_e, p_e0, p_e1) = first_split.expect("at least one combination");

    let output = if p_total > 0.0 && !outputs.is_empty() {
        let mut merged: Option<MixedEnsemble> = None;
        for (p_c, ensemble) in outputs {
            let piece = ensemble.scaled(p_c / p_total);
            merged = Some(match merged {
                None => piece,
                Some(acc) => acc.merged(&piece)?,
            });
        }
        merged
    } else {
        None
    };
    let fidelity = match &output {
        Some(e) => e.fidelity_to_bell(Bell::Plus, OUT_ALICE, OUT_BOB)?,
        None => 0.0,
    };

    Ok(RunStatistics {
        p,
        p_total,
        p_s,
        p_e,
        p_e0,
        p_e1,
        fidelity,
        output,
        dropped_weight: dropped_source + dropped_circuit,
        per_combination,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Run with postselection on D_6 and D_2 switched on.
pub fn run_postselected(config: &RunConfig) -> Result<RunStatistics> {
    let mut config = config.clone();
    config.postselect = true;
    run(&config)
}

/// One draw of a source mixture: both pairs of one emission event.
#[derive(Clone, Copy, Debug)]
pub struct MixtureComponent {
    pub weight: f64,
    pub pair_12: PairSpec,
    pub pair_34: PairSpec,
}

impl MixtureComponent {
    pub fn identical(weight: f64, pair: PairSpec) -> Self {
        MixtureComponent {
            weight,
            pair_12: pair,
            pair_34: pair,
        }
    }

    /// Zero iff the two pairs carry the same (alpha, beta) ray.
    pub fn mismatch(&self) -> f64 {
        (self.pair_12.alpha * self.pair_34.beta - self.pair_12.beta * self.pair_34.alpha).norm()
    }
}

pub struct MixtureRun {
    pub stats: RunStatistics,
    /// Components whose two pairs differ; the protocol accepts them but
    /// the output fidelity drops below one.
    pub non_identical: usize,
}

/// Run on a classical mixture of pair draws. Weights are normalized.
pub fn run_mixture(components: &[MixtureComponent], base: &RunConfig) -> Result<MixtureRun> {
    if components.is_empty() {
        return Err(Error::Config("empty source mixture".into()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if total <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut non_identical = 0;
    let mut states = Vec::with_capacity(components.len());
    for c in components {
        if c.mismatch() > 1e-12 {
            non_identical += 1;
        }
        let psi = tensor(
            &ideal_pair(&c.pair_12, (1, 2)),
            &ideal_pair(&c.pair_34, (3, 4)),
        )?;
        states.push((c.weight / total, psi));
    }
    let mut config = base.clone();
    config.source = Source::Supplied(MixedEnsemble::new(states)?);
    Ok(MixtureRun {
        stats: run(&config)?,
        non_identical,
    })
}

/// Options for the dark-count budget study.
#[derive(Clone, Copy, Debug)]
pub struct DarkBudgetOptions {
    pub eta: f64,
    pub alpha_sq: f64,
    pub n_max: u32,
    /// Negligibility thresholds: nu and nu^2/gamma^2 must both fall
    /// below these (two orders of magnitude by default).
    pub nu_threshold: f64,
    pub ratio_threshold: f64,
    pub fit_points: usize,
}

impl Default for DarkBudgetOptions {
    fn default() -> Self {
        DarkBudgetOptions {
            eta: 0.5,
            alpha_sq: 0.5,
            n_max: 4,
            nu_threshold: 1e-2,
            ratio_threshold: 1e-2,
            fit_points: 5,
        }
    }
}

/// Fourfold-coincidence contributions split by how many of the four
/// counts are dark, plus fitted scaling exponents.
#[derive(Clone, Debug)]
pub struct DarkBudgetReport {
    /// P_0..P_4 at the operating point.
    pub p: [f64; 5],
    /// d ln P_i / d ln gamma, fitted over a decade around gamma.
    pub gamma_exponent: Option<[f64; 5]>,
    /// d ln P_i / d ln nu, fitted over a decade around nu.
    pub nu_exponent: Option<[f64; 5]>,
    pub negligible: bool,
}

/// The four detectors of the fourfold coincidence.
fn fourfold_groups() -> [Vec<ModeId>; 4] {
    [
        vec![ModeId::h(DET_ALICE)],
        vec![ModeId::h(DET_BOB)],
        vec![ModeId::h(OUT_ALICE), ModeId::v(OUT_ALICE)],
        vec![ModeId::h(OUT_BOB), ModeId::v(OUT_BOB)],
    ]
}

/// P_i for i dark counts among the fourfold coincidence at
/// (D_5'H, D_4'H, D_6, D_2). Each detector's click splits exactly into
/// a real-click part and a dark-only part `(1 - e^{-nu}) Pi_0`; summing
/// over which subset is dark-only partitions the total coincidence
/// probability.
fn fourfold_orders(gamma: f64, nu: f64, opts: &DarkBudgetOptions) -> Result<[f64; 5]> {
    let spec = PdcSpec::from_protocol(gamma, opts.alpha_sq, 0.0, 0.0)?;
    let source = phase_averaged_pdc(&spec, (1, 2, 3, 4), opts.n_max);
    let trunc = Truncation::new(opts.n_max);
    let (state, _) = apply_stages(&source, &circuit_stages(&Gauge::default()), trunc)?;

    let click = crate::detection::povm_conventional(opts.eta, true, opts.n_max)?;
    let quiet = crate::detection::povm_conventional(opts.eta, false, opts.n_max)?;
    let dark_only = 1.0 - (-nu).exp();
    let groups = fourfold_groups();

    let mut p = [0.0; 5];
    for mask in 0..16u32 {
        let dark = mask.count_ones() as usize;
        let mut m = Measurement::new();
        for (bit, modes) in groups.iter().enumerate() {
            let element = if mask & (1 << bit) != 0 {
                quiet.clone()
            } else {
                click.clone()
            };
            m = m.with(modes.clone(), element);
        }
        let prob = crate::detection::condition_on(&state, &m)?.probability;
        p[dark] += prob * dark_only.powi(dark as i32);
    }
    Ok(p)
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Compute the dark-count budget at an operating point `(gamma^2, nu)`
/// and fit the scaling exponents of P_0..P_4 in gamma and in nu.
pub fn dark_count_budget(
    gamma_sq: f64,
    nu: f64,
    opts: &DarkBudgetOptions,
) -> Result<DarkBudgetReport> {
    if gamma_sq <= 0.0 || gamma_sq >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "gamma_sq",
            value: gamma_sq,
            constraint: "0 < gamma^2 < 1",
        });
    }
    if nu < 0.0 {
        return Err(Error::InvalidParameter {
            name: "nu",
            value: nu,
            constraint: "nu >= 0",
        });
    }
    let gamma = gamma_sq.sqrt();
    let p = fourfold_orders(gamma, nu, opts)?;

    let (gamma_exponent, nu_exponent) = if nu > 0.0 {
        let k = opts.fit_points;
        let grid = |center: f64| -> Vec<f64> {
            (0..k)
                .map(|i| center * 10f64.powf(-0.5 + i as f64 / (k as f64 - 1.0)))
                .collect()
        };
        let gammas = grid(gamma);
        let mut samples_g: Vec<[f64; 5]> = Vec::with_capacity(k);
        for &g in &gammas {
            samples_g.push(fourfold_orders(g, nu, opts)?);
        }
        let nus = grid(nu);
        let mut samples_n: Vec<[f64; 5]> = Vec::with_capacity(k);
        for &v in &nus {
            samples_n.push(fourfold_orders(gamma, v, opts)?);
        }
        let mut ge = [0.0; 5];
        let mut ne = [0.0; 5];
        for i in 0..5 {
            let ys_g: Vec<f64> = samples_g.iter().map(|s| s[i]).collect();
            let ys_n: Vec<f64> = samples_n.iter().map(|s| s[i]).collect();
            ge[i] = loglog_slope(&gammas, &ys_g);
            ne[i] = loglog_slope(&nus, &ys_n);
        }
        (Some(ge), Some(ne))
    } else {
        (None, None)
    };

    Ok(DarkBudgetReport {
        p,
        gamma_exponent,
        nu_exponent,
        negligible: nu <= opts.nu_threshold && nu.powi(2) / gamma_sq <= opts.ratio_threshold,
    })
}

/// Convenience: the two-Bell-pair input state used by the channel
/// studies.
pub fn bell_pair_product() -> PureState {
    tensor(
        &ideal_pair(&PairSpec::balanced(), (1, 2)),
        &ideal_pair(&PairSpec::balanced(), (3, 4)),
    )
    .expect("disjoint pairs")
}
