//! Fluctuating polarization-dependent lossy channels: which channel
//! statistics leave the purification scheme usable, the cross-ratio F
//! and its compensation, the single-pair concentration alternative,
//! and the fiber time-delay scenario.
//!
//! Two Bell pairs enter eight lossy channels `mu_kL` (spatial k = 1..4,
//! polarization L). The four-photon part of the output is again a
//! product of two partially entangled pairs whose coefficients are set
//! by the transmissivities; averaging over fluctuations yields a
//! purifiable mixture exactly when `P |a12 b34 - b12 a34|^2` averages
//! to zero, equivalently when F = (mu_1H mu_2H mu_3V mu_4V)/(mu_1V
//! mu_2V mu_3H mu_4H) is constant and compensated to one.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detection::DetectorKind;
use crate::error::{Error, Result};
use crate::fock::{
    registry_of, spatial_registry, Bell, MixedEnsemble, ModeId, ModeRegistry, Occupation,
    Polarization, PureState,
};
use crate::optics::{lossy_channel, mode_swap, phase_shift, Truncation};
use crate::protocol::{
    bell_pair_product, run, run_mixture, DetectorBank, MixtureComponent, RunConfig, Source,
};
use crate::sources::{ideal_pair, PairSpec};

/// Spatial offset of the loss ancilla for channel mode k.
const LOSS_ANCILLA_OFFSET: u16 = 100;

/// One draw of the eight channel transmissivities.
#[derive(Clone, Copy, Debug)]
pub struct ChannelSample {
    /// Indexed by spatial label 1..4 and polarization (H, V).
    mu: [[Complex64; 2]; 4],
}

impl ChannelSample {
    pub fn new(mu: [[Complex64; 2]; 4]) -> Result<Self> {
        for row in &mu {
            for m in row {
                if m.norm() > 1.0 + 1e-12 {
                    return Err(Error::InvalidParameter {
                        name: "mu",
                        value: m.norm(),
                        constraint: "|mu| <= 1",
                    });
                }
            }
        }
        Ok(ChannelSample { mu })
    }

    pub fn lossless() -> Self {
        ChannelSample {
            mu: [[Complex64::new(1.0, 0.0); 2]; 4],
        }
    }

    pub fn mu(&self, spatial: u16, pol: Polarization) -> Complex64 {
        let k = (spatial - 1) as usize;
        let l = match pol {
            Polarization::H => 0,
            Polarization::V => 1,
        };
        self.mu[k][l]
    }

    pub fn with_mu(mut self, spatial: u16, pol: Polarization, value: Complex64) -> Result<Self> {
        if value.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: value.norm(),
                constraint: "|mu| <= 1",
            });
        }
        let k = (spatial - 1) as usize;
        let l = match pol {
            Polarization::H => 0,
            Polarization::V => 1,
        };
        self.mu[k][l] = value;
        Ok(self)
    }

    /// |mu|^2 table for the closed-form weight.
    pub fn mu_sq_table(&self) -> [[f64; 2]; 4] {
        let mut out = [[0.0; 2]; 4];
        for (k, row) in self.mu.iter().enumerate() {
            for (l, m) in row.iter().enumerate() {
                out[k][l] = m.norm_sqr();
            }
        }
        out
    }
}

pub struct TransmitResult {
    /// Reduced state on modes 1-4 after tracing the loss ancillas,
    /// including the lost-photon components.
    pub full: MixedEnsemble,
    /// Weight of the component with all four photons intact.
    pub four_photon_weight: f64,
    /// The four-photon component, normalized. None when every photon
    /// path is fully absorbing.
    pub conditional: Option<MixedEnsemble>,
}

/// Send `|Phi+>_12 |Phi+>_34` through the eight lossy channels.
pub fn transmit(sample: &ChannelSample) -> Result<TransmitResult> {
    let mut state = bell_pair_product();
    let mut ancillas: Vec<ModeId> = Vec::with_capacity(8);
    let trunc = Truncation::exact(4);
    for spatial in 1..=4u16 {
        for pol in [Polarization::H, Polarization::V] {
            let mode = ModeId::new(spatial, pol);
            let ancilla = ModeId::new(spatial + LOSS_ANCILLA_OFFSET, pol);
            ancillas.push(ancilla);
            state = state.with_modes(&[ancilla]);
            state = lossy_channel(mode, sample.mu(spatial, pol), ancilla)?
                .apply(&state, trunc)?
                .state;
        }
    }
    let full = MixedEnsemble::from_pure(state)?.trace_out(&registry_of(&ancillas))?;
    let four_photon_weight = full
        .photon_number_weights()
        .get(&4)
        .copied()
        .unwrap_or(0.0);
    let conditional = if four_photon_weight > 0.0 {
        let comps: Vec<_> = full
            .components()
            .iter()
            .filter(|(_, s)| s.max_photons() == 4)
            .map(|(w, s)| (w / four_photon_weight, s.clone()))
            .collect();
        Some(MixedEnsemble::new(comps)?)
    } else {
        None
    };
    Ok(TransmitResult {
        full,
        four_photon_weight,
        conditional,
    })
}

/// Pair coefficients of the four-photon component:
/// `a12 = mu_1H mu_2H / sqrt(|mu_1H mu_2H|^2 + |mu_1V mu_2V|^2)` and so
/// on. None when a pair is fully absorbed.
pub fn pair_coefficients(sample: &ChannelSample) -> Option<(PairSpec, PairSpec)> {
    let build = |h: Complex64, v: Complex64| -> Option<PairSpec> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if norm == 0.0 {
            return None;
        }
        PairSpec::new(h / norm, v / norm).ok()
    };
    let pair12 = build(
        sample.mu(1, Polarization::H) * sample.mu(2, Polarization::H),
        sample.mu(1, Polarization::V) * sample.mu(2, Polarization::V),
    )?;
    let pair34 = build(
        sample.mu(3, Polarization::H) * sample.mu(4, Polarization::H),
        sample.mu(3, Polarization::V) * sample.mu(4, Polarization::V),
    )?;
    Some((pair12, pair34))
}

/// The purifiability cross-ratios. None marks a vanishing denominator.
#[derive(Clone, Copy, Debug)]
pub struct FFactors {
    pub f: Option<Complex64>,
    pub f_a: Option<Complex64>,
    pub f_b: Option<Complex64>,
}

pub fn f_factors(sample: &ChannelSample) -> FFactors {
    let ratio = |num: Complex64, den: Complex64| -> Option<Complex64> {
        if den.norm_sqr() == 0.0 {
            None
        } else {
            Some(num / den)
        }
    };
    let f = ratio(
        sample.mu(1, Polarization::H)
            * sample.mu(2, Polarization::H)
            * sample.mu(3, Polarization::V)
            * sample.mu(4, Polarization::V),
        sample.mu(1, Polarization::V)
            * sample.mu(2, Polarization::V)
            * sample.mu(3, Polarization::H)
            * sample.mu(4, Polarization::H),
    );
    let f_a = ratio(
        sample.mu(1, Polarization::H) * sample.mu(3, Polarization::V),
        sample.mu(1, Polarization::V) * sample.mu(3, Polarization::H),
    );
    let f_b = ratio(
        sample.mu(2, Polarization::H) * sample.mu(4, Polarization::V),
        sample.mu(2, Polarization::V) * sample.mu(4, Polarization::H),
    );
    FFactors { f, f_a, f_b }
}

/// A distribution over channel draws.
pub struct FluctuationProcess {
    sampler: Box<dyn Fn(&mut ChaCha8Rng) -> ChannelSample + Send + Sync>,
}

impl FluctuationProcess {
    pub fn constant(sample: ChannelSample) -> Self {
        FluctuationProcess {
            sampler: Box::new(move |_| sample),
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> ChannelSample + Send + Sync + 'static,
    {
        FluctuationProcess {
            sampler: Box::new(f),
        }
    }

    /// Fixed magnitudes, each mode phase independent uniform.
    pub fn independent_uniform_phases(magnitudes: [[f64; 2]; 4]) -> Self {
        FluctuationProcess::from_fn(move |rng| {
            let mut mu = [[Complex64::new(0.0, 0.0); 2]; 4];
            for (k, row) in magnitudes.iter().enumerate() {
                for (l, &mag) in row.iter().enumerate() {
                    mu[k][l] =
                        Complex64::from_polar(mag, rng.gen_range(0.0..std::f64::consts::TAU));
                }
            }
            ChannelSample::new(mu).expect("magnitudes validated by caller")
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ChannelSample {
        (self.sampler)(rng)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PurifiabilityReport {
    /// Monte Carlo estimate of `<P |a12 b34 - b12 a34|^2>`.
    pub condition: f64,
    pub condition_stderr: f64,
    pub purifiable: bool,
    /// Fidelity after feeding the post-selected four-photon mixture
    /// through the purification protocol with perfect detectors.
    pub post_fidelity: f64,
    pub mean_four_photon_weight: f64,
    /// Set when F was defined and identical across all draws.
    pub constant_f: Option<Complex64>,
}

/// Estimate the purifiability condition for a channel process.
pub fn purifiability(
    process: &FluctuationProcess,
    n_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<PurifiabilityReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            value: 0.0,
            constraint: "n_samples >= 1",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_samples);
    let mut mismatch_terms = Vec::with_capacity(n_samples);
    let mut weight_sum = 0.0;
    let mut f_values: Vec<Option<Complex64>> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let sample = process.sample(&mut rng);
        let weight = crate::reference::channel_four_photon_weight(&sample.mu_sq_table());
        f_values.push(f_factors(&sample).f);
        weight_sum += weight;
        let term = match pair_coefficients(&sample) {
            Some((pair_12, pair_34)) => {
                let mismatch = (pair_12.alpha * pair_34.beta - pair_12.beta * pair_34.alpha)
                    .norm_sqr();
                draws.push(MixtureComponent {
                    weight,
                    pair_12,
                    pair_34,
                });
                weight * mismatch
            }
            None => 0.0,
        };
        mismatch_terms.push(term);
    }
    let n = n_samples as f64;
    let condition: f64 = mismatch_terms.iter().sum::<f64>() / n;
    let variance: f64 =
        mismatch_terms.iter().map(|t| (t - condition).powi(2)).sum::<f64>() / n.max(2.0);
    let condition_stderr = (variance / n).sqrt();

    let post_fidelity = if draws.is_empty() {
        0.0
    } else {
        let base = RunConfig::new(
            Source::Ideal(PairSpec::balanced()),
            DetectorBank::ideal(DetectorKind::SinglePhoton),
        );
        run_mixture(&draws, &base)?.stats.fidelity
    };

    let constant_f = match f_values.split_first() {
        Some((Some(first), rest))
            if rest
                .iter()
                .all(|f| f.is_some_and(|v| (v - first).norm() < 1e-9)) =>
        {
            Some(*first)
        }
        _ => None,
    };

    Ok(PurifiabilityReport {
        condition,
        condition_stderr,
        purifiable: condition <= tol.max(3.0 * condition_stderr),
        post_fidelity,
        mean_four_photon_weight: weight_sum / n,
        constant_f,
    })
}

/// The local attenuation-plus-phase that restores F = 1.
#[derive(Clone, Copy, Debug)]
pub struct Compensation {
    pub mode: ModeId,
    pub factor: Complex64,
}

/// For a constant F, attenuate the H side by 1/F when |F| >= 1 and the
/// V side by F otherwise, so the compensating factor never amplifies.
pub fn compensate(f: Complex64) -> Compensation {
    if f.norm() >= 1.0 {
        Compensation {
            mode: ModeId::h(1),
            factor: f.inv(),
        }
    } else {
        Compensation {
            mode: ModeId::v(1),
            factor: f,
        }
    }
}

impl Compensation {
    pub fn is_identity(&self) -> bool {
        (self.factor - Complex64::new(1.0, 0.0)).norm() < 1e-15
    }

    /// Fold the compensation into a channel draw.
    pub fn applied_to(&self, sample: &ChannelSample) -> Result<ChannelSample> {
        sample
            .with_mu(
                self.mode.spatial,
                self.mode.pol,
                sample.mu(self.mode.spatial, self.mode.pol) * self.factor,
            )
    }

    /// Wrap a process so every draw is compensated.
    pub fn wrap(self, process: FluctuationProcess) -> FluctuationProcess {
        FluctuationProcess::from_fn(move |rng| {
            let sample = process.sample(rng);
            self.applied_to(&sample)
                .expect("|factor| <= 1 keeps |mu| <= 1")
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProcrusteanReport {
    pub success_probability: f64,
    pub fidelity: f64,
}

/// Single-pair concentration for a known pure pair: attenuate the
/// larger amplitude down to the smaller one and post-select on both
/// photons surviving. Success probability `2 min(|alpha|^2, |beta|^2)`.
pub fn procrustean(spec: &PairSpec) -> Result<ProcrusteanReport> {
    let (target_mode, ratio) = if spec.alpha.norm() >= spec.beta.norm() {
        (ModeId::h(1), if spec.alpha.norm() == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            spec.beta / spec.alpha
        })
    } else {
        (ModeId::v(1), spec.alpha / spec.beta)
    };
    let pair = ideal_pair(spec, (1, 2));
    let ancilla = ModeId::new(target_mode.spatial + LOSS_ANCILLA_OFFSET, target_mode.pol);
    let state = pair.with_modes(&[ancilla]);
    let state = lossy_channel(target_mode, ratio, ancilla)?
        .apply(&state, Truncation::exact(2))?
        .state;
    let reduced = MixedEnsemble::from_pure(state)?.trace_out(&registry_of(&[ancilla]))?;

    let survived: Vec<_> = reduced
        .components()
        .iter()
        .filter(|(_, s)| s.max_photons() == 2)
        .cloned()
        .collect();
    let success_probability: f64 = survived.iter().map(|(w, _)| w).sum();
    let fidelity = if success_probability > 0.0 {
        MixedEnsemble::new(survived)?
            .normalized()?
            .fidelity_to_bell(Bell::Plus, 1, 2)?
    } else {
        0.0
    };
    Ok(ProcrusteanReport {
        success_probability,
        fidelity,
    })
}

/// The concentration step needs a known constant pair; probe the
/// process and refuse when the draws disagree.
pub fn procrustean_for_process(
    process: &FluctuationProcess,
    n_probe: usize,
    seed: u64,
) -> Result<ProcrusteanReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first: Option<PairSpec> = None;
    for _ in 0..n_probe.max(2) {
        let sample = process.sample(&mut rng);
        let (pair, _) = pair_coefficients(&sample).ok_or(Error::ProcrusteanUnknownState)?;
        match &first {
            None => first = Some(pair),
            Some(p) => {
                let drift = (p.alpha - pair.alpha).norm() + (p.beta - pair.beta).norm();
                if drift > 1e-9 {
                    return Err(Error::ProcrusteanUnknownState);
                }
            }
        }
    }
    procrustean(&first.expect("probed at least twice"))
}

/// Fiber time-delay cases: which of the common-mode (tau_plus) and
/// differential (tau_minus) phase processes stay correlated across the
/// delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiberCase {
    /// `dt << tau_plus, tau_minus`
    A,
    /// `tau_plus << dt << tau_minus`
    B,
    /// `tau_minus << dt << tau_plus`
    C,
    /// `tau_plus, tau_minus << dt`
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapStrategy {
    /// Apply the case's documented remedy (case A: exchange modes 1V
    /// and 3H around the fiber; case C: exchange 1V and 3V).
    Auto,
    None,
}

#[derive(Clone, Copy, Debug)]
pub struct FiberReport {
    pub case_: FiberCase,
    pub swap: Option<(ModeId, ModeId)>,
    /// Fidelity of one received pair before purification.
    pub raw_fidelity: f64,
    /// Output fidelity of the purification protocol.
    pub purified_fidelity: f64,
    /// Estimate of the purifiability condition.
    pub condition: f64,
    pub purifies: bool,
}

/// Phase-pair regimes: below this delay-to-correlation ratio the two
/// draws are taken exactly equal, above its inverse exactly
/// independent; in between an exponentially correlated Gaussian pair is
/// used.
const REGIME_RATIO: f64 = 0.1;

fn sample_phase_pair(rng: &mut ChaCha8Rng, tau: f64, dt: f64) -> (f64, f64) {
    let ratio = dt / tau;
    if ratio <= REGIME_RATIO {
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        (phi, phi)
    } else if ratio >= 1.0 / REGIME_RATIO {
        (
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
        )
    } else {
        // Stationary Gaussian with exponential correlation; sigma wide
        // enough to scramble the phase.
        let sigma = std::f64::consts::TAU;
        let rho = (-ratio).exp();
        let z1: f64 = sample_standard_normal(rng);
        let z2: f64 = sample_standard_normal(rng);
        (
            sigma * z1,
            sigma * (rho * z1 + (1.0 - rho * rho).sqrt() * z2),
        )
    }
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Simulate the fiber-delay scenario: Bob sends one member of each pair
/// through the same fiber separated by `dt`, optionally exchanging
/// modes around the transmission, and the parties purify what arrives.
pub fn fiber_scenario(
    case: FiberCase,
    tau_plus: f64,
    tau_minus: f64,
    dt: f64,
    n_samples: usize,
    swap_strategy: SwapStrategy,
    seed: u64,
    tol: f64,
) -> Result<FiberReport> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            value: 0.0,
            constraint: "n_samples >= 1",
        });
    }
    let swap = match (swap_strategy, case) {
        (SwapStrategy::Auto, FiberCase::A) => Some((ModeId::v(1), ModeId::h(3))),
        (SwapStrategy::Auto, FiberCase::C) => Some((ModeId::v(1), ModeId::v(3))),
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trunc = Truncation::exact(4);
    let base = bell_pair_product();
    let mut components = Vec::with_capacity(n_samples);
    let mut condition_sum = 0.0;

    for _ in 0..n_samples {
        let (phi_p1, phi_p2) = sample_phase_pair(&mut rng, tau_plus, dt);
        let (phi_m1, phi_m2) = sample_phase_pair(&mut rng, tau_minus, dt);
        let phases = [
            (ModeId::h(1), phi_p1 + phi_m1),
            (ModeId::v(1), phi_p1 - phi_m1),
            (ModeId::h(3), phi_p2 + phi_m2),
            (ModeId::v(3), phi_p2 - phi_m2),
        ];
        let mut state = base.clone();
        if let Some((a, b)) = swap {
            state = mode_swap(a, b).apply(&state, trunc)?.state;
        }
        for (mode, phi) in phases {
            state = phase_shift(mode, phi).apply(&state, trunc)?.state;
        }
        if let Some((a, b)) = swap {
            state = mode_swap(a, b).apply(&state, trunc)?.state;
        }
        condition_sum += pair_mismatch(&state)?;
        components.push((1.0 / n_samples as f64, state));
    }

    let ensemble = MixedEnsemble::new(components)?;
    let raw_fidelity = ensemble
        .trace_out(&spatial_registry(&[3, 4]))?
        .fidelity_to_bell(Bell::Plus, 1, 2)?;
    let config = RunConfig::new(
        Source::Supplied(ensemble),
        DetectorBank::ideal(DetectorKind::SinglePhoton),
    );
    let purified_fidelity = run(&config)?.fidelity;
    Ok(FiberReport {
        case_: case,
        swap,
        raw_fidelity,
        purified_fidelity,
        condition: condition_sum / n_samples as f64,
        purifies: purified_fidelity >= 1.0 - tol,
    })
}

/// `|a12 b34 - b12 a34|^2` of a pure two-pair product state.
fn pair_mismatch(state: &PureState) -> Result<f64> {
    let amp = |p1: Polarization, p2: Polarization| {
        state.amplitude(&Occupation::new(&[
            (ModeId::new(1, p1), 1),
            (ModeId::new(2, p1), 1),
            (ModeId::new(3, p2), 1),
            (ModeId::new(4, p2), 1),
        ]))
    };
    let c_hh = amp(Polarization::H, Polarization::H);
    let c_hv = amp(Polarization::H, Polarization::V);
    let c_vh = amp(Polarization::V, Polarization::H);
    if c_hh.norm_sqr() == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // c_xu = a_x b_u: read the pair amplitudes off one row and column.
    let n_a = (c_hh.norm_sqr() + c_vh.norm_sqr()).sqrt();
    let n_b = (c_hh.norm_sqr() + c_hv.norm_sqr()).sqrt();
    let (a12, b12) = (c_hh / n_a, c_vh / n_a);
    let (a34, b34) = (c_hh / n_b, c_hv / n_b);
    Ok((a12 * b34 - b12 * a34).norm_sqr())
}

/// Registry of the modes a [`ChannelSample`] acts on; handy for tests.
pub fn channel_registry() -> ModeRegistry {
    spatial_registry(&[1, 2, 3, 4])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lossless_transmission_is_identity() {
        let result = transmit(&ChannelSample::lossless()).unwrap();
        assert!((result.four_photon_weight - 1.0).abs() < 1e-12);
        let cond = result.conditional.unwrap();
        let f = cond
            .matrix_element(&bell_pair_product(), &bell_pair_product())
            .unwrap();
        assert!((f.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opaque_v_channel_breaks_the_first_pair() {
        // mu_1V = 0: the pair-12 four-photon part is the product state.
        let sample = ChannelSample::lossless()
            .with_mu(1, Polarization::V, c(0.0, 0.0))
            .unwrap();
        let (pair12, pair34) = pair_coefficients(&sample).unwrap();
        assert!((pair12.alpha_sq() - 1.0).abs() < 1e-15);
        assert!(pair12.beta_sq() < 1e-15);
        assert!((pair34.alpha_sq() - 0.5).abs() < 1e-15);
        let result = transmit(&sample).unwrap();
        assert!((result.four_photon_weight - 0.25).abs() < 1e-12);
    }

    #[test]
    fn four_photon_weight_matches_formula_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut mu = [[c(0.0, 0.0); 2]; 4];
            for row in &mut mu {
                for entry in row.iter_mut() {
                    *entry = Complex64::from_polar(
                        rng.gen_range(0.2..1.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    );
                }
            }
            let sample = ChannelSample::new(mu).unwrap();
            let expect = crate::reference::channel_four_photon_weight(&sample.mu_sq_table());
            let got = transmit(&sample).unwrap().four_photon_weight;
            assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        }
    }

    #[test]
    fn transmitted_conditional_matches_pair_coefficients() {
        let sample = ChannelSample::lossless()
            .with_mu(1, Polarization::H, c(0.9, 0.1))
            .unwrap()
            .with_mu(3, Polarization::V, Complex64::from_polar(0.7, 1.3))
            .unwrap()
            .with_mu(4, Polarization::H, c(0.5, -0.4))
            .unwrap();
        let (pair12, pair34) = pair_coefficients(&sample).unwrap();
        let want = crate::fock::tensor(
            &ideal_pair(&pair12, (1, 2)),
            &ideal_pair(&pair34, (3, 4)),
        )
        .unwrap();
        let cond = transmit(&sample).unwrap().conditional.unwrap();
        let f = cond.fidelity_to(&want).unwrap() / cond.weight_sum();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_identity_and_undefined_cases() {
        // All mu equal: F = 1.
        let f = f_factors(&ChannelSample::lossless());
        assert!((f.f.unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        // Phase-only change rotates F without changing |F|.
        let sample = ChannelSample::lossless()
            .with_mu(1, Polarization::H, Complex64::from_polar(1.0, 0.8))
            .unwrap();
        let f = f_factors(&sample).f.unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert!((f.arg() - 0.8).abs() < 1e-12);
        // F = F_A * F_B on random samples.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut mu = [[c(0.0, 0.0); 2]; 4];
            for row in &mut mu {
                for entry in row.iter_mut() {
                    *entry = Complex64::from_polar(
                        rng.gen_range(0.1..1.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    );
                }
            }
            let factors = f_factors(&ChannelSample::new(mu).unwrap());
            let (f, fa, fb) = (
                factors.f.unwrap(),
                factors.f_a.unwrap(),
                factors.f_b.unwrap(),
            );
            assert!((f - fa * fb).norm() < 1e-12);
        }
        // Zero denominator reported as undefined.
        let sample = ChannelSample::lossless()
            .with_mu(3, Polarization::H, c(0.0, 0.0))
            .unwrap();
        assert!(f_factors(&sample).f.is_none());
        assert!(f_factors(&sample).f_a.is_none());
    }

    #[test]
    fn constant_channel_purifiability() {
        // A deterministic lossless channel purifies trivially.
        let process = FluctuationProcess::constant(ChannelSample::lossless());
        let report = purifiability(&process, 10, 1, 1e-12).unwrap();
        assert!(report.purifiable);
        assert!(report.condition < 1e-15);
        assert!((report.post_fidelity - 1.0).abs() < 1e-9);
        assert_eq!(
            report.constant_f.map(|f| (f - c(1.0, 0.0)).norm() < 1e-12),
            Some(true)
        );
    }

    #[test]
    fn common_phase_fluctuations_stay_purifiable() {
        // F_A and F_B constant across draws: the mixture keeps the
        // purifiable product form even though each draw differs.
        let process = FluctuationProcess::from_fn(|rng| {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let att = rng.gen_range(0.5..1.0);
            // Common phase/attenuation on both polarizations of mode 1
            // and an independent common factor on mode 3.
            let m1 = Complex64::from_polar(att, theta);
            let theta3 = rng.gen_range(0.0..std::f64::consts::TAU);
            let m3 = Complex64::from_polar(1.0, theta3);
            ChannelSample::new([[m1, m1], [c(1.0, 0.0); 2], [m3, m3], [c(1.0, 0.0); 2]])
                .unwrap()
        });
        let report = purifiability(&process, 200, 5, 1e-12).unwrap();
        assert!(report.purifiable, "condition {:.3e}", report.condition);
        assert!((report.post_fidelity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phase_scrambled_f_is_not_purifiable() {
        let process = FluctuationProcess::independent_uniform_phases([[1.0; 2]; 4]);
        let report = purifiability(&process, 500, 9, 1e-12).unwrap();
        assert!(!report.purifiable);
        assert!(report.condition > 0.1);
        assert!(report.post_fidelity < 0.9);
        assert!(report.constant_f.is_none());
    }

    #[test]
    fn constant_f_compensation_restores_purifiability() {
        let f = Complex64::from_polar(0.5, std::f64::consts::PI / 3.0);
        // Constant F != 1, carried entirely by mu_1H = F (|F| < 1), plus
        // a fluctuating common phase on every mode.
        let base = ChannelSample::lossless()
            .with_mu(1, Polarization::H, f)
            .unwrap();
        let process = FluctuationProcess::from_fn(move |rng| {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let common = Complex64::from_polar(1.0, theta);
            let mut mu = [[c(0.0, 0.0); 2]; 4];
            for k in 1..=4u16 {
                for pol in [Polarization::H, Polarization::V] {
                    let l = if pol == Polarization::H { 0 } else { 1 };
                    mu[(k - 1) as usize][l] = base.mu(k, pol) * common;
                }
            }
            ChannelSample::new(mu).unwrap()
        });
        let before = purifiability(&process, 100, 21, 1e-12).unwrap();
        assert!(!before.purifiable);
        assert!(before.post_fidelity < 1.0 - 1e-3);
        let measured_f = before.constant_f.expect("constant F");
        assert!((measured_f - f).norm() < 1e-9);

        let fixed = compensate(measured_f).wrap(process);
        let after = purifiability(&fixed, 100, 22, 1e-12).unwrap();
        assert!(after.purifiable, "condition {:.3e}", after.condition);
        assert!(after.condition < 1e-12);
        assert!((after.post_fidelity - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compensation_directions() {
        // |F| > 1 attenuates the H side; |F| < 1 the V side; F = 1 is
        // the identity.
        let comp = compensate(c(2.0, 0.0));
        assert_eq!(comp.mode, ModeId::h(1));
        assert!((comp.factor - c(0.5, 0.0)).norm() < 1e-15);
        let comp = compensate(c(0.5, 0.0));
        assert_eq!(comp.mode, ModeId::v(1));
        assert!((comp.factor - c(0.5, 0.0)).norm() < 1e-15);
        assert!(compensate(c(1.0, 0.0)).is_identity());
    }

    #[test]
    fn procrustean_balanced_pair_needs_no_attenuation() {
        let report = procrustean(&PairSpec::balanced()).unwrap();
        assert!((report.success_probability - 1.0).abs() < 1e-12);
        assert!((report.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn procrustean_success_is_twice_the_smaller_weight() {
        let spec = PairSpec::from_alpha_sq(0.8, 0.0).unwrap();
        let report = procrustean(&spec).unwrap();
        assert!((report.success_probability - 0.4).abs() < 1e-12);
        assert!((report.fidelity - 1.0).abs() < 1e-12);
        // Also with the larger weight on V and a relative phase.
        let spec = PairSpec::from_alpha_sq(0.3, 1.1).unwrap();
        let report = procrustean(&spec).unwrap();
        assert!((report.success_probability - 0.6).abs() < 1e-12);
        assert!((report.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn procrustean_rejects_fluctuating_pairs() {
        let process = FluctuationProcess::independent_uniform_phases([[1.0; 2]; 4]);
        assert!(matches!(
            procrustean_for_process(&process, 5, 2),
            Err(Error::ProcrusteanUnknownState)
        ));
        let constant = FluctuationProcess::constant(
            ChannelSample::lossless()
                .with_mu(1, Polarization::H, c(0.6, 0.0))
                .unwrap(),
        );
        let report = procrustean_for_process(&constant, 5, 2).unwrap();
        assert!((report.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fiber_cases_match_expectations() {
        let dt = 1.0;
        let long = 1e3;
        let short = 1e-3;
        let n = 64;
        let tol = 1e-9;

        // Case A: swap remedy alone restores the Bell pairs.
        let a = fiber_scenario(FiberCase::A, long, long, dt, n, SwapStrategy::Auto, 1, tol)
            .unwrap();
        assert!((a.raw_fidelity - 1.0).abs() < 1e-12);
        assert!(a.purifies);

        // Case B: raw pairs are dephased but purification works.
        let b = fiber_scenario(FiberCase::B, short, long, dt, n, SwapStrategy::Auto, 2, tol)
            .unwrap();
        assert!(b.raw_fidelity < 0.95);
        assert!(b.purifies, "condition {:.3e}", b.condition);
        assert!((b.purified_fidelity - 1.0).abs() < tol);

        // Case C: the 1V/3V exchange reduces to case B.
        let c_rep =
            fiber_scenario(FiberCase::C, long, short, dt, n, SwapStrategy::Auto, 3, tol)
                .unwrap();
        assert!(c_rep.purifies);
        // Without the remedy, case C does not purify.
        let c_bare =
            fiber_scenario(FiberCase::C, long, short, dt, n, SwapStrategy::None, 3, tol)
                .unwrap();
        assert!(!c_bare.purifies);

        // Case D: nothing helps.
        let d = fiber_scenario(FiberCase::D, short, short, dt, 2000, SwapStrategy::Auto, 4, tol)
            .unwrap();
        assert!(!d.purifies);
        assert!(d.purified_fidelity < 0.99);
    }
}
