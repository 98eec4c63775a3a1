//! Input-state construction: ideal partially entangled pairs, pulsed
//! parametric down-conversion, and the pump-phase-averaged mixture.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{
    spatial_registry, MixedEnsemble, ModeId, Occupation, PureState, NORM_TOL,
};

/// A partially entangled pair `alpha |1_H 1_H> + beta |1_V 1_V>`.
#[derive(Clone, Copy, Debug)]
pub struct PairSpec {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl PairSpec {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter {
                name: "pair amplitudes",
                value: n,
                constraint: "|alpha|^2 + |beta|^2 = 1",
            });
        }
        Ok(PairSpec { alpha, beta })
    }

    /// Real `alpha = sqrt(alpha_sq)`, `beta = sqrt(1 - alpha_sq) e^{i rel_phase}`.
    pub fn from_alpha_sq(alpha_sq: f64, rel_phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_sq) {
            return Err(Error::InvalidParameter {
                name: "alpha_sq",
                value: alpha_sq,
                constraint: "0 <= |alpha|^2 <= 1",
            });
        }
        Ok(PairSpec {
            alpha: Complex64::new(alpha_sq.sqrt(), 0.0),
            beta: Complex64::from_polar((1.0 - alpha_sq).sqrt(), rel_phase),
        })
    }

    /// The maximally entangled pair.
    pub fn balanced() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        PairSpec {
            alpha: Complex64::new(r, 0.0),
            beta: Complex64::new(r, 0.0),
        }
    }

    pub fn alpha_sq(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn beta_sq(&self) -> f64 {
        self.beta.norm_sqr()
    }
}

/// Two-crystal down-conversion source parameters.
///
/// `gamma_h` and `gamma_v` are the complex pump couplings of the H and
/// V crystals. Derived quantities follow the usual two-mode-squeezed
/// conventions: per-crystal expansion parameters
/// `lambda_X = (gamma_X/|gamma_X|) tanh|gamma_X|`, the pair parameter
/// `gamma = sqrt(|lambda_H|^2 + |lambda_V|^2)`, the vacuum weight
/// `g = sech^2|gamma_H| sech^2|gamma_V|`, and the effective pair
/// amplitudes `alpha = lambda_H e^{-i phi_p}/gamma`,
/// `beta = lambda_V e^{-i phi_p}/gamma` with pump phase
/// `phi_p = (arg gamma_H + arg gamma_V)/2`.
#[derive(Clone, Copy, Debug)]
pub struct PdcSpec {
    gamma_h: Complex64,
    gamma_v: Complex64,
}

impl PdcSpec {
    pub fn new(gamma_h: Complex64, gamma_v: Complex64) -> Result<Self> {
        let spec = PdcSpec { gamma_h, gamma_v };
        let g = spec.gamma();
        if g >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: g,
                constraint: "gamma < 1",
            });
        }
        Ok(spec)
    }

    /// Build from the protocol-level parameters: pair parameter `gamma`,
    /// `|alpha|^2`, pump phase difference `dphi_p`, and common pump
    /// phase `phi_p`.
    pub fn from_protocol(gamma: f64, alpha_sq: f64, dphi_p: f64, phi_p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                constraint: "0 <= gamma < 1",
            });
        }
        if !(0.0..=1.0).contains(&alpha_sq) {
            return Err(Error::InvalidParameter {
                name: "alpha_sq",
                value: alpha_sq,
                constraint: "0 <= |alpha|^2 <= 1",
            });
        }
        let th = gamma * alpha_sq.sqrt();
        let tv = gamma * (1.0 - alpha_sq).sqrt();
        let gamma_h = Complex64::from_polar(th.atanh(), phi_p + dphi_p / 2.0);
        let gamma_v = Complex64::from_polar(tv.atanh(), phi_p - dphi_p / 2.0);
        PdcSpec::new(gamma_h, gamma_v)
    }

    /// Per-crystal expansion coefficient `(gamma_X/|gamma_X|) tanh|gamma_X|`.
    fn lambda(&self, coupling: Complex64) -> Complex64 {
        let mag = coupling.norm();
        if mag == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(mag.tanh(), coupling.arg())
        }
    }

    pub fn lambda_h(&self) -> Complex64 {
        self.lambda(self.gamma_h)
    }

    pub fn lambda_v(&self) -> Complex64 {
        self.lambda(self.gamma_v)
    }

    pub fn gamma(&self) -> f64 {
        (self.lambda_h().norm_sqr() + self.lambda_v().norm_sqr()).sqrt()
    }

    /// Vacuum weight `sech^2 |gamma_H| sech^2 |gamma_V|`.
    pub fn g(&self) -> f64 {
        let sech2 = |x: f64| 1.0 / x.cosh().powi(2);
        sech2(self.gamma_h.norm()) * sech2(self.gamma_v.norm())
    }

    pub fn phi_p(&self) -> f64 {
        (self.gamma_h.arg() + self.gamma_v.arg()) / 2.0
    }

    /// Effective pair spec of the one-pair sector.
    pub fn pair(&self) -> Result<PairSpec> {
        let gamma = self.gamma();
        if gamma == 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: 0.0,
                constraint: "gamma > 0 to define pair amplitudes",
            });
        }
        let rot = Complex64::from_polar(1.0, -self.phi_p());
        PairSpec::new(
            self.lambda_h() * rot / gamma,
            self.lambda_v() * rot / gamma,
        )
    }
}

/// `alpha |1_aH 1_bH> + beta |1_aV 1_bV>` on spatial modes (a, b).
pub fn ideal_pair(spec: &PairSpec, modes: (u16, u16)) -> PureState {
    let (a, b) = modes;
    let registry = spatial_registry(&[a, b]);
    let hh = Occupation::new(&[(ModeId::h(a), 1), (ModeId::h(b), 1)]);
    let vv = Occupation::new(&[(ModeId::v(a), 1), (ModeId::v(b), 1)]);
    PureState::from_terms(registry, vec![(hh, spec.alpha), (vv, spec.beta)])
        .expect("pair construction cannot fail")
}

/// Truncated two-crystal down-converted state on spatial modes (a, b):
/// `sqrt(g) sum_{n,m} lambda_H^n lambda_V^m |n_aH n_bH m_aV m_bV>`
/// keeping terms with total photon number `2(n + m) <= n_max`.
///
/// The result is sub-normalized; `1 - |psi|^2` is the truncated tail.
pub fn pdc_single(spec: &PdcSpec, modes: (u16, u16), n_max: u32) -> PureState {
    let (a, b) = modes;
    let registry = spatial_registry(&[a, b]);
    let sqrt_g = spec.g().sqrt();
    let lh = spec.lambda_h();
    let lv = spec.lambda_v();
    let max_pairs = n_max / 2;
    let mut terms = Vec::new();
    for n in 0..=max_pairs {
        for m in 0..=(max_pairs - n) {
            let amp = sqrt_g * lh.powu(n) * lv.powu(m);
            if amp.norm_sqr() == 0.0 && (n, m) != (0, 0) {
                continue;
            }
            let occ = Occupation::new(&[
                (ModeId::h(a), n),
                (ModeId::h(b), n),
                (ModeId::v(a), m),
                (ModeId::v(b), m),
            ]);
            terms.push((occ, amp));
        }
    }
    PureState::from_terms(registry, terms).expect("pdc construction cannot fail")
}

/// Double-pass source: the same crystal pumped twice, pairs (a, b) and
/// (c, d). Truncated at `n_max` total photons across all four modes.
pub fn pdc_double(spec: &PdcSpec, modes: (u16, u16, u16, u16), n_max: u32) -> PureState {
    let (a, b, c, d) = modes;
    let first = pdc_single(spec, (a, b), n_max);
    let second = pdc_single(spec, (c, d), n_max);
    let product = crate::fock::tensor(&first, &second).expect("disjoint pair modes");
    // Re-truncate the combined total photon number.
    let registry = product.registry().clone();
    let kept: Vec<_> = product
        .terms()
        .filter(|(occ, _)| occ.total() <= n_max)
        .map(|(occ, amp)| (occ.clone(), amp))
        .collect();
    PureState::from_terms(registry, kept).expect("truncation keeps valid terms")
}

/// Pump-phase-averaged double-pass source: a classical mixture whose
/// components are the fixed-total-photon-number sectors of
/// [`pdc_double`]. Averaging over the pump phase removes cross-sector
/// coherence exactly, so no quadrature is needed.
///
/// The ensemble is sub-normalized; `1 - weight_sum` is the truncated tail.
pub fn phase_averaged_pdc(
    spec: &PdcSpec,
    modes: (u16, u16, u16, u16),
    n_max: u32,
) -> MixedEnsemble {
    let psi = pdc_double(spec, modes, n_max);
    let registry = psi.registry().clone();
    let mut sectors: std::collections::BTreeMap<u32, Vec<(Occupation, Complex64)>> =
        std::collections::BTreeMap::new();
    for (occ, amp) in psi.terms() {
        sectors
            .entry(occ.total())
            .or_default()
            .push((occ.clone(), amp));
    }
    let mut components = Vec::new();
    for (_, terms) in sectors {
        let weight: f64 = terms.iter().map(|(_, a)| a.norm_sqr()).sum();
        if weight == 0.0 {
            continue;
        }
        let state = PureState::from_terms(registry.clone(), terms)
            .expect("sector terms are valid")
            .normalized()
            .expect("sector has positive weight");
        components.push((weight, state));
    }
    MixedEnsemble::new(components).expect("at least the vacuum sector exists")
}

/// Exact weight retained by a single-pass source truncated at `n_max`
/// total photons: `g * sum_{n+m <= n_max/2} |lambda_H|^{2n} |lambda_V|^{2m}`.
pub fn pdc_single_retained_weight(spec: &PdcSpec, n_max: u32) -> f64 {
    let g = spec.g();
    let xh = spec.lambda_h().norm_sqr();
    let xv = spec.lambda_v().norm_sqr();
    let max_pairs = n_max / 2;
    let mut total = 0.0;
    for n in 0..=max_pairs {
        for m in 0..=(max_pairs - n) {
            total += xh.powi(n as i32) * xv.powi(m as i32);
        }
    }
    g * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::overlap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pair_spec_validation() {
        assert!(PairSpec::new(c(1.0, 0.0), c(0.1, 0.0)).is_err());
        assert!(PairSpec::from_alpha_sq(1.2, 0.0).is_err());
        let p = PairSpec::from_alpha_sq(0.36, 0.5).unwrap();
        assert!((p.alpha_sq() - 0.36).abs() < 1e-15);
        assert!((p.beta_sq() - 0.64).abs() < 1e-15);
    }

    #[test]
    fn ideal_pair_amplitudes() {
        // alpha = 1: product state |1_1H 1_2H>.
        let p = PairSpec::new(c(1.0, 0.0), c(0.0, 0.0)).unwrap();
        let s = ideal_pair(&p, (1, 2));
        assert_eq!(s.num_terms(), 1);
        assert!((s.amplitude(&Occupation::new(&[(ModeId::h(1), 1), (ModeId::h(2), 1)]))
            - c(1.0, 0.0))
        .norm()
            < 1e-15);

        // alpha = 0.6, beta = 0.8 on (HH, VV).
        let p = PairSpec::new(c(0.6, 0.0), c(0.8, 0.0)).unwrap();
        let s = ideal_pair(&p, (1, 2));
        assert!((s.amplitude(&Occupation::new(&[(ModeId::h(1), 1), (ModeId::h(2), 1)]))
            - c(0.6, 0.0))
        .norm()
            < 1e-15);
        assert!((s.amplitude(&Occupation::new(&[(ModeId::v(1), 1), (ModeId::v(2), 1)]))
            - c(0.8, 0.0))
        .norm()
            < 1e-15);

        // Balanced pair equals |Phi+>.
        let s = ideal_pair(&PairSpec::balanced(), (1, 2));
        let f = overlap(&crate::fock::bell_state(crate::fock::Bell::Plus, 1, 2), &s)
            .unwrap()
            .norm_sqr();
        assert!((f - 1.0).abs() < 1e-14);
    }

    #[test]
    fn balanced_pair_product_matches_expansion() {
        // |alpha,beta>_12 (x) |alpha,beta>_34 at alpha = beta = 1/sqrt(2):
        // four terms, each amplitude 1/2.
        let p = PairSpec::balanced();
        let s12 = ideal_pair(&p, (1, 2));
        let s34 = ideal_pair(&p, (3, 4));
        let prod = crate::fock::tensor(&s12, &s34).unwrap();
        assert_eq!(prod.num_terms(), 4);
        for (_, amp) in prod.terms() {
            assert!((amp - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn pdc_spec_identity_eq21() {
        // g = sech^2 sech^2 = (1 - gamma^2 |alpha|^2)(1 - gamma^2 |beta|^2)
        // for 50 random couplings.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let gh = Complex64::from_polar(rng.gen_range(0.0..0.5), rng.gen_range(0.0..6.28));
            let gv = Complex64::from_polar(rng.gen_range(0.0..0.5), rng.gen_range(0.0..6.28));
            let spec = PdcSpec::new(gh, gv).unwrap();
            let gamma = spec.gamma();
            let pair = spec.pair().unwrap();
            let lhs = spec.g();
            let rhs = (1.0 - gamma.powi(2) * pair.alpha_sq())
                * (1.0 - gamma.powi(2) * pair.beta_sq());
            assert!((lhs - rhs).abs() < 1e-12, "lhs {lhs} rhs {rhs}");
            assert!((pair.alpha_sq() + pair.beta_sq() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn from_protocol_round_trip() {
        let spec = PdcSpec::from_protocol(0.1, 0.3, 0.7, 0.2).unwrap();
        assert!((spec.gamma() - 0.1).abs() < 1e-12);
        let pair = spec.pair().unwrap();
        assert!((pair.alpha_sq() - 0.3).abs() < 1e-12);
        // Relative phase of alpha vs beta is the pump phase difference.
        let rel = (pair.alpha / pair.beta).arg();
        assert!((rel - 0.7).abs() < 1e-12);
        assert!(PdcSpec::from_protocol(1.0, 0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn pdc_single_sectors_match_expansion() {
        let spec = PdcSpec::from_protocol(0.2, 0.4, 0.0, 0.3).unwrap();
        let psi = pdc_single(&spec, (1, 2), 6);
        let sqrt_g = spec.g().sqrt();
        let pair = spec.pair().unwrap();
        let gamma = spec.gamma();
        let phase = Complex64::from_polar(1.0, spec.phi_p());

        // Vacuum sector amplitude = sqrt(g).
        assert!((psi.amplitude(&Occupation::empty()) - c(sqrt_g, 0.0)).norm() < 1e-14);

        // One-pair sector / (sqrt(g) gamma e^{i phi}) = |alpha,beta>.
        let hh = Occupation::new(&[(ModeId::h(1), 1), (ModeId::h(2), 1)]);
        let vv = Occupation::new(&[(ModeId::v(1), 1), (ModeId::v(2), 1)]);
        let scale = sqrt_g * gamma * phase;
        assert!((psi.amplitude(&hh) / scale - pair.alpha).norm() < 1e-13);
        assert!((psi.amplitude(&vv) / scale - pair.beta).norm() < 1e-13);

        // Two-pair sector / (sqrt(g) gamma^2 e^{2 i phi}):
        // alpha beta |1111> + alpha^2 |2200> + beta^2 |0022>.
        let scale2 = sqrt_g * gamma.powi(2) * phase * phase;
        let p1111 = Occupation::new(&[
            (ModeId::h(1), 1),
            (ModeId::h(2), 1),
            (ModeId::v(1), 1),
            (ModeId::v(2), 1),
        ]);
        let p2200 = Occupation::new(&[(ModeId::h(1), 2), (ModeId::h(2), 2)]);
        let p0022 = Occupation::new(&[(ModeId::v(1), 2), (ModeId::v(2), 2)]);
        assert!((psi.amplitude(&p1111) / scale2 - pair.alpha * pair.beta).norm() < 1e-13);
        assert!((psi.amplitude(&p2200) / scale2 - pair.alpha * pair.alpha).norm() < 1e-13);
        assert!((psi.amplitude(&p0022) / scale2 - pair.beta * pair.beta).norm() < 1e-13);
    }

    #[test]
    fn pdc_zero_coupling_gives_vacuum() {
        let spec = PdcSpec::new(c(0.0, 0.0), c(0.0, 0.0)).unwrap();
        let psi = pdc_single(&spec, (1, 2), 4);
        assert_eq!(psi.num_terms(), 1);
        assert!((psi.amplitude(&Occupation::empty()) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pdc_double_vacuum_amplitude_is_g() {
        let spec = PdcSpec::from_protocol(0.1, 0.5, 0.0, 0.0).unwrap();
        let psi = pdc_double(&spec, (1, 2, 3, 4), 4);
        assert!((psi.amplitude(&Occupation::empty()).re - spec.g()).abs() < 1e-14);
    }

    #[test]
    fn pdc_double_truncation_tail_is_small() {
        // Dropped weight at n_max = 6 is O(gamma^6) by the geometric tail.
        for gamma in [0.05, 0.1, 0.2] {
            let spec = PdcSpec::from_protocol(gamma, 0.5, 0.0, 0.0).unwrap();
            let psi = pdc_double(&spec, (1, 2, 3, 4), 6);
            let dropped = 1.0 - psi.norm_sqr();
            assert!(dropped > 0.0);
            // Tail starts at 4 pairs ~ gamma^8 with a combinatorial factor;
            // bound it by gamma^6.
            assert!(
                dropped < gamma.powi(6),
                "gamma {gamma}: dropped {dropped:.3e}"
            );
        }
        // Norm -> 1 as n_max grows.
        let spec = PdcSpec::from_protocol(0.3, 0.5, 0.0, 0.0).unwrap();
        let mut last = 0.0;
        for n_max in [2, 4, 8, 16] {
            let n2 = pdc_double(&spec, (1, 2, 3, 4), n_max).norm_sqr();
            assert!(n2 >= last);
            last = n2;
        }
        assert!((last - 1.0).abs() < 1e-6);
    }

    #[test]
    fn retained_weight_oracle_matches_state_norm() {
        let spec = PdcSpec::from_protocol(0.25, 0.3, 0.4, 0.1).unwrap();
        for n_max in [0, 2, 4, 6, 8] {
            let psi = pdc_single(&spec, (1, 2), n_max);
            let oracle = pdc_single_retained_weight(&spec, n_max);
            assert!((psi.norm_sqr() - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn sector_orthogonality_and_weights() {
        let spec = PdcSpec::from_protocol(0.1, 0.4, 0.2, 0.6).unwrap();
        let e = phase_averaged_pdc(&spec, (1, 2, 3, 4), 6);
        // k = 0 sector weight is g^2.
        let g2 = spec.g().powi(2);
        assert!((e.components()[0].0 - g2).abs() < 1e-14);
        // k = 1 sector weight / (g^2 gamma^2) = 2.
        let gamma2 = spec.gamma().powi(2);
        assert!((e.components()[1].0 / (g2 * gamma2) - 2.0).abs() < 1e-12);
        // Distinct sectors are exactly orthogonal (disjoint occupations).
        for (i, (_, a)) in e.components().iter().enumerate() {
            for (_, b) in e.components().iter().skip(i + 1) {
                assert_eq!(overlap(a, b).unwrap(), c(0.0, 0.0));
            }
        }
    }
}
