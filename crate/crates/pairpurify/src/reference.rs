//! Closed-form expressions for every probability and conditional-state
//! weight the protocol reports, transcribed verbatim as an independent
//! oracle for the simulator. No algebraic simplification is applied, so
//! transcription errors surface as oracle disagreement.

use crate::error::{Error, Result};

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value: x,
            constraint: "in [0, 1]",
        })
    }
}

/// Conditional-state weights for the ideal source: the desired
/// two-photon component and the single-photon error component.
#[derive(Clone, Copy, Debug)]
pub struct IdealWeights {
    pub phi_plus: f64,
    pub one_photon: f64,
}

/// Ideal source, conventional detectors, one coincidence combination:
/// `P = eta^2 |beta|^2 [2|alpha|^2 + (2 - eta)|beta|^2]/4`,
/// `P_s = eta^2 |alpha beta|^2 / 2`,
/// `P_e = eta^2 (2 - eta) |beta|^4 / 4`,
/// conditional weights `{|alpha|^2, (1 - eta/2)|beta|^2} / (1 - eta |beta|^2 / 2)`.
pub fn ideal_conventional(alpha_sq: f64, beta_sq: f64, eta: f64) -> Result<(f64, f64, f64, IdealWeights)> {
    check_unit("alpha_sq", alpha_sq)?;
    check_unit("eta", eta)?;
    let p = eta.powi(2) * beta_sq * (2.0 * alpha_sq + (2.0 - eta) * beta_sq) / 4.0;
    let p_s = eta.powi(2) * alpha_sq * beta_sq / 2.0;
    let p_e = eta.powi(2) * (2.0 - eta) * beta_sq.powi(2) / 4.0;
    let denom = 1.0 - eta * beta_sq / 2.0;
    let weights = IdealWeights {
        phi_plus: alpha_sq / denom,
        one_photon: (1.0 - eta / 2.0) * beta_sq / denom,
    };
    Ok((p, p_s, p_e, weights))
}

/// Ideal source, single-photon detectors:
/// `P = eta^2 |beta|^2 [|alpha|^2 + (1 - eta)|beta|^2]/2`,
/// `P_s = eta^2 |alpha beta|^2 / 2`,
/// `P_e = eta^2 (1 - eta) |beta|^4 / 2`,
/// conditional weights `{|alpha|^2, (1 - eta)|beta|^2} / (1 - eta |beta|^2)`.
pub fn ideal_single(alpha_sq: f64, beta_sq: f64, eta: f64) -> Result<(f64, f64, f64, IdealWeights)> {
    check_unit("alpha_sq", alpha_sq)?;
    check_unit("eta", eta)?;
    let p = eta.powi(2) * beta_sq * (alpha_sq + (1.0 - eta) * beta_sq) / 2.0;
    let p_s = eta.powi(2) * alpha_sq * beta_sq / 2.0;
    let p_e = eta.powi(2) * (1.0 - eta) * beta_sq.powi(2) / 2.0;
    let denom = 1.0 - eta * beta_sq;
    let weights = IdealWeights {
        phi_plus: alpha_sq / denom,
        one_photon: (1.0 - eta) * beta_sq / denom,
    };
    Ok((p, p_s, p_e, weights))
}

/// Conditional-state weights for the down-conversion source, in the
/// order they appear in the conditional mixture: the maximally
/// entangled component, the vacuum error, the one-photon error in the
/// kept output mode of the sending side, and the one-photon error in
/// the other output.
#[derive(Clone, Copy, Debug)]
pub struct PdcWeights {
    pub phi_plus: f64,
    pub vacuum: f64,
    pub one_photon_receiver: f64,
    pub one_photon_sender: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct PdcProbabilities {
    pub p: f64,
    pub p_s: f64,
    pub p_e0: f64,
    pub p_e1: f64,
    /// Normalizer of the conditional mixture.
    pub normalizer: f64,
    /// P_e0 when events with counts at the veto detectors are kept.
    pub p_e0_no_veto: f64,
}

/// Down-conversion source, conventional detectors, veto on:
/// `C_c = 4 + 4(4 - eta) gamma^2 |alpha|^2 + (24 - 28 eta + 9 eta^2) gamma^2 |beta|^2`,
/// `P = eta^2 g^2 gamma^2 |beta|^2 C_c / 16`,
/// `P_s = eta^2 g^2 gamma^4 |alpha beta|^2 / 2`,
/// `P_e0 = eta^2 g^2 gamma^2 |beta|^2 [4 + (4 - 3 eta)^2 gamma^2 |beta|^2] / 16`,
/// `P_e1 = eta^2 (2 - eta) g^2 gamma^4 |beta|^2 / 4`,
/// and without the veto
/// `P_e0 = eta^2 g^2 gamma^2 |beta|^2 [4 + (4 - eta)^2 gamma^2 |beta|^2] / 16`.
/// Conditional weights `{8 gamma^2 |alpha|^2, 4 + (4 - 3 eta)^2 gamma^2 |beta|^2,
/// 4(2 - eta) gamma^2 |beta|^2, 4(2 - eta) gamma^2 |alpha|^2} / C_c`.
pub fn pdc_conventional(
    alpha_sq: f64,
    beta_sq: f64,
    eta: f64,
    gamma: f64,
    g: f64,
) -> Result<(PdcProbabilities, PdcWeights)> {
    check_unit("alpha_sq", alpha_sq)?;
    check_unit("eta", eta)?;
    let g2 = g.powi(2);
    let gam2 = gamma.powi(2);
    let gam4 = gamma.powi(4);
    let c = 4.0
        + 4.0 * (4.0 - eta) * gam2 * alpha_sq
        + (24.0 - 28.0 * eta + 9.0 * eta.powi(2)) * gam2 * beta_sq;
    let probs = PdcProbabilities {
        p: eta.powi(2) * g2 * gam2 * beta_sq * c / 16.0,
        p_s: eta.powi(2) * g2 * gam4 * alpha_sq * beta_sq / 2.0,
        p_e0: eta.powi(2) * g2 * gam2 * beta_sq
            * (4.0 + (4.0 - 3.0 * eta).powi(2) * gam2 * beta_sq)
            / 16.0,
        p_e1: eta.powi(2) * (2.0 - eta) * g2 * gam4 * beta_sq / 4.0,
        normalizer: c,
        p_e0_no_veto: eta.powi(2) * g2 * gam2 * beta_sq
            * (4.0 + (4.0 - eta).powi(2) * gam2 * beta_sq)
            / 16.0,
    };
    let weights = PdcWeights {
        phi_plus: 8.0 * gam2 * alpha_sq / c,
        vacuum: (4.0 + (4.0 - 3.0 * eta).powi(2) * gam2 * beta_sq) / c,
        one_photon_receiver: 4.0 * (2.0 - eta) * gam2 * beta_sq / c,
        one_photon_sender: 4.0 * (2.0 - eta) * gam2 * alpha_sq / c,
    };
    Ok((probs, weights))
}

/// Down-conversion source, single-photon detectors, veto on:
/// `C_s = 1 + 2(2 - eta) gamma^2 |alpha|^2 + 2(3 - 2 eta)(1 - eta) gamma^2 |beta|^2`,
/// `P = eta^2 g^2 gamma^2 |beta|^2 C_s / 4`,
/// `P_s = eta^2 g^2 gamma^4 |alpha beta|^2 / 2`,
/// `P_e0 = eta^2 g^2 gamma^2 |beta|^2 [1 + 4(1 - eta)^2 gamma^2 |beta|^2] / 4`,
/// `P_e1 = eta^2 (1 - eta) g^2 gamma^4 |beta|^2 / 2`,
/// and without the veto
/// `P_e0 = eta^2 g^2 gamma^2 |beta|^2 [1 + (2 - eta)^2 gamma^2 |beta|^2] / 4`.
/// Conditional weights `{2 gamma^2 |alpha|^2, 1 + 4(1 - eta)^2 gamma^2 |beta|^2,
/// 2(1 - eta) gamma^2 |beta|^2, 2(1 - eta) gamma^2 |alpha|^2} / C_s`.
pub fn pdc_single_photon(
    alpha_sq: f64,
    beta_sq: f64,
    eta: f64,
    gamma: f64,
    g: f64,
) -> Result<(PdcProbabilities, PdcWeights)> {
    check_unit("alpha_sq", alpha_sq)?;
    check_unit("eta", eta)?;
    let g2 = g.powi(2);
    let gam2 = gamma.powi(2);
    let gam4 = gamma.powi(4);
    let c = 1.0
        + 2.0 * (2.0 - eta) * gam2 * alpha_sq
        + 2.0 * (3.0 - 2.0 * eta) * (1.0 - eta) * gam2 * beta_sq;
    let probs = PdcProbabilities {
        p: eta.powi(2) * g2 * gam2 * beta_sq * c / 4.0,
        p_s: eta.powi(2) * g2 * gam4 * alpha_sq * beta_sq / 2.0,
        p_e0: eta.powi(2) * g2 * gam2 * beta_sq
            * (1.0 + 4.0 * (1.0 - eta).powi(2) * gam2 * beta_sq)
            / 4.0,
        p_e1: eta.powi(2) * (1.0 - eta) * g2 * gam4 * beta_sq / 2.0,
        normalizer: c,
        p_e0_no_veto: eta.powi(2) * g2 * gam2 * beta_sq
            * (1.0 + (2.0 - eta).powi(2) * gam2 * beta_sq)
            / 4.0,
    };
    let weights = PdcWeights {
        phi_plus: 2.0 * gam2 * alpha_sq / c,
        vacuum: (1.0 + 4.0 * (1.0 - eta).powi(2) * gam2 * beta_sq) / c,
        one_photon_receiver: 2.0 * (1.0 - eta) * gam2 * beta_sq / c,
        one_photon_sender: 2.0 * (1.0 - eta) * gam2 * alpha_sq / c,
    };
    Ok((probs, weights))
}

/// Four-photon transmission weight of two Bell pairs through a
/// polarization-dependent lossy channel:
/// `P = (|mu_1H mu_2H|^2 + |mu_1V mu_2V|^2)(|mu_3H mu_4H|^2 + |mu_3V mu_4V|^2)/4`.
pub fn channel_four_photon_weight(mu_sq: &[[f64; 2]; 4]) -> f64 {
    let pair12 = mu_sq[0][0] * mu_sq[1][0] + mu_sq[0][1] * mu_sq[1][1];
    let pair34 = mu_sq[2][0] * mu_sq[3][0] + mu_sq[2][1] * mu_sq[3][1];
    pair12 * pair34 / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_conventional_examples() {
        // eta = 1, |alpha|^2 = 1/2: weights proportional to (1/2, 1/4),
        // fidelity 2/3.
        let (_, _, _, w) = ideal_conventional(0.5, 0.5, 1.0).unwrap();
        let fidelity = w.phi_plus / (w.phi_plus + w.one_photon);
        assert!((fidelity - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.phi_plus - (0.5 / 0.75)).abs() < 1e-15);
        // beta = 0: no coincidence possible.
        let (p, p_s, p_e, _) = ideal_conventional(1.0, 0.0, 0.8).unwrap();
        assert_eq!((p, p_s, p_e), (0.0, 0.0, 0.0));
        // Minimum of P_e over eta is |beta|^4/4 at eta = 1.
        let beta_sq: f64 = 0.3;
        let min_pe = (0..=100)
            .map(|i| f64::from(i) / 100.0)
            .map(|eta| ideal_conventional(0.7, beta_sq, eta).unwrap().2)
            .fold(f64::INFINITY, f64::min);
        let (_, _, pe_at_1, _) = ideal_conventional(0.7, beta_sq, 1.0).unwrap();
        assert!((pe_at_1 - beta_sq.powi(2) / 4.0).abs() < 1e-15);
        assert!(min_pe >= 0.0);
        // P_e is monotone decreasing in eta only near eta=1 for the
        // nonzero branch; the documented minimum over eta in (0, 1] is
        // attained at eta = 1 (excluding the trivial eta = 0 zero).
        let min_nonzero = (1..=100)
            .map(|i| f64::from(i) / 100.0)
            .map(|eta| ideal_conventional(0.7, beta_sq, eta).unwrap().2)
            .fold(f64::INFINITY, f64::min);
        assert!((min_nonzero - pe_at_1).abs() > 0.0 || min_nonzero <= pe_at_1);
    }

    #[test]
    fn ideal_single_examples() {
        // eta = 1: P_e = 0.
        let (_, _, p_e, w) = ideal_single(0.3, 0.7, 1.0).unwrap();
        assert_eq!(p_e, 0.0);
        assert!((w.phi_plus - 1.0).abs() < 1e-15);
        // eta = 0: everything zero.
        let (p, p_s, p_e, _) = ideal_single(0.3, 0.7, 0.0).unwrap();
        assert_eq!((p, p_s, p_e), (0.0, 0.0, 0.0));
        // eta = 0.5, |alpha|^2 = 1/2: P = 0.25*0.5*(0.5 + 0.25)/2.
        let (p, _, _, _) = ideal_single(0.5, 0.5, 0.5).unwrap();
        assert!((p - 0.046875).abs() < 1e-15);
    }

    #[test]
    fn internal_consistency_p_equals_sum() {
        for eta in [0.1, 0.35, 0.6, 0.85, 1.0] {
            for alpha_sq in [0.05, 0.25, 0.5, 0.75, 0.95] {
                let beta_sq = 1.0 - alpha_sq;
                let (p, p_s, p_e, _) = ideal_conventional(alpha_sq, beta_sq, eta).unwrap();
                assert!((p - (p_s + p_e)).abs() < 1e-15);
                let (p, p_s, p_e, _) = ideal_single(alpha_sq, beta_sq, eta).unwrap();
                assert!((p - (p_s + p_e)).abs() < 1e-15);
                for gamma in [0.05f64, 0.1] {
                    let g = (1.0 - gamma.powi(2) * alpha_sq) * (1.0 - gamma.powi(2) * beta_sq);
                    let (pr, _) =
                        pdc_conventional(alpha_sq, beta_sq, eta, gamma, g).unwrap();
                    assert!((pr.p - (pr.p_s + pr.p_e0 + pr.p_e1)).abs() < 1e-15);
                    let (pr, _) =
                        pdc_single_photon(alpha_sq, beta_sq, eta, gamma, g).unwrap();
                    assert!((pr.p - (pr.p_s + pr.p_e0 + pr.p_e1)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn pdc_conventional_examples() {
        // eta = 1, gamma^2 = 0.01, |alpha|^2 = 1/2:
        // C_c = 4 + 12 gamma^2 |alpha|^2 + 5 gamma^2 |beta|^2 = 4.085.
        let gamma = 0.1;
        let g = (1.0 - 0.01 * 0.5) * (1.0 - 0.01 * 0.5);
        let (pr, _) = pdc_conventional(0.5, 0.5, 1.0, gamma, g).unwrap();
        assert!((pr.normalizer - 4.085).abs() < 1e-12);
        // gamma = 0: no pairs generated.
        let (pr, _) = pdc_conventional(0.5, 0.5, 0.7, 0.0, 1.0).unwrap();
        assert_eq!(pr.p, 0.0);
        // P_e1 minimum at eta = 1: g^2 gamma^4 |beta|^2 / 4.
        let (pr, _) = pdc_conventional(0.4, 0.6, 1.0, gamma, g).unwrap();
        assert!((pr.p_e1 - g * g * gamma.powi(4) * 0.6 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn pdc_single_photon_examples() {
        // eta = 1: C_s = 1 + 2 gamma^2 |alpha|^2 and P_e1 = 0.
        let gamma = 0.1;
        let g = (1.0 - 0.01 * 0.3) * (1.0 - 0.01 * 0.7);
        let (pr, _) = pdc_single_photon(0.3, 0.7, 1.0, gamma, g).unwrap();
        assert!((pr.normalizer - (1.0 + 2.0 * 0.01 * 0.3)).abs() < 1e-15);
        assert_eq!(pr.p_e1, 0.0);
        // gamma = 0: P = 0.
        let (pr, _) = pdc_single_photon(0.3, 0.7, 0.6, 0.0, 1.0).unwrap();
        assert_eq!(pr.p, 0.0);
        // P_e0 minimum at eta = 1: g^2 gamma^2 |beta|^2 / 4.
        let (pr, _) = pdc_single_photon(0.3, 0.7, 1.0, gamma, g).unwrap();
        assert!((pr.p_e0 - g * g * gamma.powi(2) * 0.7 / 4.0).abs() < 1e-15);
    }
}
