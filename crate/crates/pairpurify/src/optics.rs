//! Linear optical elements as transforms on mode creation operators.
//!
//! A transform substitutes each input creation operator by a linear
//! combination of output creation operators and re-expands Fock terms
//! exactly (multinomial bookkeeping with factorial weights, assembled
//! in floating point). Unitary transforms preserve the norm; lossy
//! channels embed a non-unitary block in a larger unitary with an
//! ancilla loss mode that the caller traces out.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{MixedEnsemble, ModeId, ModeRegistry, Occupation, PureState, DEFAULT_PRUNE_TOL};

/// Truncation policy for transform application and source construction.
#[derive(Clone, Copy, Debug)]
pub struct Truncation {
    /// Maximum total photon number retained.
    pub n_max: u32,
    /// Amplitudes with modulus below this are pruned.
    pub prune_tol: f64,
}

impl Truncation {
    pub fn new(n_max: u32) -> Self {
        Truncation {
            n_max,
            prune_tol: DEFAULT_PRUNE_TOL,
        }
    }

    /// Keep every term (test mode).
    pub fn exact(n_max: u32) -> Self {
        Truncation {
            n_max,
            prune_tol: 0.0,
        }
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::new(6)
    }
}

/// Result of applying a transform: the new state plus the weight lost
/// to photon-number truncation.
pub struct Applied {
    pub state: PureState,
    pub dropped_weight: f64,
}

/// Linear map on creation operators: input mode j is replaced by
/// `sum_i matrix[i][j] * a_out_i`.
#[derive(Clone, Debug)]
pub struct LinearTransform {
    inputs: Vec<ModeId>,
    outputs: Vec<ModeId>,
    matrix: Vec<Vec<Complex64>>,
}

impl LinearTransform {
    pub fn new(
        inputs: Vec<ModeId>,
        outputs: Vec<ModeId>,
        matrix: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if matrix.len() != outputs.len() || matrix.iter().any(|row| row.len() != inputs.len()) {
            return Err(Error::BadShape);
        }
        for list in [&inputs, &outputs] {
            let set: ModeRegistry = list.iter().copied().collect();
            if set.len() != list.len() {
                return Err(Error::BadShape);
            }
        }
        Ok(LinearTransform {
            inputs,
            outputs,
            matrix,
        })
    }

    pub fn identity(modes: &[ModeId]) -> Self {
        let n = modes.len();
        let mut matrix = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        LinearTransform {
            inputs: modes.to_vec(),
            outputs: modes.to_vec(),
            matrix,
        }
    }

    pub fn inputs(&self) -> &[ModeId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[ModeId] {
        &self.outputs
    }

    pub fn coefficient(&self, output: usize, input: usize) -> Complex64 {
        self.matrix[output][input]
    }

    /// Max deviation of M^dagger M from the identity (square maps only).
    pub fn unitarity_deviation(&self) -> f64 {
        let n_in = self.inputs.len();
        let n_out = self.outputs.len();
        if n_in != n_out {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for a in 0..n_in {
            for b in 0..n_in {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n_out {
                    acc += self.matrix[i][a].conj() * self.matrix[i][b];
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                dev = dev.max((acc - Complex64::new(expect, 0.0)).norm());
            }
        }
        dev
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// Apply to a pure state, re-collecting amplitudes exactly and then
    /// truncating at `trunc.n_max` total photons.
    pub fn apply(&self, state: &PureState, trunc: Truncation) -> Result<Applied> {
        let registry = state.registry();
        for m in &self.inputs {
            if !registry.contains(m) {
                return Err(Error::UnknownMode(*m));
            }
        }
        let input_set: ModeRegistry = self.inputs.iter().copied().collect();
        let untouched: ModeRegistry = registry.difference(&input_set).copied().collect();
        for m in &self.outputs {
            if untouched.contains(m) {
                return Err(Error::OverlappingModes(*m));
            }
        }
        let mut new_registry = untouched.clone();
        new_registry.extend(self.outputs.iter().copied());

        let n_out = self.outputs.len();
        let mut acc: std::collections::BTreeMap<Occupation, Complex64> =
            std::collections::BTreeMap::new();

        for (occ, amp) in state.terms() {
            let (in_occ, rest) = occ.split(&input_set);
            // partials: (coefficient, output photon counts)
            let mut partials: Vec<(Complex64, Vec<u32>)> =
                vec![(amp, vec![0u32; n_out])];
            for (j, &mode_j) in self.inputs.iter().enumerate() {
                let n_j = in_occ.count(mode_j);
                if n_j == 0 {
                    continue;
                }
                let column: Vec<(usize, Complex64)> = (0..n_out)
                    .filter(|&i| self.matrix[i][j].norm_sqr() > 0.0)
                    .map(|i| (i, self.matrix[i][j]))
                    .collect();
                let sqrt_nj_fact = factorial(n_j).sqrt();
                let mut next = Vec::with_capacity(partials.len() * (column.len() + 1));
                for (coeff, counts) in &partials {
                    for split in compositions(n_j, column.len()) {
                        let mut c = *coeff * sqrt_nj_fact;
                        let mut counts = counts.clone();
                        for (slot, &k) in split.iter().enumerate() {
                            if k == 0 {
                                continue;
                            }
                            let (i, v) = column[slot];
                            c *= v.powu(k) / factorial(k);
                            counts[i] += k;
                        }
                        next.push((c, counts));
                    }
                }
                partials = next;
            }
            for (mut coeff, counts) in partials {
                for &k in &counts {
                    if k > 1 {
                        coeff *= factorial(k).sqrt();
                    }
                }
                let out_occ: Vec<(ModeId, u32)> = self
                    .outputs
                    .iter()
                    .zip(counts.iter())
                    .filter(|(_, &k)| k > 0)
                    .map(|(&m, &k)| (m, k))
                    .collect();
                let full = rest.merged(&Occupation::new(&out_occ));
                let e = acc.entry(full).or_insert(Complex64::new(0.0, 0.0));
                *e += coeff;
            }
        }

        let mut dropped_weight = 0.0;
        let mut kept = Vec::with_capacity(acc.len());
        for (occ, amp) in acc {
            if occ.total() > trunc.n_max {
                dropped_weight += amp.norm_sqr();
            } else if amp.norm() >= trunc.prune_tol {
                kept.push((occ, amp));
            }
        }
        let state = PureState::from_terms(new_registry, kept)?;
        Ok(Applied {
            state,
            dropped_weight,
        })
    }

    /// Apply to every component of a classical mixture.
    pub fn apply_ensemble(
        &self,
        ensemble: &MixedEnsemble,
        trunc: Truncation,
    ) -> Result<(MixedEnsemble, f64)> {
        let mut components = Vec::with_capacity(ensemble.components().len());
        let mut dropped = 0.0;
        for (w, psi) in ensemble.components() {
            let applied = self.apply(psi, trunc)?;
            let kept = applied.state.norm_sqr();
            dropped += w * applied.dropped_weight;
            if kept > 0.0 {
                components.push((w * kept, applied.state.normalized()?));
            }
        }
        Ok((MixedEnsemble::new(components)?, dropped))
    }

    /// Composition: `self` first, then `next`.
    pub fn then(&self, next: &LinearTransform) -> Result<LinearTransform> {
        let next_inputs: ModeRegistry = next.inputs.iter().copied().collect();
        let self_outputs: ModeRegistry = self.outputs.iter().copied().collect();

        // Combined inputs: self's, plus next's that self does not feed.
        let mut inputs = self.inputs.clone();
        for m in &next.inputs {
            if !self_outputs.contains(m) {
                if inputs.contains(m) {
                    return Err(Error::OverlappingModes(*m));
                }
                inputs.push(*m);
            }
        }
        // Combined outputs: next's, plus self's that next passes through.
        let mut outputs = next.outputs.clone();
        for m in &self.outputs {
            if !next_inputs.contains(m) {
                if outputs.contains(m) {
                    return Err(Error::OverlappingModes(*m));
                }
                outputs.push(*m);
            }
        }

        let zero = Complex64::new(0.0, 0.0);
        let mut matrix = vec![vec![zero; inputs.len()]; outputs.len()];
        let out_index = |m: ModeId| outputs.iter().position(|&o| o == m);

        for (jc, &mode_in) in inputs.iter().enumerate() {
            // Route through self when it consumes the mode.
            if let Some(j) = self.inputs.iter().position(|&m| m == mode_in) {
                for (i, &mid) in self.outputs.iter().enumerate() {
                    let c1 = self.matrix[i][j];
                    if c1.norm_sqr() == 0.0 {
                        continue;
                    }
                    if let Some(jn) = next.inputs.iter().position(|&m| m == mid) {
                        for (inext, _) in next.outputs.iter().enumerate() {
                            let c2 = next.matrix[inext][jn];
                            if c2.norm_sqr() > 0.0 {
                                let oc = out_index(next.outputs[inext]).ok_or(Error::BadShape)?;
                                matrix[oc][jc] += c2 * c1;
                            }
                        }
                    } else {
                        let oc = out_index(mid).ok_or(Error::BadShape)?;
                        matrix[oc][jc] += c1;
                    }
                }
            } else {
                // Consumed by next only.
                let jn = next
                    .inputs
                    .iter()
                    .position(|&m| m == mode_in)
                    .ok_or(Error::BadShape)?;
                for (inext, &mout) in next.outputs.iter().enumerate() {
                    let c2 = next.matrix[inext][jn];
                    if c2.norm_sqr() > 0.0 {
                        let oc = out_index(mout).ok_or(Error::BadShape)?;
                        matrix[oc][jc] += c2;
                    }
                }
            }
        }
        LinearTransform::new(inputs, outputs, matrix)
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// All ways to split `n` indistinguishable photons into `slots` bins.
fn compositions(n: u32, slots: usize) -> Vec<Vec<u32>> {
    if slots == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    if slots == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut tail in compositions(n - first, slots - 1) {
            let mut v = Vec::with_capacity(slots);
            v.push(first);
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// Half-wave plate angles used by the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HwpAngle {
    Deg45,
    Deg90,
}

/// Half-wave plate acting on one spatial label's (H, V) pair.
///
/// 45 degrees: `a_H -> (a_H + a_V)/sqrt(2)`, `a_V -> (a_H - a_V)/sqrt(2)`.
/// 90 degrees: `a_H -> a_V`, `a_V -> a_H` (the swap; this is the
/// determinant -1 Jones matrix of a physical half-wave plate at 45
/// degrees to the axes). See [`r90_rotation`] for the det +1 variant.
pub fn half_wave_plate(pair: (ModeId, ModeId), angle: HwpAngle) -> Result<LinearTransform> {
    let (h, v) = pair;
    if h.spatial != v.spatial
        || h.pol != crate::fock::Polarization::H
        || v.pol != crate::fock::Polarization::V
    {
        return Err(Error::InvalidParameter {
            name: "mode_pair",
            value: f64::from(h.spatial) ,
            constraint: "an (H, V) pair sharing one spatial label",
        });
    }
    let modes = vec![h, v];
    let one = Complex64::new(1.0, 0.0);
    let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let matrix = match angle {
        HwpAngle::Deg45 => vec![vec![r, r], vec![r, -r]],
        HwpAngle::Deg90 => vec![vec![one * 0.0, one], vec![one, one * 0.0]],
    };
    LinearTransform::new(modes.clone(), modes, matrix)
}

/// 45-degree plate on a spatial label.
pub fn r45(spatial: u16) -> LinearTransform {
    half_wave_plate((ModeId::h(spatial), ModeId::v(spatial)), HwpAngle::Deg45)
        .expect("well-formed pair")
}

/// 90-degree polarization rotation (swap convention).
pub fn r90(spatial: u16) -> LinearTransform {
    half_wave_plate((ModeId::h(spatial), ModeId::v(spatial)), HwpAngle::Deg90)
        .expect("well-formed pair")
}

/// 90-degree rotation with determinant +1: `a_H -> a_V`, `a_V -> -a_H`.
/// Differs from [`r90`] by a mode-local phase; observable statistics
/// agree, which the gauge tests assert.
pub fn r90_rotation(spatial: u16) -> LinearTransform {
    let modes = vec![ModeId::h(spatial), ModeId::v(spatial)];
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    LinearTransform::new(modes.clone(), modes, vec![vec![zero, -one], vec![one, zero]])
        .expect("well-formed rotation")
}

/// Polarizing beam splitter: transmits H, reflects V.
///
/// Routing: `H(in1) -> H(out_t)`, `V(in1) -> V(out_r)`,
/// `H(in2) -> H(out_r)`, `V(in2) -> V(out_t)`. Both reflections carry
/// phase +1 (a gauge choice; see the gauge tests).
pub fn pbs(in1: u16, in2: u16, out_t: u16, out_r: u16) -> Result<LinearTransform> {
    if in1 == in2 || out_t == out_r {
        return Err(Error::InvalidParameter {
            name: "pbs_labels",
            value: f64::from(in1),
            constraint: "distinct input labels and distinct output labels",
        });
    }
    let inputs = vec![
        ModeId::h(in1),
        ModeId::v(in1),
        ModeId::h(in2),
        ModeId::v(in2),
    ];
    let outputs = vec![
        ModeId::h(out_t),
        ModeId::v(out_t),
        ModeId::h(out_r),
        ModeId::v(out_r),
    ];
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let matrix = vec![
        vec![one, zero, zero, zero],  // H(out_t) <- H(in1)
        vec![zero, zero, zero, one],  // V(out_t) <- V(in2)
        vec![zero, zero, one, zero],  // H(out_r) <- H(in2)
        vec![zero, one, zero, zero],  // V(out_r) <- V(in1)
    ];
    LinearTransform::new(inputs, outputs, matrix)
}

/// Pure phase shifter on one mode: `a -> e^{i phase} a`.
pub fn phase_shift(mode: ModeId, phase: f64) -> LinearTransform {
    LinearTransform::new(
        vec![mode],
        vec![mode],
        vec![vec![Complex64::from_polar(1.0, phase)]],
    )
    .expect("single-mode phase")
}

/// Exchange two modes' operators (fiber-delay remedies).
pub fn mode_swap(a: ModeId, b: ModeId) -> LinearTransform {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    LinearTransform::new(
        vec![a, b],
        vec![a, b],
        vec![vec![zero, one], vec![one, zero]],
    )
    .expect("two distinct modes")
}

/// Lossy channel on one mode: `a -> mu a + sqrt(1 - |mu|^2) a_ancilla`,
/// completed to a two-mode unitary. The caller traces out the ancilla.
pub fn lossy_channel(mode: ModeId, mu: Complex64, ancilla: ModeId) -> Result<LinearTransform> {
    if mode == ancilla {
        return Err(Error::OverlappingModes(mode));
    }
    let mag = mu.norm();
    if mag > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: mag,
            constraint: "|mu| <= 1",
        });
    }
    let s = (1.0 - mag.min(1.0).powi(2)).max(0.0).sqrt();
    let s = Complex64::new(s, 0.0);
    let matrix = vec![vec![mu, s], vec![s, -mu.conj()]];
    LinearTransform::new(vec![mode, ancilla], vec![mode, ancilla], matrix)
}
