//! Dense state-vector simulation of small qubit registers.
//!
//! Amplitudes use little-endian qubit order: qubit 0 is the least
//! significant bit of the basis index. Gates are RX/RY/RZ rotations and
//! CNOT; observables are single-qubit Pauli-Z expectations. Derivatives
//! with respect to rotation angles use the two-term parameter-shift rule,
//! applied per gate occurrence so slots shared by several gates stay exact.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::math;

pub type C64 = Complex<f64>;

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 20;

const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl QuantumState {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::InvalidState(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps explicit amplitudes; the length must be `2^n` and the vector
    /// normalised within 1e-10.
    pub fn from_amplitudes(num_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_register(num_qubits)?;
        let dim = 1usize << num_qubits;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "amplitudes",
                expected: dim,
                got: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("amplitudes"));
        }
        let state = Self {
            num_qubits,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if math::abs(norm - 1.0) > NORM_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of each basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Applies `gate` in place. Rotations need `Some(angle)`, CNOT `None`.
    pub fn apply(&mut self, gate: &Gate, angle: Option<f64>) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match (gate.kind, angle) {
            (GateKind::Cnot, None) => {
                let control = gate.control.expect("validated CNOT has a control");
                self.apply_cnot(control, gate.target);
                Ok(())
            }
            (GateKind::Cnot, Some(_)) => {
                Err(Error::InvalidGate("CNOT takes no angle".into()))
            }
            (_, None) => Err(Error::InvalidGate(format!(
                "{:?} needs an angle",
                gate.kind
            ))),
            (kind, Some(theta)) => {
                if !theta.is_finite() {
                    return Err(Error::NonFinite("gate angle"));
                }
                self.apply_rotation(kind, gate.target, theta);
                Ok(())
            }
        }
    }

    fn apply_rotation(&mut self, kind: GateKind, target: usize, theta: f64) {
        let c = math::cos(theta / 2.0);
        let s = math::sin(theta / 2.0);
        let zero = C64::new(0.0, 0.0);
        // [[a, b], [d, e]] acting on (|…0…⟩, |…1…⟩)
        let (a, b, d, e) = match kind {
            GateKind::Rx => (
                C64::new(c, 0.0),
                C64::new(0.0, -s),
                C64::new(0.0, -s),
                C64::new(c, 0.0),
            ),
            GateKind::Ry => (
                C64::new(c, 0.0),
                C64::new(-s, 0.0),
                C64::new(s, 0.0),
                C64::new(c, 0.0),
            ),
            GateKind::Rz => (C64::new(c, -s), zero, zero, C64::new(c, s)),
            GateKind::Cnot => unreachable!("CNOT is not a rotation"),
        };
        let stride = 1usize << target;
        let dim = self.amplitudes.len();
        let mut block = 0;
        while block < dim {
            for i in block..block + stride {
                let j = i + stride;
                let lo = self.amplitudes[i];
                let hi = self.amplitudes[j];
                self.amplitudes[i] = a * lo + b * hi;
                self.amplitudes[j] = d * lo + e * hi;
            }
            block += 2 * stride;
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
    }

    /// `⟨ψ|σ_z^(qubit)|ψ⟩`.
    pub fn expect_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                num_qubits: self.num_qubits,
            });
        }
        let mask = 1usize << qubit;
        let value: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let p = a.norm_sqr();
                if j & mask == 0 {
                    p
                } else {
                    -p
                }
            })
            .sum();
        Ok(value.clamp(-1.0, 1.0))
    }

    /// Pauli-Z expectation of every qubit, in qubit order.
    pub fn expect_z_all(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_qubits];
        for (j, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, acc) in out.iter_mut().enumerate() {
                if j >> q & 1 == 0 {
                    *acc += p;
                } else {
                    *acc -= p;
                }
            }
        }
        for v in &mut out {
            *v = v.clamp(-1.0, 1.0);
        }
        out
    }
}

fn check_register(num_qubits: usize) -> Result<()> {
    if num_qubits == 0 || num_qubits > MAX_QUBITS {
        return Err(Error::InvalidState(format!(
            "register size {num_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// Functional form of [`QuantumState::apply`].
pub fn apply_gate(mut state: QuantumState, gate: &Gate, angle: Option<f64>) -> Result<QuantumState> {
    state.apply(gate, angle)?;
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Cnot,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::Cnot)
    }
}

/// Where a rotation gate takes its angle from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "lowercase"))]
pub enum AngleSource {
    /// Data-driven angle `x[index]`.
    Encoding { index: usize },
    /// Circuit weight `theta[index]`.
    Parameter { index: usize },
    /// Fixed angle in radians.
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub control: Option<usize>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub source: Option<AngleSource>,
}

impl Gate {
    pub fn rotation(kind: GateKind, target: usize, source: AngleSource) -> Self {
        Self {
            kind,
            target,
            control: None,
            source: Some(source),
        }
    }

    pub fn rx(target: usize, source: AngleSource) -> Self {
        Self::rotation(GateKind::Rx, target, source)
    }

    pub fn ry(target: usize, source: AngleSource) -> Self {
        Self::rotation(GateKind::Ry, target, source)
    }

    pub fn rz(target: usize, source: AngleSource) -> Self {
        Self::rotation(GateKind::Rz, target, source)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            source: None,
        }
    }

    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        if self.target >= num_qubits {
            return Err(Error::QubitOutOfRange {
                index: self.target,
                num_qubits,
            });
        }
        match self.kind {
            GateKind::Cnot => {
                let control = self
                    .control
                    .ok_or_else(|| Error::InvalidGate("CNOT without control".into()))?;
                if control >= num_qubits {
                    return Err(Error::QubitOutOfRange {
                        index: control,
                        num_qubits,
                    });
                }
                if control == self.target {
                    return Err(Error::InvalidGate(format!(
                        "CNOT control equals target ({control})"
                    )));
                }
                if self.source.is_some() {
                    return Err(Error::InvalidGate("CNOT takes no angle source".into()));
                }
            }
            kind => {
                if self.control.is_some() {
                    return Err(Error::InvalidGate(format!("{kind:?} takes no control")));
                }
                match self.source {
                    None => {
                        return Err(Error::InvalidGate(format!(
                            "{kind:?} needs an angle source"
                        )))
                    }
                    Some(AngleSource::Constant { value }) if !value.is_finite() => {
                        return Err(Error::NonFinite("constant gate angle"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn resolve(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        self.source.map(|s| match s {
            AngleSource::Encoding { index } => x[index],
            AngleSource::Parameter { index } => theta[index],
            AngleSource::Constant { value } => value,
        })
    }
}

/// An ordered gate program. When `num_encoding_slots > 0` it equals the
/// register size and the program opens with the angle-encoding layer: gate
/// `i` is `RY(x_i)` on qubit `i`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "repr::CircuitSpecRepr"))]
pub struct CircuitSpec {
    num_qubits: usize,
    gates: Vec<Gate>,
    num_encoding_slots: usize,
    num_param_slots: usize,
}

impl CircuitSpec {
    pub fn new(
        num_qubits: usize,
        gates: Vec<Gate>,
        num_encoding_slots: usize,
        num_param_slots: usize,
    ) -> Result<Self> {
        let spec = Self {
            num_qubits,
            gates,
            num_encoding_slots,
            num_param_slots,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec whose slot counts are the smallest that cover every
    /// referenced slot.
    pub fn infer_slots(num_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let (mut enc, mut par) = (0, 0);
        for g in &gates {
            match g.source {
                Some(AngleSource::Encoding { index }) => enc = enc.max(index + 1),
                Some(AngleSource::Parameter { index }) => par = par.max(index + 1),
                _ => {}
            }
        }
        Self::new(num_qubits, gates, enc, par)
    }

    /// Default quanvolution ansatz: the `RY(x_i)` encoding layer, one
    /// trainable rotation per qubit cycling RX, RY, RZ, RY (so for four
    /// qubits: RX on q0, RY on q1, RZ on q2, RY on q3), then a CNOT chain
    /// `q0→q1→…→q(n-1)`.
    pub fn default_ansatz(num_qubits: usize) -> Result<Self> {
        const PATTERN: [GateKind; 4] = [GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::Ry];
        let mut gates = encoding_layer(num_qubits);
        for q in 0..num_qubits {
            gates.push(Gate::rotation(
                PATTERN[q % PATTERN.len()],
                q,
                AngleSource::Parameter { index: q },
            ));
        }
        for q in 1..num_qubits {
            gates.push(Gate::cnot(q - 1, q));
        }
        Self::new(num_qubits, gates, num_qubits, num_qubits)
    }

    /// Only the encoding layer; `⟨σ_z^(i)⟩ = cos x_i`.
    pub fn encoding_only(num_qubits: usize) -> Result<Self> {
        Self::new(num_qubits, encoding_layer(num_qubits), num_qubits, 0)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_encoding_slots(&self) -> usize {
        self.num_encoding_slots
    }

    pub fn num_param_slots(&self) -> usize {
        self.num_param_slots
    }

    pub fn validate(&self) -> Result<()> {
        check_register(self.num_qubits)
            .map_err(|e| Error::InvalidCircuit(format!("{e}")))?;
        for (i, g) in self.gates.iter().enumerate() {
            g.validate(self.num_qubits)
                .map_err(|e| Error::InvalidCircuit(format!("gate {i}: {e}")))?;
            match g.source {
                Some(AngleSource::Encoding { index }) if index >= self.num_encoding_slots => {
                    return Err(Error::InvalidCircuit(format!(
                        "gate {i}: encoding slot {index} >= {}",
                        self.num_encoding_slots
                    )))
                }
                Some(AngleSource::Parameter { index }) if index >= self.num_param_slots => {
                    return Err(Error::InvalidCircuit(format!(
                        "gate {i}: parameter slot {index} >= {}",
                        self.num_param_slots
                    )))
                }
                _ => {}
            }
        }
        if self.num_encoding_slots > 0 {
            if self.num_encoding_slots != self.num_qubits {
                return Err(Error::InvalidCircuit(format!(
                    "{} encoding slots on a {}-qubit register; angle encoding needs one per qubit",
                    self.num_encoding_slots, self.num_qubits
                )));
            }
            for q in 0..self.num_qubits {
                let ok = self.gates.get(q).is_some_and(|g| {
                    g.kind == GateKind::Ry
                        && g.target == q
                        && g.source == Some(AngleSource::Encoding { index: q })
                });
                if !ok {
                    return Err(Error::InvalidCircuit(format!(
                        "gate {q} must be RY(x_{q}) on qubit {q} (encoding layer)"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_inputs(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        if x.len() != self.num_encoding_slots {
            return Err(Error::DimensionMismatch {
                what: "encoding input",
                expected: self.num_encoding_slots,
                got: x.len(),
            });
        }
        if theta.len() != self.num_param_slots {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.num_param_slots,
                got: theta.len(),
            });
        }
        if x.iter().chain(theta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("circuit inputs"));
        }
        Ok(())
    }

    /// Evolves `|0…0⟩`, optionally adding `delta` to the angle of one gate.
    fn evolve(&self, x: &[f64], theta: &[f64], shift: Option<(usize, f64)>) -> QuantumState {
        let mut state = QuantumState::zero(self.num_qubits).expect("validated register");
        for (i, gate) in self.gates.iter().enumerate() {
            let mut angle = gate.resolve(x, theta);
            if let (Some((at, delta)), Some(a)) = (shift, angle.as_mut()) {
                if at == i {
                    *a += delta;
                }
            }
            match (gate.kind, angle) {
                (GateKind::Cnot, _) => state.apply_cnot(gate.control.unwrap(), gate.target),
                (kind, Some(a)) => state.apply_rotation(kind, gate.target, a),
                (_, None) => unreachable!("validated rotation has a source"),
            }
        }
        state
    }

    fn shift_column(
        &self,
        x: &[f64],
        theta: &[f64],
        gate_index: usize,
        column: &mut [f64],
    ) {
        let plus = self.evolve(x, theta, Some((gate_index, FRAC_PI_2))).expect_z_all();
        let minus = self.evolve(x, theta, Some((gate_index, -FRAC_PI_2))).expect_z_all();
        for ((c, p), m) in column.iter_mut().zip(&plus).zip(&minus) {
            *c += (p - m) / 2.0;
        }
    }
}

fn encoding_layer(num_qubits: usize) -> Vec<Gate> {
    (0..num_qubits)
        .map(|q| Gate::ry(q, AngleSource::Encoding { index: q }))
        .collect()
}

/// `|ψ(x, θ)⟩ = U(θ) U_in(x) |0…0⟩`.
pub fn run_circuit(spec: &CircuitSpec, x: &[f64], theta: &[f64]) -> Result<QuantumState> {
    spec.check_inputs(x, theta)?;
    Ok(spec.evolve(x, theta, None))
}

pub fn expect_z(state: &QuantumState, qubit: usize) -> Result<f64> {
    state.expect_z(qubit)
}

/// `y_i = ⟨ψ(x,θ)|σ_z^(i)|ψ(x,θ)⟩` for every wire.
pub fn measure_all_z(spec: &CircuitSpec, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    Ok(run_circuit(spec, x, theta)?.expect_z_all())
}

/// Row-major `rows × cols` real matrix; rows index measured qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `Jᵀ · v` for `v` of length `rows`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate().take(self.rows) {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + c] * vr;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    Encoding,
    Parameter,
}

fn shift_jacobian(
    spec: &CircuitSpec,
    x: &[f64],
    theta: &[f64],
    kind: SlotKind,
) -> Result<Jacobian> {
    spec.check_inputs(x, theta)?;
    let n = spec.num_qubits;
    let cols = match kind {
        SlotKind::Encoding => spec.num_encoding_slots,
        SlotKind::Parameter => spec.num_param_slots,
    };
    // Built column-major, transposed at the end.
    let mut columns = vec![vec![0.0; n]; cols];
    for (i, gate) in spec.gates.iter().enumerate() {
        let slot = match (kind, gate.source) {
            (SlotKind::Encoding, Some(AngleSource::Encoding { index })) => index,
            (SlotKind::Parameter, Some(AngleSource::Parameter { index })) => index,
            _ => continue,
        };
        spec.shift_column(x, theta, i, &mut columns[slot]);
    }
    let mut jac = Jacobian::zeros(n, cols);
    for (c, column) in columns.iter().enumerate() {
        for (r, v) in column.iter().enumerate() {
            jac.data[r * cols + c] = *v;
        }
    }
    Ok(jac)
}

/// `∂y_i/∂θ_j` by the parameter-shift rule,
/// `[y_i(θ_j + π/2) − y_i(θ_j − π/2)] / 2`, summed over every gate that
/// reads slot `j`.
pub fn param_shift_jacobian(spec: &CircuitSpec, x: &[f64], theta: &[f64]) -> Result<Jacobian> {
    shift_jacobian(spec, x, theta, SlotKind::Parameter)
}

/// `∂y_i/∂x_k`, the same shift rule applied to encoding slots.
pub fn encoding_shift_jacobian(spec: &CircuitSpec, x: &[f64], theta: &[f64]) -> Result<Jacobian> {
    shift_jacobian(spec, x, theta, SlotKind::Encoding)
}

#[cfg(feature = "serde")]
mod repr {
    use super::*;

    #[derive(serde::Deserialize)]
    pub struct CircuitSpecRepr {
        num_qubits: usize,
        gates: Vec<Gate>,
        #[serde(default)]
        num_encoding_slots: Option<usize>,
        #[serde(default)]
        num_param_slots: Option<usize>,
    }

    impl TryFrom<CircuitSpecRepr> for CircuitSpec {
        type Error = Error;

        fn try_from(r: CircuitSpecRepr) -> Result<Self> {
            let inferred = CircuitSpec::infer_slots(r.num_qubits, r.gates)?;
            CircuitSpec::new(
                inferred.num_qubits,
                inferred.gates,
                r.num_encoding_slots.unwrap_or(inferred.num_encoding_slots),
                r.num_param_slots.unwrap_or(inferred.num_param_slots),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        math::abs(a - b) <= tol
    }

    #[test]
    fn ry_pi_flips_zero_to_one() {
        let s = apply_gate(
            QuantumState::zero(1).unwrap(),
            &Gate::ry(0, AngleSource::Constant { value: PI }),
            Some(PI),
        )
        .unwrap();
        assert!(close(s.amplitudes()[0].norm_sqr(), 0.0, 1e-15));
        assert!(close(s.amplitudes()[1].re, 1.0, 1e-15));
    }

    #[test]
    fn rz_on_ground_state_is_phase_only() {
        for theta in [0.3, 1.7, -2.2, 5.0] {
            let mut s = QuantumState::zero(1).unwrap();
            s.apply(&Gate::rz(0, AngleSource::Parameter { index: 0 }), Some(theta))
                .unwrap();
            assert!(close(s.amplitudes()[0].norm_sqr(), 1.0, 1e-15));
        }
    }

    #[test]
    fn cnot_truth_table_little_endian() {
        // |10⟩ in ket order q1 q0 means qubit 0 set: index 1.
        let mut s = QuantumState::basis(2, 0b01).unwrap();
        s.apply(&Gate::cnot(0, 1), None).unwrap();
        assert_eq!(s.amplitudes()[0b11], C64::new(1.0, 0.0));
        // control clear: no-op
        let mut s = QuantumState::basis(2, 0b10).unwrap();
        s.apply(&Gate::cnot(0, 1), None).unwrap();
        assert_eq!(s.amplitudes()[0b10], C64::new(1.0, 0.0));
    }

    #[test]
    fn little_endian_is_observable() {
        let mut s = QuantumState::zero(2).unwrap();
        s.apply(&Gate::ry(0, AngleSource::Constant { value: PI }), Some(PI))
            .unwrap();
        assert!(close(s.amplitudes()[1].re, 1.0, 1e-15));
        assert!(close(s.amplitudes()[2].norm_sqr(), 0.0, 1e-15));
    }

    #[test]
    fn apply_rejects_bad_arguments() {
        let mut s = QuantumState::zero(2).unwrap();
        let ry = Gate::ry(0, AngleSource::Parameter { index: 0 });
        assert!(matches!(s.apply(&ry, None), Err(Error::InvalidGate(_))));
        assert!(s.apply(&Gate::cnot(0, 1), Some(1.0)).is_err());
        assert!(matches!(
            s.apply(&Gate::ry(2, AngleSource::Parameter { index: 0 }), Some(1.0)),
            Err(Error::QubitOutOfRange { index: 2, .. })
        ));
        assert!(s.apply(&Gate::cnot(1, 1), None).is_err());
        assert!(s.expect_z(2).is_err());
    }

    #[test]
    fn amplitude_length_and_norm_checked() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        assert!(QuantumState::from_amplitudes(1, vec![one]).is_err());
        assert!(QuantumState::from_amplitudes(1, vec![one, one]).is_err());
        assert!(QuantumState::from_amplitudes(1, vec![zero, one]).is_ok());
        assert!(QuantumState::zero(MAX_QUBITS + 1).is_err());
    }

    #[test]
    fn run_circuit_examples() {
        let spec = CircuitSpec::encoding_only(1).unwrap();
        let s = run_circuit(&spec, &[0.0], &[]).unwrap();
        assert_eq!(s.amplitudes()[0], C64::new(1.0, 0.0));

        let s = run_circuit(&spec, &[PI / 2.0], &[]).unwrap();
        let r = math::cos(PI / 4.0);
        assert!(close(s.amplitudes()[0].re, r, 1e-15));
        assert!(close(s.amplitudes()[1].re, r, 1e-15));

        let gates = vec![
            Gate::ry(0, AngleSource::Encoding { index: 0 }),
            Gate::ry(1, AngleSource::Encoding { index: 1 }),
            Gate::cnot(0, 1),
        ];
        let spec = CircuitSpec::new(2, gates, 2, 0).unwrap();
        let s = run_circuit(&spec, &[PI, 0.0], &[]).unwrap();
        assert!(close(s.amplitudes()[0b11].norm_sqr(), 1.0, 1e-15));

        assert!(matches!(
            run_circuit(&spec, &[0.0], &[]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(run_circuit(&spec, &[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn expectation_examples() {
        let spec = CircuitSpec::encoding_only(1).unwrap();
        let z = |x: f64| measure_all_z(&spec, &[x], &[]).unwrap()[0];
        assert_eq!(z(0.0), 1.0);
        assert!(close(z(PI / 2.0), 0.0, 1e-15));
        assert!(close(z(PI), -1.0, 1e-15));
        assert!(close(z(1.0), 0.5403023058681398, 1e-15));
    }

    #[test]
    fn identity_ansatz_measures_all_ones() {
        let spec = CircuitSpec::default_ansatz(4).unwrap();
        assert_eq!(spec.num_param_slots(), 4);
        let y = measure_all_z(&spec, &[0.0; 4], &[0.0; 4]).unwrap();
        for v in y {
            assert!(close(v, 1.0, 1e-15));
        }
    }

    #[test]
    fn parameter_shift_single_qubit() {
        let spec = CircuitSpec::new(
            1,
            vec![Gate::ry(0, AngleSource::Parameter { index: 0 })],
            0,
            1,
        )
        .unwrap();
        let j = param_shift_jacobian(&spec, &[], &[PI / 2.0]).unwrap();
        assert!(close(j.get(0, 0), -1.0, 1e-15));
        let j = param_shift_jacobian(&spec, &[], &[0.0]).unwrap();
        assert!(close(j.get(0, 0), 0.0, 1e-15));
    }

    #[test]
    fn encoding_shift_single_qubit() {
        let spec = CircuitSpec::encoding_only(1).unwrap();
        let j = encoding_shift_jacobian(&spec, &[0.0], &[]).unwrap();
        assert!(close(j.get(0, 0), 0.0, 1e-15));
        let j = encoding_shift_jacobian(&spec, &[PI / 2.0], &[]).unwrap();
        assert!(close(j.get(0, 0), -1.0, 1e-15));
    }

    #[test]
    fn encoding_layer_is_enforced() {
        let gates = vec![Gate::rx(0, AngleSource::Encoding { index: 0 })];
        assert!(CircuitSpec::new(1, gates, 1, 0).is_err());
        let gates = vec![Gate::ry(0, AngleSource::Parameter { index: 3 })];
        assert!(CircuitSpec::new(1, gates, 0, 2).is_err());
        let gates = vec![
            Gate::ry(1, AngleSource::Encoding { index: 1 }),
            Gate::ry(0, AngleSource::Encoding { index: 0 }),
        ];
        assert!(CircuitSpec::new(2, gates, 2, 0).is_err());
    }

    #[test]
    fn shared_slot_uses_per_gate_shifts() {
        // Both rotations read theta_0: y = cos(2θ), dy/dθ = -2 sin(2θ).
        let gates = vec![
            Gate::ry(0, AngleSource::Parameter { index: 0 }),
            Gate::ry(0, AngleSource::Parameter { index: 0 }),
        ];
        let spec = CircuitSpec::new(1, gates, 0, 1).unwrap();
        let t = 0.37;
        let j = param_shift_jacobian(&spec, &[], &[t]).unwrap();
        assert!(close(j.get(0, 0), -2.0 * math::sin(2.0 * t), 1e-14));
    }
}
