//! Exact density-matrix simulation of the repeater circuits, for 2-6
//! qubits. This is the ground truth every closed-form kernel is checked
//! against, and the generator of the kernels' coefficient tables.
//!
//! The circuits defined here are the single source of truth:
//!
//! - connection: CNOT at the middle node, X/Z measurement of the two
//!   middle qubits, outcome-conditioned Pauli correction on the far end;
//! - pumping: the two-way parity-check protocol (bilateral pi/2
//!   X-rotations, bilateral CNOTs, coincidence measurement of the
//!   source pair);
//! - teleported CNOT: gate teleportation through an entangled resource
//!   pair with local noisy CNOTs and measurements.
//!
//! Measurement outcomes are enumerated exactly (weighted branches), so
//! every result is deterministic.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{self, CMatrix, Channel};
use crate::noise::{measurement_operators, HardwareParams};
use crate::states::{BellDiagonalState, StateError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("operation expects {expected} qubits, state has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("state is not Bell-diagonal: off-diagonal residual {residual}")]
    NonBellDiagonalResidual { residual: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

/// How the two-qubit gates of a circuit are realized.
#[derive(Clone, Copy)]
pub enum GateMode<'a> {
    /// Local depolarized gates at reliability `p`.
    Direct,
    /// Remote gates teleported through an entangled pair; the channel is
    /// built once per gate-pair state by [`teleported_cnot_channel`].
    Teleported(&'a Channel),
}

/// Measurement basis for single-qubit readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasBasis {
    Z,
    X,
}

/// Dense matrix on up to 6 qubits. Not restricted to Hermitian inputs:
/// the channel-tomography paths push matrix units through the circuits
/// and rely on plain linearity.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    qubits: usize,
    mat: CMatrix,
}

/// The four Bell vectors in the fixed convention used throughout:
/// index 0..3 = Phi+, Phi-, Psi+, Psi-.
pub fn bell_vector(index: usize) -> CMatrix {
    let h = 1.0 / 2.0f64.sqrt();
    let v = match index {
        0 => [h, 0.0, 0.0, h],
        1 => [h, 0.0, 0.0, -h],
        2 => [0.0, h, h, 0.0],
        3 => [0.0, h, -h, 0.0],
        _ => panic!("bell index out of range"),
    };
    CMatrix::from_fn(4, 1, |i, _| Complex64::new(v[i], 0.0))
}

impl DensityMatrix {
    pub fn from_matrix(qubits: usize, mat: CMatrix) -> Self {
        let dim = 1usize << qubits;
        assert!(qubits <= 6, "oracle is limited to 6 qubits");
        assert_eq!(mat.nrows(), dim);
        assert_eq!(mat.ncols(), dim);
        Self { qubits, mat }
    }

    /// Two-qubit state with the given Bell-basis populations, in the
    /// fixed basis order (the canonical population order).
    pub fn from_bell_diagonal(state: &BellDiagonalState) -> Self {
        Self::from_bell_populations(state.populations())
    }

    /// Same, from a raw population vector that need not be sorted or
    /// normalized. The weight at index k sits on Bell state k.
    pub fn from_bell_populations(f: [f64; 4]) -> Self {
        let mut mat = CMatrix::zeros(4, 4);
        for (k, w) in f.iter().enumerate() {
            let v = bell_vector(k);
            mat += (&v * v.adjoint()).scale(*w);
        }
        Self { qubits: 2, mat }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::from_matrix(self.qubits + other.qubits, self.mat.kronecker(&other.mat))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)]).sum()
    }

    /// Bit of qubit `q` in basis index `i` (qubit 0 is the most
    /// significant bit).
    fn bit(&self, i: usize, q: usize) -> usize {
        (i >> (self.qubits - 1 - q)) & 1
    }

    /// Pack the bits of `targets` out of basis index `i`, first target
    /// most significant.
    fn gather(&self, i: usize, targets: &[usize]) -> usize {
        let mut t = 0;
        for &q in targets {
            t = (t << 1) | self.bit(i, q);
        }
        t
    }

    /// Replace the bits of `targets` in basis index `i` with `bits`.
    fn scatter(&self, i: usize, targets: &[usize], bits: usize) -> usize {
        let mut out = i;
        let k = targets.len();
        for (j, &q) in targets.iter().enumerate() {
            let b = (bits >> (k - 1 - j)) & 1;
            let pos = self.qubits - 1 - q;
            out = (out & !(1 << pos)) | (b << pos);
        }
        out
    }

    fn check_targets(&self, targets: &[usize], gate_qubits: usize) -> Result<(), OracleError> {
        let distinct = targets
            .iter()
            .all(|&q| targets.iter().filter(|&&r| r == q).count() == 1);
        if targets.len() != gate_qubits || !distinct || targets.iter().any(|&q| q >= self.qubits) {
            return Err(OracleError::DimensionMismatch {
                expected: gate_qubits,
                actual: self.qubits,
            });
        }
        Ok(())
    }

    /// Conjugate by a unitary acting on `targets`.
    pub fn apply_unitary(&mut self, u: &CMatrix, targets: &[usize]) -> Result<(), OracleError> {
        let k = targets.len();
        let dk = 1usize << k;
        self.check_targets(targets, u.nrows().trailing_zeros() as usize)?;
        let dim = self.mat.nrows();
        let mut out = CMatrix::zeros(dim, dim);
        for row in 0..dim {
            let rt = self.gather(row, targets);
            for col in 0..dim {
                let ct = self.gather(col, targets);
                let mut acc = Complex64::new(0.0, 0.0);
                for rt2 in 0..dk {
                    let urr = u[(rt, rt2)];
                    if urr.norm_sqr() == 0.0 {
                        continue;
                    }
                    let row2 = self.scatter(row, targets, rt2);
                    for ct2 in 0..dk {
                        let ucc = u[(ct, ct2)].conj();
                        if ucc.norm_sqr() == 0.0 {
                            continue;
                        }
                        let col2 = self.scatter(col, targets, ct2);
                        acc += urr * ucc * self.mat[(row2, col2)];
                    }
                }
                out[(row, col)] = acc;
            }
        }
        self.mat = out;
        Ok(())
    }

    /// Apply a channel (superoperator) to `targets`.
    pub fn apply_channel(&mut self, ch: &Channel, targets: &[usize]) -> Result<(), OracleError> {
        self.check_targets(targets, ch.qubits())?;
        let dk = 1usize << ch.qubits();
        let s = ch.superop();
        let dim = self.mat.nrows();
        let mut out = CMatrix::zeros(dim, dim);
        for row in 0..dim {
            let rt = self.gather(row, targets);
            for col in 0..dim {
                let ct = self.gather(col, targets);
                let srow = rt * dk + ct;
                let mut acc = Complex64::new(0.0, 0.0);
                for rt2 in 0..dk {
                    for ct2 in 0..dk {
                        let w = s[(srow, rt2 * dk + ct2)];
                        if w.norm_sqr() == 0.0 {
                            continue;
                        }
                        let row2 = self.scatter(row, targets, rt2);
                        let col2 = self.scatter(col, targets, ct2);
                        acc += w * self.mat[(row2, col2)];
                    }
                }
                out[(row, col)] = acc;
            }
        }
        self.mat = out;
        Ok(())
    }

    /// Unreliable measurement of one qubit, which is then discarded.
    /// Returns both outcome branches as (weight, remaining state);
    /// weights sum to the input trace. The branch states are
    /// unnormalized (their trace is the branch weight).
    pub fn measure_remove(
        &self,
        target: usize,
        basis: MeasBasis,
        eta: f64,
    ) -> Result<[(f64, DensityMatrix); 2], OracleError> {
        self.check_targets(&[target], 1)?;
        let mut work = self.clone();
        if basis == MeasBasis::X {
            work.apply_unitary(&channel::hadamard(), &[target])?;
        }
        let ops = measurement_operators(eta);
        let n_new = self.qubits - 1;
        let dim_new = 1usize << n_new;
        let bp = self.qubits - 1 - target; // bit position from LSB
        let insert = |j: usize, b: usize| -> usize {
            let high = j >> bp;
            let low = j & ((1 << bp) - 1);
            (high << (bp + 1)) | (b << bp) | low
        };
        let branch = |op: &nalgebra::Matrix2<Complex64>| -> (f64, DensityMatrix) {
            let mut m = CMatrix::zeros(dim_new, dim_new);
            for row in 0..dim_new {
                for col in 0..dim_new {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b in 0..2 {
                        acc += op[(b, b)] * work.mat[(insert(row, b), insert(col, b))];
                    }
                    m[(row, col)] = acc;
                }
            }
            let w: Complex64 = (0..dim_new).map(|i| m[(i, i)]).sum();
            (w.re, DensityMatrix::from_matrix(n_new, m))
        };
        Ok([branch(&ops[0]), branch(&ops[1])])
    }

    pub fn scale(&mut self, factor: f64) {
        self.mat = self.mat.scale(factor);
    }

    pub fn add_assign(&mut self, other: &DensityMatrix) {
        assert_eq!(self.qubits, other.qubits);
        self.mat += &other.mat;
    }

    /// Bell-basis populations of a two-qubit state. Errors if the state
    /// carries off-diagonal Bell-basis weight beyond 1e-10; on the
    /// circuits modeled here that signals a bug, not physics.
    pub fn bell_populations(&self) -> Result<[f64; 4], OracleError> {
        if self.qubits != 2 {
            return Err(OracleError::DimensionMismatch {
                expected: 2,
                actual: self.qubits,
            });
        }
        let mut pops = [0.0; 4];
        let mut residual: f64 = 0.0;
        for k in 0..4 {
            let vk = bell_vector(k);
            for l in 0..4 {
                let vl = bell_vector(l);
                let elem = (vk.adjoint() * &self.mat * &vl)[(0, 0)];
                if k == l {
                    pops[k] = elem.re;
                    residual = residual.max(elem.im.abs());
                } else {
                    residual = residual.max(elem.norm());
                }
            }
        }
        if residual > 1e-10 {
            return Err(OracleError::NonBellDiagonalResidual { residual });
        }
        Ok(pops)
    }

    /// Largest deviation from Hermiticity, for validation.
    pub fn hermiticity_residual(&self) -> f64 {
        (&self.mat - self.mat.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue, via the real symmetric embedding
    /// [[Re, -Im], [Im, Re]] of a Hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.mat.nrows();
        let mut m = DMatrix::<f64>::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                let z = self.mat[(i, j)];
                m[(i, j)] = z.re;
                m[(i + d, j + d)] = z.re;
                m[(i, j + d)] = -z.im;
                m[(i + d, j)] = z.im;
            }
        }
        let eig = m.symmetric_eigen();
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn cnot_channel(hp: &HardwareParams, mode: GateMode) -> Channel {
    match mode {
        GateMode::Direct => Channel::depolarized_gate(&channel::cnot(), hp.p),
        GateMode::Teleported(ch) => ch.clone(),
    }
}

fn pauli_power(base: &CMatrix, exponent: usize) -> CMatrix {
    if exponent == 0 {
        channel::identity(2)
    } else {
        base.clone()
    }
}

/// Raw Bell populations after connecting pairs `a` (left) and `b`
/// (right) at their shared middle node. Deterministic: the four
/// measurement branches are corrected and summed.
pub fn connection_circuit(
    a: &BellDiagonalState,
    b: &BellDiagonalState,
    hp: &HardwareParams,
    mode: GateMode,
) -> Result<[f64; 4], OracleError> {
    connection_circuit_raw(a.populations(), b.populations(), hp, mode)
}

/// Connection on raw (fixed-basis-order) population vectors; used for
/// coefficient-table generation where pure basis inputs must not be
/// re-sorted.
pub fn connection_circuit_raw(
    a: [f64; 4],
    b: [f64; 4],
    hp: &HardwareParams,
    mode: GateMode,
) -> Result<[f64; 4], OracleError> {
    // Qubits: 0 = far left, 1 = middle (left pair), 2 = middle (right
    // pair), 3 = far right.
    let mut dm =
        DensityMatrix::from_bell_populations(a).tensor(&DensityMatrix::from_bell_populations(b));
    dm.apply_channel(&cnot_channel(hp, mode), &[1, 2])?;

    let mut total: Option<DensityMatrix> = None;
    for (m1, (w1, dm1)) in dm.measure_remove(1, MeasBasis::X, hp.eta)?.into_iter().enumerate() {
        if w1 <= 0.0 {
            continue;
        }
        // After removing qubit 1, the right-pair middle qubit is index 1
        // and the far right is index 2.
        for (m2, (w2, mut dm2)) in dm1.measure_remove(1, MeasBasis::Z, hp.eta)?.into_iter().enumerate() {
            if w2 <= 0.0 {
                continue;
            }
            // Reported outcomes dictate the Pauli correction on the far
            // right qubit (now index 1): Z for the X-measurement bit, X
            // for the Z-measurement bit.
            let correction = pauli_power(&channel::pauli_z(), m1) * pauli_power(&channel::pauli_x(), m2);
            dm2.apply_unitary(&correction, &[1])?;
            match &mut total {
                None => total = Some(dm2),
                Some(t) => t.add_assign(&dm2),
            }
        }
    }
    total.expect("at least one branch has weight").bell_populations()
}

/// Raw Bell populations and success probability of one entanglement
/// pumping step: `target` is purified by a fresh `source` pair via the
/// two-way parity-check circuit. On success (coincident outcomes) the
/// kept populations are returned normalized.
pub fn pump_circuit(
    target: &BellDiagonalState,
    source: &BellDiagonalState,
    hp: &HardwareParams,
    mode: GateMode,
) -> Result<([f64; 4], f64), OracleError> {
    pump_circuit_raw(target.populations(), source.populations(), hp, mode)
}

/// Pumping on raw (fixed-basis-order) population vectors; see
/// [`connection_circuit_raw`].
pub fn pump_circuit_raw(
    target: [f64; 4],
    source: [f64; 4],
    hp: &HardwareParams,
    mode: GateMode,
) -> Result<([f64; 4], f64), OracleError> {
    // Qubits: 0/1 = target pair (left node / right node), 2/3 = source
    // pair (left node / right node).
    let mut dm = DensityMatrix::from_bell_populations(target)
        .tensor(&DensityMatrix::from_bell_populations(source));
    let half_pi = std::f64::consts::FRAC_PI_2;
    dm.apply_unitary(&channel::rx(half_pi), &[0])?;
    dm.apply_unitary(&channel::rx(half_pi), &[2])?;
    dm.apply_unitary(&channel::rx(-half_pi), &[1])?;
    dm.apply_unitary(&channel::rx(-half_pi), &[3])?;

    let gate = cnot_channel(hp, mode);
    dm.apply_channel(&gate, &[0, 2])?;
    dm.apply_channel(&gate, &[1, 3])?;

    let mut kept: Option<DensityMatrix> = None;
    let mut success = 0.0;
    for (m2, (w2, dm2)) in dm.measure_remove(2, MeasBasis::Z, hp.eta)?.into_iter().enumerate() {
        if w2 <= 0.0 {
            continue;
        }
        // Old qubit 3 is index 2 after the first removal.
        for (m3, (w3, dm3)) in dm2.measure_remove(2, MeasBasis::Z, hp.eta)?.into_iter().enumerate() {
            if m2 != m3 || w3 <= 0.0 {
                continue;
            }
            success += w3;
            match &mut kept {
                None => kept = Some(dm3),
                Some(t) => t.add_assign(&dm3),
            }
        }
    }
    // Pure-basis inputs can make the coincidence impossible (e.g. a
    // definite parity mismatch with ideal operations); report zero
    // success and no state rather than dividing by zero. Canonical
    // mixed inputs always have strictly positive success.
    if success <= 0.0 {
        return Ok(([0.0; 4], 0.0));
    }
    let mut kept = kept.expect("coincidence branches have weight");
    kept.scale(1.0 / success);
    Ok((kept.bell_populations()?, success))
}

/// Effective two-qubit channel of a CNOT teleported through the
/// entangled pair `gate_pair`, with local depolarized CNOTs (p) and
/// unreliable measurements (eta). Obtained by pushing all 16 matrix
/// units through the teleportation circuit.
pub fn teleported_cnot_channel(gate_pair: &BellDiagonalState, hp: &HardwareParams) -> Channel {
    let resource = DensityMatrix::from_bell_diagonal(gate_pair);
    let local_cnot = Channel::depolarized_gate(&channel::cnot(), hp.p);
    let mut superop = CMatrix::zeros(16, 16);
    for i in 0..4 {
        for j in 0..4 {
            let mut unit = CMatrix::zeros(4, 4);
            unit[(i, j)] = Complex64::new(1.0, 0.0);
            let data = DensityMatrix::from_matrix(2, unit);
            let out = teleport_once(&data, &resource, &local_cnot, hp)
                .expect("teleportation circuit on valid indices");
            for row in 0..4 {
                for col in 0..4 {
                    superop[(row * 4 + col, i * 4 + j)] = out.matrix()[(row, col)];
                }
            }
        }
    }
    Channel::from_superop(2, superop)
}

/// One pass of the CNOT teleportation circuit: control-side CNOT onto
/// the resource, Z-measurement, conditional X; resource-side CNOT onto
/// the data target, X-measurement, conditional Z. Returns the summed
/// corrected branches on the two data qubits.
fn teleport_once(
    data: &DensityMatrix,
    resource: &DensityMatrix,
    local_cnot: &Channel,
    hp: &HardwareParams,
) -> Result<DensityMatrix, OracleError> {
    // Qubits: 0 = data control, 1 = data target, 2/3 = resource halves
    // at the control / target nodes.
    let mut dm = data.tensor(resource);
    dm.apply_channel(local_cnot, &[0, 2])?;
    let mut total: Option<DensityMatrix> = None;
    for (a, (wa, mut dma)) in dm.measure_remove(2, MeasBasis::Z, hp.eta)?.into_iter().enumerate() {
        if wa <= 0.0 {
            continue;
        }
        // Remaining qubits: 0 = control, 1 = target, 2 = resource half
        // at the target node.
        dma.apply_unitary(&pauli_power(&channel::pauli_x(), a), &[2])?;
        dma.apply_channel(local_cnot, &[2, 1])?;
        for (b, (wb, mut dmb)) in dma.measure_remove(2, MeasBasis::X, hp.eta)?.into_iter().enumerate() {
            if wb <= 0.0 {
                continue;
            }
            dmb.apply_unitary(&pauli_power(&channel::pauli_z(), b), &[0])?;
            match &mut total {
                None => total = Some(dmb),
                Some(t) => t.add_assign(&dmb),
            }
        }
    }
    Ok(total.expect("at least one teleportation branch"))
}

/// Connection with canonicalized output; the oracle-side counterpart of
/// the connect kernel.
pub fn simulate_connect(
    a: &BellDiagonalState,
    b: &BellDiagonalState,
    hp: &HardwareParams,
    mode: GateMode,
) -> Result<BellDiagonalState, OracleError> {
    let pops = connection_circuit(a, b, hp, mode)?;
    Ok(BellDiagonalState::new(pops)?)
}

/// Pumping with canonicalized output; the oracle-side counterpart of
/// the pump kernel. Returns (state after success, success probability).
pub fn simulate_pump(
    target: &BellDiagonalState,
    source: &BellDiagonalState,
    hp: &HardwareParams,
    mode: GateMode,
) -> Result<(BellDiagonalState, f64), OracleError> {
    let (pops, success) = pump_circuit(target, source, hp, mode)?;
    Ok((BellDiagonalState::new(pops)?, success))
}
