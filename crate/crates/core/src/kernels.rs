//! Closed-form Bell-diagonal transfer functions for connection and
//! pumping — the inner loop of the planner and the simulator.
//!
//! Both circuits are linear in each input density matrix, so on
//! Bell-diagonal inputs their action is a bilinear map of the population
//! vectors. The 4x4x4 coefficient tensors are generated once per
//! hardware/gate-mode combination by pushing all 16 pure-Bell input
//! combinations through the oracle circuits; the oracle stays the single
//! source of truth and the closed forms cannot drift from it.

use crate::channel::Channel;
use crate::noise::HardwareParams;
use crate::oracle::{self, GateMode, OracleError};
use crate::states::BellDiagonalState;

/// Result of one pumping step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpOutcome {
    /// State of the kept pair after a successful parity coincidence.
    pub state: BellDiagonalState,
    /// Probability of the coincidence.
    pub success_prob: f64,
}

/// Coefficient tables for one gate realization (local depolarized gates,
/// or gates teleported through one particular gate-pair state).
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct PairKernels {
    /// connect: out[k] = sum_ij connect[k][i][j] a[i] b[j]
    connect: [[[f64; 4]; 4]; 4],
    /// pump numerator: kept (unnormalized) populations
    pump_gain: [[[f64; 4]; 4]; 4],
    /// pump success probability: succ = sum_ij pump_succ[i][j] a[i] b[j]
    pump_succ: [[f64; 4]; 4],
}

fn basis_weights(index: usize) -> [f64; 4] {
    let mut f = [0.0; 4];
    f[index] = 1.0;
    f
}

impl PairKernels {
    /// Tables for local depolarized gates (the BDCZ realization, and
    /// same-node pumping in either scheme).
    pub fn direct(hp: &HardwareParams) -> Self {
        Self::build(hp, GateMode::Direct)
    }

    /// Tables for remote gates teleported through `gate_pair` (the CTSL
    /// realization).
    pub fn teleported(hp: &HardwareParams, gate_pair: &BellDiagonalState) -> Self {
        let ch = oracle::teleported_cnot_channel(gate_pair, hp);
        Self::build(hp, GateMode::Teleported(&ch))
    }

    fn build(hp: &HardwareParams, mode: GateMode) -> Self {
        let mut connect = [[[0.0; 4]; 4]; 4];
        let mut pump_gain = [[[0.0; 4]; 4]; 4];
        let mut pump_succ = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let a = basis_weights(i);
                let b = basis_weights(j);
                let out = oracle::connection_circuit_raw(a, b, hp, mode)
                    .expect("connection circuit is Bell-diagonal on basis inputs");
                let (kept, succ) = oracle::pump_circuit_raw(a, b, hp, mode)
                    .expect("pump circuit is Bell-diagonal on basis inputs");
                for k in 0..4 {
                    connect[k][i][j] = out[k];
                    pump_gain[k][i][j] = kept[k] * succ;
                }
                pump_succ[i][j] = succ;
            }
        }
        Self {
            connect,
            pump_gain,
            pump_succ,
        }
    }

    fn contract(tensor: &[[[f64; 4]; 4]; 4], a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, slice) in tensor.iter().enumerate() {
            let mut acc = 0.0;
            for (i, row) in slice.iter().enumerate() {
                let ai = a[i];
                if ai == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (j, coeff) in row.iter().enumerate() {
                    inner += coeff * b[j];
                }
                acc += ai * inner;
            }
            out[k] = acc;
        }
        out
    }

    /// Entanglement connection (swapping) of two canonical pairs.
    /// Deterministic; imperfections only lower the output quality.
    pub fn connect(&self, a: &BellDiagonalState, b: &BellDiagonalState) -> BellDiagonalState {
        let raw = Self::contract(&self.connect, &a.populations(), &b.populations());
        BellDiagonalState::new(raw).expect("connect output is a valid state")
    }

    /// One entanglement pumping step of `target` with a fresh `source`.
    pub fn pump(&self, target: &BellDiagonalState, source: &BellDiagonalState) -> PumpOutcome {
        let t = target.populations();
        let s = source.populations();
        let mut succ = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                succ += self.pump_succ[i][j] * t[i] * s[j];
            }
        }
        let mut raw = Self::contract(&self.pump_gain, &t, &s);
        for x in raw.iter_mut() {
            *x /= succ;
        }
        PumpOutcome {
            state: BellDiagonalState::new(raw).expect("pump output is a valid state"),
            success_prob: succ,
        }
    }
}

/// Convenience wrapper matching the operation-level signature: builds
/// the appropriate table for one call. Hot paths should hold a
/// [`PairKernels`] instead.
pub fn connect(
    a: &BellDiagonalState,
    b: &BellDiagonalState,
    hp: &HardwareParams,
    gate_pair: Option<&BellDiagonalState>,
) -> BellDiagonalState {
    kernels_for(hp, gate_pair).connect(a, b)
}

/// See [`connect`]; one pumping step.
pub fn pump(
    target: &BellDiagonalState,
    source: &BellDiagonalState,
    hp: &HardwareParams,
    gate_pair: Option<&BellDiagonalState>,
) -> PumpOutcome {
    kernels_for(hp, gate_pair).pump(target, source)
}

fn kernels_for(hp: &HardwareParams, gate_pair: Option<&BellDiagonalState>) -> PairKernels {
    match gate_pair {
        None => PairKernels::direct(hp),
        Some(gp) => PairKernels::teleported(hp, gp),
    }
}

/// Effective two-qubit channel of a CNOT teleported through `gate_pair`
/// with the configured local gate and measurement noise.
pub fn teleported_gate_channel(gate_pair: &BellDiagonalState, hp: &HardwareParams) -> Channel {
    oracle::teleported_cnot_channel(gate_pair, hp)
}

/// Check a kernel table against the oracle on one input pair; returns
/// the largest population deviation. Test support.
pub fn oracle_deviation(
    kern: &PairKernels,
    hp: &HardwareParams,
    mode: GateMode,
    a: &BellDiagonalState,
    b: &BellDiagonalState,
) -> Result<f64, OracleError> {
    let kc = kern.connect(a, b).populations();
    let oc = oracle::simulate_connect(a, b, hp, mode)?.populations();
    let kp = kern.pump(a, b);
    let (os, op) = oracle::simulate_pump(a, b, hp, mode)?;
    let mut dev: f64 = 0.0;
    for k in 0..4 {
        dev = dev.max((kc[k] - oc[k]).abs());
        dev = dev.max((kp.state.populations()[k] - os.populations()[k]).abs());
    }
    Ok(dev.max((kp.success_prob - op).abs()))
}
