//! Quantum channels on one or two qubits, represented as dense
//! superoperators, plus the small gate library the circuits need.
//!
//! A channel on `k` qubits is stored as the 4^k x 4^k matrix `S` acting
//! on row-major vectorized density matrices: `vec(out) = S vec(rho)`.
//! For a Kraus set {K_i} this is `S = sum_i K_i (x) conj(K_i)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[r(0.0), r(1.0), r(1.0), r(0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[r(0.0), c(0.0, -1.0), c(0.0, 1.0), r(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(-1.0)])
}

pub fn hadamard() -> CMatrix {
    let h = 1.0 / 2.0f64.sqrt();
    CMatrix::from_row_slice(2, 2, &[r(h), r(h), r(h), r(-h)])
}

/// Rotation about X: exp(-i theta X / 2).
pub fn rx(theta: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    CMatrix::from_row_slice(2, 2, &[r(co), c(0.0, -s), c(0.0, -s), r(co)])
}

/// CNOT with the first qubit as control, second as target.
pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = r(1.0);
    m[(1, 1)] = r(1.0);
    m[(2, 3)] = r(1.0);
    m[(3, 2)] = r(1.0);
    m
}

/// The 4^k Pauli strings on k qubits (k = 1 or 2), I/X/Y/Z tensor words.
fn pauli_strings(qubits: usize) -> Vec<CMatrix> {
    let singles = [identity(2), pauli_x(), pauli_y(), pauli_z()];
    match qubits {
        1 => singles.to_vec(),
        2 => {
            let mut out = Vec::with_capacity(16);
            for a in &singles {
                for b in &singles {
                    out.push(a.kronecker(b));
                }
            }
            out
        }
        _ => panic!("pauli strings only built for 1 or 2 qubits"),
    }
}

/// A completely positive map on `qubits` qubits in superoperator form.
#[derive(Debug, Clone)]
pub struct Channel {
    qubits: usize,
    superop: CMatrix,
}

impl Channel {
    pub fn from_superop(qubits: usize, superop: CMatrix) -> Self {
        let d2 = 4usize.pow(qubits as u32);
        assert_eq!(superop.nrows(), d2);
        assert_eq!(superop.ncols(), d2);
        Self { qubits, superop }
    }

    pub fn from_kraus(qubits: usize, kraus: &[CMatrix]) -> Self {
        let dim = 1usize << qubits;
        let mut superop = CMatrix::zeros(dim * dim, dim * dim);
        for k in kraus {
            assert_eq!(k.nrows(), dim);
            superop += k.kronecker(&k.map(|z| z.conj()));
        }
        Self { qubits, superop }
    }

    /// The channel rho -> U rho U^dag.
    pub fn unitary(u: &CMatrix) -> Self {
        let qubits = u.nrows().trailing_zeros() as usize;
        assert_eq!(1usize << qubits, u.nrows());
        Self::from_kraus(qubits, std::slice::from_ref(u))
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn superop(&self) -> &CMatrix {
        &self.superop
    }

    /// Apply to a bare density matrix of exactly `qubits` qubits.
    /// Embedding into larger registers is the oracle's job.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let dim = 1usize << self.qubits;
        assert_eq!(rho.nrows(), dim);
        let mut vec_in = CMatrix::zeros(dim * dim, 1);
        for row in 0..dim {
            for col in 0..dim {
                vec_in[(row * dim + col, 0)] = rho[(row, col)];
            }
        }
        let vec_out = &self.superop * vec_in;
        let mut out = CMatrix::zeros(dim, dim);
        for row in 0..dim {
            for col in 0..dim {
                out[(row, col)] = vec_out[(row * dim + col, 0)];
            }
        }
        out
    }

    /// Convex combination of channels; weights must sum to 1 for the
    /// result to be trace-preserving.
    pub fn mix(parts: &[(f64, &Channel)]) -> Self {
        let qubits = parts[0].1.qubits;
        let mut superop = CMatrix::zeros(parts[0].1.superop.nrows(), parts[0].1.superop.ncols());
        for (w, ch) in parts {
            assert_eq!(ch.qubits, qubits);
            superop += ch.superop.scale(*w);
        }
        Self { qubits, superop }
    }

    /// A noisy gate: with probability `p` the ideal unitary acts;
    /// otherwise the qubits it acts on are replaced by the maximally
    /// mixed state.
    pub fn depolarized_gate(ideal: &CMatrix, p: f64) -> Self {
        let ideal_ch = Channel::unitary(ideal);
        let qubits = ideal_ch.qubits;
        // Replacement channel rho -> Tr(rho) I/d, as a uniform Pauli twirl.
        let dim = 1usize << qubits;
        let paulis = pauli_strings(qubits);
        let kraus: Vec<CMatrix> = paulis
            .iter()
            .map(|pm| pm.scale(1.0 / dim as f64))
            .collect();
        let replace = Channel::from_kraus(qubits, &kraus);
        Channel::mix(&[(p, &ideal_ch), (1.0 - p, &replace)])
    }

    /// Max |S - S_other| entry, for tests.
    pub fn max_abs_diff(&self, other: &Channel) -> f64 {
        (&self.superop - &other.superop)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}
