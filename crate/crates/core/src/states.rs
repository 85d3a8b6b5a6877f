//! Bell-diagonal two-qubit states and the discrete classification grid.
//!
//! Every pair handled by the planner and the simulator is diagonal in the
//! Bell basis and therefore fully described by four populations. The
//! canonical form sorts them descending; the first population is the
//! fidelity, and the shape parameter `v = (f3+f4) / 2(f2+f3+f4)`
//! apportions the remaining error weight among error types. States are
//! bucketed on a `(fidelity, shape)` grid so the dynamic program only has
//! to remember one representative per bucket.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this, a negative population is treated as numerical noise and
/// clamped; beyond it, it signals a real bug upstream.
const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("population {index} is negative beyond tolerance: {value}")]
    NegativePopulation { index: usize, value: f64 },
    #[error("populations sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("fidelity {fidelity} is below 0.5; pair is unclassifiable")]
    Unclassifiable { fidelity: f64 },
    #[error("grid edges must be strictly increasing with at least 2 bins")]
    BadGrid,
}

/// A two-qubit state diagonal in the Bell basis, in canonical form:
/// populations sorted descending and normalized.
///
/// The population order is tied to a fixed basis convention used by the
/// oracle: `(f1, f2, f3, f4)` sit on (Φ+, Φ−, Ψ+, Ψ−). Canonicalization
/// is the bookkeeping relabeling that keeps the largest population on
/// the target state Φ+.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BellDiagonalState {
    f: [f64; 4],
}

impl BellDiagonalState {
    /// Canonicalize raw populations: clamp tiny negatives, sort
    /// descending, renormalize to unit sum.
    pub fn new(populations: [f64; 4]) -> Result<Self, StateError> {
        let mut f = populations;
        for (i, x) in f.iter_mut().enumerate() {
            if *x < 0.0 {
                if *x < -NEGATIVE_TOL {
                    return Err(StateError::NegativePopulation {
                        index: i,
                        value: *x,
                    });
                }
                *x = 0.0;
            }
        }
        let sum: f64 = f.iter().sum();
        if !(sum.is_finite() && (sum - 1.0).abs() < 1e-6) {
            return Err(StateError::NotNormalized { sum });
        }
        f.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for x in f.iter_mut() {
            *x /= sum;
        }
        Ok(Self { f })
    }

    /// The perfect pair (all weight on the target Bell state).
    pub fn perfect() -> Self {
        Self {
            f: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Werner state: fidelity `f`, remaining weight spread evenly.
    pub fn werner(fidelity: f64) -> Self {
        let r = (1.0 - fidelity) / 3.0;
        Self::new([fidelity, r, r, r]).expect("werner populations are valid")
    }

    /// Fidelity `f` with all error weight on a single Bell state.
    pub fn dephased(fidelity: f64) -> Self {
        Self::new([fidelity, 1.0 - fidelity, 0.0, 0.0]).expect("dephased populations are valid")
    }

    pub fn populations(&self) -> [f64; 4] {
        self.f
    }

    /// Fidelity to the target Bell state; the largest population.
    pub fn fidelity(&self) -> f64 {
        self.f[0]
    }

    /// Shape parameter v = (f3+f4) / 2(f2+f3+f4), in [0, 1/2].
    ///
    /// Zero for a pure pair by convention: a perfect pair has no error
    /// weight to apportion.
    pub fn shape_parameter(&self) -> f64 {
        let err = self.f[1] + self.f[2] + self.f[3];
        if err <= 0.0 {
            return 0.0;
        }
        0.5 * (self.f[2] + self.f[3]) / err
    }
}

impl TryFrom<[f64; 4]> for BellDiagonalState {
    type Error = StateError;
    fn try_from(f: [f64; 4]) -> Result<Self, StateError> {
        Self::new(f)
    }
}

impl From<BellDiagonalState> for [f64; 4] {
    fn from(s: BellDiagonalState) -> [f64; 4] {
        s.f
    }
}

/// Canonicalize a raw population vector. Idempotent on canonical states.
pub fn canonicalize(populations: [f64; 4]) -> Result<BellDiagonalState, StateError> {
    BellDiagonalState::new(populations)
}

/// Discretization grid over (fidelity, shape parameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGrid {
    fidelity_edges: Vec<f64>,
    shape_edges: Vec<f64>,
}

/// Index of a grid cell: which fidelity bin and which shape bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateClass {
    pub fidelity_bin: usize,
    pub shape_bin: usize,
}

fn strictly_increasing(edges: &[f64]) -> bool {
    edges.windows(2).all(|w| w[0] < w[1])
}

impl ClassGrid {
    /// Grid from explicit edges. Fidelity edges must span [0.5, 1.0] and
    /// shape edges [0, 0.5]; each strictly increasing, at least 2 bins
    /// on the fidelity axis.
    pub fn new(fidelity_edges: Vec<f64>, shape_edges: Vec<f64>) -> Result<Self, StateError> {
        let ok = fidelity_edges.len() >= 3
            && shape_edges.len() >= 2
            && strictly_increasing(&fidelity_edges)
            && strictly_increasing(&shape_edges)
            && fidelity_edges.first() == Some(&0.5)
            && fidelity_edges.last() == Some(&1.0)
            && shape_edges.first() == Some(&0.0)
            && shape_edges.last() == Some(&0.5);
        if !ok {
            return Err(StateError::BadGrid);
        }
        Ok(Self {
            fidelity_edges,
            shape_edges,
        })
    }

    /// Uniform grid: `fidelity_bins` over [0.5, 1.0] and `shape_bins`
    /// over [0, 0.5].
    pub fn uniform(fidelity_bins: usize, shape_bins: usize) -> Result<Self, StateError> {
        if fidelity_bins < 2 || shape_bins < 1 {
            return Err(StateError::BadGrid);
        }
        let fid = (0..=fidelity_bins)
            .map(|i| 0.5 + 0.5 * i as f64 / fidelity_bins as f64)
            .collect();
        let shp = (0..=shape_bins)
            .map(|i| 0.5 * i as f64 / shape_bins as f64)
            .collect();
        Self::new(fid, shp)
    }

    pub fn fidelity_bins(&self) -> usize {
        self.fidelity_edges.len() - 1
    }

    pub fn shape_bins(&self) -> usize {
        self.shape_edges.len() - 1
    }

    pub fn fidelity_edges(&self) -> &[f64] {
        &self.fidelity_edges
    }

    /// Lower edge of a fidelity bin.
    pub fn fidelity_lower_edge(&self, bin: usize) -> f64 {
        self.fidelity_edges[bin]
    }

    /// Total number of grid cells.
    pub fn class_count(&self) -> usize {
        self.fidelity_bins() * self.shape_bins()
    }

    /// Dense index of a class, for flat table storage.
    pub fn class_index(&self, class: StateClass) -> usize {
        class.fidelity_bin * self.shape_bins() + class.shape_bin
    }

    /// Bins are half-open [lo, hi); the last bin is closed so 1.0 (and
    /// shape 0.5) land in a bin. Values below the first fidelity edge
    /// are unclassifiable and rejected.
    pub fn classify(&self, state: &BellDiagonalState) -> Result<StateClass, StateError> {
        let f = state.fidelity();
        if f < self.fidelity_edges[0] {
            return Err(StateError::Unclassifiable { fidelity: f });
        }
        Ok(StateClass {
            fidelity_bin: bin_of(&self.fidelity_edges, f),
            shape_bin: bin_of(&self.shape_edges, state.shape_parameter()),
        })
    }
}

fn bin_of(edges: &[f64], value: f64) -> usize {
    // partition_point gives the count of edges <= value; the containing
    // half-open bin is one less. The final clamp closes the last bin.
    let idx = edges.partition_point(|e| *e <= value);
    idx.saturating_sub(1).min(edges.len() - 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bds(f: [f64; 4]) -> BellDiagonalState {
        BellDiagonalState::new(f).unwrap()
    }

    #[test]
    fn canonicalize_sorts_descending() {
        assert_eq!(
            bds([0.1, 0.7, 0.1, 0.1]).populations(),
            [0.7, 0.1, 0.1, 0.1]
        );
        assert_eq!(bds([1.0, 0.0, 0.0, 0.0]).populations(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            bds([0.25, 0.25, 0.25, 0.25]).populations(),
            [0.25, 0.25, 0.25, 0.25]
        );
    }

    #[test]
    fn canonicalize_rejects_real_negatives() {
        assert!(matches!(
            BellDiagonalState::new([1.1, -0.1, 0.0, 0.0]),
            Err(StateError::NegativePopulation { index: 1, .. })
        ));
        // Tiny negatives are numerical noise and are clamped.
        let s = bds([1.0, 1e-14, -1e-14, 0.0]);
        assert!(s.populations()[3] >= 0.0);
    }

    #[test]
    fn canonicalize_rejects_unnormalized() {
        assert!(matches!(
            BellDiagonalState::new([0.5, 0.1, 0.1, 0.1]),
            Err(StateError::NotNormalized { .. })
        ));
    }

    #[test]
    fn shape_parameter_examples() {
        // Werner: error spread evenly over three states -> v = 1/3.
        let w = BellDiagonalState::werner(0.8);
        assert!((w.shape_parameter() - 1.0 / 3.0).abs() < 1e-15);
        // All error on one state -> v = 0.
        let d = BellDiagonalState::dephased(0.8);
        assert_eq!(d.shape_parameter(), 0.0);
        // Pure state -> v = 0 by convention.
        assert_eq!(BellDiagonalState::perfect().shape_parameter(), 0.0);
    }

    #[test]
    fn classify_examples() {
        // q=50 uniform fidelity bins, 8 shape bins.
        let grid = ClassGrid::uniform(50, 8).unwrap();
        let w = BellDiagonalState::werner(0.95);
        let c = grid.classify(&w).unwrap();
        assert_eq!(c.fidelity_bin, 45);
        assert_eq!(c.shape_bin, 5);

        // Lower boundary lands in bin 0.
        let lo = BellDiagonalState::werner(0.5);
        assert_eq!(grid.classify(&lo).unwrap().fidelity_bin, 0);

        // f = 1.0 belongs to the closed last bin.
        let hi = BellDiagonalState::perfect();
        assert_eq!(grid.classify(&hi).unwrap().fidelity_bin, 49);
    }

    #[test]
    fn classify_rejects_below_half() {
        let grid = ClassGrid::uniform(10, 4).unwrap();
        let s = bds([0.4, 0.3, 0.2, 0.1]);
        assert!(matches!(
            grid.classify(&s),
            Err(StateError::Unclassifiable { .. })
        ));
    }

    /// Brute-force binning: linear scan over edges. Independent of the
    /// partition_point implementation used by classify.
    fn linear_scan_bin(edges: &[f64], value: f64) -> usize {
        let last = edges.len() - 2;
        for b in 0..=last {
            let closed_last = b == last && value <= edges[b + 1];
            if value >= edges[b] && (value < edges[b + 1] || closed_last) {
                return b;
            }
        }
        last
    }

    #[test]
    fn classify_matches_linear_scan_on_random_states() {
        use rand::prelude::*;
        let grid = ClassGrid::uniform(100, 8).unwrap();
        let mut rng = StdRng::seed_from_u64(0x5eed);
        let mut checked = 0;
        while checked < 10_000 {
            let mut f = [0.0; 4];
            for x in f.iter_mut() {
                *x = -(rng.random::<f64>()).ln();
            }
            let sum: f64 = f.iter().sum();
            for x in f.iter_mut() {
                *x /= sum;
            }
            let s = BellDiagonalState::new(f).unwrap();
            let Ok(c) = grid.classify(&s) else { continue };
            assert_eq!(
                c.fidelity_bin,
                linear_scan_bin(grid.fidelity_edges(), s.fidelity())
            );
            assert_eq!(
                c.shape_bin,
                linear_scan_bin(&grid.shape_edges, s.shape_parameter())
            );
            checked += 1;
        }
    }

    #[test]
    fn grid_validation() {
        assert!(ClassGrid::uniform(1, 8).is_err());
        assert!(ClassGrid::new(vec![0.5, 0.4, 1.0], vec![0.0, 0.5]).is_err());
        assert!(ClassGrid::new(vec![0.6, 0.8, 1.0], vec![0.0, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn canonical_invariants(raw in prop::array::uniform4(1e-6..1.0f64)) {
            let sum: f64 = raw.iter().sum();
            let normalized = raw.map(|x| x / sum);
            let s = BellDiagonalState::new(normalized).unwrap();
            let f = s.populations();
            // Sorted descending, unit sum.
            prop_assert!(f[0] >= f[1] && f[1] >= f[2] && f[2] >= f[3]);
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Largest of four numbers summing to 1 is at least 1/4.
            prop_assert!(s.fidelity() >= 0.25 - 1e-12);
            let v = s.shape_parameter();
            prop_assert!((0.0..=0.5).contains(&v));
            // Idempotence.
            let again = canonicalize(f).unwrap();
            prop_assert_eq!(again.populations(), f);
        }
    }
}
