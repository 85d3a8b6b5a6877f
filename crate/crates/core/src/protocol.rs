//! Protocol trees: the recursive Generate / Connect / Pump structure the
//! planner emits, the simulator executes, and the CLI round-trips as
//! JSON.
//!
//! In memory a protocol is a DAG: pump chains reuse one source
//! construction and the planner reuses table entries as children, so
//! nodes are shared through `Arc`. The file format mirrors that: a flat
//! node table with integer-id children (children always precede their
//! parents), instead of a literally nested tree that would expand the
//! sharing exponentially.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::PairKernels;
use crate::noise::HardwareParams;
use crate::states::BellDiagonalState;

/// Repeater architecture the protocol is written for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Logarithmically many memory qubits per node; local gates.
    Bdcz,
    /// Two qubits per node; remote gates teleported through elementary
    /// pairs.
    Ctsl,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Bdcz => write!(f, "bdcz"),
            Scheme::Ctsl => write!(f, "ctsl"),
        }
    }
}

/// Interval of repeater nodes covered by a pair, in distance units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub fn new(start: u32, end: u32) -> Self {
        assert!(end > start, "span must be non-empty");
        Self { start, end }
    }

    /// Distance in units.
    pub fn distance(&self) -> u32 {
        self.end - self.start
    }
}

#[derive(Debug, Clone)]
pub enum ProtocolKind {
    /// Direct generation of an elementary pair over the span.
    Generate { tau_e: f64 },
    /// Entanglement connection of two abutting pairs.
    Connect {
        left: Arc<ProtocolNode>,
        right: Arc<ProtocolNode>,
        gate_pair: Option<BellDiagonalState>,
    },
    /// One entanglement pumping step of `target` with a fresh `source`.
    Pump {
        target: Arc<ProtocolNode>,
        source: Arc<ProtocolNode>,
        gate_pair: Option<BellDiagonalState>,
    },
}

/// One step of a repeater protocol, with its cached output state and
/// expected completion time.
#[derive(Debug, Clone)]
pub struct ProtocolNode {
    pub kind: ProtocolKind,
    pub span: Span,
    /// Output pair state (canonical), identical to recomputation from
    /// the children through the kernels.
    pub state: BellDiagonalState,
    /// Expected time to produce the pair, seconds.
    pub avg_time: f64,
    /// Unfolded tree size (pump retries not counted); saturating.
    pub tree_size: u64,
}

impl ProtocolNode {
    pub fn generate(span: Span, tau_e: f64, state: BellDiagonalState) -> Arc<Self> {
        Arc::new(Self {
            kind: ProtocolKind::Generate { tau_e },
            span,
            state,
            avg_time: tau_e,
            tree_size: 1,
        })
    }

    pub fn connect(
        left: Arc<ProtocolNode>,
        right: Arc<ProtocolNode>,
        gate_pair: Option<BellDiagonalState>,
        state: BellDiagonalState,
        avg_time: f64,
    ) -> Arc<Self> {
        assert_eq!(left.span.end, right.span.start, "connect spans must abut");
        let span = Span::new(left.span.start, right.span.end);
        let tree_size = 1u64
            .saturating_add(left.tree_size)
            .saturating_add(right.tree_size);
        Arc::new(Self {
            kind: ProtocolKind::Connect {
                left,
                right,
                gate_pair,
            },
            span,
            state,
            avg_time,
            tree_size,
        })
    }

    pub fn pump(
        target: Arc<ProtocolNode>,
        source: Arc<ProtocolNode>,
        gate_pair: Option<BellDiagonalState>,
        state: BellDiagonalState,
        avg_time: f64,
    ) -> Arc<Self> {
        let span = target.span;
        let tree_size = 1u64
            .saturating_add(target.tree_size)
            .saturating_add(source.tree_size);
        Arc::new(Self {
            kind: ProtocolKind::Pump {
                target,
                source,
                gate_pair,
            },
            span,
            state,
            avg_time,
            tree_size,
        })
    }

    pub fn distance(&self) -> u32 {
        self.span.distance()
    }

    pub fn children(&self) -> Vec<&Arc<ProtocolNode>> {
        match &self.kind {
            ProtocolKind::Generate { .. } => vec![],
            ProtocolKind::Connect { left, right, .. } => vec![left, right],
            ProtocolKind::Pump { target, source, .. } => vec![target, source],
        }
    }
}

// ---------------------------------------------------------------------
// JSON wire format
// ---------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> ProtocolError {
    ProtocolError::Invalid {
        location: location.into(),
        message: message.into(),
    }
}

/// Serialized protocol: `nodes[i].children` index into `nodes`, children
/// strictly before parents, `root` is the final pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolFile {
    pub scheme: Scheme,
    pub unit_km: f64,
    pub root: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub kind: String,
    pub span: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_pair: Option<[f64; 4]>,
    pub state: [f64; 4],
    pub avg_time: f64,
}

impl ProtocolFile {
    /// Flatten a protocol DAG, deduplicating shared nodes by identity.
    pub fn from_protocol(root: &Arc<ProtocolNode>, scheme: Scheme, unit_km: f64) -> Self {
        let mut ids: HashMap<*const ProtocolNode, usize> = HashMap::new();
        let mut nodes: Vec<NodeRecord> = Vec::new();

        fn visit(
            node: &Arc<ProtocolNode>,
            ids: &mut HashMap<*const ProtocolNode, usize>,
            nodes: &mut Vec<NodeRecord>,
        ) -> usize {
            let key = Arc::as_ptr(node);
            if let Some(&id) = ids.get(&key) {
                return id;
            }
            let (kind, tau_e, children, gate_pair) = match &node.kind {
                ProtocolKind::Generate { tau_e } => ("generate", Some(*tau_e), None, None),
                ProtocolKind::Connect {
                    left,
                    right,
                    gate_pair,
                } => {
                    let l = visit(left, ids, nodes);
                    let r = visit(right, ids, nodes);
                    ("connect", None, Some([l, r]), *gate_pair)
                }
                ProtocolKind::Pump {
                    target,
                    source,
                    gate_pair,
                } => {
                    let t = visit(target, ids, nodes);
                    let s = visit(source, ids, nodes);
                    ("pump", None, Some([t, s]), *gate_pair)
                }
            };
            let id = nodes.len();
            nodes.push(NodeRecord {
                kind: kind.to_string(),
                span: [node.span.start, node.span.end],
                tau_e,
                children,
                gate_pair: gate_pair.map(|g| g.populations()),
                state: node.state.populations(),
                avg_time: node.avg_time,
            });
            ids.insert(key, id);
            id
        }

        let root_id = visit(root, &mut ids, &mut nodes);
        Self {
            scheme,
            unit_km,
            root: root_id,
            nodes,
        }
    }

    /// Rebuild the shared protocol DAG, checking structural invariants.
    pub fn to_protocol(&self) -> Result<Arc<ProtocolNode>, ProtocolError> {
        if self.unit_km <= 0.0 {
            return Err(invalid("unit_km", "must be positive"));
        }
        let mut built: Vec<Arc<ProtocolNode>> = Vec::with_capacity(self.nodes.len());
        for (i, rec) in self.nodes.iter().enumerate() {
            let loc = format!("nodes[{i}]");
            if rec.span[1] <= rec.span[0] {
                return Err(invalid(&loc, "span must satisfy end > start"));
            }
            let span = Span::new(rec.span[0], rec.span[1]);
            let state = BellDiagonalState::new(rec.state)
                .map_err(|e| invalid(format!("{loc}.state"), e.to_string()))?;
            if state.populations() != rec.state {
                return Err(invalid(
                    format!("{loc}.state"),
                    "populations must be canonical (sorted, normalized)",
                ));
            }
            let gate_pair = match rec.gate_pair {
                None => None,
                Some(g) => Some(
                    BellDiagonalState::new(g)
                        .map_err(|e| invalid(format!("{loc}.gate_pair"), e.to_string()))?,
                ),
            };
            let child = |slot: usize| -> Result<Arc<ProtocolNode>, ProtocolError> {
                let ids = rec.children.ok_or_else(|| {
                    invalid(format!("{loc}.children"), "connect/pump needs children")
                })?;
                let id = ids[slot];
                if id >= i {
                    return Err(invalid(
                        format!("{loc}.children[{slot}]"),
                        "children must precede parents",
                    ));
                }
                Ok(built[id].clone())
            };
            let node = match rec.kind.as_str() {
                "generate" => {
                    let tau_e = rec.tau_e.ok_or_else(|| {
                        invalid(format!("{loc}.tau_e"), "generate needs tau_e")
                    })?;
                    if !(tau_e.is_finite() && tau_e > 0.0) {
                        return Err(invalid(format!("{loc}.tau_e"), "must be positive"));
                    }
                    let node = ProtocolNode::generate(span, tau_e, state);
                    if (node.avg_time - rec.avg_time).abs() > 1e-12 * rec.avg_time.abs().max(1.0) {
                        return Err(invalid(
                            format!("{loc}.avg_time"),
                            "generate avg_time must equal tau_e",
                        ));
                    }
                    node
                }
                "connect" => {
                    let left = child(0)?;
                    let right = child(1)?;
                    if left.span.end != right.span.start {
                        return Err(invalid(&loc, "connect children spans must abut"));
                    }
                    if (left.span.start, right.span.end) != (span.start, span.end) {
                        return Err(invalid(&loc, "connect span must be the union of children"));
                    }
                    ProtocolNode::connect(left, right, gate_pair, state, rec.avg_time)
                }
                "pump" => {
                    let target = child(0)?;
                    let source = child(1)?;
                    if target.span != span {
                        return Err(invalid(&loc, "pump span must equal target span"));
                    }
                    let same_span = source.span == target.span;
                    let nested = target.distance() >= 3
                        && source.span.start == target.span.start + 1
                        && source.span.end == target.span.end - 1;
                    // CTSL can only pump same-span with a fresh elementary
                    // pair held on the communication qubits.
                    let source_is_leaf = matches!(source.kind, ProtocolKind::Generate { .. });
                    let legal = match self.scheme {
                        Scheme::Bdcz => same_span,
                        Scheme::Ctsl => nested || (same_span && source_is_leaf),
                    };
                    if !legal {
                        return Err(invalid(
                            &loc,
                            format!("pump source span illegal for scheme {}", self.scheme),
                        ));
                    }
                    ProtocolNode::pump(target, source, gate_pair, state, rec.avg_time)
                }
                other => return Err(invalid(format!("{loc}.kind"), format!("unknown kind {other:?}"))),
            };
            built.push(node);
        }
        built
            .get(self.root)
            .cloned()
            .ok_or_else(|| invalid("root", "root index out of range"))
    }

    /// Verify that every cached state and time equals recomputation from
    /// the children through the kernels and the time recursions. Call
    /// [`ProtocolFile::to_protocol`] first; structural errors surface
    /// there.
    pub fn verify_caches(&self, hp: &HardwareParams) -> Result<(), ProtocolError> {
        self.to_protocol()?;
        let direct = PairKernels::direct(hp);
        let mut teleported: HashMap<[u64; 4], PairKernels> = HashMap::new();
        let mut kern = |gp: &Option<[f64; 4]>| -> PairKernels {
            match gp {
                None => direct.clone(),
                Some(g) => {
                    let key = g.map(f64::to_bits);
                    teleported
                        .entry(key)
                        .or_insert_with(|| {
                            PairKernels::teleported(
                                hp,
                                &BellDiagonalState::new(*g).expect("validated above"),
                            )
                        })
                        .clone()
                }
            }
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        let states_close = |a: [f64; 4], b: [f64; 4]| {
            a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-9)
        };
        for (i, rec) in self.nodes.iter().enumerate() {
            let loc = format!("nodes[{i}]");
            let span_km = (rec.span[1] - rec.span[0]) as f64 * self.unit_km;
            match rec.kind.as_str() {
                "generate" => {
                    let tau_e = rec.tau_e.unwrap_or(0.0);
                    let state = crate::noise::generation_state(tau_e, span_km, hp)
                        .map_err(|e| invalid(&loc, e.to_string()))?;
                    if !states_close(state.populations(), rec.state) {
                        return Err(invalid(&loc, "cached state does not match generation model"));
                    }
                }
                "connect" => {
                    let [l, r] = rec.children.unwrap();
                    let k = kern(&rec.gate_pair);
                    let a = BellDiagonalState::new(self.nodes[l].state).unwrap();
                    let b = BellDiagonalState::new(self.nodes[r].state).unwrap();
                    let out = k.connect(&a, &b);
                    if !states_close(out.populations(), rec.state) {
                        return Err(invalid(&loc, "cached state does not match connect kernel"));
                    }
                    let t = self.nodes[l].avg_time.max(self.nodes[r].avg_time) + span_km / hp.c;
                    if !close(t, rec.avg_time) {
                        return Err(invalid(&loc, "cached avg_time does not match connect recursion"));
                    }
                }
                "pump" => {
                    let [t_id, s_id] = rec.children.unwrap();
                    let k = kern(&rec.gate_pair);
                    let tgt = BellDiagonalState::new(self.nodes[t_id].state).unwrap();
                    let src = BellDiagonalState::new(self.nodes[s_id].state).unwrap();
                    let out = k.pump(&tgt, &src);
                    if !states_close(out.state.populations(), rec.state) {
                        return Err(invalid(&loc, "cached state does not match pump kernel"));
                    }
                    let t = (self.nodes[t_id].avg_time + self.nodes[s_id].avg_time + span_km / hp.c)
                        / out.success_prob;
                    if !close(t, rec.avg_time) {
                        return Err(invalid(&loc, "cached avg_time does not match pump recursion"));
                    }
                }
                _ => unreachable!("kinds validated by to_protocol"),
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------
// Occupancy
// ---------------------------------------------------------------------

/// Memory-qubit budget of a node in a span-n BDCZ protocol: two qubits
/// per nesting level.
pub fn bdcz_qubit_budget(total_span: u32) -> u32 {
    2 * (2 * total_span).next_power_of_two().trailing_zeros()
}

fn level_of(distance: u32) -> u32 {
    // Nesting level by span: 1 -> 0, 2 -> 1, 3..4 -> 2, 5..8 -> 3, ...
    distance.next_power_of_two().trailing_zeros()
}

/// Check that the protocol respects its scheme's per-node qubit budget.
///
/// BDCZ: counts per (node, nesting level) occupancy — 2 where a pump
/// makes target and source coexist, else 1 — against 2 log2(2N).
/// CTSL: structural storage rules — pump sources must sit strictly
/// inside the target span (distance n-2), except the comm-mediated
/// same-span case at distance 1; two concurrent same-node storage pairs
/// are a violation.
pub fn occupancy_check(proto: &Arc<ProtocolNode>, scheme: Scheme) -> bool {
    match scheme {
        Scheme::Bdcz => {
            // usage[(physical node, level)] = 1 (pair held) or 2 (pair
            // and pump source held simultaneously).
            let mut usage: HashMap<(u32, u32), u32> = HashMap::new();
            let mut seen: Vec<*const ProtocolNode> = Vec::new();
            let mut stack = vec![proto.clone()];
            while let Some(node) = stack.pop() {
                let key = Arc::as_ptr(&node);
                if seen.contains(&key) {
                    continue;
                }
                seen.push(key);
                let level = level_of(node.distance());
                let claim = match &node.kind {
                    ProtocolKind::Pump { .. } => 2,
                    _ => 1,
                };
                for endpoint in [node.span.start, node.span.end] {
                    let slot = usage.entry((endpoint, level)).or_insert(0);
                    *slot = (*slot).max(claim);
                }
                for child in node.children() {
                    stack.push(child.clone());
                }
            }
            let mut per_node: HashMap<u32, u32> = HashMap::new();
            for ((v, _), count) in usage {
                *per_node.entry(v).or_insert(0) += count;
            }
            let budget = bdcz_qubit_budget(proto.distance());
            per_node.values().all(|&u| u <= budget)
        }
        Scheme::Ctsl => ctsl_storage_ok(proto),
    }
}

fn ctsl_storage_ok(node: &Arc<ProtocolNode>) -> bool {
    match &node.kind {
        ProtocolKind::Generate { .. } => true,
        ProtocolKind::Connect { left, right, .. } => {
            left.span.end == right.span.start && ctsl_storage_ok(left) && ctsl_storage_ok(right)
        }
        ProtocolKind::Pump { target, source, .. } => {
            let same_span_elementary = source.span == target.span
                && matches!(source.kind, ProtocolKind::Generate { .. });
            let nested = target.distance() >= 3
                && source.span.start == target.span.start + 1
                && source.span.end == target.span.end - 1;
            (same_span_elementary || nested) && ctsl_storage_ok(target) && ctsl_storage_ok(source)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(start: u32, end: u32, fidelity: f64) -> Arc<ProtocolNode> {
        ProtocolNode::generate(Span::new(start, end), 1e-4, BellDiagonalState::werner(fidelity))
    }

    /// Build a full doubling BDCZ tree over [0, 2^levels] with one pump
    /// after every connection. Cached states/times are placeholders;
    /// these tests exercise structure only.
    fn bdcz_doubling(levels: u32) -> Arc<ProtocolNode> {
        fn build(start: u32, span: u32) -> Arc<ProtocolNode> {
            if span == 1 {
                return leaf(start, start + 1, 0.96);
            }
            let half = span / 2;
            let target = ProtocolNode::connect(
                build(start, half),
                build(start + half, half),
                None,
                BellDiagonalState::werner(0.9),
                1.0,
            );
            // Constant-fidelity pumping reuses one source construction.
            let source = target.clone();
            ProtocolNode::pump(target, source, None, BellDiagonalState::werner(0.92), 2.0)
        }
        build(0, 1 << levels)
    }

    #[test]
    fn single_generate_passes_occupancy() {
        let g = leaf(0, 1, 0.96);
        assert!(occupancy_check(&g, Scheme::Bdcz));
        assert!(occupancy_check(&g, Scheme::Ctsl));
    }

    #[test]
    fn bdcz_full_doubling_within_budget() {
        // N = 8 segments: budget 2 log2(16) = 8.
        let proto = bdcz_doubling(3);
        assert_eq!(bdcz_qubit_budget(proto.distance()), 8);
        assert!(occupancy_check(&proto, Scheme::Bdcz));
    }

    #[test]
    fn ctsl_rejects_same_node_storage_pairs() {
        // Same-span pump at distance 2: two storage pairs would share
        // both end nodes.
        let a = ProtocolNode::connect(
            leaf(0, 1, 0.99),
            leaf(1, 2, 0.99),
            None,
            BellDiagonalState::werner(0.9),
            1.0,
        );
        let b = a.clone();
        let pumped = ProtocolNode::pump(a, b, None, BellDiagonalState::werner(0.91), 2.0);
        assert!(!occupancy_check(&pumped, Scheme::Ctsl));
        // The same structure is legal for BDCZ.
        assert!(occupancy_check(&pumped, Scheme::Bdcz));
    }

    #[test]
    fn ctsl_accepts_nested_pump_sources() {
        // Target [0,3], source [1,2]: the distance n-2 rule.
        let t = ProtocolNode::connect(
            ProtocolNode::connect(
                leaf(0, 1, 0.99),
                leaf(1, 2, 0.99),
                None,
                BellDiagonalState::werner(0.9),
                1.0,
            ),
            leaf(2, 3, 0.99),
            None,
            BellDiagonalState::werner(0.88),
            1.5,
        );
        let s = leaf(1, 2, 0.99);
        let pumped = ProtocolNode::pump(t, s, None, BellDiagonalState::werner(0.9), 2.0);
        assert!(occupancy_check(&pumped, Scheme::Ctsl));
    }

    #[test]
    fn file_round_trip_preserves_sharing() {
        let proto = bdcz_doubling(2);
        let file = ProtocolFile::from_protocol(&proto, Scheme::Bdcz, 10.0);
        let json = serde_json::to_string_pretty(&file).unwrap();
        let parsed: ProtocolFile = serde_json::from_str(&json).unwrap();
        let rebuilt = parsed.to_protocol().unwrap();
        assert_eq!(rebuilt.span, proto.span);
        assert_eq!(rebuilt.tree_size, proto.tree_size);
        // DAG stays compact even though the unfolded tree is larger.
        assert!(file.nodes.len() as u64 <= proto.tree_size);
        let again = ProtocolFile::from_protocol(&rebuilt, Scheme::Bdcz, 10.0);
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&parsed).unwrap());
    }

    #[test]
    fn file_rejects_structural_violations() {
        let proto = bdcz_doubling(1);
        let mut file = ProtocolFile::from_protocol(&proto, Scheme::Bdcz, 10.0);
        // Forward reference.
        let last = file.nodes.len() - 1;
        file.nodes[0].kind = "connect".into();
        file.nodes[0].children = Some([last, last]);
        let err = file.to_protocol().unwrap_err();
        assert!(err.to_string().contains("nodes[0]"));

        // Non-abutting connect.
        let mut file = ProtocolFile::from_protocol(&proto, Scheme::Bdcz, 10.0);
        for rec in file.nodes.iter_mut() {
            if rec.kind == "connect" {
                rec.span[1] += 1;
            }
        }
        assert!(file.to_protocol().is_err());

        // CTSL rejects the BDCZ same-span pump at distance 2.
        let file = ProtocolFile::from_protocol(&proto, Scheme::Ctsl, 10.0);
        assert!(file.to_protocol().is_err());
    }

    #[test]
    fn unknown_kind_reported_with_location() {
        let proto = leaf(0, 1, 0.9);
        let mut file = ProtocolFile::from_protocol(&proto, Scheme::Bdcz, 10.0);
        file.nodes[0].kind = "teleport".into();
        let err = file.to_protocol().unwrap_err().to_string();
        assert!(err.contains("nodes[0]") && err.contains("teleport"), "{err}");
    }
}
