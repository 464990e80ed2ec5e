//! Canonical JSON documents: networks (`nmx-net`), expanded tables
//! (`nmx-expanded`), diffs (`nmx-diff`), and frequency-weighted structures
//! (`nmx-structure`).
//!
//! Canonical output sorts object keys, lists nodes by id, and prints floats in
//! the shortest form that round-trips, so equal values give identical bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::inference::{ExpandedNetwork, ExpandedNode};
use crate::model::{CumulativeVector, Distribution, Network, Node, NodeId, NoisyMaxFamily, OrderedDomain, RootPrior};
use crate::subnet::Provenance;
use crate::versioning::NetworkDiff;

pub const NET_FORMAT: &str = "nmx-net";
pub const EXPANDED_FORMAT: &str = "nmx-expanded";
pub const DIFF_FORMAT: &str = "nmx-diff";
pub const STRUCTURE_FORMAT: &str = "nmx-structure";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FamilyDoc {
    pub parents: Vec<NodeId>,
    pub activation: BTreeMap<NodeId, BTreeMap<String, Vec<f64>>>,
    pub leak: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct NodeDoc {
    pub id: NodeId,
    pub name: String,
    pub domain: Vec<String>,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetDoc {
    format: String,
    version: u32,
    title: String,
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

impl NodeDoc {
    pub(crate) fn from_node(node: &Node) -> Self {
        let (prior, family) = match &node.distribution {
            Distribution::Prior(p) => (Some(p.probabilities.clone()), None),
            Distribution::Family(f) => {
                let activation = f
                    .parents
                    .iter()
                    .zip(&f.activation)
                    .map(|(p, curves)| {
                        let by_state = curves
                            .iter()
                            .enumerate()
                            .map(|(k, c)| ((k + 1).to_string(), c.values().to_vec()))
                            .collect();
                        (p.clone(), by_state)
                    })
                    .collect();
                (
                    None,
                    Some(FamilyDoc {
                        parents: f.parents.clone(),
                        activation,
                        leak: f.leak.values().to_vec(),
                    }),
                )
            }
        };
        NodeDoc {
            id: node.id.clone(),
            name: node.name.clone(),
            domain: node.domain.states().to_vec(),
            labels: node.labels.iter().cloned().collect(),
            prior,
            family,
        }
    }

    pub(crate) fn into_node(self) -> Result<Node> {
        let id = self.id;
        let field = |f: &str| format!("nodes[{id}].{f}");
        let distribution = match (self.prior, self.family) {
            (Some(p), None) => Distribution::Prior(RootPrior::new(p)),
            (None, Some(f)) => {
                let mut activation = Vec::with_capacity(f.parents.len());
                let mut extra: BTreeSet<&NodeId> = f.activation.keys().collect();
                for p in &f.parents {
                    extra.remove(p);
                    let by_state = f.activation.get(p).ok_or_else(|| {
                        Error::schema(field("family.activation"), format!("missing curves for parent `{p}`"))
                    })?;
                    let mut curves = Vec::with_capacity(by_state.len());
                    for k in 1..=by_state.len() {
                        let c = by_state.get(&k.to_string()).ok_or_else(|| {
                            Error::schema(
                                field("family.activation"),
                                format!("parent `{p}` curves must be keyed 1..{}", by_state.len()),
                            )
                        })?;
                        curves.push(CumulativeVector::from_raw(c.clone()));
                    }
                    activation.push(curves);
                }
                if let Some(p) = extra.into_iter().next() {
                    return Err(Error::schema(
                        field("family.activation"),
                        format!("curves given for `{p}`, which is not a parent"),
                    ));
                }
                Distribution::Family(NoisyMaxFamily {
                    child: id.clone(),
                    parents: f.parents,
                    activation,
                    leak: CumulativeVector::from_raw(f.leak),
                })
            }
            (Some(_), Some(_)) => {
                return Err(Error::schema(field("prior"), "node has both a prior and a family"))
            }
            (None, None) => {
                return Err(Error::schema(field("prior"), "node needs either a prior or a family"))
            }
        };
        Ok(Node {
            id,
            name: self.name,
            domain: OrderedDomain::from_states_unchecked(self.domain),
            labels: self.labels.into_iter().collect(),
            distribution,
        })
    }
}

/// Recursively sorts object keys regardless of the map implementation serde_json uses.
fn canonical(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = serde_json::Map::new();
            for (k, v) in entries {
                out.insert(k, canonical(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

pub(crate) fn to_canonical_text<T: Serialize>(doc: &T) -> String {
    let value = serde_json::to_value(doc).expect("documents serialize to JSON");
    let mut text = serde_json::to_string_pretty(&canonical(value)).expect("JSON values print");
    text.push('\n');
    text
}

pub(crate) fn parse_doc<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => {
                let msg = e.to_string();
                let field = msg
                    .split('`')
                    .nth(1)
                    .map(str::to_string)
                    .unwrap_or_else(|| "document".into());
                Error::Schema { field, message: msg }
            }
            _ => Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        }
    })
}

fn check_header(format: &str, version: u32, want: &str) -> Result<()> {
    if format != want {
        return Err(Error::schema("format", format!("expected \"{want}\", found \"{format}\"")));
    }
    if version != 1 {
        return Err(Error::schema("version", format!("unsupported version {version}")));
    }
    Ok(())
}

/// Parses and validates an `nmx-net` document.
pub fn load_network(text: &str) -> Result<Network> {
    let doc: NetDoc = parse_doc(text)?;
    check_header(&doc.format, doc.version, NET_FORMAT)?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(NodeDoc::into_node)
        .collect::<Result<Vec<_>>>()?;
    Network::new_unchecked(doc.title, nodes)?
        .with_provenance(doc.provenance)
        .validated()
}

/// Canonical `nmx-net` text.
pub fn save_network(net: &Network) -> String {
    let doc = NetDoc {
        format: NET_FORMAT.into(),
        version: Network::FORMAT_VERSION,
        title: net.title().to_string(),
        nodes: net.nodes().map(NodeDoc::from_node).collect(),
        provenance: net.provenance().cloned(),
    };
    to_canonical_text(&doc)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpandedNodeDoc {
    id: NodeId,
    states: Vec<String>,
    parents: Vec<NodeId>,
    /// One column per joint parent state.
    table: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpandedDoc {
    format: String,
    version: u32,
    title: String,
    nodes: Vec<ExpandedNodeDoc>,
}

/// Full-table exchange document for general-purpose engines.
pub fn export_expanded(net: &Network) -> Result<String> {
    Ok(save_expanded(&ExpandedNetwork::from_network(net)?))
}

pub fn save_expanded(net: &ExpandedNetwork) -> String {
    let doc = ExpandedDoc {
        format: EXPANDED_FORMAT.into(),
        version: 1,
        title: net.title.clone(),
        nodes: net
            .nodes
            .iter()
            .map(|n| ExpandedNodeDoc {
                id: n.id.clone(),
                states: n.states.clone(),
                parents: n.parents.clone(),
                table: n.table.chunks(n.states.len().max(1)).map(<[f64]>::to_vec).collect(),
            })
            .collect(),
    };
    to_canonical_text(&doc)
}

pub fn load_expanded(text: &str) -> Result<ExpandedNetwork> {
    let doc: ExpandedDoc = parse_doc(text)?;
    check_header(&doc.format, doc.version, EXPANDED_FORMAT)?;
    let net = ExpandedNetwork {
        title: doc.title,
        nodes: doc
            .nodes
            .into_iter()
            .map(|n| ExpandedNode {
                id: n.id,
                states: n.states,
                parents: n.parents,
                table: n.table.into_iter().flatten().collect(),
            })
            .collect(),
    };
    net.check()?;
    Ok(net)
}

pub fn save_diff(diff: &NetworkDiff) -> String {
    to_canonical_text(&diff.to_doc())
}

pub fn load_diff(text: &str) -> Result<NetworkDiff> {
    let doc: crate::versioning::DiffDoc = parse_doc(text)?;
    check_header(&doc.format, doc.version, DIFF_FORMAT)?;
    NetworkDiff::from_doc(doc)
}

/// Frequency weight (0..=5) to activation probability.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap(BTreeMap<u8, f64>);

impl FrequencyMap {
    pub const MAX_WEIGHT: u8 = 5;

    pub fn new(map: BTreeMap<u8, f64>) -> Result<Self> {
        for w in 0..=Self::MAX_WEIGHT {
            if !map.contains_key(&w) {
                return Err(Error::Parameter(format!("frequency map has no entry for weight {w}")));
            }
        }
        if let Some(w) = map.keys().find(|w| **w > Self::MAX_WEIGHT) {
            return Err(Error::Parameter(format!("weight {w} out of range 0..=5")));
        }
        if map[&0] != 0.0 {
            return Err(Error::Parameter("weight 0 must map to probability 0".into()));
        }
        let probs: Vec<f64> = map.values().copied().collect();
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Parameter("frequency probabilities must lie in [0,1]".into()));
        }
        if probs.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("frequency map must be nondecreasing in weight".into()));
        }
        Ok(FrequencyMap(map))
    }

    pub fn probability(&self, weight: u8) -> Result<f64> {
        self.0
            .get(&weight)
            .copied()
            .ok_or_else(|| Error::input(format!("frequency weight {weight} out of range 0..=5")))
    }

    /// Parses `{"0": 0.0, "1": 0.02, ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, f64> = parse_doc(text)?;
        let mut map = BTreeMap::new();
        for (k, v) in raw {
            let w: u8 = k
                .parse()
                .map_err(|_| Error::Parameter(format!("`{k}` is not a frequency weight")))?;
            map.insert(w, v);
        }
        Self::new(map)
    }
}

impl Default for FrequencyMap {
    /// Placeholder mapping; override it with a calibrated one.
    fn default() -> Self {
        FrequencyMap(BTreeMap::from([
            (0, 0.0),
            (1, 0.02),
            (2, 0.1),
            (3, 0.35),
            (4, 0.7),
            (5, 0.95),
        ]))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureNodeDoc {
    id: NodeId,
    #[serde(default)]
    name: Option<String>,
    domain: Vec<String>,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    prior: Option<Vec<f64>>,
    #[serde(default)]
    leak: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureArcDoc {
    parent: NodeId,
    child: NodeId,
    weight: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureDoc {
    format: String,
    version: u32,
    title: String,
    nodes: Vec<StructureNodeDoc>,
    arcs: Vec<StructureArcDoc>,
}

/// Builds a network from a weighted structure document.
///
/// Each arc weight maps to a scalar activation `p`, lifted to every parent state
/// `d >= 1` as the step curve `[1-p, ..., 1-p, 1]` over the child domain.
/// Nodes with a `prior` are roots; all others get a family, with an all-ones
/// leak unless one is given.
pub fn import_frequencies(structure_doc: &str, fmap: &FrequencyMap) -> Result<Network> {
    let doc: StructureDoc = parse_doc(structure_doc)?;
    check_header(&doc.format, doc.version, STRUCTURE_FORMAT)?;

    let domains: BTreeMap<NodeId, usize> = doc
        .nodes
        .iter()
        .map(|n| (n.id.clone(), n.domain.len()))
        .collect();
    let mut incoming: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
    for arc in &doc.arcs {
        if !(0..=FrequencyMap::MAX_WEIGHT as i64).contains(&arc.weight) {
            return Err(Error::input(format!(
                "arc {} -> {} has weight {} outside 0..=5",
                arc.parent, arc.child, arc.weight
            )));
        }
        for end in [&arc.parent, &arc.child] {
            if !domains.contains_key(end) {
                return Err(Error::input(format!("arc references unknown node `{end}`")));
            }
        }
        let p = fmap.probability(arc.weight as u8)?;
        incoming.entry(arc.child.clone()).or_default().push((arc.parent.clone(), p));
    }

    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in doc.nodes {
        let s = n.domain.len();
        let arcs = incoming.remove(&n.id).unwrap_or_default();
        let distribution = match (n.prior, arcs.is_empty()) {
            (Some(prior), true) => {
                if n.leak.is_some() {
                    return Err(Error::schema(format!("nodes[{}].leak", n.id), "root nodes take no leak"));
                }
                Distribution::Prior(RootPrior::new(prior))
            }
            (Some(_), false) => {
                return Err(Error::schema(
                    format!("nodes[{}].prior", n.id),
                    "node with incoming arcs cannot have a prior",
                ))
            }
            (None, _) => {
                let mut parents = Vec::with_capacity(arcs.len());
                let mut activation = Vec::with_capacity(arcs.len());
                for (parent, p) in arcs {
                    let mut step = vec![1.0 - p; s];
                    if let Some(last) = step.last_mut() {
                        *last = 1.0;
                    }
                    let curve = CumulativeVector::from_raw(step);
                    activation.push(vec![curve; domains[&parent].saturating_sub(1)]);
                    parents.push(parent);
                }
                Distribution::Family(NoisyMaxFamily {
                    child: n.id.clone(),
                    parents,
                    activation,
                    leak: CumulativeVector::from_raw(n.leak.unwrap_or_else(|| vec![1.0; s])),
                })
            }
        };
        nodes.push(Node {
            name: n.name.unwrap_or_else(|| n.id.to_string()),
            id: n.id,
            domain: OrderedDomain::from_states_unchecked(n.domain),
            labels: n.labels.into_iter().collect(),
            distribution,
        });
    }
    Network::new(doc.title, nodes)
}
