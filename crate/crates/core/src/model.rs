//! Network data model: ordered domains, cumulative vectors, noisy-MAX families,
//! root priors, and structural validation.
//!
//! A [`Network`] is an immutable value. Edits produce new networks, usually via
//! [`crate::versioning`]. Construction through [`Network::new`] validates;
//! [`Network::new_unchecked`] exists so that loaders and tests can hold a
//! malformed network long enough to produce a [`ValidationReport`] for it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::subnet::Provenance;

/// Tolerance on root prior normalization.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::input("node id must be non-empty"));
        }
        Ok(NodeId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for NodeId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for NodeId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Totally ordered list of state names. State 0 is the "absent" state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedDomain(Vec<String>);

impl OrderedDomain {
    pub fn new<S: Into<String>>(states: impl IntoIterator<Item = S>) -> Result<Self> {
        let domain = OrderedDomain(states.into_iter().map(Into::into).collect());
        match domain.violation() {
            Some(msg) => Err(Error::input(msg)),
            None => Ok(domain),
        }
    }

    /// `absent, present`.
    pub fn binary() -> Self {
        OrderedDomain(vec!["absent".into(), "present".into()])
    }

    /// `s0, s1, ..., s{n-1}`; state 0 is still the absent state.
    pub fn indexed(size: usize) -> Self {
        match size {
            2 => Self::binary(),
            4 => OrderedDomain(
                ["absent", "mild", "moderate", "severe"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            ),
            _ => OrderedDomain((0..size).map(|i| format!("s{i}")).collect()),
        }
    }

    /// Wraps `states` without checking; [`validate_network`] reports any problem.
    pub fn from_states_unchecked(states: Vec<String>) -> Self {
        OrderedDomain(states)
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn states(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, state: &str) -> Option<usize> {
        self.0.iter().position(|s| s == state)
    }

    fn violation(&self) -> Option<String> {
        if self.0.len() < 2 {
            return Some(format!("domain needs at least 2 states, has {}", self.0.len()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.0 {
            if s.is_empty() {
                return Some("state names must be non-empty".into());
            }
            if !seen.insert(s) {
                return Some(format!("duplicate state name `{s}`"));
            }
        }
        None
    }
}

/// `values[x] = P(contribution <= x)` over an ordered child domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CumulativeVector(Vec<f64>);

impl CumulativeVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = CumulativeVector(values);
        match v.violation() {
            Some(msg) => Err(Error::input(msg)),
            None => Ok(v),
        }
    }

    /// Wraps `values` without checking any invariant.
    pub fn from_raw(values: Vec<f64>) -> Self {
        CumulativeVector(values)
    }

    /// The all-ones vector: a contribution that never exceeds state 0.
    pub fn ones(len: usize) -> Self {
        CumulativeVector(vec![1.0; len])
    }

    /// Builds the cumulative form of a point distribution.
    pub fn from_point(probs: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let mut values: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc.min(1.0)
            })
            .collect();
        if (acc - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "point distribution sums to {acc}, expected 1"
            )));
        }
        if let Some(last) = values.last_mut() {
            *last = 1.0;
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Differenced form: `P(x) = values[x] - values[x-1]`, `P(0) = values[0]`.
    pub fn to_point(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.0
            .iter()
            .map(|&v| {
                let p = v - prev;
                prev = v;
                p
            })
            .collect()
    }

    pub fn is_all_ones(&self) -> bool {
        self.0.iter().all(|&v| v == 1.0)
    }

    /// First violated invariant, if any. Length is checked by the caller.
    pub fn violation(&self) -> Option<String> {
        if self.0.is_empty() {
            return Some("cumulative vector is empty".into());
        }
        if self.0.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Some("cumulative entries must lie in [0,1]".into());
        }
        if self.0.windows(2).any(|w| w[1] < w[0]) {
            return Some("cumulative vector not nondecreasing".into());
        }
        if *self.0.last().unwrap() != 1.0 {
            return Some("cumulative vector must end at 1".into());
        }
        None
    }
}

/// Per-parent cumulative activation curves plus a leak vector.
///
/// `activation[i][d - 1]` is the curve for parent `i` in state `d >= 1`; state 0
/// is implicitly the all-ones vector and is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMaxFamily {
    pub child: NodeId,
    pub parents: Vec<NodeId>,
    pub activation: Vec<Vec<CumulativeVector>>,
    pub leak: CumulativeVector,
}

impl NoisyMaxFamily {
    /// Family with no parents: the child is driven by its leak alone.
    pub fn leak_only(child: impl Into<NodeId>, leak: CumulativeVector) -> Self {
        NoisyMaxFamily {
            child: child.into(),
            parents: Vec::new(),
            activation: Vec::new(),
            leak,
        }
    }

    /// Binary noisy-OR family: each parent fires with its scalar activation.
    pub fn noisy_or(
        child: impl Into<NodeId>,
        parents: &[(&str, f64)],
        leak_probability: f64,
    ) -> Result<Self> {
        let mut activation = Vec::with_capacity(parents.len());
        for &(_, p) in parents {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("activation {p} outside [0,1]")));
            }
            activation.push(vec![CumulativeVector::new(vec![1.0 - p, 1.0])?]);
        }
        Ok(NoisyMaxFamily {
            child: child.into(),
            parents: parents.iter().map(|(id, _)| NodeId::from(*id)).collect(),
            activation,
            leak: CumulativeVector::new(vec![1.0 - leak_probability, 1.0])?,
        })
    }

    pub fn child_states(&self) -> usize {
        self.leak.len()
    }

    pub fn parent_states(&self, i: usize) -> usize {
        self.activation[i].len() + 1
    }

    /// Activation curve for parent `i` in state `d`, `None` for the absent state.
    pub fn curve(&self, i: usize, d: usize) -> Option<&CumulativeVector> {
        if d == 0 {
            None
        } else {
            self.activation[i].get(d - 1)
        }
    }

    pub fn parent_index(&self, parent: &str) -> Option<usize> {
        self.parents.iter().position(|p| p.as_str() == parent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RootPrior {
    pub probabilities: Vec<f64>,
}

impl RootPrior {
    pub fn new(probabilities: Vec<f64>) -> Self {
        RootPrior { probabilities }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Prior(RootPrior),
    Family(NoisyMaxFamily),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub domain: OrderedDomain,
    pub labels: BTreeSet<String>,
    pub distribution: Distribution,
}

impl Node {
    pub fn root(id: impl Into<NodeId>, domain: OrderedDomain, prior: Vec<f64>) -> Self {
        let id = id.into();
        Node {
            name: id.to_string(),
            id,
            domain,
            labels: BTreeSet::new(),
            distribution: Distribution::Prior(RootPrior::new(prior)),
        }
    }

    pub fn child(domain: OrderedDomain, family: NoisyMaxFamily) -> Self {
        Node {
            name: family.child.to_string(),
            id: family.child.clone(),
            domain,
            labels: BTreeSet::new(),
            distribution: Distribution::Family(family),
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Self {
        self.labels.extend(labels.into_iter().map(Into::into));
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn family(&self) -> Option<&NoisyMaxFamily> {
        match &self.distribution {
            Distribution::Family(f) => Some(f),
            Distribution::Prior(_) => None,
        }
    }

    pub fn prior(&self) -> Option<&RootPrior> {
        match &self.distribution {
            Distribution::Prior(p) => Some(p),
            Distribution::Family(_) => None,
        }
    }

    pub fn parents(&self) -> &[NodeId] {
        match &self.distribution {
            Distribution::Family(f) => &f.parents,
            Distribution::Prior(_) => &[],
        }
    }

    pub fn is_root(&self) -> bool {
        matches!(self.distribution, Distribution::Prior(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    title: String,
    nodes: BTreeMap<NodeId, Node>,
    provenance: Option<Provenance>,
}

impl Network {
    pub const FORMAT_VERSION: u32 = 1;

    /// Builds and validates a network.
    pub fn new(title: impl Into<String>, nodes: impl IntoIterator<Item = Node>) -> Result<Self> {
        let net = Self::collect(title.into(), nodes)?;
        net.validated()
    }

    /// Builds a network without validating it. Duplicate ids are still rejected.
    pub fn new_unchecked(
        title: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
    ) -> Result<Self> {
        Self::collect(title.into(), nodes)
    }

    fn collect(title: String, nodes: impl IntoIterator<Item = Node>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for node in nodes {
            let id = node.id.clone();
            if map.insert(id.clone(), node).is_some() {
                return Err(Error::input(format!("duplicate node id `{id}`")));
            }
        }
        Ok(Network {
            title,
            nodes: map,
            provenance: None,
        })
    }

    pub fn validated(self) -> Result<Self> {
        let report = validate_network(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::Invalid(report))
        }
    }

    pub fn with_provenance(mut self, provenance: Option<Provenance>) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    /// All arcs as `(parent, child)`, sorted.
    pub fn arcs(&self) -> Vec<(NodeId, NodeId)> {
        let mut arcs: Vec<_> = self
            .nodes
            .values()
            .flat_map(|n| n.parents().iter().map(|p| (p.clone(), n.id.clone())))
            .collect();
        arcs.sort();
        arcs
    }

    pub fn arc_count(&self) -> usize {
        self.nodes.values().map(|n| n.parents().len()).sum()
    }

    pub fn root_count(&self) -> usize {
        self.nodes.values().filter(|n| n.is_root()).count()
    }

    pub fn into_nodes(self) -> BTreeMap<NodeId, Node> {
        self.nodes
    }
}

/// Assignment of observed states to nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence(BTreeMap<NodeId, usize>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: impl Into<NodeId>, state: usize) -> Self {
        self.0.insert(node.into(), state);
        self
    }

    pub fn insert(&mut self, node: impl Into<NodeId>, state: usize) {
        self.0.insert(node.into(), state);
    }

    pub fn get(&self, node: &str) -> Option<usize> {
        self.0.get(node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, usize)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that every node exists and every state index is in range.
    pub fn check(&self, net: &Network) -> Result<()> {
        for (id, &state) in &self.0 {
            let node = net
                .node(id.as_str())
                .ok_or_else(|| Error::input(format!("evidence on unknown node `{id}`")))?;
            if state >= node.domain.size() {
                return Err(Error::input(format!(
                    "evidence state {state} out of range for `{id}` ({} states)",
                    node.domain.size()
                )));
            }
        }
        Ok(())
    }

    /// Parses `node=state` pairs; the state may be a name or an index.
    pub fn parse_pairs<S: AsRef<str>>(net: &Network, pairs: &[S]) -> Result<Self> {
        let mut ev = Evidence::new();
        for pair in pairs {
            let pair = pair.as_ref();
            let (id, state) = pair
                .split_once('=')
                .ok_or_else(|| Error::input(format!("evidence `{pair}` is not node=state")))?;
            let node = net
                .node(id)
                .ok_or_else(|| Error::input(format!("evidence on unknown node `{id}`")))?;
            let index = match node.domain.index_of(state) {
                Some(i) => i,
                None => state.parse::<usize>().map_err(|_| {
                    Error::input(format!("`{state}` is not a state of `{id}`"))
                })?,
            };
            ev.insert(id, index);
        }
        ev.check(net)?;
        Ok(ev)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(node) = &self.node {
            write!(f, "{node}")?;
            if let Some(parent) = &self.parent {
                write!(f, " <- {parent}")?;
            }
            if let Some(state) = self.state {
                write!(f, " [state {state}]")?;
            }
            write!(f, ": ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(
        &mut self,
        node: Option<&NodeId>,
        parent: Option<&NodeId>,
        state: Option<usize>,
        message: impl Into<String>,
    ) {
        self.violations.push(Violation {
            node: node.cloned(),
            parent: parent.cloned(),
            state,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every violated invariant. An empty report means the network is valid.
pub fn validate_network(net: &Network) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut dangling = false;

    for (key, node) in &net.nodes {
        let id = &node.id;
        if id.as_str().is_empty() {
            report.push(None, None, None, "node id must be non-empty");
        }
        if key != id {
            report.push(Some(key), None, None, format!("node stored under `{key}` has id `{id}`"));
        }
        if let Some(msg) = node.domain.violation() {
            report.push(Some(id), None, None, msg);
        }
        let size = node.domain.size();

        match &node.distribution {
            Distribution::Prior(prior) => {
                let p = &prior.probabilities;
                if p.len() != size {
                    report.push(
                        Some(id),
                        None,
                        None,
                        format!("prior has {} entries, domain has {size}", p.len()),
                    );
                }
                for (s, &v) in p.iter().enumerate() {
                    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                        report.push(Some(id), None, Some(s), "prior entries must lie in [0,1]");
                    }
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > PRIOR_SUM_TOLERANCE {
                    report.push(Some(id), None, None, format!("prior sums to {sum}, expected 1"));
                }
            }
            Distribution::Family(fam) => {
                if &fam.child != id {
                    report.push(
                        Some(id),
                        None,
                        None,
                        format!("family child `{}` does not match node", fam.child),
                    );
                }
                let mut seen = BTreeSet::new();
                for p in &fam.parents {
                    if !seen.insert(p) {
                        report.push(Some(id), Some(p), None, "duplicate parent");
                    }
                    if p == id {
                        report.push(Some(id), Some(p), None, "node lists itself as a parent");
                    }
                    if !net.nodes.contains_key(p) {
                        dangling = true;
                        report.push(Some(id), Some(p), None, "parent does not exist");
                    }
                }
                if fam.activation.len() != fam.parents.len() {
                    report.push(
                        Some(id),
                        None,
                        None,
                        format!(
                            "{} activation blocks for {} parents",
                            fam.activation.len(),
                            fam.parents.len()
                        ),
                    );
                }
                for (i, (p, curves)) in fam.parents.iter().zip(&fam.activation).enumerate() {
                    if let Some(parent) = net.nodes.get(p) {
                        let expect = parent.domain.size().saturating_sub(1);
                        if curves.len() != expect {
                            report.push(
                                Some(id),
                                Some(p),
                                None,
                                format!(
                                    "parent has {} states but {} activation curves (expected {expect})",
                                    parent.domain.size(),
                                    curves.len()
                                ),
                            );
                        }
                    }
                    for (k, curve) in curves.iter().enumerate() {
                        check_curve(&mut report, id, Some(&fam.parents[i]), Some(k + 1), curve, size);
                    }
                }
                check_curve(&mut report, id, None, None, &fam.leak, size);
            }
        }
    }

    if let Some(prov) = &net.provenance {
        for rec in &prov.folds {
            for f in &rec.folded {
                if net.nodes.contains_key(&f.parent) {
                    report.push(
                        Some(&rec.child),
                        Some(&f.parent),
                        None,
                        "folded parent is still present in the network",
                    );
                }
            }
        }
    }

    if !dangling {
        if let Err(Error::Cycle(cycle)) = Topology::of(net).order() {
            report.push(None, None, None, format!("cycle detected: {}", cycle.join(",")));
        }
    }
    report
}

fn check_curve(
    report: &mut ValidationReport,
    node: &NodeId,
    parent: Option<&NodeId>,
    state: Option<usize>,
    curve: &CumulativeVector,
    size: usize,
) {
    if curve.len() != size {
        report.push(
            Some(node),
            parent,
            state,
            format!("cumulative vector has {} entries, child domain has {size}", curve.len()),
        );
    }
    if let Some(msg) = curve.violation() {
        let what = if parent.is_none() { "leak: " } else { "" };
        report.push(Some(node), parent, state, format!("{what}{msg}"));
    }
}

/// Parents before children; ties broken by lexicographic node id.
pub fn topological_order(net: &Network) -> Result<Vec<NodeId>> {
    let topo = Topology::of(net);
    topo.check_resolved(net)?;
    Ok(topo.order()?.into_iter().map(|i| topo.id(i).clone()).collect())
}

/// Length of the longest directed path from any root to each node.
pub fn level_assignment(net: &Network) -> Result<BTreeMap<NodeId, usize>> {
    let topo = Topology::of(net);
    topo.check_resolved(net)?;
    let levels = topo.levels()?;
    Ok(levels
        .into_iter()
        .enumerate()
        .map(|(i, l)| (topo.id(i).clone(), l))
        .collect())
}
