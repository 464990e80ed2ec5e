//! Subnetwork views and extraction with leak folding.
//!
//! When a retained child loses parents, each removed parent is folded into the
//! child's leak by multiplying in its expected activation curve:
//!
//! ```text
//! leak'[x] = leak[x] * prod_{i removed} sum_d P(D_i = d) c[i][d][x]
//! ```
//!
//! This keeps the child's marginal unchanged as long as the removed parents are
//! independent of each other and of the retained parents. [`soundness_audit`]
//! measures how far that holds on a given network.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::inference::{compare_marginals, eliminate, enumerate_joint, MarginalTable};
use crate::model::{
    level_assignment, CumulativeVector, Distribution, Evidence, Network, Node, NodeId, NoisyMaxFamily,
};
use crate::noisymax::{fold_curves, marginal_cumulative};
use crate::versioning::version_id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Ancestors,
    Descendants,
    PredecessorsAndSuccessors,
    ImmediatePredecessors,
    ImmediateSuccessors,
    MarkovBlanket,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Ancestors,
        Relation::Descendants,
        Relation::PredecessorsAndSuccessors,
        Relation::ImmediatePredecessors,
        Relation::ImmediateSuccessors,
        Relation::MarkovBlanket,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Ancestors => "ancestors",
            Relation::Descendants => "descendants",
            Relation::PredecessorsAndSuccessors => "predecessors_and_successors",
            Relation::ImmediatePredecessors => "immediate_predecessors",
            Relation::ImmediateSuccessors => "immediate_successors",
            Relation::MarkovBlanket => "markov_blanket",
        }
    }

    /// Closure relations grow monotonically with the seed set.
    pub fn is_closure(self) -> bool {
        matches!(
            self,
            Relation::Ancestors | Relation::Descendants | Relation::PredecessorsAndSuccessors
        )
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        match norm.as_str() {
            "ancestors" | "predecessors" => Ok(Relation::Ancestors),
            "descendants" | "successors" => Ok(Relation::Descendants),
            "predecessors_and_successors" | "ancestors_and_descendants" => {
                Ok(Relation::PredecessorsAndSuccessors)
            }
            "immediate_predecessors" | "parents" => Ok(Relation::ImmediatePredecessors),
            "immediate_successors" | "children" => Ok(Relation::ImmediateSuccessors),
            "markov_blanket" | "blanket" => Ok(Relation::MarkovBlanket),
            _ => Err(Error::input(format!("unknown relation `{s}`"))),
        }
    }
}

fn yes() -> bool {
    true
}

/// Declarative subnetwork selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub seeds: BTreeSet<NodeId>,
    pub relation: Relation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_filter: Option<BTreeSet<String>>,
    #[serde(default = "yes")]
    pub include_seeds: bool,
}

impl ViewSpec {
    pub fn new<I: Into<NodeId>>(seeds: impl IntoIterator<Item = I>, relation: Relation) -> Self {
        ViewSpec {
            seeds: seeds.into_iter().map(Into::into).collect(),
            relation,
            label_filter: None,
            include_seeds: true,
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Self {
        self.label_filter = Some(labels.into_iter().map(Into::into).collect());
        self
    }
}

/// Nodes selected by `spec`: closure under the relation, then the label filter.
/// Seeds are exempt from the filter when included.
pub fn select_view(net: &Network, spec: &ViewSpec) -> Result<BTreeSet<NodeId>> {
    if spec.seeds.is_empty() {
        return Err(Error::input("view needs at least one seed"));
    }
    let topo = Topology::of(net);
    let mut seeds = Vec::with_capacity(spec.seeds.len());
    for s in &spec.seeds {
        seeds.push(
            topo.index(s.as_str())
                .ok_or_else(|| Error::input(format!("unknown seed `{s}`")))?,
        );
    }

    let mut picked: BTreeSet<usize> = match spec.relation {
        Relation::Ancestors => topo.ancestors(&seeds),
        Relation::Descendants => topo.descendants(&seeds),
        Relation::PredecessorsAndSuccessors => {
            let mut s = topo.ancestors(&seeds);
            s.extend(topo.descendants(&seeds));
            s
        }
        Relation::ImmediatePredecessors => seeds.iter().flat_map(|&i| topo.parents(i).to_vec()).collect(),
        Relation::ImmediateSuccessors => seeds.iter().flat_map(|&i| topo.children(i).to_vec()).collect(),
        Relation::MarkovBlanket => {
            let mut s = BTreeSet::new();
            for &i in &seeds {
                s.extend(topo.parents(i));
                for &c in topo.children(i) {
                    s.insert(c);
                    s.extend(topo.parents(c));
                }
                // a node is never part of its own blanket
                s.remove(&i);
            }
            s
        }
    };

    if let Some(labels) = &spec.label_filter {
        picked.retain(|&i| {
            net.node(topo.id(i).as_str())
                .is_some_and(|n| n.labels.iter().any(|l| labels.contains(l)))
        });
    }
    if spec.include_seeds {
        picked.extend(seeds.iter().copied());
    } else {
        for s in &seeds {
            picked.remove(s);
        }
    }
    if picked.is_empty() {
        return Err(Error::EmptyView);
    }
    Ok(picked.into_iter().map(|i| topo.id(i).clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldedParent {
    pub parent: NodeId,
    pub marginal: Vec<f64>,
}

/// Parents of one retained child that were folded into its leak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldRecord {
    pub child: NodeId,
    pub folded: Vec<FoldedParent>,
}

/// Where a subnetwork came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub source_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewSpec>,
    pub folds: Vec<FoldRecord>,
}

/// How marginals of removed parents are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalPolicy {
    /// Priors for removed roots, propagated through chains of removed nodes.
    /// Fails when a removed parent has a retained ancestor.
    #[default]
    RootPrior,
    /// Prior marginals by exact inference on the full network.
    Exact,
}

impl FromStr for MarginalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root-prior" | "root_prior" => Ok(MarginalPolicy::RootPrior),
            "exact" => Ok(MarginalPolicy::Exact),
            _ => Err(Error::input(format!("unknown marginal policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subnetwork {
    pub network: Network,
}

impl Subnetwork {
    pub fn provenance(&self) -> &Provenance {
        self.network
            .provenance()
            .expect("subnetworks always carry provenance")
    }

    pub fn folds(&self) -> &[FoldRecord] {
        &self.provenance().folds
    }
}

/// Folds the `removed` parents of `family` into its leak.
pub fn fold_leak(
    family: &NoisyMaxFamily,
    removed: &BTreeSet<NodeId>,
    removed_marginals: &BTreeMap<NodeId, Vec<f64>>,
) -> Result<CumulativeVector> {
    let mut indices = Vec::with_capacity(removed.len());
    for r in removed {
        indices.push(family.parent_index(r.as_str()).ok_or_else(|| {
            Error::input(format!("`{r}` is not a parent of `{}`", family.child))
        })?);
    }
    fold_curves(family, family.leak.values(), indices, |id| {
        removed_marginals.get(id).cloned()
    })
}

pub fn extract_subnetwork(net: &Network, node_set: &BTreeSet<NodeId>) -> Result<Subnetwork> {
    extract_with(net, node_set, MarginalPolicy::default(), None)
}

/// Selects a view and extracts it, recording the view in the provenance.
pub fn extract_view(net: &Network, spec: &ViewSpec, policy: MarginalPolicy) -> Result<Subnetwork> {
    let nodes = select_view(net, spec)?;
    extract_with(net, &nodes, policy, Some(spec.clone()))
}

pub fn extract_with(
    net: &Network,
    node_set: &BTreeSet<NodeId>,
    policy: MarginalPolicy,
    view: Option<ViewSpec>,
) -> Result<Subnetwork> {
    if node_set.is_empty() {
        return Err(Error::EmptyView);
    }
    for id in node_set {
        if !net.contains(id.as_str()) {
            return Err(Error::input(format!("`{id}` is not in the network")));
        }
    }

    // removed parents per retained child
    let mut removed_by_child: BTreeMap<&NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for id in node_set {
        let node = net.node(id.as_str()).unwrap();
        let removed: BTreeSet<NodeId> = node
            .parents()
            .iter()
            .filter(|p| !node_set.contains(*p))
            .cloned()
            .collect();
        if !removed.is_empty() {
            removed_by_child.insert(id, removed);
        }
    }
    let needed: BTreeSet<NodeId> = removed_by_child.values().flatten().cloned().collect();
    let marginals = removed_marginals(net, node_set, &needed, policy)?;

    let mut nodes = Vec::with_capacity(node_set.len());
    let mut folds = Vec::new();
    for id in node_set {
        let node = net.node(id.as_str()).unwrap();
        let Some(removed) = removed_by_child.get(id) else {
            nodes.push(node.clone());
            continue;
        };
        let family = node.family().expect("only children have parents");
        let leak = fold_leak(family, removed, &marginals)?;
        let (parents, activation): (Vec<NodeId>, Vec<_>) = family
            .parents
            .iter()
            .zip(&family.activation)
            .filter(|(p, _)| node_set.contains(*p))
            .map(|(p, a)| (p.clone(), a.clone()))
            .unzip();
        nodes.push(Node {
            distribution: Distribution::Family(NoisyMaxFamily {
                child: id.clone(),
                parents,
                activation,
                leak,
            }),
            ..node.clone()
        });
        folds.push(FoldRecord {
            child: id.clone(),
            folded: removed
                .iter()
                .map(|p| FoldedParent {
                    parent: p.clone(),
                    marginal: marginals[p].clone(),
                })
                .collect(),
        });
    }

    let provenance = Provenance {
        source_version: version_id(net),
        view,
        folds,
    };
    let network = Network::new_unchecked(net.title(), nodes)?
        .with_provenance(Some(provenance))
        .validated()?;
    Ok(Subnetwork { network })
}

fn removed_marginals(
    net: &Network,
    retained: &BTreeSet<NodeId>,
    needed: &BTreeSet<NodeId>,
    policy: MarginalPolicy,
) -> Result<BTreeMap<NodeId, Vec<f64>>> {
    if needed.is_empty() {
        return Ok(BTreeMap::new());
    }
    match policy {
        MarginalPolicy::Exact => {
            let table = eliminate(net, &Evidence::new(), needed).map_err(|e| match e {
                Error::Capacity { .. } => e,
                other => Error::Extraction(format!("exact marginals failed: {other}")),
            })?;
            Ok(table.0)
        }
        MarginalPolicy::RootPrior => {
            let mut memo = BTreeMap::new();
            for p in needed {
                propagate_marginal(net, retained, p, p, &mut memo)?;
            }
            Ok(needed.iter().map(|p| (p.clone(), memo[p].clone())).collect())
        }
    }
}

fn propagate_marginal(
    net: &Network,
    retained: &BTreeSet<NodeId>,
    origin: &NodeId,
    id: &NodeId,
    memo: &mut BTreeMap<NodeId, Vec<f64>>,
) -> Result<Vec<f64>> {
    if let Some(m) = memo.get(id) {
        return Ok(m.clone());
    }
    let node = net.node(id.as_str()).expect("parent references resolve");
    let marginal = match &node.distribution {
        Distribution::Prior(p) => p.probabilities.clone(),
        Distribution::Family(f) => {
            let mut parent_marginals = BTreeMap::new();
            for p in &f.parents {
                if retained.contains(p) {
                    return Err(Error::Extraction(format!(
                        "removed parent `{origin}` has retained ancestor `{p}`; use the exact policy"
                    )));
                }
                let m = propagate_marginal(net, retained, origin, p, memo)?;
                parent_marginals.insert(p.clone(), m);
            }
            marginal_cumulative(f, &parent_marginals)?.to_point()
        }
    };
    memo.insert(id.clone(), marginal.clone());
    Ok(marginal)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub is_hierarchical: bool,
    /// Whether levels came from `level:k` labels rather than longest paths.
    pub declared_levels: bool,
    pub offending_arcs: Vec<(NodeId, NodeId)>,
}

/// Level of each node: a `level:k` label when any node carries one, the
/// longest-path level otherwise (and for unlabeled nodes).
pub fn effective_levels(net: &Network) -> Result<(BTreeMap<NodeId, usize>, bool)> {
    let mut levels = level_assignment(net)?;
    let mut declared = false;
    for node in net.nodes() {
        if let Some(k) = declared_level(node) {
            levels.insert(node.id.clone(), k);
            declared = true;
        }
    }
    Ok((levels, declared))
}

pub fn declared_level(node: &Node) -> Option<usize> {
    node.labels
        .iter()
        .find_map(|l| l.strip_prefix("level:").and_then(|k| k.parse().ok()))
}

/// Flags arcs that do not go strictly downward in the level hierarchy.
pub fn check_hierarchical(net: &Network) -> Result<HierarchyReport> {
    let (levels, declared) = effective_levels(net)?;
    let offending: Vec<(NodeId, NodeId)> = net
        .arcs()
        .into_iter()
        .filter(|(p, c)| levels[p] >= levels[c])
        .collect();
    Ok(HierarchyReport {
        is_hierarchical: offending.is_empty(),
        declared_levels: declared,
        offending_arcs: offending,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Enumerate,
    Eliminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessAudit {
    pub deviation: f64,
    pub retained: usize,
    pub folded_parents: usize,
    pub worst_node: Option<NodeId>,
}

/// Extracts `spec` and compares retained-node prior marginals, full network
/// against subnetwork, by joint enumeration on both sides.
pub fn soundness_audit(net: &Network, spec: &ViewSpec) -> Result<SoundnessAudit> {
    soundness_audit_with(net, spec, MarginalPolicy::default(), Engine::Enumerate)
}

pub fn soundness_audit_with(
    net: &Network,
    spec: &ViewSpec,
    policy: MarginalPolicy,
    engine: Engine,
) -> Result<SoundnessAudit> {
    let sub = extract_view(net, spec, policy)?;
    audit_subnetwork(net, &sub, engine)
}

/// Compares prior marginals of every node of `sub` against `net`.
pub fn audit_subnetwork(net: &Network, sub: &Subnetwork, engine: Engine) -> Result<SoundnessAudit> {
    let retained: BTreeSet<NodeId> = sub.network.ids().cloned().collect();
    let priors = |n: &Network| -> Result<MarginalTable> {
        match engine {
            Engine::Enumerate => Ok(enumerate_joint(n, &Evidence::new())?.restrict(&retained)),
            Engine::Eliminate => eliminate(n, &Evidence::new(), &retained),
        }
    };
    let full = priors(net)?;
    let reduced = priors(&sub.network)?;
    let deviation = compare_marginals(&full, &reduced)?;
    let worst_node = full
        .iter()
        .map(|(id, a)| {
            let b = reduced.get(id.as_str()).unwrap();
            let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            (id, d)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|(_, d)| *d > 0.0)
        .map(|(id, _)| id.clone());
    Ok(SoundnessAudit {
        deviation,
        retained: retained.len(),
        folded_parents: sub.folds().iter().map(|f| f.folded.len()).sum(),
        worst_node,
    })
}
