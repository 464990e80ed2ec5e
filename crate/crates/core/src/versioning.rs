//! Network versions: content-hash identity, diffs, application, inversion, and
//! change annotation for display.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::{save_network, NodeDoc, DIFF_FORMAT};
use crate::model::{Network, Node, NodeId};
use crate::subnet::Provenance;

/// Hex SHA-256 of the canonical serialization.
pub fn version_id(net: &Network) -> String {
    hex::encode(Sha256::digest(save_network(net).as_bytes()))
}

pub type Arc = (NodeId, NodeId);

/// A node whose payload changed; full old and new values are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeChange {
    pub id: NodeId,
    pub old: Node,
    pub new: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetadataChange {
    pub old_title: String,
    pub new_title: String,
    pub old_provenance: Option<Provenance>,
    pub new_provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDiff {
    pub base: String,
    pub target: String,
    pub nodes_added: Vec<Node>,
    pub nodes_removed: Vec<Node>,
    pub arcs_added: Vec<Arc>,
    pub arcs_removed: Vec<Arc>,
    pub parameter_changes: Vec<NodeChange>,
    pub metadata: Option<MetadataChange>,
}

impl NetworkDiff {
    pub fn is_empty(&self) -> bool {
        self.nodes_added.is_empty()
            && self.nodes_removed.is_empty()
            && self.arcs_added.is_empty()
            && self.arcs_removed.is_empty()
            && self.parameter_changes.is_empty()
            && self.metadata.is_none()
    }

    pub fn invert(&self) -> NetworkDiff {
        NetworkDiff {
            base: self.target.clone(),
            target: self.base.clone(),
            nodes_added: self.nodes_removed.clone(),
            nodes_removed: self.nodes_added.clone(),
            arcs_added: self.arcs_removed.clone(),
            arcs_removed: self.arcs_added.clone(),
            parameter_changes: self
                .parameter_changes
                .iter()
                .map(|c| NodeChange {
                    id: c.id.clone(),
                    old: c.new.clone(),
                    new: c.old.clone(),
                })
                .collect(),
            metadata: self.metadata.as_ref().map(|m| MetadataChange {
                old_title: m.new_title.clone(),
                new_title: m.old_title.clone(),
                old_provenance: m.new_provenance.clone(),
                new_provenance: m.old_provenance.clone(),
            }),
        }
    }

    pub(crate) fn to_doc(&self) -> DiffDoc {
        DiffDoc {
            format: DIFF_FORMAT.into(),
            version: 1,
            base: self.base.clone(),
            target: self.target.clone(),
            nodes_added: self.nodes_added.iter().map(NodeDoc::from_node).collect(),
            nodes_removed: self.nodes_removed.iter().map(NodeDoc::from_node).collect(),
            arcs_added: self.arcs_added.clone(),
            arcs_removed: self.arcs_removed.clone(),
            parameter_changes: self
                .parameter_changes
                .iter()
                .map(|c| ChangeDoc {
                    id: c.id.clone(),
                    old: NodeDoc::from_node(&c.old),
                    new: NodeDoc::from_node(&c.new),
                })
                .collect(),
            metadata: self.metadata.as_ref().map(|m| MetadataDoc {
                title: Pair {
                    old: m.old_title.clone(),
                    new: m.new_title.clone(),
                },
                provenance: Pair {
                    old: m.old_provenance.clone(),
                    new: m.new_provenance.clone(),
                },
            }),
        }
    }

    pub(crate) fn from_doc(doc: DiffDoc) -> Result<Self> {
        let nodes = |docs: Vec<NodeDoc>| docs.into_iter().map(NodeDoc::into_node).collect::<Result<Vec<_>>>();
        Ok(NetworkDiff {
            base: doc.base,
            target: doc.target,
            nodes_added: nodes(doc.nodes_added)?,
            nodes_removed: nodes(doc.nodes_removed)?,
            arcs_added: doc.arcs_added,
            arcs_removed: doc.arcs_removed,
            parameter_changes: doc
                .parameter_changes
                .into_iter()
                .map(|c| {
                    Ok(NodeChange {
                        id: c.id,
                        old: c.old.into_node()?,
                        new: c.new.into_node()?,
                    })
                })
                .collect::<Result<_>>()?,
            metadata: doc.metadata.map(|m| MetadataChange {
                old_title: m.title.old,
                new_title: m.title.new,
                old_provenance: m.provenance.old,
                new_provenance: m.provenance.new,
            }),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Pair<T> {
    old: T,
    new: T,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MetadataDoc {
    title: Pair<String>,
    provenance: Pair<Option<Provenance>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ChangeDoc {
    id: NodeId,
    old: NodeDoc,
    new: NodeDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DiffDoc {
    pub format: String,
    pub version: u32,
    base: String,
    target: String,
    nodes_added: Vec<NodeDoc>,
    nodes_removed: Vec<NodeDoc>,
    arcs_added: Vec<Arc>,
    arcs_removed: Vec<Arc>,
    parameter_changes: Vec<ChangeDoc>,
    metadata: Option<MetadataDoc>,
}

/// Element-wise diff keyed by node id. `diff(a, a)` is empty.
pub fn diff(a: &Network, b: &Network) -> NetworkDiff {
    let mut nodes_added = Vec::new();
    let mut nodes_removed = Vec::new();
    let mut parameter_changes = Vec::new();
    for node in a.nodes() {
        match b.node(node.id.as_str()) {
            None => nodes_removed.push(node.clone()),
            Some(other) if other != node => parameter_changes.push(NodeChange {
                id: node.id.clone(),
                old: node.clone(),
                new: other.clone(),
            }),
            Some(_) => {}
        }
    }
    for node in b.nodes() {
        if !a.contains(node.id.as_str()) {
            nodes_added.push(node.clone());
        }
    }

    let arcs_a: BTreeSet<Arc> = a.arcs().into_iter().collect();
    let arcs_b: BTreeSet<Arc> = b.arcs().into_iter().collect();
    let metadata = (a.title() != b.title() || a.provenance() != b.provenance()).then(|| MetadataChange {
        old_title: a.title().to_string(),
        new_title: b.title().to_string(),
        old_provenance: a.provenance().cloned(),
        new_provenance: b.provenance().cloned(),
    });

    NetworkDiff {
        base: version_id(a),
        target: version_id(b),
        nodes_added,
        nodes_removed,
        arcs_added: arcs_b.difference(&arcs_a).cloned().collect(),
        arcs_removed: arcs_a.difference(&arcs_b).cloned().collect(),
        parameter_changes,
        metadata,
    }
}

/// Applies `d` to `net`, which must be the diff's base version. The result is
/// validated and must hash to the diff's target.
pub fn apply_diff(net: &Network, d: &NetworkDiff) -> Result<Network> {
    let found = version_id(net);
    if found != d.base {
        return Err(Error::Version {
            expected: d.base.clone(),
            found,
        });
    }

    let base_arcs: BTreeSet<Arc> = net.arcs().into_iter().collect();
    let mut nodes: BTreeMap<NodeId, Node> = net.clone().into_nodes();
    for node in &d.nodes_removed {
        match nodes.remove(&node.id) {
            Some(old) if &old == node => {}
            _ => return Err(Error::input(format!("removed node `{}` does not match the base", node.id))),
        }
    }
    for change in &d.parameter_changes {
        match nodes.get_mut(&change.id) {
            Some(slot) if *slot == change.old && change.new.id == change.id => *slot = change.new.clone(),
            _ => return Err(Error::input(format!("change to `{}` does not match the base", change.id))),
        }
    }
    for node in &d.nodes_added {
        if nodes.insert(node.id.clone(), node.clone()).is_some() {
            return Err(Error::input(format!("added node `{}` already exists", node.id)));
        }
    }

    let (title, provenance) = match &d.metadata {
        Some(m) => (m.new_title.clone(), m.new_provenance.clone()),
        None => (net.title().to_string(), net.provenance().cloned()),
    };
    let result = Network::new_unchecked(title, nodes.into_values())?
        .with_provenance(provenance)
        .validated()?;

    let mut expected = base_arcs;
    for a in &d.arcs_removed {
        expected.remove(a);
    }
    expected.extend(d.arcs_added.iter().cloned());
    let actual: BTreeSet<Arc> = result.arcs().into_iter().collect();
    if expected != actual {
        return Err(Error::input("diff arc lists disagree with the node changes"));
    }

    let found = version_id(&result);
    if found != d.target {
        return Err(Error::Version {
            expected: d.target.clone(),
            found,
        });
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeStatus {
    Added,
    Removed,
    Changed,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcStatus {
    pub parent: NodeId,
    pub child: NodeId,
    pub status: ChangeStatus,
}

/// Status of every node and arc in the union of both versions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub nodes: BTreeMap<NodeId, ChangeStatus>,
    pub arcs: Vec<ArcStatus>,
}

/// Annotates `net` (either end of `d`) with the changes `d` records.
pub fn annotate(net: &Network, d: &NetworkDiff) -> Annotation {
    let mut nodes: BTreeMap<NodeId, ChangeStatus> =
        net.ids().map(|id| (id.clone(), ChangeStatus::Unchanged)).collect();
    for c in &d.parameter_changes {
        nodes.insert(c.id.clone(), ChangeStatus::Changed);
    }
    for n in &d.nodes_added {
        nodes.insert(n.id.clone(), ChangeStatus::Added);
    }
    for n in &d.nodes_removed {
        nodes.insert(n.id.clone(), ChangeStatus::Removed);
    }

    let mut arcs: BTreeMap<Arc, ChangeStatus> = net
        .arcs()
        .into_iter()
        .map(|a| (a, ChangeStatus::Unchanged))
        .collect();
    for a in &d.arcs_added {
        arcs.insert(a.clone(), ChangeStatus::Added);
    }
    for a in &d.arcs_removed {
        arcs.insert(a.clone(), ChangeStatus::Removed);
    }
    Annotation {
        nodes,
        arcs: arcs
            .into_iter()
            .map(|((parent, child), status)| ArcStatus { parent, child, status })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CumulativeVector, Distribution, NoisyMaxFamily, OrderedDomain};

    fn bin() -> OrderedDomain {
        OrderedDomain::binary()
    }

    fn base() -> Network {
        Network::new(
            "v1",
            vec![
                Node::root("A", bin(), vec![0.5, 0.5]),
                Node::root("B", bin(), vec![0.9, 0.1]),
                Node::child(bin(), NoisyMaxFamily::noisy_or("C", &[("A", 0.4)], 0.1).unwrap()),
            ],
        )
        .unwrap()
    }

    fn with_arc() -> Network {
        let mut nodes = base().into_nodes();
        nodes.insert(
            "C".into(),
            Node::child(bin(), NoisyMaxFamily::noisy_or("C", &[("A", 0.4), ("B", 0.7)], 0.1).unwrap()),
        );
        Network::new("v1", nodes.into_values()).unwrap()
    }

    #[test]
    fn identity_diff_is_empty() {
        let d = diff(&base(), &base());
        assert!(d.is_empty());
        assert_eq!(apply_diff(&base(), &d).unwrap(), base());
    }

    #[test]
    fn added_arc() {
        let d = diff(&base(), &with_arc());
        assert_eq!(d.arcs_added, vec![(NodeId::from("B"), NodeId::from("C"))]);
        assert_eq!(d.parameter_changes.len(), 1);
        assert_eq!(d.parameter_changes[0].id, NodeId::from("C"));
        assert_eq!(apply_diff(&base(), &d).unwrap(), with_arc());
        assert_eq!(apply_diff(&with_arc(), &d.invert()).unwrap(), base());

        let ann = annotate(&base(), &d);
        assert_eq!(ann.nodes["C"], ChangeStatus::Changed);
        let bc = ann.arcs.iter().find(|a| a.parent.as_str() == "B").unwrap();
        assert_eq!(bc.status, ChangeStatus::Added);
        let ac = ann.arcs.iter().find(|a| a.parent.as_str() == "A").unwrap();
        assert_eq!(ac.status, ChangeStatus::Unchanged);
    }

    #[test]
    fn wrong_base_is_a_version_error() {
        let d = diff(&base(), &with_arc());
        assert!(matches!(apply_diff(&with_arc(), &d), Err(Error::Version { .. })));
    }

    #[test]
    fn removing_a_parent_without_fixing_children_is_rejected() {
        let a = base();
        let mut d = diff(&a, &a);
        d.nodes_removed.push(a.node("A").unwrap().clone());
        match apply_diff(&a, &d) {
            Err(Error::Invalid(report)) => assert!(report.contains("parent does not exist")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn leak_change_marks_node_changed() {
        let a = base();
        let mut nodes = a.clone().into_nodes();
        let c = nodes.get_mut("C").unwrap();
        if let Distribution::Family(f) = &mut c.distribution {
            f.leak = CumulativeVector::new(vec![0.8, 1.0]).unwrap();
        }
        let b = Network::new("v1", nodes.into_values()).unwrap();
        let d = diff(&a, &b);
        let ann = annotate(&a, &d);
        assert_eq!(ann.nodes["C"], ChangeStatus::Changed);
        assert_eq!(ann.nodes["A"], ChangeStatus::Unchanged);
        assert!(ann.arcs.iter().all(|a| a.status == ChangeStatus::Unchanged));
    }

    #[test]
    fn empty_diff_annotates_unchanged() {
        let ann = annotate(&base(), &diff(&base(), &base()));
        assert!(ann.nodes.values().all(|s| *s == ChangeStatus::Unchanged));
    }

    #[test]
    fn diff_document_round_trip() {
        let d = diff(&base(), &with_arc());
        let text = crate::format::save_diff(&d);
        assert_eq!(crate::format::load_diff(&text).unwrap(), d);
    }
}
