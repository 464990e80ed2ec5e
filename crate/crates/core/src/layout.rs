//! Layered layout for a node subset: longest-path layers on the induced
//! subgraph, then barycenter ordering within each layer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, NodeId};

pub const BARYCENTER_SWEEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub layer: usize,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutedArc {
    pub parent: NodeId,
    pub child: NodeId,
    /// Position among arcs leaving the same layer, by (parent order, child order).
    pub rank: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub nodes: BTreeMap<NodeId, Placement>,
    pub arcs: Vec<RoutedArc>,
}

impl LayoutResult {
    pub fn layer_count(&self) -> usize {
        self.nodes.values().map(|p| p.layer + 1).max().unwrap_or(0)
    }

    /// Node ids of one layer, left to right.
    pub fn layer(&self, layer: usize) -> Vec<&NodeId> {
        let mut row: Vec<_> = self.nodes.iter().filter(|(_, p)| p.layer == layer).collect();
        row.sort_by_key(|(_, p)| p.order);
        row.into_iter().map(|(id, _)| id).collect()
    }

    /// Pairwise crossings between arcs joining adjacent layers.
    pub fn crossings(&self) -> usize {
        let spans: Vec<(Placement, Placement)> = self
            .arcs
            .iter()
            .map(|a| (self.nodes[&a.parent], self.nodes[&a.child]))
            .filter(|(p, c)| c.layer == p.layer + 1)
            .collect();
        let mut count = 0;
        for (i, (p1, c1)) in spans.iter().enumerate() {
            for (p2, c2) in &spans[i + 1..] {
                if p1.layer == p2.layer
                    && ((p1.order < p2.order && c1.order > c2.order)
                        || (p1.order > p2.order && c1.order < c2.order))
                {
                    count += 1;
                }
            }
        }
        count
    }
}

pub fn compute_layout(net: &Network, node_set: &BTreeSet<NodeId>) -> Result<LayoutResult> {
    for id in node_set {
        if !net.contains(id.as_str()) {
            return Err(Error::input(format!("unknown node `{id}`")));
        }
    }
    let ids: Vec<&NodeId> = node_set.iter().collect();
    let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let n = ids.len();
    let mut parents = vec![Vec::new(); n];
    let mut children = vec![Vec::new(); n];
    for (i, id) in ids.iter().enumerate() {
        for p in net.node(id.as_str()).map(|node| node.parents()).unwrap_or(&[]) {
            if let Some(&j) = index.get(p) {
                parents[i].push(j);
                children[j].push(i);
            }
        }
    }

    // longest-path layers, Kahn order over the induced subgraph
    let mut layer = vec![0usize; n];
    let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop_first() {
        seen += 1;
        for &c in &children[i] {
            layer[c] = layer[c].max(layer[i] + 1);
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if seen < n {
        return Err(Error::input("cannot lay out a cyclic graph"));
    }

    let depth = layer.iter().map(|l| l + 1).max().unwrap_or(0);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); depth];
    for i in 0..n {
        rows[layer[i]].push(i);
    }
    let mut pos = vec![0usize; n];
    for row in &rows {
        for (k, &i) in row.iter().enumerate() {
            pos[i] = k;
        }
    }

    for sweep in 0..BARYCENTER_SWEEPS {
        let downward = sweep % 2 == 0;
        let sequence: Vec<usize> = if downward {
            (1..depth).collect()
        } else {
            (0..depth.saturating_sub(1)).rev().collect()
        };
        for l in sequence {
            let mut keyed: Vec<(f64, usize)> = rows[l]
                .iter()
                .map(|&i| {
                    let nbrs = if downward { &parents[i] } else { &children[i] };
                    let key = if nbrs.is_empty() {
                        pos[i] as f64
                    } else {
                        nbrs.iter().map(|&j| pos[j] as f64).sum::<f64>() / nbrs.len() as f64
                    };
                    (key, i)
                })
                .collect();
            // index order is id order, so the second key is the lexicographic tie-break
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            rows[l] = keyed.into_iter().map(|(_, i)| i).collect();
            for (k, &i) in rows[l].iter().enumerate() {
                pos[i] = k;
            }
        }
    }

    let nodes = (0..n)
        .map(|i| (ids[i].clone(), Placement { layer: layer[i], order: pos[i] }))
        .collect();
    let mut arcs: Vec<(usize, usize)> =
        (0..n).flat_map(|c| parents[c].iter().map(move |&p| (p, c))).collect();
    arcs.sort_by_key(|&(p, c)| (layer[p], pos[p], layer[c], pos[c]));
    let mut next_rank = vec![0usize; depth];
    let arcs = arcs
        .into_iter()
        .map(|(p, c)| {
            let rank = next_rank[layer[p]];
            next_rank[layer[p]] += 1;
            RoutedArc { parent: ids[p].clone(), child: ids[c].clone(), rank }
        })
        .collect();
    Ok(LayoutResult { nodes, arcs })
}
