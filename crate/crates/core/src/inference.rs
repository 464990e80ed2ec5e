//! Exact posterior marginals over expanded tables.
//!
//! Two engines with the same contract: [`enumerate_joint`] sums the full joint
//! and is the reference; [`eliminate`] runs sum-product variable elimination with
//! a min-degree ordering. Both operate on an [`ExpandedNetwork`], which is also
//! what the expanded export format carries, so an exported file can be queried
//! without the noisy-MAX parameters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, Evidence, Network, NodeId};
use crate::noisymax::{expand_cpt_with_cap, DEFAULT_TABLE_CAP};

/// Cap on the number of joint states [`enumerate_joint`] will visit.
pub const DEFAULT_JOINT_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub table_cap: usize,
    pub joint_cap: u128,
    pub factor_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            table_cap: DEFAULT_TABLE_CAP,
            joint_cap: DEFAULT_JOINT_CAP,
            factor_cap: DEFAULT_TABLE_CAP,
        }
    }
}

/// A node with its full conditional table (a prior when it has no parents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedNode {
    pub id: NodeId,
    pub states: Vec<String>,
    pub parents: Vec<NodeId>,
    /// Columns in mixed radix over `parents`, first parent most significant.
    pub table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedNetwork {
    pub title: String,
    pub nodes: Vec<ExpandedNode>,
}

impl ExpandedNetwork {
    pub fn from_network(net: &Network) -> Result<Self> {
        Self::from_network_with_cap(net, DEFAULT_TABLE_CAP)
    }

    pub fn from_network_with_cap(net: &Network, cap: usize) -> Result<Self> {
        let mut nodes = Vec::with_capacity(net.len());
        for node in net.nodes() {
            let (parents, table) = match &node.distribution {
                Distribution::Prior(p) => (Vec::new(), p.probabilities.clone()),
                Distribution::Family(f) => (f.parents.clone(), expand_cpt_with_cap(f, cap)?.table),
            };
            nodes.push(ExpandedNode {
                id: node.id.clone(),
                states: node.domain.states().to_vec(),
                parents,
                table,
            });
        }
        Ok(ExpandedNetwork {
            title: net.title().to_string(),
            nodes,
        })
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id.as_str() == id)
    }

    /// Checks shapes, parent references, and column normalization.
    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(&n.id) {
                return Err(Error::input(format!("duplicate node `{}`", n.id)));
            }
        }
        for n in &self.nodes {
            let mut columns = 1usize;
            for p in &n.parents {
                let k = self
                    .position(p.as_str())
                    .ok_or_else(|| Error::input(format!("`{}` has unknown parent `{p}`", n.id)))?;
                columns *= self.nodes[k].states.len();
            }
            let s = n.states.len();
            if n.table.len() != columns * s {
                return Err(Error::input(format!(
                    "table for `{}` has {} entries, expected {}",
                    n.id,
                    n.table.len(),
                    columns * s
                )));
            }
            for col in n.table.chunks(s) {
                let sum: f64 = col.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || col.iter().any(|p| *p < 0.0) {
                    return Err(Error::input(format!("table column for `{}` is not a distribution", n.id)));
                }
            }
        }
        Ok(())
    }

    fn evidence_slots(&self, evidence: &Evidence) -> Result<Vec<Option<usize>>> {
        let mut slots = vec![None; self.nodes.len()];
        for (id, state) in evidence.iter() {
            let k = self
                .position(id.as_str())
                .ok_or_else(|| Error::input(format!("evidence on unknown node `{id}`")))?;
            if state >= self.nodes[k].states.len() {
                return Err(Error::input(format!("evidence state {state} out of range for `{id}`")));
            }
            slots[k] = Some(state);
        }
        Ok(slots)
    }

    fn parent_positions(&self) -> Result<Vec<Vec<usize>>> {
        self.nodes
            .iter()
            .map(|n| {
                n.parents
                    .iter()
                    .map(|p| {
                        self.position(p.as_str())
                            .ok_or_else(|| Error::input(format!("unknown parent `{p}`")))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Posterior (or prior) marginal distribution per node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalTable(pub BTreeMap<NodeId, Vec<f64>>);

impl MarginalTable {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.0.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Vec<f64>)> {
        self.0.iter()
    }

    /// Keeps only the listed nodes.
    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a NodeId>) -> MarginalTable {
        MarginalTable(
            ids.into_iter()
                .filter_map(|id| self.0.get(id).map(|v| (id.clone(), v.clone())))
                .collect(),
        )
    }
}

/// Exact marginals by summing the full joint distribution.
pub fn enumerate_joint(net: &Network, evidence: &Evidence) -> Result<MarginalTable> {
    enumerate_joint_with(net, evidence, Limits::default())
}

pub fn enumerate_joint_with(net: &Network, evidence: &Evidence, limits: Limits) -> Result<MarginalTable> {
    evidence.check(net)?;
    let expanded = ExpandedNetwork::from_network_with_cap(net, limits.table_cap)?;
    enumerate_expanded(&expanded, evidence, limits.joint_cap)
}

pub fn enumerate_expanded(net: &ExpandedNetwork, evidence: &Evidence, joint_cap: u128) -> Result<MarginalTable> {
    let slots = net.evidence_slots(evidence)?;
    let parents = net.parent_positions()?;
    let sizes: Vec<usize> = net.nodes.iter().map(|n| n.states.len()).collect();
    let free: Vec<usize> = (0..net.nodes.len()).filter(|&k| slots[k].is_none()).collect();
    let total = free
        .iter()
        .fold(1u128, |acc, &k| acc.saturating_mul(sizes[k] as u128));
    if total > joint_cap {
        return Err(Error::Capacity {
            what: "joint enumeration".into(),
            needed: total,
            cap: joint_cap,
        });
    }

    let mut assignment: Vec<usize> = slots.iter().map(|s| s.unwrap_or(0)).collect();
    let mut sums: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    let mut z = 0.0;
    loop {
        let mut p = 1.0;
        for (k, node) in net.nodes.iter().enumerate() {
            let col = parents[k]
                .iter()
                .fold(0usize, |acc, &j| acc * sizes[j] + assignment[j]);
            p *= node.table[col * sizes[k] + assignment[k]];
            if p == 0.0 {
                break;
            }
        }
        if p > 0.0 {
            z += p;
            for (k, &x) in assignment.iter().enumerate() {
                sums[k][x] += p;
            }
        }

        let mut i = 0;
        while i < free.len() {
            let k = free[i];
            assignment[k] += 1;
            if assignment[k] < sizes[k] {
                break;
            }
            assignment[k] = 0;
            i += 1;
        }
        if i == free.len() {
            break;
        }
    }

    if z <= 0.0 {
        return Err(Error::Inconsistent);
    }
    Ok(MarginalTable(
        net.nodes
            .iter()
            .zip(sums)
            .map(|(n, s)| (n.id.clone(), s.into_iter().map(|v| v / z).collect()))
            .collect(),
    ))
}

/// A table over a sorted scope of variable positions, first variable most significant.
#[derive(Debug, Clone)]
struct Factor {
    scope: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    fn scalar(v: f64) -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![v],
        }
    }

    fn strides_for(&self, scope: &[usize]) -> Vec<usize> {
        let mut own = vec![0usize; self.scope.len()];
        let mut acc = 1;
        for k in (0..self.scope.len()).rev() {
            own[k] = acc;
            acc *= self.cards[k];
        }
        scope
            .iter()
            .map(|v| match self.scope.binary_search(v) {
                Ok(k) => own[k],
                Err(_) => 0,
            })
            .collect()
    }

    fn product(factors: &[&Factor], scope: Vec<usize>, cards: Vec<usize>) -> Factor {
        let size: usize = cards.iter().product();
        let strides: Vec<Vec<usize>> = factors.iter().map(|f| f.strides_for(&scope)).collect();
        let mut idx = vec![0usize; factors.len()];
        let mut counter = vec![0usize; scope.len()];
        let mut values = Vec::with_capacity(size);
        for _ in 0..size {
            values.push(
                factors
                    .iter()
                    .zip(&idx)
                    .map(|(f, &i)| f.values[i])
                    .product(),
            );
            for k in (0..scope.len()).rev() {
                counter[k] += 1;
                for (i, s) in idx.iter_mut().zip(&strides) {
                    *i += s[k];
                }
                if counter[k] < cards[k] {
                    break;
                }
                for (i, s) in idx.iter_mut().zip(&strides) {
                    *i -= s[k] * cards[k];
                }
                counter[k] = 0;
            }
        }
        Factor { scope, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let k = self.scope.binary_search(&var).expect("variable in scope");
        let outer: usize = self.cards[..k].iter().product();
        let card = self.cards[k];
        let inner: usize = self.cards[k + 1..].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for c in 0..card {
                let base = (o * card + c) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(k);
        cards.remove(k);
        Factor { scope, cards, values }
    }
}

/// Exact marginals of `query` nodes by variable elimination.
pub fn eliminate(net: &Network, evidence: &Evidence, query: &BTreeSet<NodeId>) -> Result<MarginalTable> {
    eliminate_with(net, evidence, query, Limits::default())
}

pub fn eliminate_with(
    net: &Network,
    evidence: &Evidence,
    query: &BTreeSet<NodeId>,
    limits: Limits,
) -> Result<MarginalTable> {
    evidence.check(net)?;
    for q in query {
        if !net.contains(q.as_str()) {
            return Err(Error::input(format!("query on unknown node `{q}`")));
        }
    }
    // Only ancestors of query and evidence nodes matter; every other table sums to one.
    let topo = crate::graph::Topology::of(net);
    let targets: Vec<usize> = query
        .iter()
        .map(|q| q.as_str())
        .chain(evidence.iter().map(|(id, _)| id.as_str()))
        .filter_map(|id| topo.index(id))
        .collect();
    let mut keep = topo.ancestors(&targets);
    keep.extend(targets.iter().copied());
    let mut relevant = Vec::with_capacity(keep.len());
    for i in keep {
        let node = net.node(topo.id(i).as_str()).expect("indexed node exists");
        let (parents, table) = match &node.distribution {
            Distribution::Prior(p) => (Vec::new(), p.probabilities.clone()),
            Distribution::Family(f) => (f.parents.clone(), expand_cpt_with_cap(f, limits.table_cap)?.table),
        };
        relevant.push(ExpandedNode {
            id: node.id.clone(),
            states: node.domain.states().to_vec(),
            parents,
            table,
        });
    }
    let sub = ExpandedNetwork {
        title: net.title().to_string(),
        nodes: relevant,
    };
    eliminate_expanded(&sub, evidence, query, limits.factor_cap)
}

pub fn eliminate_expanded(
    net: &ExpandedNetwork,
    evidence: &Evidence,
    query: &BTreeSet<NodeId>,
    factor_cap: usize,
) -> Result<MarginalTable> {
    let slots = net.evidence_slots(evidence)?;
    let parents = net.parent_positions()?;
    let sizes: Vec<usize> = net.nodes.iter().map(|n| n.states.len()).collect();

    let mut factors = Vec::with_capacity(net.nodes.len());
    for (k, node) in net.nodes.iter().enumerate() {
        let mut scope: Vec<usize> = parents[k].iter().copied().chain([k]).collect();
        scope.sort_unstable();
        scope.dedup();
        scope.retain(|v| slots[*v].is_none());
        let cards: Vec<usize> = scope.iter().map(|&v| sizes[v]).collect();
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment: Vec<usize> = slots.iter().map(|s| s.unwrap_or(0)).collect();
        for _ in 0..size {
            let col = parents[k]
                .iter()
                .fold(0usize, |acc, &j| acc * sizes[j] + assignment[j]);
            values.push(node.table[col * sizes[k] + assignment[k]]);
            for (pos, &v) in scope.iter().enumerate().rev() {
                assignment[v] += 1;
                if assignment[v] < cards[pos] {
                    break;
                }
                assignment[v] = 0;
            }
        }
        factors.push(Factor { scope, cards, values });
    }

    let names = |scope: &[usize]| -> String {
        scope
            .iter()
            .map(|&v| net.nodes[v].id.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };

    let mut out = BTreeMap::new();
    for q in query {
        let qk = net
            .position(q.as_str())
            .ok_or_else(|| Error::input(format!("query on unknown node `{q}`")))?;
        let keep = if slots[qk].is_some() { None } else { Some(qk) };
        let result = run_elimination(&factors, net.nodes.len(), keep, &sizes, factor_cap, &names)?;
        let z: f64 = result.values.iter().sum();
        if z <= 0.0 || !z.is_finite() {
            return Err(Error::Inconsistent);
        }
        let marginal = match slots[qk] {
            Some(state) => {
                let mut v = vec![0.0; sizes[qk]];
                v[state] = 1.0;
                v
            }
            None => result.values.iter().map(|v| v / z).collect(),
        };
        out.insert(q.clone(), marginal);
    }
    Ok(MarginalTable(out))
}

/// Eliminates every variable except `keep` and returns the product of what remains.
fn run_elimination(
    factors: &[Factor],
    n: usize,
    keep: Option<usize>,
    sizes: &[usize],
    cap: usize,
    names: &dyn Fn(&[usize]) -> String,
) -> Result<Factor> {
    let mut pool: Vec<Factor> = factors.to_vec();
    let mut active: BTreeSet<usize> = pool.iter().flat_map(|f| f.scope.iter().copied()).collect();
    if let Some(k) = keep {
        active.remove(&k);
    }
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for f in &pool {
        for &a in &f.scope {
            for &b in &f.scope {
                if a != b {
                    neighbors[a].insert(b);
                }
            }
        }
    }

    while !active.is_empty() {
        // min-degree, ties to the lowest position (positions follow id order)
        let var = *active
            .iter()
            .min_by_key(|&&v| (neighbors[v].len(), v))
            .unwrap();
        active.remove(&var);

        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            pool.into_iter().partition(|f| f.scope.binary_search(&var).is_ok());
        pool = rest;
        let scope: Vec<usize> = touching
            .iter()
            .flat_map(|f| f.scope.iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let needed = scope
            .iter()
            .fold(1u128, |acc, &v| acc.saturating_mul(sizes[v] as u128));
        if needed > cap as u128 {
            return Err(Error::Capacity {
                what: format!("factor over {{{}}}", names(&scope)),
                needed,
                cap: cap as u128,
            });
        }
        let cards = scope.iter().map(|&v| sizes[v]).collect();
        let refs: Vec<&Factor> = touching.iter().collect();
        let product = Factor::product(&refs, scope.clone(), cards);
        pool.push(product.sum_out(var));

        let around: Vec<usize> = neighbors[var].iter().copied().collect();
        for &a in &around {
            neighbors[a].remove(&var);
            for &b in &around {
                if a != b {
                    neighbors[a].insert(b);
                }
            }
        }
        neighbors[var].clear();
    }

    let scope: Vec<usize> = keep.into_iter().collect();
    let cards = scope.iter().map(|&v| sizes[v]).collect();
    let refs: Vec<&Factor> = pool.iter().collect();
    if refs.is_empty() {
        return Ok(Factor::scalar(1.0));
    }
    Ok(Factor::product(&refs, scope, cards))
}

/// Largest absolute entrywise difference between two tables over the same nodes.
pub fn compare_marginals(a: &MarginalTable, b: &MarginalTable) -> Result<f64> {
    let ka: BTreeSet<&NodeId> = a.0.keys().collect();
    let kb: BTreeSet<&NodeId> = b.0.keys().collect();
    if ka != kb {
        let only: Vec<String> = ka
            .symmetric_difference(&kb)
            .map(|id| id.to_string())
            .collect();
        return Err(Error::input(format!("marginal tables differ in nodes: {}", only.join(","))));
    }
    let mut worst: f64 = 0.0;
    for (id, va) in &a.0 {
        let vb = &b.0[id];
        if va.len() != vb.len() {
            return Err(Error::input(format!("domain size mismatch for `{id}`")));
        }
        for (x, y) in va.iter().zip(vb) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}
