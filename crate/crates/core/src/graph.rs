//! Index-based adjacency over a network, used by the ordering, view, and layout code.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{Network, NodeId};

/// Dense adjacency with nodes indexed in id order. Dangling parent references are dropped.
#[derive(Debug, Clone)]
pub struct Topology {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Topology {
    pub fn of(net: &Network) -> Self {
        let ids: Vec<NodeId> = net.ids().cloned().collect();
        let index: HashMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut parents = vec![Vec::new(); ids.len()];
        let mut children = vec![Vec::new(); ids.len()];
        for (i, node) in net.nodes().enumerate() {
            for p in node.parents() {
                if let Some(&j) = index.get(p) {
                    parents[i].push(j);
                    children[j].push(i);
                }
            }
        }
        for c in &mut children {
            c.sort_unstable();
            c.dedup();
        }
        Topology {
            ids,
            index,
            parents,
            children,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &NodeId {
        &self.ids[i]
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub(crate) fn check_resolved(&self, net: &Network) -> Result<()> {
        for node in net.nodes() {
            for p in node.parents() {
                if !self.index.contains_key(p) {
                    return Err(Error::input(format!(
                        "`{}` references unknown parent `{p}`",
                        node.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Kahn's algorithm with the smallest ready index first. On failure, names one cycle.
    pub fn order(&self) -> Result<Vec<usize>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &self.children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        Err(Error::Cycle(self.find_cycle(&indegree)))
    }

    fn find_cycle(&self, indegree: &[usize]) -> Vec<String> {
        // Every node left with positive indegree has a remaining parent, so walking
        // parents must revisit a node.
        let remaining = |i: usize| indegree[i] > 0;
        let start = (0..self.len()).find(|&i| remaining(i)).unwrap();
        let mut path = vec![start];
        let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut cur = start;
        loop {
            let mut ps: Vec<usize> = self.parents[cur].iter().copied().filter(|&p| remaining(p)).collect();
            ps.sort_unstable();
            let next = ps[0];
            if let Some(&at) = pos.get(&next) {
                let mut cycle: Vec<usize> = path[at..].to_vec();
                // walked against arc direction
                cycle.reverse();
                let min_at = cycle
                    .iter()
                    .enumerate()
                    .min_by(|a, b| self.ids[*a.1].cmp(&self.ids[*b.1]))
                    .map(|(k, _)| k)
                    .unwrap();
                cycle.rotate_left(min_at);
                return cycle.iter().map(|&i| self.ids[i].to_string()).collect();
            }
            pos.insert(next, path.len());
            path.push(next);
            cur = next;
        }
    }

    /// Longest-path level of every node.
    pub fn levels(&self) -> Result<Vec<usize>> {
        let order = self.order()?;
        let mut level = vec![0usize; self.len()];
        for &i in &order {
            for &c in &self.children[i] {
                level[c] = level[c].max(level[i] + 1);
            }
        }
        Ok(level)
    }

    /// Nodes reachable from `seeds` along `step`, excluding the seeds unless revisited.
    pub fn closure(&self, seeds: &[usize], step: impl Fn(usize) -> Vec<usize>) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        while let Some(i) = queue.pop_front() {
            for j in step(i) {
                if seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    pub fn ancestors(&self, seeds: &[usize]) -> BTreeSet<usize> {
        self.closure(seeds, |i| self.parents[i].clone())
    }

    pub fn descendants(&self, seeds: &[usize]) -> BTreeSet<usize> {
        self.closure(seeds, |i| self.children[i].clone())
    }
}
