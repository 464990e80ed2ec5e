#![allow(dead_code)]

use std::collections::BTreeSet;

use nmx_core::model::{CumulativeVector, Distribution, Network, Node, NodeId, NoisyMaxFamily, OrderedDomain};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random cumulative vector; occasionally hits exact 0 and 1 entries.
pub fn curve(rng: &mut ChaCha8Rng, len: usize) -> CumulativeVector {
    let mut cuts: Vec<f64> = (0..len - 1)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(1.0);
    CumulativeVector::new(cuts).unwrap()
}

/// Curves for parent states 1..states, each pointwise at or below the last.
pub fn dominated_curves(rng: &mut ChaCha8Rng, parent_states: usize, child_states: usize) -> Vec<CumulativeVector> {
    let mut out: Vec<CumulativeVector> = Vec::new();
    for _ in 1..parent_states {
        let fresh = curve(rng, child_states);
        let v = match out.last() {
            Some(prev) => fresh.values().iter().zip(prev.values()).map(|(a, b)| a.min(*b)).collect(),
            None => fresh.values().to_vec(),
        };
        out.push(CumulativeVector::new(v).unwrap());
    }
    out
}

pub fn family_with(
    rng: &mut ChaCha8Rng,
    child_states: usize,
    parent_states: &[usize],
    dominated: bool,
) -> NoisyMaxFamily {
    let parents: Vec<NodeId> = (0..parent_states.len()).map(|i| NodeId::from(format!("U{i}"))).collect();
    let activation = parent_states
        .iter()
        .map(|&s| {
            if dominated {
                dominated_curves(rng, s, child_states)
            } else {
                (1..s).map(|_| curve(rng, child_states)).collect()
            }
        })
        .collect();
    NoisyMaxFamily {
        child: "X".into(),
        parents,
        activation,
        leak: curve(rng, child_states),
    }
}

/// Family with up to four parents and up to four states everywhere.
pub fn random_family(seed: u64) -> NoisyMaxFamily {
    let mut r = rng(seed);
    let child = r.random_range(2..=4);
    let q = r.random_range(0..=4);
    let parents: Vec<usize> = (0..q).map(|_| r.random_range(2..=4)).collect();
    family_with(&mut r, child, &parents, false)
}

/// Binary family without leak, plus its scalar activations.
pub fn random_binary_family(seed: u64) -> (NoisyMaxFamily, Vec<f64>) {
    let mut r = rng(seed);
    let q = r.random_range(0..=6);
    let ps: Vec<f64> = (0..q).map(|_| r.random::<f64>()).collect();
    let named: Vec<(String, f64)> = ps.iter().enumerate().map(|(i, &p)| (format!("U{i}"), p)).collect();
    let refs: Vec<(&str, f64)> = named.iter().map(|(s, p)| (s.as_str(), *p)).collect();
    (NoisyMaxFamily::noisy_or("X", &refs, 0.0).unwrap(), ps)
}

pub fn prior(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..size).map(|_| rng.random_range(0.05..1.0)).collect();
    let t: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / t).collect();
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    p
}

/// Random DAG with shuffled ids, so id order is not a topological order.
pub fn random_net(seed: u64, max_nodes: usize, max_parents: usize, max_states: usize) -> Network {
    let mut r = rng(seed);
    let n = r.random_range(2..=max_nodes);
    let mut names: Vec<String> = (0..n).map(|i| format!("N{i:02}")).collect();
    names.shuffle(&mut r);
    let sizes: Vec<usize> = (0..n).map(|_| r.random_range(2..=max_states)).collect();
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let k = r.random_range(0..=max_parents.min(i));
        let mut earlier: Vec<usize> = (0..i).collect();
        earlier.shuffle(&mut r);
        let ps = &earlier[..k];
        let domain = OrderedDomain::indexed(sizes[i]);
        let node = if ps.is_empty() && r.random_bool(0.7) {
            Node::root(names[i].as_str(), domain, prior(&mut r, sizes[i]))
        } else {
            let dominated = r.random_bool(0.5);
            let parent_sizes: Vec<usize> = ps.iter().map(|&p| sizes[p]).collect();
            let mut f = family_with(&mut r, sizes[i], &parent_sizes, dominated);
            f.child = names[i].as_str().into();
            f.parents = ps.iter().map(|&p| NodeId::from(names[p].as_str())).collect();
            Node::child(domain, f)
        };
        nodes.push(node);
    }
    Network::new(format!("random-{seed}"), nodes).unwrap()
}

/// Layered polytree: arcs only go downward and the undirected skeleton is a forest.
pub fn random_polytree(seed: u64, layers: usize, width: usize, arcs: usize) -> Network {
    let mut r = rng(seed);
    let mut slots: Vec<(String, usize, usize)> = Vec::new();
    for l in 0..layers {
        for k in 0..r.random_range(1..=width) {
            slots.push((format!("L{l}n{k}"), l, r.random_range(2..=3)));
        }
    }
    let n = slots.len();
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(c: &mut Vec<usize>, x: usize) -> usize {
        if c[x] != x {
            let root = find(c, c[x]);
            c[x] = root;
        }
        c[x]
    }
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|p| (0..n).map(move |c| (p, c)))
        .filter(|&(p, c)| slots[p].1 < slots[c].1)
        .collect();
    pairs.shuffle(&mut r);
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut placed = 0;
    for (p, c) in pairs {
        if placed == arcs {
            break;
        }
        let (a, b) = (find(&mut comp, p), find(&mut comp, c));
        if a != b {
            comp[a] = b;
            parents[c].push(p);
            placed += 1;
        }
    }
    let nodes = (0..n).map(|i| {
        let (id, level, size) = &slots[i];
        let domain = OrderedDomain::indexed(*size);
        let node = if parents[i].is_empty() {
            Node::root(id.as_str(), domain, prior(&mut r, *size))
        } else {
            let sizes: Vec<usize> = parents[i].iter().map(|&p| slots[p].2).collect();
            let mut f = family_with(&mut r, *size, &sizes, true);
            f.child = id.as_str().into();
            f.parents = parents[i].iter().map(|&p| NodeId::from(slots[p].0.as_str())).collect();
            Node::child(domain, f)
        };
        node.with_labels([format!("level:{level}")])
    });
    Network::new(format!("polytree-{seed}"), nodes.collect::<Vec<_>>()).unwrap()
}

/// Applies `steps` random edits: leak, prior and title changes, arc
/// additions and removals, node additions and leaf removals.
pub fn random_edits(net: &Network, seed: u64, steps: usize) -> Network {
    let mut r = rng(seed);
    let mut title = net.title().to_string();
    let mut nodes: Vec<Node> = net.nodes().cloned().collect();
    let mut fresh = 0;
    for _ in 0..steps {
        match r.random_range(0..7) {
            0 => title = format!("{title}'"),
            1 => {
                let i = r.random_range(0..nodes.len());
                let s = nodes[i].domain.size();
                match &mut nodes[i].distribution {
                    Distribution::Prior(p) => p.probabilities = prior(&mut r, s),
                    Distribution::Family(f) => f.leak = curve(&mut r, s),
                }
            }
            2 => {
                let i = r.random_range(0..nodes.len());
                nodes[i].labels.insert(format!("tag{}", r.random_range(0..3)));
            }
            3 | 4 => {
                // add an arc p→c unless it closes a cycle or already exists
                let c = r.random_range(0..nodes.len());
                let p = r.random_range(0..nodes.len());
                let (pid, cid) = (nodes[p].id.clone(), nodes[c].id.clone());
                if p == c || nodes[c].parents().contains(&pid) || reaches(&nodes, &cid, &pid) {
                    continue;
                }
                let ps = nodes[p].domain.size();
                let cs = nodes[c].domain.size();
                let curves = (1..ps).map(|_| curve(&mut r, cs)).collect();
                let leak = curve(&mut r, cs);
                let node = &mut nodes[c];
                match &mut node.distribution {
                    Distribution::Family(f) => {
                        f.parents.push(pid);
                        f.activation.push(curves);
                    }
                    Distribution::Prior(_) => {
                        node.distribution = Distribution::Family(NoisyMaxFamily {
                            child: cid,
                            parents: vec![pid],
                            activation: vec![curves],
                            leak,
                        });
                    }
                }
            }
            5 => {
                let c = r.random_range(0..nodes.len());
                if let Distribution::Family(f) = &mut nodes[c].distribution {
                    if !f.parents.is_empty() {
                        let k = r.random_range(0..f.parents.len());
                        f.parents.remove(k);
                        f.activation.remove(k);
                    }
                }
            }
            _ => {
                if r.random_bool(0.5) || nodes.len() < 3 {
                    fresh += 1;
                    let s = r.random_range(2..=3);
                    let id = format!("new{seed}x{fresh}");
                    nodes.push(Node::root(id.as_str(), OrderedDomain::indexed(s), prior(&mut r, s)));
                } else {
                    let leaves: Vec<usize> = (0..nodes.len())
                        .filter(|&i| nodes.iter().all(|n| !n.parents().contains(&nodes[i].id)))
                        .collect();
                    if let Some(&i) = leaves.choose(&mut r) {
                        nodes.remove(i);
                    }
                }
            }
        }
    }
    Network::new(title, nodes).unwrap()
}

fn reaches(nodes: &[Node], from: &NodeId, to: &NodeId) -> bool {
    // is `to` a descendant of (or equal to) `from`
    let mut stack = vec![from.clone()];
    let mut seen = BTreeSet::new();
    while let Some(x) = stack.pop() {
        if &x == to {
            return true;
        }
        if seen.insert(x.clone()) {
            for n in nodes {
                if n.parents().contains(&x) {
                    stack.push(n.id.clone());
                }
            }
        }
    }
    false
}

pub fn ids(v: &[&str]) -> BTreeSet<NodeId> {
    v.iter().map(|s| NodeId::from(*s)).collect()
}
