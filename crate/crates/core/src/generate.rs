//! Seeded generator for layered noisy-MAX networks.
//!
//! Layer 0 holds the root nodes (with priors); every other node gets at least one
//! parent from an earlier layer. Arcs only point to later layers, and every node
//! carries a `level:k` label for its layer, so generated networks are
//! hierarchical by construction.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CumulativeVector, Network, Node, NodeId, NoisyMaxFamily, OrderedDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    /// Id prefix; ids are `{prefix}{index:03}`.
    pub prefix: String,
    pub count: usize,
    /// Domain sizes to draw from uniformly.
    pub domain_sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(name: &str, prefix: &str, count: usize, domain_sizes: &[usize]) -> Self {
        LayerSpec {
            name: name.into(),
            prefix: prefix.into(),
            count,
            domain_sizes: domain_sizes.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub title: String,
    pub layers: Vec<LayerSpec>,
    pub arcs: usize,
    pub max_parents: usize,
    /// Restrict parents to the immediately preceding layer.
    pub adjacent_only: bool,
    /// Range for the probability that an active parent in its top state produces
    /// a nonzero contribution.
    pub activation_range: (f64, f64),
    /// Range for the probability that the leak produces a nonzero contribution.
    pub leak_range: (f64, f64),
    /// Extra semantic labels, each node gets at most one.
    pub semantic_labels: Vec<String>,
    pub seed: u64,
}

impl GeneratorParams {
    /// 448 nodes, 908 arcs, 74 roots.
    pub fn cpcs_scale(seed: u64) -> Self {
        GeneratorParams {
            title: "cpcs-scale".into(),
            layers: vec![
                LayerSpec::new("predisposing", "P", 74, &[2]),
                LayerSpec::new("disease", "D", 120, &[4]),
                LayerSpec::new("IPS", "I", 94, &[4]),
                LayerSpec::new("finding", "F", 160, &[2, 3, 4]),
            ],
            arcs: 908,
            max_parents: 8,
            adjacent_only: false,
            activation_range: (0.05, 0.95),
            leak_range: (0.001, 0.05),
            semantic_labels: ["gastric", "liver disease", "lab finding", "symptom", "sign"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            seed,
        }
    }

    /// Ten nodes, small enough for joint enumeration.
    pub fn tiny(seed: u64) -> Self {
        GeneratorParams {
            title: "tiny".into(),
            layers: vec![
                LayerSpec::new("predisposing", "P", 3, &[2]),
                LayerSpec::new("disease", "D", 3, &[2, 3]),
                LayerSpec::new("finding", "F", 4, &[2, 3]),
            ],
            arcs: 12,
            max_parents: 3,
            adjacent_only: false,
            activation_range: (0.1, 0.9),
            leak_range: (0.01, 0.2),
            semantic_labels: vec!["gastric".into(), "sign".into()],
            seed,
        }
    }

    /// Diseases (roots) over findings.
    pub fn two_level(diseases: usize, findings: usize, arcs: usize, seed: u64) -> Self {
        GeneratorParams {
            title: "two-level".into(),
            layers: vec![
                LayerSpec::new("disease", "D", diseases, &[2, 3]),
                LayerSpec::new("finding", "F", findings, &[2, 3]),
            ],
            arcs,
            max_parents: diseases.max(1),
            adjacent_only: true,
            activation_range: (0.1, 0.9),
            leak_range: (0.01, 0.3),
            semantic_labels: Vec::new(),
            seed,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "cpcs-scale" | "cpcs" => Ok(Self::cpcs_scale(seed)),
            "tiny" => Ok(Self::tiny(seed)),
            "two-level" => Ok(Self::two_level(4, 6, 10, seed)),
            _ => Err(Error::Parameter(format!("unknown preset `{name}`"))),
        }
    }

    fn check(&self) -> Result<()> {
        let unit = |r: (f64, f64)| 0.0 <= r.0 && r.0 <= r.1 && r.1 <= 1.0;
        if !unit(self.activation_range) || !unit(self.leak_range) {
            return Err(Error::Parameter("probability ranges must satisfy 0 <= lo <= hi <= 1".into()));
        }
        for l in &self.layers {
            if l.count > 0 && (l.domain_sizes.is_empty() || l.domain_sizes.iter().any(|&s| s < 2)) {
                return Err(Error::Parameter(format!("layer `{}` needs domain sizes >= 2", l.name)));
            }
        }
        if self.layers.is_empty() {
            return Err(Error::Parameter("at least one layer is required".into()));
        }
        Ok(())
    }
}

struct Slot {
    id: NodeId,
    layer: usize,
    size: usize,
}

pub fn gen_random(params: &GeneratorParams) -> Result<Network> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut slots = Vec::new();
    for (k, layer) in params.layers.iter().enumerate() {
        for i in 0..layer.count {
            let size = layer.domain_sizes[rng.random_range(0..layer.domain_sizes.len())];
            slots.push(Slot {
                id: NodeId::from(format!("{}{:03}", layer.prefix, i)),
                layer: k,
                size,
            });
        }
    }

    let allowed = |p: &Slot, c: &Slot| {
        if params.adjacent_only {
            p.layer + 1 == c.layer
        } else {
            p.layer < c.layer
        }
    };
    let children: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].layer > 0).collect();
    if params.arcs < children.len() {
        return Err(Error::Parameter(format!(
            "{} arcs cannot give each of {} non-root nodes a parent",
            params.arcs,
            children.len()
        )));
    }
    if params.max_parents == 0 && !children.is_empty() {
        return Err(Error::Parameter("max_parents must be positive".into()));
    }

    let mut parents: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); slots.len()];
    for &c in &children {
        let options: Vec<usize> = (0..slots.len()).filter(|&p| allowed(&slots[p], &slots[c])).collect();
        let &p = options.choose(&mut rng).ok_or_else(|| {
            Error::Parameter(format!("no possible parent for `{}`", slots[c].id))
        })?;
        parents[c].insert(p);
    }
    let mut placed = children.len();
    let mut candidates: Vec<(usize, usize)> = children
        .iter()
        .flat_map(|&c| (0..slots.len()).map(move |p| (p, c)))
        .filter(|&(p, c)| allowed(&slots[p], &slots[c]) && !parents[c].contains(&p))
        .collect();
    candidates.shuffle(&mut rng);
    for (p, c) in candidates {
        if placed == params.arcs {
            break;
        }
        if parents[c].len() < params.max_parents {
            parents[c].insert(p);
            placed += 1;
        }
    }
    if placed < params.arcs {
        return Err(Error::Parameter(format!(
            "only {placed} of {} arcs fit the layer and in-degree limits",
            params.arcs
        )));
    }

    let mut nodes = Vec::with_capacity(slots.len());
    for (i, slot) in slots.iter().enumerate() {
        let layer = &params.layers[slot.layer];
        let domain = OrderedDomain::indexed(slot.size);
        let node = if slot.layer == 0 {
            Node::root(slot.id.clone(), domain, random_prior(&mut rng, slot.size))
        } else {
            let ps: Vec<usize> = parents[i].iter().copied().collect();
            let activation = ps
                .iter()
                .map(|&p| activation_curves(&mut rng, slots[p].size, slot.size, params.activation_range))
                .collect();
            let leak_mass = rng.random_range(params.leak_range.0..=params.leak_range.1);
            Node::child(
                domain,
                NoisyMaxFamily {
                    child: slot.id.clone(),
                    parents: ps.iter().map(|&p| slots[p].id.clone()).collect(),
                    activation,
                    leak: curve_with_mass(&mut rng, slot.size, leak_mass),
                },
            )
        };
        let mut labels = vec![layer.name.clone(), format!("level:{}", slot.layer)];
        if !params.semantic_labels.is_empty() && rng.random_bool(0.5) {
            labels.push(params.semantic_labels[rng.random_range(0..params.semantic_labels.len())].clone());
        }
        nodes.push(
            node.with_name(format!("{}-{}", layer.name.to_lowercase(), &slot.id.as_str()[layer.prefix.len()..]))
                .with_labels(labels),
        );
    }
    Network::new(params.title.clone(), nodes)
}

fn random_prior(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let absent = rng.random_range(0.5..0.99);
    let weights: Vec<f64> = (1..size).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut prior = vec![absent];
    prior.extend(weights.iter().map(|w| (1.0 - absent) * w / total));
    // put the rounding residue on the absent state
    let rest: f64 = prior[1..].iter().sum();
    prior[0] = 1.0 - rest;
    prior
}

/// Cumulative vector with `P(contribution > 0) = mass`, the rest spread over the
/// nonzero states.
fn curve_with_mass(rng: &mut ChaCha8Rng, size: usize, mass: f64) -> CumulativeVector {
    let weights: Vec<f64> = (1..size).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut values = Vec::with_capacity(size);
    let mut acc = 1.0 - mass;
    values.push(acc);
    for w in &weights {
        acc += mass * w / total;
        values.push(acc.min(1.0));
    }
    *values.last_mut().unwrap() = 1.0;
    CumulativeVector::from_raw(values)
}

/// One curve per nonzero parent state, each pointwise at or below the previous
/// one, so higher parent states push the child higher.
fn activation_curves(
    rng: &mut ChaCha8Rng,
    parent_size: usize,
    child_size: usize,
    range: (f64, f64),
) -> Vec<CumulativeVector> {
    let mut strengths: Vec<f64> = (1..parent_size)
        .map(|_| rng.random_range(range.0..=range.1))
        .collect();
    strengths.sort_by(f64::total_cmp);
    let mut curves: Vec<CumulativeVector> = Vec::with_capacity(strengths.len());
    for s in strengths {
        let fresh = curve_with_mass(rng, child_size, s);
        let values = match curves.last() {
            Some(prev) => fresh
                .values()
                .iter()
                .zip(prev.values())
                .map(|(a, b)| a.min(*b))
                .collect(),
            None => fresh.values().to_vec(),
        };
        curves.push(CumulativeVector::from_raw(values));
    }
    curves
}
