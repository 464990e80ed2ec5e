//! Deterministic fixtures shared by the benchmarks.

use std::collections::BTreeSet;

use nmx_core::generate::{gen_random, GeneratorParams};
use nmx_core::model::{CumulativeVector, Distribution, Network, Node, NodeId, NoisyMaxFamily};
use nmx_core::subnet::{Relation, ViewSpec};

/// Seed used for every generated fixture.
pub const SEED: u64 = 2024;

/// Finding-level seed for views of the cpcs-scale network.
pub const VIEW_SEED: &str = "I056";

fn step_curve(states: usize, strength: f64) -> CumulativeVector {
    let m = states as f64;
    CumulativeVector::new((0..states).map(|x| 1.0 - (1.0 - (x + 1) as f64 / m) * strength).collect())
        .expect("step curves are monotone")
}

/// Family with `parents` parents of `parent_states` states over a child of
/// `child_states` states.
pub fn family(parents: usize, parent_states: usize, child_states: usize) -> NoisyMaxFamily {
    let activation = (0..parents)
        .map(|i| {
            (1..parent_states)
                .map(|d| step_curve(child_states, 0.2 + 0.06 * ((i * 7 + d * 3) % 10) as f64))
                .collect()
        })
        .collect();
    NoisyMaxFamily {
        child: "X".into(),
        parents: (0..parents).map(|i| NodeId::from(format!("U{i}"))).collect(),
        activation,
        leak: step_curve(child_states, 0.05),
    }
}

pub fn cpcs() -> Network {
    gen_random(&GeneratorParams::cpcs_scale(SEED)).expect("preset is feasible")
}

pub fn tiny() -> Network {
    gen_random(&GeneratorParams::tiny(SEED)).expect("preset is feasible")
}

pub fn view() -> ViewSpec {
    ViewSpec::new([VIEW_SEED], Relation::PredecessorsAndSuccessors)
}

pub fn all_ids(net: &Network) -> BTreeSet<NodeId> {
    net.ids().cloned().collect()
}

/// `net` with the leak of its first non-root node scaled toward certainty.
pub fn leak_edited(net: &Network) -> Network {
    let target = net.nodes().find(|n| !n.is_root()).expect("a child node").id.clone();
    let nodes: Vec<Node> = net
        .nodes()
        .map(|n| {
            let mut n = n.clone();
            if n.id == target {
                if let Distribution::Family(f) = &mut n.distribution {
                    let leak = f.leak.values().iter().map(|v| (v + 1.0) / 2.0).collect();
                    f.leak = CumulativeVector::new(leak).expect("monotone");
                }
            }
            n
        })
        .collect();
    Network::new(net.title(), nodes).expect("edit keeps the network valid")
}
