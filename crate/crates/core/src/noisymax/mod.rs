//! Noisy-MAX semantics.
//!
//! The child takes the maximum of independent per-parent contributions and a leak
//! contribution, so its cumulative distribution given a parent assignment is the
//! product of the leak vector and one activation curve per active parent:
//!
//! ```text
//! P(X <= x | d) = leak[x] * prod_i c[i][d_i][x]      (c[i][0] = 1)
//! P(X = x | d)  = P(X <= x | d) - P(X <= x-1 | d)
//! ```
//!
//! [`expand_cpt`] materializes the full table from these products. [`oracle_cpt`]
//! computes the same table by brute-force enumeration of latent contributions and
//! shares no arithmetic with the fast path.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CumulativeVector, NodeId, NoisyMaxFamily};

mod oracle;

pub use oracle::{oracle_cpt, oracle_cpt_with_cap, ORACLE_WORK_CAP};

/// Default cap on the number of entries in an expanded table.
pub const DEFAULT_TABLE_CAP: usize = 1 << 24;

/// Tolerance used when checking that a supplied marginal sums to one.
pub const MARGINAL_SUM_TOLERANCE: f64 = 1e-9;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times a computed cumulative probability fell outside `[0,1]` and was clamped.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

fn clamp_unit(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        v
    } else {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        v.clamp(0.0, 1.0)
    }
}

/// A full conditional probability table.
///
/// Columns are indexed by the joint parent assignment in mixed radix with the
/// first parent most significant; each column holds one probability per child
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub child_states: usize,
    pub parent_states: Vec<usize>,
    pub table: Vec<f64>,
}

impl Cpt {
    pub fn columns(&self) -> usize {
        self.parent_states.iter().product()
    }

    pub fn column(&self, joint: usize) -> &[f64] {
        &self.table[joint * self.child_states..(joint + 1) * self.child_states]
    }

    pub fn joint_index(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.parent_states)
            .fold(0, |acc, (&d, &s)| acc * s + d)
    }

    pub fn decode(&self, mut joint: usize) -> Vec<usize> {
        let mut states = vec![0; self.parent_states.len()];
        for (slot, &s) in states.iter_mut().zip(&self.parent_states).rev() {
            *slot = joint % s;
            joint /= s;
        }
        states
    }

    pub fn get(&self, states: &[usize], x: usize) -> f64 {
        self.column(self.joint_index(states))[x]
    }

    /// Largest deviation of any column sum from one.
    pub fn max_normalization_error(&self) -> f64 {
        (0..self.columns())
            .map(|j| (self.column(j).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entrywise difference; infinite if shapes differ.
    pub fn max_abs_diff(&self, other: &Cpt) -> f64 {
        if self.child_states != other.child_states || self.parent_states != other.parent_states {
            return f64::INFINITY;
        }
        self.table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_states(family: &NoisyMaxFamily, parent_states: &[usize]) -> Result<()> {
    if parent_states.len() != family.parents.len() {
        return Err(Error::input(format!(
            "{} parent states given for {} parents",
            parent_states.len(),
            family.parents.len()
        )));
    }
    for (i, &d) in parent_states.iter().enumerate() {
        if d >= family.parent_states(i) {
            return Err(Error::input(format!(
                "state {d} out of range for parent `{}` ({} states)",
                family.parents[i],
                family.parent_states(i)
            )));
        }
    }
    Ok(())
}

fn check_child_state(family: &NoisyMaxFamily, x: usize) -> Result<()> {
    if x >= family.child_states() {
        return Err(Error::input(format!(
            "child state {x} out of range ({} states)",
            family.child_states()
        )));
    }
    Ok(())
}

/// Fills `out` with `P(X <= x | parent_states)` for every child state.
fn cumulative_into(family: &NoisyMaxFamily, parent_states: &[usize], out: &mut [f64]) {
    out.copy_from_slice(family.leak.values());
    for (i, &d) in parent_states.iter().enumerate() {
        if let Some(curve) = family.curve(i, d) {
            for (o, c) in out.iter_mut().zip(curve.values()) {
                *o *= c;
            }
        }
    }
    for o in out.iter_mut() {
        *o = clamp_unit(*o);
    }
}

/// `P(X <= x | parent_states)`.
pub fn cumulative_prob(family: &NoisyMaxFamily, parent_states: &[usize], x: usize) -> Result<f64> {
    check_states(family, parent_states)?;
    check_child_state(family, x)?;
    let mut product = family.leak.values()[x];
    for (i, &d) in parent_states.iter().enumerate() {
        if let Some(curve) = family.curve(i, d) {
            product *= curve.values()[x];
        }
    }
    Ok(clamp_unit(product))
}

/// `P(X <= x | parent_states)` for all `x` at once.
pub fn cumulative_vector(family: &NoisyMaxFamily, parent_states: &[usize]) -> Result<Vec<f64>> {
    check_states(family, parent_states)?;
    let mut out = vec![0.0; family.child_states()];
    cumulative_into(family, parent_states, &mut out);
    Ok(out)
}

/// `P(X = x | parent_states)` by differencing the cumulative product.
pub fn point_prob(family: &NoisyMaxFamily, parent_states: &[usize], x: usize) -> Result<f64> {
    let upper = cumulative_prob(family, parent_states, x)?;
    if x == 0 {
        Ok(upper)
    } else {
        Ok(upper - cumulative_prob(family, parent_states, x - 1)?)
    }
}

/// Binary noisy-OR: probability the effect is present given the active causes' activations.
pub fn noisy_or_prob(activations: &[f64]) -> Result<f64> {
    // r + p - r·p = 1 - (1-r)(1-p), exact for a single cause
    let mut fired = 0.0;
    for &p in activations {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::input(format!("activation {p} outside [0,1]")));
        }
        fired = fired + p - fired * p;
    }
    Ok(fired)
}

/// Expands a family into its full table with the default size cap.
pub fn expand_cpt(family: &NoisyMaxFamily) -> Result<Cpt> {
    expand_cpt_with_cap(family, DEFAULT_TABLE_CAP)
}

pub fn expand_cpt_with_cap(family: &NoisyMaxFamily, cap: usize) -> Result<Cpt> {
    let s = family.child_states();
    let parent_states: Vec<usize> = (0..family.parents.len())
        .map(|i| family.parent_states(i))
        .collect();
    let needed = parent_states
        .iter()
        .fold(s as u128, |acc, &k| acc.saturating_mul(k as u128));
    if needed > cap as u128 {
        return Err(Error::Capacity {
            what: format!("table for `{}`", family.child),
            needed,
            cap: cap as u128,
        });
    }
    let columns: usize = parent_states.iter().product();
    let mut table = vec![0.0; columns * s];
    let mut states = vec![0usize; parent_states.len()];
    let mut cum = vec![0.0; s];
    for col in table.chunks_exact_mut(s) {
        cumulative_into(family, &states, &mut cum);
        let mut prev = 0.0;
        for (out, &c) in col.iter_mut().zip(&cum) {
            *out = c - prev;
            prev = c;
        }
        // advance the odometer, last parent fastest
        for (slot, &k) in states.iter_mut().zip(&parent_states).rev() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    Ok(Cpt {
        child_states: s,
        parent_states,
        table,
    })
}

fn check_marginal(id: &NodeId, marginal: &[f64], states: usize) -> Result<()> {
    if marginal.len() != states {
        return Err(Error::input(format!(
            "marginal for `{id}` has {} entries, expected {states}",
            marginal.len()
        )));
    }
    if marginal.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::input(format!("marginal for `{id}` has a negative entry")));
    }
    let sum: f64 = marginal.iter().sum();
    if (sum - 1.0).abs() > MARGINAL_SUM_TOLERANCE {
        return Err(Error::input(format!("marginal for `{id}` sums to {sum}, not 1")));
    }
    Ok(())
}

/// Expected activation curve of parent `i` under `marginal`: `sum_d P(D=d) c[i][d]`.
pub fn expected_curve(family: &NoisyMaxFamily, i: usize, marginal: &[f64]) -> Result<Vec<f64>> {
    check_marginal(&family.parents[i], marginal, family.parent_states(i))?;
    let s = family.child_states();
    let mut out = vec![marginal[0]; s];
    for (d, &pd) in marginal.iter().enumerate().skip(1) {
        let curve = family.curve(i, d).expect("state checked against parent domain");
        for (o, c) in out.iter_mut().zip(curve.values()) {
            *o += pd * c;
        }
    }
    Ok(out)
}

/// Multiplies `leak` by the expected curves of the selected parents and
/// normalizes the result into a cumulative vector.
pub(crate) fn fold_curves(
    family: &NoisyMaxFamily,
    leak: &[f64],
    parents: impl IntoIterator<Item = usize>,
    marginal_of: impl Fn(&NodeId) -> Option<Vec<f64>>,
) -> Result<CumulativeVector> {
    let mut acc = leak.to_vec();
    for i in parents {
        let id = &family.parents[i];
        let marginal =
            marginal_of(id).ok_or_else(|| Error::input(format!("no marginal supplied for `{id}`")))?;
        let curve = expected_curve(family, i, &marginal)?;
        for (a, c) in acc.iter_mut().zip(&curve) {
            *a *= c;
        }
    }
    for a in acc.iter_mut() {
        *a = clamp_unit(*a);
    }
    // the last entry of every factor is a total probability
    if let Some(last) = acc.last_mut() {
        *last = 1.0;
    }
    // absorb rounding so the vector stays nondecreasing
    for k in 1..acc.len() {
        if acc[k] < acc[k - 1] {
            acc[k] = acc[k - 1];
        }
    }
    CumulativeVector::new(acc)
}

/// Unconditional cumulative distribution of the child when its parents are
/// mutually independent with the given marginals.
pub fn marginal_cumulative(
    family: &NoisyMaxFamily,
    parent_marginals: &BTreeMap<NodeId, Vec<f64>>,
) -> Result<CumulativeVector> {
    fold_curves(
        family,
        family.leak.values(),
        0..family.parents.len(),
        |id| parent_marginals.get(id).cloned(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentCounts {
    /// `sum_i (s_m - 1) s_i`: activation parameters under the noisy-MAX.
    pub noisy_count: u128,
    /// `(s_m - 1) prod_i s_i`: free parameters of the full table.
    pub full_count: u128,
    /// `s_m - 1` leak parameters, reported on their own.
    pub leak_count: u128,
}

pub fn assessment_counts(family: &NoisyMaxFamily) -> AssessmentCounts {
    let free = family.child_states().saturating_sub(1) as u128;
    let sizes: Vec<u128> = (0..family.parents.len())
        .map(|i| family.parent_states(i) as u128)
        .collect();
    AssessmentCounts {
        noisy_count: sizes.iter().map(|s| free * s).sum(),
        full_count: sizes.iter().fold(free, |acc, s| acc.saturating_mul(*s)),
        leak_count: free,
    }
}

/// Warnings for activation curves that are not pointwise nonincreasing in the
/// parent state. The model does not require this, so these are advisory.
pub fn lint_family(family: &NoisyMaxFamily) -> Vec<String> {
    let mut warnings = Vec::new();
    for (i, curves) in family.activation.iter().enumerate() {
        let mut prev: Option<&CumulativeVector> = None;
        for (k, curve) in curves.iter().enumerate() {
            let higher = prev.is_some_and(|p| {
                curve.values().iter().zip(p.values()).any(|(c, q)| c > q)
            });
            if higher {
                warnings.push(format!(
                    "`{}` <- `{}`: activation for state {} is not dominated by state {}",
                    family.child,
                    family.parents[i],
                    k + 1,
                    k
                ));
            }
            prev = Some(curve);
        }
    }
    warnings
}
