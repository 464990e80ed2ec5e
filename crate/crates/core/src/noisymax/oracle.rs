//! Brute-force reference for noisy-MAX tables.
//!
//! Each active parent and the leak emit a latent contribution drawn from the
//! differenced form of their curve; the child is the maximum. Every combination
//! of contributions is enumerated and its probability added to the cell of the
//! resulting maximum.

use crate::error::{Error, Result};
use crate::model::NoisyMaxFamily;

use super::{Cpt, DEFAULT_TABLE_CAP};

/// Cap on `columns * contribution combinations`.
pub const ORACLE_WORK_CAP: u128 = 10_000_000;

pub fn oracle_cpt(family: &NoisyMaxFamily) -> Result<Cpt> {
    oracle_cpt_with_cap(family, DEFAULT_TABLE_CAP)
}

pub fn oracle_cpt_with_cap(family: &NoisyMaxFamily, table_cap: usize) -> Result<Cpt> {
    let child = family.leak.values().len();
    let radices: Vec<usize> = family.activation.iter().map(|a| a.len() + 1).collect();
    let columns = radices.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128));
    let cells = columns.saturating_mul(child as u128);
    if cells > table_cap as u128 {
        return Err(Error::Capacity {
            what: format!("oracle table for `{}`", family.child),
            needed: cells,
            cap: table_cap as u128,
        });
    }
    let per_column = (0..=radices.len()).fold(1u128, |acc, _| acc.saturating_mul(child as u128));
    let work = columns.saturating_mul(per_column);
    if work > ORACLE_WORK_CAP {
        return Err(Error::Capacity {
            what: format!("oracle enumeration for `{}`", family.child),
            needed: work,
            cap: ORACLE_WORK_CAP,
        });
    }

    let leak_mass = masses(family.leak.values());
    let mut table = Vec::with_capacity(cells as usize);
    for column in 0..columns as usize {
        // decode the column into parent states, first parent most significant
        let mut assignment = vec![0usize; radices.len()];
        let mut rest = column;
        for k in (0..radices.len()).rev() {
            assignment[k] = rest % radices[k];
            rest /= radices[k];
        }

        let mut sources: Vec<Vec<f64>> = vec![leak_mass.clone()];
        for (k, &d) in assignment.iter().enumerate() {
            if d > 0 {
                sources.push(masses(family.activation[k][d - 1].values()));
            }
        }

        let mut cell = vec![0.0f64; child];
        let mut pick = vec![0usize; sources.len()];
        loop {
            let mut p = 1.0;
            let mut top = 0;
            for (src, &z) in sources.iter().zip(&pick) {
                p *= src[z];
                top = top.max(z);
            }
            cell[top] += p;

            let mut k = 0;
            while k < pick.len() {
                pick[k] += 1;
                if pick[k] < child {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
            if k == pick.len() {
                break;
            }
        }
        table.extend(cell);
    }

    Ok(Cpt {
        child_states: child,
        parent_states: radices,
        table,
    })
}

/// Probability mass of each latent contribution value.
fn masses(cumulative: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(cumulative.len());
    for z in 0..cumulative.len() {
        let below = if z == 0 { 0.0 } else { cumulative[z - 1] };
        out.push(cumulative[z] - below);
    }
    out
}
