use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::Assignment;

/// Relabeling-invariant encoding of a joint assignment.
///
/// Agents are scanned apps first, then ops. Entry 0 means unassigned; other
/// entries are 1-based chain labels numbered by first appearance. Keys order
/// lexicographically, so unassigned agents sort first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalKey(pub Box<[u16]>);

impl CanonicalKey {
    pub fn from_raw(labels: Vec<u16>) -> Self {
        Self(canonical_raw(&labels).into_boxed_slice())
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of chains in use.
    pub fn chain_count(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0) as usize
    }

    /// Representative assignment with zero prices.
    pub fn decode(&self, n_apps: usize) -> Assignment {
        let label = |&x: &u16| (x > 0).then(|| x as usize - 1);
        let (apps, ops) = self.0.split_at(n_apps.min(self.0.len()));
        Assignment::from_labels(apps.iter().map(label).collect(), ops.iter().map(label).collect())
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.0.iter().map(|&x| if x == 0 { "-".to_string() } else { (x - 1).to_string() }).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Renumbers nonzero labels by first appearance, keeping 0 as unassigned.
fn canonical_raw(labels: &[u16]) -> Vec<u16> {
    let mut map: Vec<(u16, u16)> = Vec::new();
    labels
        .iter()
        .map(|&x| {
            if x == 0 {
                return 0;
            }
            match map.iter().find(|(from, _)| *from == x) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len() as u16 + 1;
                    map.push((x, to));
                    to
                }
            }
        })
        .collect()
}

/// First-appearance renumbering of optional chain labels.
pub fn canonical_labels(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let raw: Vec<u16> = labels.iter().map(|l| l.map_or(0, |c| c as u16 + 1)).collect();
    canonical_raw(&raw).into_iter().map(|x| (x > 0).then(|| x as usize - 1)).collect()
}

pub fn canonicalize(assignment: &Assignment) -> CanonicalKey {
    let raw: Vec<u16> =
        assignment.app_chain.iter().chain(&assignment.op_chain).map(|l| l.map_or(0, |c| c as u16 + 1)).collect();
    CanonicalKey::from_raw(raw)
}

/// Canonical assignment with prices carried over to the renumbered labels.
pub fn canonical_assignment(assignment: &Assignment) -> Assignment {
    let key = canonicalize(assignment);
    let n_apps = assignment.app_chain.len();
    let mut out = key.decode(n_apps);
    let old = assignment.app_chain.iter().chain(&assignment.op_chain);
    let new = out.app_chain.iter().chain(&out.op_chain);
    for (o, n) in old.zip(new) {
        if let (Some(o), Some(n)) = (o, n) {
            out.chain_prices[*n] = assignment.price(*o);
        }
    }
    out
}
