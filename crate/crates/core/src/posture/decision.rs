use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_AUTO_DISCARD_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Discard,
}

/// How clusters are judged. An explicit decision list is authoritative;
/// clusters it does not mention are kept. Without one, clusters holding
/// less than `auto_discard_fraction` of the images are discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterPolicy {
    pub decisions: Option<BTreeMap<usize, Decision>>,
    pub auto_discard_fraction: f64,
}

impl Default for ClusterPolicy {
    fn default() -> Self {
        Self {
            decisions: None,
            auto_discard_fraction: DEFAULT_AUTO_DISCARD_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub cluster: usize,
    pub decision: Decision,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDecision {
    pub clusters: Vec<ClusterInfo>,
}

impl ClusterDecision {
    pub fn decision(&self, cluster: usize) -> Option<Decision> {
        self.clusters.get(cluster).map(|c| c.decision)
    }

    pub fn discarded(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters
            .iter()
            .filter(|c| c.decision == Decision::Discard)
            .map(|c| c.cluster)
    }

    pub fn total_members(&self) -> usize {
        self.clusters.iter().map(|c| c.members).sum()
    }
}

/// Per-cluster member counts from an assignment vector.
pub fn member_counts(k: usize, assignments: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &a in assignments {
        counts[a] += 1;
    }
    counts
}

pub fn decide_clusters(
    k: usize,
    assignments: &[usize],
    policy: &ClusterPolicy,
) -> Result<ClusterDecision> {
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::UnknownCluster(bad));
    }
    let counts = member_counts(k, assignments);
    let total = assignments.len().max(1) as f64;
    let clusters = match &policy.decisions {
        Some(explicit) => {
            if let Some((&bad, _)) = explicit.iter().find(|(&c, _)| c >= k) {
                return Err(Error::UnknownCluster(bad));
            }
            counts
                .iter()
                .enumerate()
                .map(|(c, &members)| ClusterInfo {
                    cluster: c,
                    decision: explicit.get(&c).copied().unwrap_or(Decision::Keep),
                    members,
                })
                .collect()
        }
        None => counts
            .iter()
            .enumerate()
            .map(|(c, &members)| ClusterInfo {
                cluster: c,
                decision: if (members as f64) / total < policy.auto_discard_fraction {
                    Decision::Discard
                } else {
                    Decision::Keep
                },
                members,
            })
            .collect(),
    };
    Ok(ClusterDecision { clusters })
}
