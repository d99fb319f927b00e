use serde::Serialize;

use super::genealogy::{BlockId, EventLog};
use super::mutations::MutationSet;
use super::rng::ReplicateSeed;
use crate::error::Result;

/// Per-leaf statistics of one replicate. Index `i` refers to leaf `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CladeStatsVector {
    pub seed: Option<(u64, u64)>,
    pub n: usize,
    pub theta: f64,
    pub spec: String,
    /// External branch length `E_n(i)`.
    pub external: Vec<f64>,
    /// Minimal clade size `M_n(i)`.
    pub minimal: Vec<u32>,
    /// Minimal observable clade size `O_n(i)`.
    pub observable: Vec<u32>,
}

impl CladeStatsVector {
    /// `2 ≤ M ≤ O ≤ n` and `E > 0` for every leaf.
    pub fn check_bounds(&self) -> bool {
        let n = self.n as u32;
        self.external.iter().all(|&e| e > 0.0)
            && self
                .minimal
                .iter()
                .zip(&self.observable)
                .all(|(&m, &o)| 2 <= m && m <= o && o <= n)
    }

    pub(crate) fn with_metadata(mut self, seed: ReplicateSeed, theta: f64, spec: String) -> Self {
        self.seed = Some((seed.master, seed.replicate));
        self.theta = theta;
        self.spec = spec;
        self
    }
}

/// Extracts `E_n(i)`, `M_n(i)` and `O_n(i)` for every leaf.
///
/// The minimal observable clade of `i` is the first block strictly above leaf `i`
/// whose branch carries a mutation; mutations on `i`'s own external branch are
/// private and never count. The root always qualifies through the ancestral line
/// above the MRCA.
pub fn observable_clades(log: &EventLog, muts: &MutationSet) -> Result<CladeStatsVector> {
    muts.validate(log)?;
    let blocks = log.blocks();
    let root = log.root() as usize;
    let mut mutated = vec![false; blocks.len()];
    for m in muts.mutations() {
        mutated[m.block as usize] = true;
    }
    // Parents always have larger ids than their children.
    let mut observed = vec![0u32; blocks.len()];
    observed[root] = blocks[root].size;
    for id in (0..root).rev() {
        let parent = blocks[id].parent.expect("non-root block has a parent") as usize;
        observed[id] = if mutated[id] { blocks[id].size } else { observed[parent] };
    }
    let n = log.n();
    let mut external = Vec::with_capacity(n);
    let mut minimal = Vec::with_capacity(n);
    let mut observable = Vec::with_capacity(n);
    for leaf in 0..n {
        let leaf_block = &blocks[leaf];
        let parent = leaf_block.parent.expect("leaf merges before the MRCA") as BlockId;
        external.push(leaf_block.death);
        minimal.push(log.block(parent).size);
        observable.push(observed[parent as usize]);
    }
    Ok(CladeStatsVector { seed: None, n, theta: f64::NAN, spec: String::new(), external, minimal, observable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::mutations::Mutation;

    fn hand_fixture() -> (EventLog, MutationSet) {
        // Leaves 1,2,3 are ids 0,1,2. t=1 merges {2,3} into id 3; t=2 merges the rest.
        let log = EventLog::from_events(3, vec![(1.0, vec![1, 2]), (2.0, vec![0, 3])]).unwrap();
        let muts = MutationSet::new(vec![
            Mutation { block: 3, time: 1.5 },
            Mutation { block: 0, time: 0.5 },
        ]);
        (log, muts)
    }

    #[test]
    fn hand_genealogy() {
        let (log, muts) = hand_fixture();
        let stats = observable_clades(&log, &muts).unwrap();
        assert_eq!(stats.observable, vec![3, 2, 2]);
        assert_eq!(stats.minimal, vec![3, 2, 2]);
        assert_eq!(stats.external, vec![2.0, 1.0, 1.0]);
        assert!(stats.check_bounds());
    }

    #[test]
    fn no_mutations_means_whole_sample() {
        let (log, _) = hand_fixture();
        let stats = observable_clades(&log, &MutationSet::default()).unwrap();
        assert_eq!(stats.observable, vec![3, 3, 3]);
    }

    #[test]
    fn private_mutations_are_ignored() {
        let (log, _) = hand_fixture();
        let muts = MutationSet::new(vec![
            Mutation { block: 1, time: 0.2 },
            Mutation { block: 2, time: 0.9 },
        ]);
        assert_eq!(observable_clades(&log, &muts).unwrap().observable, vec![3, 3, 3]);
    }

    #[test]
    fn unknown_block_is_structural_error() {
        let (log, _) = hand_fixture();
        let muts = MutationSet::new(vec![Mutation { block: 17, time: 0.2 }]);
        assert!(observable_clades(&log, &muts).is_err());
    }
}
