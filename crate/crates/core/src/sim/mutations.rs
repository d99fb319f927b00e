use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use super::genealogy::{BlockId, EventLog};
use super::rng::{ReplicateSeed, Stream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mutation {
    /// Block on whose branch the mutation sits.
    pub block: BlockId,
    pub time: f64,
}

/// Infinite-sites mutations on the branches of one genealogy. A mutation on block
/// `b` lies in `[birth(b), death(b))`; the root's branch is the ancestral line
/// continued beyond the MRCA, and only its first mutation is kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MutationSet {
    mutations: Vec<Mutation>,
}

impl MutationSet {
    pub fn new(mutations: Vec<Mutation>) -> Self {
        Self { mutations }
    }

    pub fn mutations(&self) -> &[Mutation] {
        &self.mutations
    }

    pub fn len(&self) -> usize {
        self.mutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mutations.is_empty()
    }

    /// Checks every mutation against the lifetime of its block.
    pub fn validate(&self, log: &EventLog) -> Result<()> {
        for m in &self.mutations {
            if m.block as usize >= log.blocks().len() {
                return Err(Error::Structural(format!("mutation references unknown block {}", m.block)));
            }
            let b = log.block(m.block);
            if !(m.time >= b.birth && m.time < b.death) {
                return Err(Error::Structural(format!(
                    "mutation at t={} outside lifetime [{}, {}) of block {}",
                    m.time, b.birth, b.death, m.block
                )));
            }
        }
        Ok(())
    }
}

/// Places a Poisson(θ/2 · length) number of mutations uniformly on every branch,
/// plus the first mutation on the ancestral line above the MRCA.
pub fn place_mutations(log: &EventLog, theta: f64, seed: impl Into<ReplicateSeed>) -> Result<MutationSet> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::pre(format!("theta must be positive and finite, got {theta}")));
    }
    let mut rng = seed.into().rng(Stream::Mutations);
    let rate = theta / 2.0;
    let mut mutations = Vec::new();
    let root = log.root();
    for (id, block) in log.blocks().iter().enumerate() {
        if id as BlockId == root {
            continue;
        }
        let length = block.death - block.birth;
        let mean = rate * length;
        if mean <= 0.0 {
            continue;
        }
        let count = match Poisson::new(mean) {
            Ok(p) => p.sample(&mut rng) as u64,
            Err(_) => return Err(Error::pre(format!("invalid Poisson mean {mean} on block {id}"))),
        };
        for _ in 0..count {
            let u: f64 = rng.random();
            mutations.push(Mutation { block: id as BlockId, time: block.birth + u * length });
        }
    }
    let above: f64 = Exp::new(rate).expect("positive rate").sample(&mut rng);
    mutations.push(Mutation { block: root, time: log.mrca_time() + above });
    Ok(MutationSet { mutations })
}
