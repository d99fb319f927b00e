use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::rng::{ReplicateSeed, Stream};
use crate::error::{Error, Result};
use crate::rates::RateTable;

pub type BlockId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct MergerEvent {
    pub time: f64,
    /// Sorted ids of the merged blocks.
    pub merged: Vec<BlockId>,
    pub new_block: BlockId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    /// Number of leaves below the block.
    pub size: u32,
    pub birth: f64,
    /// Time the block is merged away; infinite for the root.
    pub death: f64,
    pub parent: Option<BlockId>,
}

/// One simulated genealogy. Leaves have ids `0..n` (leaf `i` of the sample is id
/// `i - 1`); the block created by event `e` has id `n + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    n: usize,
    events: Vec<MergerEvent>,
    blocks: Vec<Block>,
}

impl EventLog {
    /// Builds and validates a log from `(time, merged block ids)` pairs in order.
    pub fn from_events(n: usize, events: Vec<(f64, Vec<BlockId>)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::pre(format!("genealogy needs n >= 2, got {n}")));
        }
        let mut log = EventLog {
            n,
            events: Vec::with_capacity(events.len()),
            blocks: (0..n)
                .map(|_| Block { size: 1, birth: 0.0, death: f64::INFINITY, parent: None })
                .collect(),
        };
        let mut alive = n;
        for (time, mut merged) in events {
            merged.sort_unstable();
            log.push_event(time, merged)?;
            alive -= log.events.last().map_or(0, |e| e.merged.len() - 1);
        }
        if alive != 1 {
            return Err(Error::Structural(format!("log ends with {alive} blocks instead of one")));
        }
        Ok(log)
    }

    fn push_event(&mut self, time: f64, merged: Vec<BlockId>) -> Result<()> {
        let last = self.events.last().map_or(0.0, |e| e.time);
        if !(time > last) {
            return Err(Error::Structural(format!(
                "event times must increase strictly ({time} after {last})"
            )));
        }
        if merged.len() < 2 {
            return Err(Error::Structural("an event must merge at least two blocks".into()));
        }
        let new_block = self.blocks.len() as BlockId;
        let mut size = 0;
        for (i, &id) in merged.iter().enumerate() {
            let ok = (id as usize) < self.blocks.len()
                && self.blocks[id as usize].parent.is_none()
                && (i == 0 || merged[i - 1] != id);
            if !ok {
                return Err(Error::Structural(format!("block {id} is not alive at time {time}")));
            }
            let block = &mut self.blocks[id as usize];
            block.parent = Some(new_block);
            block.death = time;
            size += block.size;
        }
        self.blocks.push(Block { size, birth: time, death: f64::INFINITY, parent: None });
        self.events.push(MergerEvent { time, merged, new_block });
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> &[MergerEvent] {
        &self.events
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id as usize]
    }

    pub fn root(&self) -> BlockId {
        (self.blocks.len() - 1) as BlockId
    }

    pub fn mrca_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Children of an internal block, or an empty slice for leaves.
    pub fn children(&self, id: BlockId) -> &[BlockId] {
        let id = id as usize;
        if id < self.n {
            &[]
        } else {
            &self.events[id - self.n].merged
        }
    }

    /// Leaf ids below a block, sorted.
    pub fn leaves(&self, id: BlockId) -> Vec<BlockId> {
        let mut out = Vec::with_capacity(self.block(id).size as usize);
        let mut stack = vec![id];
        while let Some(b) = stack.pop() {
            if (b as usize) < self.n {
                out.push(b);
            } else {
                stack.extend_from_slice(self.children(b));
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of mergers (κ_n).
    pub fn jump_count(&self) -> usize {
        self.events.len()
    }
}

/// Maps coalescent time to real time under exponential growth at rate `rho`,
/// `g⁻¹(t) = ln(1 + ρt)/ρ`; the identity for `rho = 0`.
#[inline]
pub fn growth_time(t: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        t
    } else {
        (rho * t).ln_1p() / rho
    }
}

pub(crate) fn check_inputs(n: usize, rates: &RateTable<f64>, rho: f64) -> Result<()> {
    if n > rates.n_max() {
        return Err(Error::pre(format!("n={n} exceeds rate table n_max={}", rates.n_max())));
    }
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::pre(format!("growth rate must be finite and >= 0, got {rho}")));
    }
    Ok(())
}

/// Draws the number of blocks taking part in the next merger from `b` blocks.
/// The linear scan costs `k - 1` steps, and the scans of one genealogy add up to
/// at most `n - 1`.
#[inline]
pub(crate) fn draw_merger_size<R: Rng + ?Sized>(rates: &RateTable<f64>, b: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let row = rates.jump_row(b);
    let mut acc = 0.0;
    let mut last_positive = 2;
    for (i, &w) in row.iter().enumerate() {
        acc += w;
        if w > 0.0 {
            last_positive = i + 2;
        }
        if u < acc {
            return i + 2;
        }
    }
    last_positive
}

/// Waiting time to the next merger from `b` blocks, in coalescent time.
#[inline]
pub(crate) fn draw_wait<R: Rng + ?Sized>(rates: &RateTable<f64>, b: usize, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rates.total(b)
}

/// Moves `k` uniformly chosen entries of `items` to its tail, without replacement.
/// Calls `on_swap(i, j)` for every swap performed.
#[inline]
pub(crate) fn choose_tail<T, R: Rng + ?Sized>(items: &mut [T], k: usize, rng: &mut R, mut on_swap: impl FnMut(usize, usize)) {
    let b = items.len();
    for i in 0..k {
        let last = b - 1 - i;
        let j = rng.random_range(0..=last);
        if j != last {
            items.swap(j, last);
            on_swap(j, last);
        }
    }
}

/// Jump-hold simulation of the Λ-n-coalescent down to its most recent common
/// ancestor. With `growth_rate > 0` event times are reported in real time; the
/// jump chain itself does not depend on it.
pub fn simulate_genealogy(
    n: usize,
    rates: &RateTable<f64>,
    seed: impl Into<ReplicateSeed>,
    growth_rate: f64,
) -> Result<EventLog> {
    check_inputs(n, rates, growth_rate)?;
    if n < 2 {
        return Err(Error::pre(format!("genealogy needs n >= 2, got {n}")));
    }
    let mut rng = seed.into().rng(Stream::Genealogy);
    let mut log = EventLog {
        n,
        events: Vec::with_capacity(n - 1),
        blocks: Vec::with_capacity(2 * n - 1),
    };
    log.blocks
        .extend((0..n).map(|_| Block { size: 1, birth: 0.0, death: f64::INFINITY, parent: None }));
    let mut alive: Vec<BlockId> = (0..n as BlockId).collect();
    let mut t = 0.0;
    while alive.len() > 1 {
        let b = alive.len();
        t += draw_wait(rates, b, &mut rng);
        let k = draw_merger_size(rates, b, &mut rng);
        choose_tail(&mut alive, k, &mut rng, |_, _| {});
        let mut merged: Vec<BlockId> = alive.split_off(b - k);
        merged.sort_unstable();
        let real = growth_time(t, growth_rate);
        let new_block = log.blocks.len() as BlockId;
        log.push_event(real, merged).unwrap_or_else(|e| panic!("simulated log violates its invariants: {e}"));
        alive.push(new_block);
    }
    Ok(log)
}
