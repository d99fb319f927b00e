use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which independent stream of a replicate a draw comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Genealogy = 0,
    Mutations = 1,
    ObservableFast = 2,
    ClockFast = 3,
}

const STREAMS: u64 = 4;

/// Master seed plus replicate index. Replicate `r` of a run can be regenerated in
/// isolation, independent of thread count or execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReplicateSeed {
    pub master: u64,
    pub replicate: u64,
}

impl ReplicateSeed {
    pub fn new(master: u64, replicate: u64) -> Self {
        Self { master, replicate }
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.replicate.wrapping_mul(STREAMS).wrapping_add(stream as u64));
        rng
    }
}

impl From<u64> for ReplicateSeed {
    fn from(master: u64) -> Self {
        Self { master, replicate: 0 }
    }
}
