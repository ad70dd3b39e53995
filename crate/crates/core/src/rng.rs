//! Seed streams.
//!
//! One master seed feeds every random draw in a run. Independent consumers
//! (environments, evaluation episodes, weight init) get their own ChaCha
//! stream selected by a counter, so no consumer can perturb another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids are grouped by purpose so that e.g. environment 3 and
/// evaluation episode 3 never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Env(u64),
    Eval(u64),
    Shuffle,
    Episode(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Shuffle => 2,
            Stream::Env(i) => (1 << 32) | i,
            Stream::Eval(i) => (2 << 32) | i,
            Stream::Episode(i) => (3 << 32) | i,
        }
    }
}

pub fn stream(master: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(which.id());
    rng
}
