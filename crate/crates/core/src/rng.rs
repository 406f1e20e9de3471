//! Deterministic random streams.
//!
//! Every node owns an independent ChaCha stream keyed by `(seed, node id)`,
//! so gradient draws do not depend on the order in which nodes are visited.
//! Auxiliary streams (problem generation, worker sampling) use reserved
//! stream ids at the top of the `u64` range.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const PROBLEM_STREAM: u64 = u64::MAX;
const SAMPLING_STREAM: u64 = u64::MAX - 1;
const INIT_STREAM: u64 = u64::MAX - 2;

pub fn keyed_stream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream used to generate problem data for a given seed.
pub fn problem_stream(seed: u64) -> Stream {
    keyed_stream(seed, PROBLEM_STREAM)
}

/// Stream used for worker sampling and random topologies.
pub fn sampling_stream(seed: u64) -> Stream {
    keyed_stream(seed, SAMPLING_STREAM)
}

/// Stream used to draw random initial points.
pub fn init_stream(seed: u64) -> Stream {
    keyed_stream(seed, INIT_STREAM)
}

/// One gradient-noise stream per node.
#[derive(Clone, Debug)]
pub struct NodeStreams {
    streams: Vec<Stream>,
}

impl NodeStreams {
    pub fn new(seed: u64, n: usize) -> Self {
        let streams = (0..n as u64).map(|i| keyed_stream(seed, i)).collect();
        Self { streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn node(&mut self, i: usize) -> &mut Stream {
        &mut self.streams[i]
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Stream> {
        self.streams.iter_mut()
    }
}
