//! Named random streams derived from one master seed.

use std::cell::RefCell;
use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const STREAM_ENV_TRAIN: &str = "env-train";
pub const STREAM_ENV_EVAL: &str = "env-eval";
pub const STREAM_INIT: &str = "init";
pub const STREAM_EXPLORE: &str = "explore";
pub const STREAM_BATCH: &str = "batch";
/// Experiment-level environment layout (UAV device placement).
pub const STREAM_TOPOLOGY: &str = "topology";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed for item `index` of stream `tag` under `master`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(tag)) ^ splitmix64(index.wrapping_add(0x5851_F42D)))
}

pub fn stream_rng(master: u64, tag: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, index))
}

/// Stream factory that records which streams were opened, so callers can
/// assert that e.g. offline training never touched an environment stream.
#[derive(Debug)]
pub struct Streams {
    master: u64,
    opened: RefCell<BTreeSet<String>>,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            opened: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, tag: &str, index: u64) -> SimRng {
        self.opened.borrow_mut().insert(tag.to_string());
        stream_rng(self.master, tag, index)
    }

    pub fn seed(&self, tag: &str, index: u64) -> u64 {
        self.opened.borrow_mut().insert(tag.to_string());
        derive_seed(self.master, tag, index)
    }

    pub fn opened(&self) -> BTreeSet<String> {
        self.opened.borrow().clone()
    }
}
