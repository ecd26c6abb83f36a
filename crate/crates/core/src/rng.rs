//! Seed lineage and complex Gaussian sampling.
//!
//! Every random stream in a run is a ChaCha8 generator keyed by a 64-bit seed
//! derived from the master seed and a path of integer tags, so any stream can
//! be regenerated in isolation regardless of scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMatrix, C64};

pub type SimRng = ChaCha8Rng;

/// Stream purposes within one setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Geometry = 1,
    Pilots = 2,
    CalibrationChannel = 3,
    CalibrationUplinkNoise = 4,
    CalibrationDownlinkNoise = 5,
    Channel = 6,
    UplinkNoise = 7,
    DownlinkNoise = 8,
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree. Children are derived by hashing in a tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Seed(pub u64);

impl Seed {
    pub fn child(self, tag: u64) -> Seed {
        Seed(mix64(self.0 ^ mix64(tag.wrapping_add(0xA076_1D64_78BD_642F))))
    }

    pub fn path(self, tags: &[u64]) -> Seed {
        tags.iter().fold(self, |s, &t| s.child(t))
    }

    pub fn purpose(self, p: Purpose) -> Seed {
        self.child(p as u64)
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }
}

/// One draw from `CN(0, variance)`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = libm::sqrt(0.5 * variance);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// A `rows × cols` matrix of i.i.d. `CN(0, variance)` entries, drawn column by column.
pub fn complex_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, variance))
}
