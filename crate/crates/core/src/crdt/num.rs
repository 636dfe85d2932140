//! Integer types usable as counter payloads.

use std::fmt::{Debug, Display};
use std::hash::Hash;

use num_traits::{NumCast, PrimInt, Signed};

/// Signed machine integer backing additive and bounded counters.
pub trait CounterValue:
    PrimInt + Signed + NumCast + Default + Debug + Display + Hash + Send + Sync + 'static
{
    /// Converts a count (number of replicas, number of operations) into the counter domain.
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count exceeds counter range")
    }
}

impl<T> CounterValue for T where
    T: PrimInt + Signed + NumCast + Default + Debug + Display + Hash + Send + Sync + 'static
{
}
