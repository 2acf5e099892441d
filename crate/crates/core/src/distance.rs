//! Euclidean distance kernel shared by every search and score.
//!
//! Element `j` of the difference is accumulated into lane `j % 8`; the eight
//! lanes are then combined as `((l0+l1)+(l2+l3)) + ((l4+l5)+(l6+l7))`. The
//! order is fixed so results are bit-reproducible across builds and thread
//! counts, while still leaving the compiler room to vectorise.

use crate::error::{Error, Result};

const LANES: usize = 8;

/// Scalar types that can appear on either side of a distance computation.
pub trait Element: Copy {
    fn widen(self) -> f64;
}

impl Element for f32 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
}

/// Squared Euclidean distance. Lengths must already agree.
#[inline]
pub fn squared_distance<A: Element, B: Element>(a: &[A], b: &[B]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            let d = xa[l].widen() - xb[l].widen();
            acc[l] += d * d;
        }
    }
    for (l, (x, y)) in ra.iter().zip(rb).enumerate() {
        let d = x.widen() - y.widen();
        acc[l] += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Euclidean (l2) distance between two vectors of equal length.
pub fn get_distance<A: Element, B: Element>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(squared_distance(a, b).sqrt())
}
