//! Planar segments and the exact crossing predicate used to keep
//! small-world couplers in one fabrication layer from overlapping.
//!
//! Coordinates are generic; placement uses `i64` unit-cell coordinates so
//! every predicate is evaluated exactly.

use num_traits::{Num, Signed};

pub type Point<T> = (T, T);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub p1: Point<T>,
    pub p2: Point<T>,
}

/// Direction class of a segment, with `y` pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeSign {
    Positive,
    Negative,
    /// Horizontal or vertical: admissible in either slope class.
    Axis,
}

impl<T> Segment<T>
where
    T: Num + Signed + Copy + PartialOrd,
{
    /// Returns `None` for a zero-length segment.
    pub fn new(p1: Point<T>, p2: Point<T>) -> Option<Self> {
        (p1 != p2).then_some(Segment { p1, p2 })
    }

    pub fn delta(&self) -> (T, T) {
        (self.p2.0 - self.p1.0, self.p2.1 - self.p1.1)
    }

    pub fn slope_sign(&self) -> SlopeSign {
        let (dx, dy) = self.delta();
        if dx.is_zero() || dy.is_zero() {
            SlopeSign::Axis
        } else if dx.signum() == dy.signum() {
            SlopeSign::Positive
        } else {
            SlopeSign::Negative
        }
    }

    /// `Some(+1)` / `Some(-1)` when the slope is exactly +1 or -1.
    pub fn unit_diagonal(&self) -> Option<i8> {
        let (dx, dy) = self.delta();
        if dx.is_zero() || dx.abs() != dy.abs() {
            None
        } else if dx.signum() == dy.signum() {
            Some(1)
        } else {
            Some(-1)
        }
    }
}

fn orientation<T>(a: Point<T>, b: Point<T>, c: Point<T>) -> T
where
    T: Num + Signed + Copy,
{
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
}

/// True iff the open segments share a point: a proper X crossing, or a
/// collinear overlap of positive length. Touching at an endpoint (including
/// a T junction) does not count.
pub fn segments_properly_cross<T>(s1: &Segment<T>, s2: &Segment<T>) -> bool
where
    T: Num + Signed + Copy + PartialOrd,
{
    let o1 = orientation(s1.p1, s1.p2, s2.p1);
    let o2 = orientation(s1.p1, s1.p2, s2.p2);
    let o3 = orientation(s2.p1, s2.p2, s1.p1);
    let o4 = orientation(s2.p1, s2.p2, s1.p2);

    if o1.is_zero() && o2.is_zero() {
        // Collinear: project on the axis along which s1 is not degenerate.
        let proj = |p: Point<T>| if s1.p1.0 != s1.p2.0 { p.0 } else { p.1 };
        let (a0, a1) = min_max(proj(s1.p1), proj(s1.p2));
        let (b0, b1) = min_max(proj(s2.p1), proj(s2.p2));
        let lo = if a0 > b0 { a0 } else { b0 };
        let hi = if a1 < b1 { a1 } else { b1 };
        return lo < hi;
    }
    // Non-collinear lines meet in one point; it must be interior to both.
    (o1 * o2).is_negative() && (o3 * o4).is_negative()
}

fn min_max<T: PartialOrd>(a: T, b: T) -> (T, T) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
