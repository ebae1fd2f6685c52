//! Aggregation windows over the integer-millisecond time line.

use serde::Serialize;

/// A window on the time line. `lo`/`hi` of `i64::MIN`/`i64::MAX` stand for
/// unbounded ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
    pub lo_open: bool,
    pub hi_closed: bool,
}

impl Window {
    /// `[start, end)`.
    pub fn from_to(start: i64, end: i64) -> Self {
        Window { lo: start, hi: end, lo_open: false, hi_closed: false }
    }

    /// `[start, end]`; used when the end is written as `#maxtime`.
    pub fn from_to_inclusive(start: i64, end: i64) -> Self {
        Window { lo: start, hi: end, lo_open: false, hi_closed: true }
    }

    /// `(−∞, t)`.
    pub fn before(t: i64) -> Self {
        Window { lo: i64::MIN, hi: t, lo_open: false, hi_closed: false }
    }

    /// `(t, +∞)`.
    pub fn after(t: i64) -> Self {
        Window { lo: t, hi: i64::MAX, lo_open: true, hi_closed: false }
    }

    /// Exactly `t`.
    pub fn at(t: i64) -> Self {
        Window { lo: t, hi: t, lo_open: false, hi_closed: true }
    }

    pub fn contains(&self, x: i64) -> bool {
        let above = if self.lo_open { x > self.lo } else { x >= self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    /// Index range of `times` (sorted ascending) that falls in the window.
    pub fn slice(&self, times: &[i64]) -> std::ops::Range<usize> {
        let a = if self.lo_open {
            times.partition_point(|&t| t <= self.lo)
        } else {
            times.partition_point(|&t| t < self.lo)
        };
        let b = if self.hi_closed {
            times.partition_point(|&t| t <= self.hi)
        } else {
            times.partition_point(|&t| t < self.hi)
        };
        a..b.max(a)
    }

    /// Overlap with the interval `[start, end)`: whether the two share any
    /// point, and the length of the shared part in milliseconds.
    /// A zero-length interval is the single point `start`.
    pub fn overlap(&self, start: i64, end: i64) -> (bool, i64) {
        if start == end {
            return (self.contains(start), 0);
        }
        // Intersection [l, h) with endpoint openness tracked.
        let (l, l_open) = if self.lo > start {
            (self.lo, self.lo_open)
        } else if self.lo == start {
            (start, self.lo_open)
        } else {
            (start, false)
        };
        let (h, h_closed) = if self.hi < end { (self.hi, self.hi_closed) } else { (end, false) };
        let shared = l < h || (l == h && !l_open && h_closed);
        (shared, (h as i128 - l as i128).max(0) as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_by_default() {
        let w = Window::from_to(0, 10);
        assert!(w.contains(0) && !w.contains(10));
        assert_eq!(w.slice(&[0, 5, 10, 11]), 0..2);
    }

    #[test]
    fn before_after_at() {
        assert_eq!(Window::before(5).slice(&[1, 5, 6]), 0..1);
        assert_eq!(Window::after(5).slice(&[1, 5, 6]), 2..3);
        assert_eq!(Window::at(5).slice(&[1, 5, 5, 6]), 1..3);
    }

    #[test]
    fn interval_overlap() {
        assert_eq!(Window::from_to(0, 5).overlap(0, 10), (true, 5));
        assert_eq!(Window::from_to(10, 20).overlap(0, 10), (false, 0));
        assert_eq!(Window::at(3).overlap(0, 10), (true, 0));
        assert_eq!(Window::at(10).overlap(0, 10), (false, 0));
        assert_eq!(Window::from_to_inclusive(0, 10).overlap(10, 12), (true, 0));
        assert_eq!(Window::after(4).overlap(0, 10), (true, 6));
        assert_eq!(Window::before(4).overlap(4, 4), (false, 0));
    }
}
