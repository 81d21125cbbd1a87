use crate::error::SplineError;

/// Spline degree. Only cubic splines are supported.
pub const DEGREE: usize = 3;

/// Strictly increasing knot timestamps of a cubic spline.
///
/// Knot `t[j]` is paired with control point `j`. Segment `i` covers
/// `[t[i], t[i+1])`, blends control points `i-3..=i` and its basis depends on
/// knots `t[i-2]..=t[i+3]`. With `K` knots the evaluation domain is
/// `[t[3], t[K-1])`. The two knots past the end needed by the final segments
/// come from the stored look-ahead knots, then from extrapolating the last
/// spacing (see [`KnotVector::knot_padded`]).
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    /// Known future knots past the last stored one, cleared on append.
    lookahead: Vec<f64>,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        check_increasing(&knots, 0)?;
        Ok(Self { knots, lookahead: Vec::new() })
    }

    /// `count` knots starting at `start` with constant `spacing`.
    pub fn uniform(start: f64, spacing: f64, count: usize) -> Self {
        Self {
            knots: (0..count).map(|j| start + spacing * j as f64).collect(),
            lookahead: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.knots
    }

    pub fn last(&self) -> f64 {
        *self.knots.last().expect("knot vector is never empty once validated")
    }

    /// Knot value past the last stored knot: the look-ahead knots first, then
    /// uniform extrapolation with the last spacing.
    pub fn knot_padded(&self, index: usize) -> f64 {
        let n = self.knots.len();
        if index < n {
            return self.knots[index];
        }
        let j = index - n;
        if let Some(&t) = self.lookahead.get(j) {
            return t;
        }
        let (prev, last) = match self.lookahead.len() {
            0 => (self.knots[n - 2], self.knots[n - 1]),
            1 => (self.knots[n - 1], self.lookahead[0]),
            m => (self.lookahead[m - 2], self.lookahead[m - 1]),
        };
        last + (last - prev) * (j + 1 - self.lookahead.len()) as f64
    }

    /// Evaluation domain `[start, end)`.
    pub fn domain(&self) -> (f64, f64) {
        if self.knots.len() <= DEGREE + 1 {
            return (f64::NAN, f64::NAN);
        }
        (self.knots[DEGREE], self.last())
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = self.domain();
        t >= a && t < b
    }

    /// Index `i` with `t[i] <= t < t[i+1]`, restricted to the evaluation domain.
    pub fn segment_lookup(&self, t: f64) -> Result<usize, SplineError> {
        let (start, end) = self.domain();
        if !(t >= start && t < end) {
            return Err(SplineError::OutOfDomain { t, start, end });
        }
        // first knot strictly greater than t, minus one
        let upper = self.knots.partition_point(|&k| k <= t);
        Ok(upper - 1)
    }

    /// The six knots `t[i-2]..=t[i+3]` that define segment `i`, all stored.
    pub fn segment_knots(&self, segment: usize) -> Result<[f64; 6], SplineError> {
        if segment < 2 || segment + 3 >= self.knots.len() {
            return Err(SplineError::InsufficientKnots {
                segment,
                first: segment as isize - 2,
                last: segment + 3,
                available: self.knots.len(),
            });
        }
        let mut out = [0.0; 6];
        out.copy_from_slice(&self.knots[segment - 2..segment + 4]);
        Ok(out)
    }

    /// Same as [`segment_knots`](Self::segment_knots) but extrapolating past the end.
    pub(crate) fn segment_knots_padded(&self, segment: usize) -> [f64; 6] {
        debug_assert!(segment >= 2);
        let mut out = [0.0; 6];
        for (m, k) in out.iter_mut().enumerate() {
            *k = self.knot_padded(segment - 2 + m);
        }
        out
    }

    pub(crate) fn set_lookahead(&mut self, future: &[f64]) -> Result<(), SplineError> {
        let mut joined = Vec::with_capacity(future.len() + 1);
        joined.push(self.last());
        joined.extend_from_slice(future);
        check_increasing(&joined, self.knots.len() - 1)?;
        self.lookahead = future.to_vec();
        Ok(())
    }

    pub fn lookahead(&self) -> &[f64] {
        &self.lookahead
    }

    pub(crate) fn append(&mut self, new_knots: &[f64]) -> Result<(), SplineError> {
        let offset = self.knots.len();
        let mut joined = Vec::with_capacity(new_knots.len() + 1);
        joined.push(self.last());
        joined.extend_from_slice(new_knots);
        check_increasing(&joined, offset - 1)?;
        self.knots.extend_from_slice(new_knots);
        self.lookahead.clear();
        Ok(())
    }
}

fn check_increasing(knots: &[f64], offset: usize) -> Result<(), SplineError> {
    for (j, w) in knots.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(SplineError::NonMonotoneKnots {
                index: offset + j + 1,
                prev: w[0],
                next: w[1],
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_interior_and_boundary() {
        let kv = KnotVector::new((0..7).map(f64::from).collect()).unwrap();
        assert_eq!(kv.segment_lookup(3.5).unwrap(), 3);
        assert_eq!(kv.segment_lookup(3.0).unwrap(), 3);
        assert_eq!(kv.segment_lookup(5.999).unwrap(), 5);
    }

    #[test]
    fn lookup_non_uniform() {
        let kv = KnotVector::new(vec![0.0, 0.1, 0.2, 0.25, 0.3, 0.5, 0.7]).unwrap();
        // 0.25 <= 0.26 < 0.3
        assert_eq!(kv.segment_lookup(0.26).unwrap(), 3);
        assert_eq!(kv.segment_lookup(0.3).unwrap(), 4);
        assert_eq!(kv.segment_lookup(0.69).unwrap(), 5);
    }

    #[test]
    fn lookup_out_of_domain() {
        let kv = KnotVector::new((0..7).map(f64::from).collect()).unwrap();
        assert!(matches!(kv.segment_lookup(2.99), Err(SplineError::OutOfDomain { .. })));
        assert!(matches!(kv.segment_lookup(6.0), Err(SplineError::OutOfDomain { .. })));
        assert!(kv.segment_lookup(f64::NAN).is_err());
    }

    #[test]
    fn rejects_repeated_knots() {
        assert!(matches!(
            KnotVector::new(vec![0.0, 1.0, 1.0, 2.0]),
            Err(SplineError::NonMonotoneKnots { index: 2, .. })
        ));
        let mut kv = KnotVector::uniform(0.0, 1.0, 6);
        assert!(kv.append(&[5.0]).is_err());
        assert!(kv.append(&[6.0, 5.5]).is_err());
        assert_eq!(kv.len(), 6);
    }

    #[test]
    fn padded_knots_extrapolate_last_spacing() {
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0, 2.5]).unwrap();
        assert_eq!(kv.knot_padded(3), 2.5);
        assert_eq!(kv.knot_padded(4), 3.0);
        assert_eq!(kv.knot_padded(5), 3.5);
    }

    #[test]
    fn segment_knots_needs_six() {
        let kv = KnotVector::uniform(0.0, 1.0, 7);
        assert_eq!(kv.segment_knots(3).unwrap(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(kv.segment_knots(4).is_err());
        assert!(kv.segment_knots(1).is_err());
    }
}
