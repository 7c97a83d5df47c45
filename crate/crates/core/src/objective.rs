//! Min-max normalization of the two raw measurements and their equally
//! weighted scalarization `f = E_scaled - I_scaled` (minimized, optimum -1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed bounds used to min-max scale beam position error (µm) and intensity (a.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationBounds {
    pub e_min: f64,
    pub e_max: f64,
    pub i_min: f64,
    pub i_max: f64,
}

impl NormalizationBounds {
    pub fn new(e_min: f64, e_max: f64, i_min: f64, i_max: f64) -> Result<Self> {
        let b = NormalizationBounds { e_min, e_max, i_min, i_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.e_min, self.e_max, self.i_min, self.i_max].iter().all(|v| v.is_finite());
        if !finite || self.e_max <= self.e_min || self.i_max <= self.i_min {
            return Err(Error::Config(format!(
                "normalization needs e_max > e_min and i_max > i_min, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A scaled value and whether it had to be clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub value: f64,
    pub clamped: bool,
}

fn min_max(v: f64, lo: f64, hi: f64) -> Scaled {
    let raw = (v - lo) / (hi - lo);
    let value = raw.clamp(0.0, 1.0);
    Scaled {
        value,
        clamped: value != raw,
    }
}

pub fn scale_error(e: f64, b: &NormalizationBounds) -> Scaled {
    min_max(e, b.e_min, b.e_max)
}

pub fn scale_intensity(i: f64, b: &NormalizationBounds) -> Scaled {
    min_max(i, b.i_min, b.i_max)
}

/// `e_scaled - i_scaled`; both inputs must lie in `[0, 1]`.
pub fn scalarize(e_scaled: f64, i_scaled: f64) -> Result<f64> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !unit(e_scaled) || !unit(i_scaled) {
        return Err(Error::InvalidInput(format!(
            "scaled objectives must lie in [0, 1], got ({e_scaled}, {i_scaled})"
        )));
    }
    Ok(e_scaled - i_scaled)
}

/// Clamp events seen while scaling, for the trial summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampCounts {
    pub error: u64,
    pub intensity: u64,
}

/// Scales and scalarizes raw measurements, counting clamp events.
#[derive(Debug, Clone)]
pub struct Scalarizer {
    bounds: NormalizationBounds,
    counts: ClampCounts,
}

impl Scalarizer {
    pub fn new(bounds: NormalizationBounds) -> Result<Self> {
        bounds.validate()?;
        Ok(Scalarizer {
            bounds,
            counts: ClampCounts::default(),
        })
    }

    pub fn bounds(&self) -> &NormalizationBounds {
        &self.bounds
    }

    pub fn counts(&self) -> ClampCounts {
        self.counts
    }

    /// `f` for a raw `(E, I)` measurement.
    pub fn objective(&mut self, e: f64, i: f64) -> f64 {
        let es = scale_error(e, &self.bounds);
        let is = scale_intensity(i, &self.bounds);
        self.counts.error += u64::from(es.clamped);
        self.counts.intensity += u64::from(is.clamped);
        es.value - is.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bounds() -> NormalizationBounds {
        NormalizationBounds::new(2.0, 12.0, 0.0, 50.0).unwrap()
    }

    #[test]
    fn error_scaling() {
        let b = bounds();
        assert_eq!(scale_error(2.0, &b).value, 0.0);
        assert_eq!(scale_error(12.0, &b).value, 1.0);
        assert_eq!(scale_error(7.0, &b).value, 0.5);
        assert!(!scale_error(7.0, &b).clamped);
    }

    #[test]
    fn intensity_scaling_and_clamp() {
        let b = bounds();
        assert_eq!(scale_intensity(50.0, &b).value, 1.0);
        assert_eq!(scale_intensity(0.0, &b).value, 0.0);
        let s = scale_intensity(-5.0, &b);
        assert_eq!(s.value, 0.0);
        assert!(s.clamped);

        let mut sc = Scalarizer::new(b).unwrap();
        sc.objective(7.0, -5.0);
        sc.objective(20.0, 10.0);
        assert_eq!(sc.counts(), ClampCounts { error: 1, intensity: 1 });
    }

    #[test]
    fn scalarize_examples() {
        assert_eq!(scalarize(0.0, 1.0).unwrap(), -1.0);
        assert_eq!(scalarize(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(scalarize(0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(scalarize(1.2, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(scalarize(0.2, -0.1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bad_bounds() {
        assert!(NormalizationBounds::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(NormalizationBounds::new(0.0, 1.0, 2.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn scalarize_range_monotone_antisymmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
            let f = scalarize(a, b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&f));
            prop_assert_eq!(f == -1.0, a == 0.0 && b == 1.0);
            prop_assert_eq!(scalarize(a, b).unwrap(), -scalarize(b, a).unwrap());
            if a <= c {
                prop_assert!(scalarize(a, b).unwrap() <= scalarize(c, b).unwrap());
                prop_assert!(scalarize(b, a).unwrap() >= scalarize(b, c).unwrap());
            }
        }
    }
}
