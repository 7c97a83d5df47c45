//! Axis-aligned boxes and the unit-cube normalization every optimizer works in.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// An axis-aligned box `lower[i] <= x[i] <= upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Bounds { lower, upper };
        b.validate()?;
        Ok(b)
    }

    /// Symmetric box `[-half_width, half_width]^dim`.
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn unit(dim: usize) -> Self {
        Bounds {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::InvalidBounds(format!(
                "lower has {} entries, upper has {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.lower.is_empty() {
            return Err(Error::InvalidBounds("zero-dimensional box".into()));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidBounds(format!(
                    "axis {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn strictly_contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v > *lo && *v < *hi)
    }

    /// Clamp `x` into the box. Returns whether any component moved.
    pub fn clip(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (i, v) in x.iter_mut().enumerate() {
            let c = v.clamp(self.lower[i], self.upper[i]);
            if c != *v {
                moved = true;
                *v = c;
            }
        }
        moved
    }

    /// Map a point of the box into `[0, 1]^d`.
    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i))
            .collect())
    }

    /// Inverse of [`Bounds::to_unit`].
    pub fn from_unit(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), u.len())?;
        Ok(u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * self.width(i))
            .collect())
    }

    /// Iterate over the `2^d` corners of the box.
    pub fn corners(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let d = self.dim();
        (0..(1usize << d)).map(move |mask| {
            (0..d)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_axes() {
        assert!(Bounds::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Bounds::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(Bounds::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn unit_round_trip() {
        let b = Bounds::new(vec![-2.0, 10.0], vec![2.0, 20.0]).unwrap();
        let x = [1.0, 12.5];
        let u = b.to_unit(&x).unwrap();
        assert_eq!(u, vec![0.75, 0.25]);
        assert_eq!(b.from_unit(&u).unwrap(), x.to_vec());
    }

    #[test]
    fn clip_reports_movement() {
        let b = Bounds::symmetric(2, 1.0).unwrap();
        let mut x = [0.5, 3.0];
        assert!(b.clip(&mut x));
        assert_eq!(x, [0.5, 1.0]);
        assert!(!b.clip(&mut x));
    }

    #[test]
    fn corner_count() {
        let b = Bounds::symmetric(3, 1.0).unwrap();
        assert_eq!(b.corners().count(), 8);
    }
}
