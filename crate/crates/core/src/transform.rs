//! Domain-guided coordinate transforms.
//!
//! Coupled knobs that act on the beam in the same way are rotated, pair by
//! pair, into a differential mode and a common mode:
//!
//! ```text
//! v_diff   = (k_delay - k_ref) / sqrt(2)
//! v_common = (k_delay + k_ref) / sqrt(2)
//! ```
//!
//! The differential component is written to the slot of the delay knob and the
//! common component to the slot of the reference knob, so a transformed vector
//! keeps the layout of the native one. Axes that belong to no pair pass through
//! unchanged. The induced matrix is block-diagonal and orthogonal, so the
//! inverse is its transpose.
//!
//! Any invertible map between a native control space and a search space can
//! be plugged into the optimizers through [`CoordinateTransform`]: the
//! optimizer models and proposes in the transformed space and every candidate
//! is mapped back with [`CoordinateTransform::inverse`] before evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{check_dim, Error, Result};

/// Two knobs whose perturbations move the beam in the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnobPair {
    pub delay: usize,
    pub reference: usize,
}

impl KnobPair {
    pub fn new(delay: usize, reference: usize) -> Self {
        KnobPair { delay, reference }
    }
}

impl From<(usize, usize)> for KnobPair {
    fn from((delay, reference): (usize, usize)) -> Self {
        KnobPair { delay, reference }
    }
}

/// A map between native knob coordinates and a search space.
pub trait CoordinateTransform {
    fn dim(&self) -> usize;

    /// Native -> transformed.
    fn forward(&self, native: &[f64]) -> Result<Vec<f64>>;

    /// Transformed -> native.
    fn inverse(&self, transformed: &[f64]) -> Result<Vec<f64>>;

    /// An axis-aligned box containing the image of a native box.
    fn transform_bounds(&self, native: &Bounds) -> Result<Bounds>;
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Block-diagonal rotation of knob pairs into differential/common modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTransform {
    dim: usize,
    pairs: Vec<KnobPair>,
    unpaired: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl PairedTransform {
    /// Build the transform for `dim` axes and the given pairs.
    pub fn new(dim: usize, pairs: &[KnobPair]) -> Result<Self> {
        if dim < 2 * pairs.len() {
            return Err(Error::InvalidPairing(format!(
                "{} pairs need at least {} axes, got {dim}",
                pairs.len(),
                2 * pairs.len()
            )));
        }
        let mut seen = vec![false; dim];
        for p in pairs {
            for index in [p.delay, p.reference] {
                if index >= dim {
                    return Err(Error::IndexOutOfRange { index, dim });
                }
            }
            if p.delay == p.reference {
                return Err(Error::InvalidPairing(format!(
                    "axis {} paired with itself",
                    p.delay
                )));
            }
            for index in [p.delay, p.reference] {
                if seen[index] {
                    return Err(Error::InvalidPairing(format!(
                        "axis {index} appears in more than one pair"
                    )));
                }
                seen[index] = true;
            }
        }
        let unpaired: Vec<usize> = (0..dim).filter(|&i| !seen[i]).collect();

        let mut matrix = DMatrix::zeros(dim, dim);
        for p in pairs {
            matrix[(p.delay, p.delay)] = FRAC_1_SQRT_2;
            matrix[(p.delay, p.reference)] = -FRAC_1_SQRT_2;
            matrix[(p.reference, p.delay)] = FRAC_1_SQRT_2;
            matrix[(p.reference, p.reference)] = FRAC_1_SQRT_2;
        }
        for &i in &unpaired {
            matrix[(i, i)] = 1.0;
        }

        Ok(PairedTransform {
            dim,
            pairs: pairs.to_vec(),
            unpaired,
            matrix,
        })
    }

    /// The transform that pairs nothing.
    pub fn identity(dim: usize) -> Self {
        Self::new(dim, &[]).expect("identity transform is always valid")
    }

    /// Adjacent pairing `(0,1), (2,3), ...` over `2 * n_pairs` axes.
    pub fn adjacent(n_pairs: usize) -> Self {
        let pairs: Vec<KnobPair> = (0..n_pairs).map(|i| KnobPair::new(2 * i, 2 * i + 1)).collect();
        Self::new(2 * n_pairs, &pairs).expect("adjacent pairing is always valid")
    }

    pub fn pairs(&self) -> &[KnobPair] {
        &self.pairs
    }

    pub fn unpaired(&self) -> &[usize] {
        &self.unpaired
    }

    pub fn is_identity(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The dense `d x d` matrix `M` with `v = M k`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Per-pair rotation into `(diff, common)` as a standalone helper.
    pub fn rotate_pair(delay: f64, reference: f64) -> (f64, f64) {
        (
            FRAC_1_SQRT_2 * (delay - reference),
            FRAC_1_SQRT_2 * (delay + reference),
        )
    }
}

impl CoordinateTransform for PairedTransform {
    fn dim(&self) -> usize {
        self.dim
    }

    fn forward(&self, k: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, k.len())?;
        let mut v = k.to_vec();
        for p in &self.pairs {
            let (diff, common) = Self::rotate_pair(k[p.delay], k[p.reference]);
            v[p.delay] = diff;
            v[p.reference] = common;
        }
        Ok(v)
    }

    fn inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, v.len())?;
        // Transpose of the 2x2 block: k_delay = (d + c)/sqrt2, k_ref = (c - d)/sqrt2.
        let mut k = v.to_vec();
        for p in &self.pairs {
            let (diff, common) = (v[p.delay], v[p.reference]);
            k[p.delay] = FRAC_1_SQRT_2 * (diff + common);
            k[p.reference] = FRAC_1_SQRT_2 * (common - diff);
        }
        Ok(k)
    }

    fn transform_bounds(&self, native: &Bounds) -> Result<Bounds> {
        native.validate()?;
        check_dim(self.dim, native.dim())?;
        let mut lower = vec![0.0; self.dim];
        let mut upper = vec![0.0; self.dim];
        for r in 0..self.dim {
            for c in 0..self.dim {
                let m = self.matrix[(r, c)];
                if m == 0.0 {
                    continue;
                }
                let a = m * native.lower[c];
                let b = m * native.upper[c];
                lower[r] += a.min(b);
                upper[r] += a.max(b);
            }
        }
        Bounds::new(lower, upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn two_by_two_block() {
        let t = PairedTransform::new(2, &[KnobPair::new(0, 1)]).unwrap();
        let m = t.matrix();
        let s = FRAC_1_SQRT_2;
        assert_eq!(m[(0, 0)], s);
        assert_eq!(m[(0, 1)], -s);
        assert_eq!(m[(1, 0)], s);
        assert_eq!(m[(1, 1)], s);
    }

    #[test]
    fn twelve_axes_block_diagonal() {
        let t = PairedTransform::adjacent(6);
        let m = t.matrix();
        for r in 0..12 {
            for c in 0..12 {
                if r / 2 != c / 2 {
                    assert_eq!(m[(r, c)], 0.0);
                }
            }
        }
        let err = (m.transpose() * m - DMatrix::identity(12, 12)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn no_pairs_is_identity() {
        let t = PairedTransform::new(3, &[]).unwrap();
        assert_eq!(t.matrix(), &DMatrix::identity(3, 3));
        assert_eq!(t.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            PairedTransform::new(4, &[KnobPair::new(0, 1), KnobPair::new(1, 2)]),
            Err(Error::InvalidPairing(_))
        ));
        assert!(matches!(
            PairedTransform::new(4, &[KnobPair::new(0, 4)]),
            Err(Error::IndexOutOfRange { index: 4, dim: 4 })
        ));
        assert!(matches!(
            PairedTransform::new(4, &[KnobPair::new(2, 2)]),
            Err(Error::InvalidPairing(_))
        ));
        assert!(matches!(
            PairedTransform::new(2, &[KnobPair::new(0, 1), KnobPair::new(2, 3)]),
            Err(Error::InvalidPairing(_))
        ));
    }

    #[test]
    fn forward_examples() {
        let t = PairedTransform::new(2, &[KnobPair::new(0, 1)]).unwrap();
        assert!(close(&t.forward(&[1.0, 0.0]).unwrap(), &[FRAC_1_SQRT_2, FRAC_1_SQRT_2], 1e-15));
        let a = 3.7;
        assert!(close(&t.forward(&[a, a]).unwrap(), &[0.0, a * SQRT_2], 1e-14));
        assert!(close(&t.forward(&[1.0, -1.0]).unwrap(), &[SQRT_2, 0.0], 1e-15));
        assert!(matches!(t.forward(&[1.0]), Err(Error::DimensionError { .. })));
    }

    #[test]
    fn inverse_examples() {
        let t = PairedTransform::new(2, &[KnobPair::new(0, 1)]).unwrap();
        assert_eq!(t.inverse(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(close(&t.inverse(&[SQRT_2, 0.0]).unwrap(), &[1.0, -1.0], 1e-15));
        assert!(matches!(t.inverse(&[1.0, 2.0, 3.0]), Err(Error::DimensionError { .. })));
    }

    #[test]
    fn inverse_matches_matrix_inverse() {
        use rand::{Rng, SeedableRng};
        let t = PairedTransform::adjacent(6);
        let lu_inverse = t.matrix().clone().try_inverse().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..12).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let k = t.inverse(&v).unwrap();
            let oracle = &lu_inverse * nalgebra::DVector::from_column_slice(&v);
            assert!(close(&k, oracle.as_slice(), 1e-12));
            assert!(close(&t.forward(&k).unwrap(), &v, 1e-12));
        }
    }

    #[test]
    fn bounds_of_rotated_square() {
        let t = PairedTransform::new(2, &[KnobPair::new(0, 1)]).unwrap();
        let b = t.transform_bounds(&Bounds::symmetric(2, 1.0).unwrap()).unwrap();
        assert!(close(&b.lower, &[-SQRT_2, -SQRT_2], 1e-15));
        assert!(close(&b.upper, &[SQRT_2, SQRT_2], 1e-15));

        let id = PairedTransform::identity(2);
        let native = Bounds::new(vec![-3.0, 0.5], vec![1.0, 2.0]).unwrap();
        assert_eq!(id.transform_bounds(&native).unwrap(), native);
    }

    #[test]
    fn bounds_of_unit_square_match_corner_images() {
        let t = PairedTransform::new(2, &[KnobPair::new(0, 1)]).unwrap();
        let native = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let b = t.transform_bounds(&native).unwrap();
        // Oracle: the extremes of a linear map over a box sit at its corners.
        let images: Vec<Vec<f64>> = native.corners().map(|c| t.forward(&c).unwrap()).collect();
        for axis in 0..2 {
            let lo = images.iter().map(|v| v[axis]).fold(f64::INFINITY, f64::min);
            let hi = images.iter().map(|v| v[axis]).fold(f64::NEG_INFINITY, f64::max);
            assert!((b.lower[axis] - lo).abs() < 1e-15);
            assert!((b.upper[axis] - hi).abs() < 1e-15);
        }
        assert!(close(&b.lower, &[-FRAC_1_SQRT_2, 0.0], 1e-15));
        assert!(close(&b.upper, &[FRAC_1_SQRT_2, SQRT_2], 1e-15));
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let t = PairedTransform::adjacent(1);
        let bad = Bounds {
            lower: vec![0.0, 1.0],
            upper: vec![1.0, 1.0],
        };
        assert!(matches!(t.transform_bounds(&bad), Err(Error::InvalidBounds(_))));
    }

    #[test]
    fn partial_pairing_passes_through() {
        let t = PairedTransform::new(5, &[KnobPair::new(3, 0)]).unwrap();
        assert_eq!(t.unpaired(), &[1, 2, 4]);
        let v = t.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((v[1], v[2], v[4]), (2.0, 3.0, 5.0));
        assert!((v[3] - (4.0 - 1.0) * FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((v[0] - (4.0 + 1.0) * FRAC_1_SQRT_2).abs() < 1e-15);
    }

    fn arb_transform() -> impl Strategy<Value = PairedTransform> {
        (1usize..16)
            .prop_flat_map(|dim| (Just(dim), Just((0..dim).collect::<Vec<_>>()).prop_shuffle(), 0..=dim / 2))
            .prop_map(|(dim, axes, n_pairs)| {
                let pairs: Vec<KnobPair> = (0..n_pairs).map(|p| KnobPair::new(axes[2 * p], axes[2 * p + 1])).collect();
                PairedTransform::new(dim, &pairs).unwrap()
            })
    }

    proptest! {
        #[test]
        fn orthogonal_round_trip_isometric(
            t in arb_transform(),
            raw in proptest::collection::vec(-1e3f64..1e3, 16),
        ) {
            let k = &raw[..t.dim()];
            let m = t.matrix();
            let ortho = (m.transpose() * m - DMatrix::identity(t.dim(), t.dim())).abs().max();
            prop_assert!(ortho < 1e-12);
            let v = t.forward(k).unwrap();
            let back = t.inverse(&v).unwrap();
            prop_assert!(close(&back, k, 1e-12 * 1e3));
            let n0: f64 = k.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n1: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0.max(1.0));
        }
    }
}
