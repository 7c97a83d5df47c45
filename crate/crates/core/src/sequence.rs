//! Additive-recurrence low-discrepancy points (the `R_d` sequence).
//!
//! Point `n` is `frac(shift + n * alpha)` with `alpha_i = phi_d^-(i+1)` and
//! `phi_d` the unique positive root of `x^(d+1) = x + 1`. A random shift
//! (Cranley-Patterson rotation) gives independent, reproducible streams.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct RdSequence {
    alpha: Vec<f64>,
    shift: Vec<f64>,
    index: u64,
}

fn generalized_golden_ratio(dim: usize) -> f64 {
    let p = (dim + 1) as f64;
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / p);
    }
    x
}

impl RdSequence {
    pub fn new(dim: usize) -> Self {
        let g = generalized_golden_ratio(dim);
        let alpha = (1..=dim).map(|i| g.powi(-(i as i32)).fract()).collect();
        RdSequence {
            alpha,
            shift: vec![0.5; dim],
            index: 0,
        }
    }

    /// A sequence whose shift is drawn from `rng`.
    pub fn shifted<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut s = Self::new(dim);
        s.shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        s
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Next point of the unit cube.
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        let n = self.index as f64;
        self.alpha
            .iter()
            .zip(&self.shift)
            .map(|(a, s)| (s + n * a).fract())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_ratio_for_one_dimension() {
        assert!((generalized_golden_ratio(1) - 1.618_033_988_749_895).abs() < 1e-12);
        // plastic number
        assert!((generalized_golden_ratio(2) - 1.324_717_957_244_746).abs() < 1e-12);
    }

    #[test]
    fn points_fill_the_cube_evenly() {
        let mut s = RdSequence::new(2);
        let n = 4096;
        let mut counts = [[0usize; 8]; 8];
        for _ in 0..n {
            let p = s.next_point();
            assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
            counts[(p[0] * 8.0) as usize][(p[1] * 8.0) as usize] += 1;
        }
        let expected = n / 64;
        for row in counts {
            for c in row {
                assert!((c as i64 - expected as i64).abs() <= 8, "{c} vs {expected}");
            }
        }
    }
}
