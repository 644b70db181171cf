//! Compact mixed sample space, transport costs and grid discretization.
//!
//! A sample space is a product of closed real intervals (continuous axes)
//! and finite alphabets (label axes). All inner maximizations and oracles
//! run over the deterministic grid returned by [`SampleSpace::grid`]:
//! uniformly spaced nodes per continuous axis (endpoints included) crossed
//! with every label combination, ordered lexicographically with the last
//! axis varying fastest.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of the sample space: continuous coordinates plus finite labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint<R> {
    pub continuous: Vec<R>,
    pub labels: Vec<usize>,
}

impl<R: Real> SamplePoint<R> {
    pub fn continuous(values: Vec<R>) -> Self {
        Self {
            continuous: values,
            labels: Vec::new(),
        }
    }

    pub fn new(continuous: Vec<R>, labels: Vec<usize>) -> Self {
        Self { continuous, labels }
    }

    /// 1-D helper used pervasively in tests.
    pub fn scalar(value: R) -> Self {
        Self::continuous(vec![value])
    }
}

/// Product of closed boxes and finite alphabets with a grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpace<R> {
    boxes: Vec<(R, R)>,
    alphabets: Vec<usize>,
    grid_resolution: usize,
}

impl<R: Real> SampleSpace<R> {
    /// Validates `lo <= hi`, alphabet sizes >= 1 and resolution >= 2.
    pub fn new(boxes: Vec<(R, R)>, alphabets: Vec<usize>, grid_resolution: usize) -> Result<Self> {
        if grid_resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid_resolution must be >= 2, got {grid_resolution}"
            )));
        }
        for (i, (lo, hi)) in boxes.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || *lo > *hi {
                return Err(Error::InvalidParameter(format!(
                    "box {i} = [{}, {}] is not a valid closed interval",
                    lo.lossy(),
                    hi.lossy()
                )));
            }
        }
        for (i, size) in alphabets.iter().enumerate() {
            if *size < 1 {
                return Err(Error::InvalidParameter(format!(
                    "alphabet {i} must have size >= 1"
                )));
            }
        }
        Ok(Self {
            boxes,
            alphabets,
            grid_resolution,
        })
    }

    pub fn boxes(&self) -> &[(R, R)] {
        &self.boxes
    }

    pub fn alphabets(&self) -> &[usize] {
        &self.alphabets
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
    }

    /// Same boxes and alphabets at a different resolution.
    pub fn with_resolution(&self, grid_resolution: usize) -> Result<Self> {
        Self::new(self.boxes.clone(), self.alphabets.clone(), grid_resolution)
    }

    pub fn continuous_dim(&self) -> usize {
        self.boxes.len()
    }

    pub fn label_dim(&self) -> usize {
        self.alphabets.len()
    }

    /// Node count on a continuous axis; a degenerate interval collapses to one node.
    pub fn axis_nodes(&self, axis: usize) -> usize {
        let (lo, hi) = self.boxes[axis];
        if lo == hi {
            1
        } else {
            self.grid_resolution
        }
    }

    /// `index`-th node of a continuous axis (endpoints included).
    pub fn node_value(&self, axis: usize, index: usize) -> R {
        let (lo, hi) = self.boxes[axis];
        let n = self.axis_nodes(axis);
        if n == 1 {
            return lo;
        }
        if index == n - 1 {
            return hi;
        }
        let t = R::from_usize(index).unwrap() / R::from_usize(n - 1).unwrap();
        lo + (hi - lo) * t
    }

    /// Grid spacing of a continuous axis (zero for a degenerate axis).
    pub fn spacing(&self, axis: usize) -> R {
        let (lo, hi) = self.boxes[axis];
        let n = self.axis_nodes(axis);
        if n == 1 {
            R::zero()
        } else {
            (hi - lo) / R::from_usize(n - 1).unwrap()
        }
    }

    pub fn grid_len(&self) -> usize {
        let mut total = 1usize;
        for axis in 0..self.continuous_dim() {
            total *= self.axis_nodes(axis);
        }
        for &a in &self.alphabets {
            total *= a;
        }
        total
    }

    /// Validates that a point lies in the space, naming the offending coordinate.
    pub fn contains(&self, point: &SamplePoint<R>) -> Result<()> {
        self.check_dims("sample point", point)?;
        for (axis, (&v, &(lo, hi))) in point.continuous.iter().zip(self.boxes.iter()).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(Error::CoordinateOutOfRange {
                    context: "sample point",
                    axis,
                    value: v.lossy(),
                    lo: lo.lossy(),
                    hi: hi.lossy(),
                });
            }
        }
        for (axis, (&label, &alphabet)) in point.labels.iter().zip(self.alphabets.iter()).enumerate()
        {
            if label >= alphabet {
                return Err(Error::LabelOutOfRange {
                    context: "sample point",
                    axis,
                    label,
                    alphabet,
                });
            }
        }
        Ok(())
    }

    fn check_dims(&self, context: &'static str, point: &SamplePoint<R>) -> Result<()> {
        if point.continuous.len() != self.continuous_dim() {
            return Err(Error::DimensionMismatch {
                context,
                what: "continuous",
                expected: self.continuous_dim(),
                got: point.continuous.len(),
            });
        }
        if point.labels.len() != self.label_dim() {
            return Err(Error::DimensionMismatch {
                context,
                what: "label",
                expected: self.label_dim(),
                got: point.labels.len(),
            });
        }
        Ok(())
    }

    /// Deterministic discretization of the space, lexicographic over axes
    /// (continuous axes first, last axis fastest).
    pub fn grid(&self) -> Vec<SamplePoint<R>> {
        let mut out = Vec::with_capacity(self.grid_len());
        let cont_dims = self.continuous_dim();
        let mut cont_idx = vec![0usize; cont_dims];
        let mut label_idx = vec![0usize; self.label_dim()];
        loop {
            loop {
                let continuous = (0..cont_dims)
                    .map(|a| self.node_value(a, cont_idx[a]))
                    .collect();
                out.push(SamplePoint::new(continuous, label_idx.clone()));
                if !increment(&mut label_idx, &self.alphabets) {
                    break;
                }
            }
            let limits: Vec<usize> = (0..cont_dims).map(|a| self.axis_nodes(a)).collect();
            if !increment(&mut cont_idx, &limits) {
                break;
            }
        }
        out
    }

    /// Flat grid index of a node given per-axis indices (same order as [`grid`]).
    ///
    /// [`grid`]: SampleSpace::grid
    pub fn grid_index(&self, cont_idx: &[usize], label_idx: &[usize]) -> usize {
        let mut index = 0usize;
        for (a, &i) in cont_idx.iter().enumerate() {
            index = index * self.axis_nodes(a) + i;
        }
        for (a, &l) in label_idx.iter().enumerate() {
            index = index * self.alphabets[a] + l;
        }
        index
    }
}

fn increment(indices: &mut [usize], limits: &[usize]) -> bool {
    for axis in (0..indices.len()).rev() {
        indices[axis] += 1;
        if indices[axis] < limits[axis] {
            return true;
        }
        indices[axis] = 0;
    }
    false
}

/// Transport cost `c(ξ,ζ) = ||x − x'||_p^q + κ (Σ 1{label mismatch})^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportCost<R> {
    pub p_norm: R,
    pub power_q: R,
    pub label_weight_kappa: R,
    pub label_power: R,
}

impl<R: Real> TransportCost<R> {
    pub fn new(p_norm: R, power_q: R, label_weight_kappa: R, label_power: R) -> Result<Self> {
        if !(p_norm >= R::one()) {
            return Err(Error::InvalidParameter(format!(
                "p_norm must lie in [1, inf], got {p_norm}"
            )));
        }
        if !(power_q >= R::one() && power_q.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "power_q must lie in [1, inf), got {power_q}"
            )));
        }
        if !(label_weight_kappa >= R::zero() && label_weight_kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "label_weight_kappa must be nonnegative, got {label_weight_kappa}"
            )));
        }
        if !(label_power >= R::one() && label_power.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "label_power must lie in [1, inf), got {label_power}"
            )));
        }
        Ok(Self {
            p_norm,
            power_q,
            label_weight_kappa,
            label_power,
        })
    }

    /// Squared Euclidean cost on the continuous part, unit label weight.
    pub fn squared_euclidean() -> Self {
        Self {
            p_norm: R::of(2.0),
            power_q: R::of(2.0),
            label_weight_kappa: R::one(),
            label_power: R::one(),
        }
    }

    fn lp_norm(&self, a: &[R], b: &[R]) -> R {
        if self.p_norm.is_infinite() {
            let mut m = R::zero();
            for (&x, &y) in a.iter().zip(b.iter()) {
                m = m.max((x - y).abs());
            }
            m
        } else if self.p_norm == R::one() {
            a.iter()
                .zip(b.iter())
                .map(|(&x, &y)| (x - y).abs())
                .sum::<R>()
        } else {
            let s = a
                .iter()
                .zip(b.iter())
                .map(|(&x, &y)| (x - y).abs().powf(self.p_norm))
                .sum::<R>();
            s.powf(self.p_norm.recip())
        }
    }

    /// Cost evaluation without shape validation; both points must have the
    /// same coordinate layout.
    pub fn eval_unchecked(&self, xi: &SamplePoint<R>, zeta: &SamplePoint<R>) -> R {
        let norm = self.lp_norm(&xi.continuous, &zeta.continuous);
        let continuous_part = if norm == R::zero() {
            R::zero()
        } else {
            norm.powf(self.power_q)
        };
        let mismatches = xi
            .labels
            .iter()
            .zip(zeta.labels.iter())
            .filter(|(a, b)| a != b)
            .count();
        let label_part = if mismatches == 0 {
            R::zero()
        } else {
            self.label_weight_kappa * R::from_usize(mismatches).unwrap().powf(self.label_power)
        };
        continuous_part + label_part
    }

    fn check_same_shape(&self, xi: &SamplePoint<R>, zeta: &SamplePoint<R>) -> Result<()> {
        if xi.continuous.len() != zeta.continuous.len() {
            return Err(Error::DimensionMismatch {
                context: "cost evaluation",
                what: "continuous",
                expected: xi.continuous.len(),
                got: zeta.continuous.len(),
            });
        }
        if xi.labels.len() != zeta.labels.len() {
            return Err(Error::DimensionMismatch {
                context: "cost evaluation",
                what: "label",
                expected: xi.labels.len(),
                got: zeta.labels.len(),
            });
        }
        Ok(())
    }
}

/// `c(ξ,ζ)`: powered norm on continuous parts plus weighted label mismatch.
pub fn cost_eval<R: Real>(
    cost: &TransportCost<R>,
    xi: &SamplePoint<R>,
    zeta: &SamplePoint<R>,
) -> Result<R> {
    cost.check_same_shape(xi, zeta)?;
    Ok(cost.eval_unchecked(xi, zeta))
}

/// The metric `d(ξ,ζ) = ||x − x'||_p + 1{labels differ on any coordinate}`
/// used for Lipschitz checks. Only `p_norm` of the cost is consulted.
pub fn distance_eval<R: Real>(
    cost: &TransportCost<R>,
    xi: &SamplePoint<R>,
    zeta: &SamplePoint<R>,
) -> Result<R> {
    cost.check_same_shape(xi, zeta)?;
    let norm = cost.lp_norm(&xi.continuous, &zeta.continuous);
    let any_mismatch = xi
        .labels
        .iter()
        .zip(zeta.labels.iter())
        .any(|(a, b)| a != b);
    Ok(norm + if any_mismatch { R::one() } else { R::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sq_cost() -> TransportCost<f64> {
        TransportCost::new(2.0, 2.0, 1.0, 1.0).unwrap()
    }

    fn random_point(rng: &mut StdRng, space: &SampleSpace<f64>) -> SamplePoint<f64> {
        let continuous = space
            .boxes()
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        let labels = space
            .alphabets()
            .iter()
            .map(|&a| rng.random_range(0..a))
            .collect();
        SamplePoint::new(continuous, labels)
    }

    #[test]
    fn cost_three_four_five() {
        let xi = SamplePoint::continuous(vec![0.0, 0.0]);
        let zeta = SamplePoint::continuous(vec![3.0, 4.0]);
        assert_eq!(cost_eval(&sq_cost(), &xi, &zeta).unwrap(), 25.0);
    }

    #[test]
    fn cost_identity_is_zero() {
        let xi = SamplePoint::new(vec![0.3, -1.2], vec![1]);
        assert_eq!(cost_eval(&sq_cost(), &xi, &xi).unwrap(), 0.0);
    }

    #[test]
    fn cost_pure_label_mismatch() {
        let xi = SamplePoint::new(vec![0.0], vec![0]);
        let zeta = SamplePoint::new(vec![0.0], vec![1]);
        assert_eq!(cost_eval(&sq_cost(), &xi, &zeta).unwrap(), 1.0);
    }

    #[test]
    fn cost_max_norm() {
        let cost = TransportCost::new(f64::INFINITY, 1.0, 0.0, 1.0).unwrap();
        let xi = SamplePoint::continuous(vec![0.0, 0.0]);
        let zeta = SamplePoint::continuous(vec![3.0, -4.0]);
        assert_eq!(cost_eval(&cost, &xi, &zeta).unwrap(), 4.0);
    }

    #[test]
    fn cost_dimension_mismatch_names_axis_kind() {
        let xi = SamplePoint::continuous(vec![0.0, 0.0]);
        let zeta = SamplePoint::continuous(vec![0.0]);
        let err = cost_eval(&sq_cost(), &xi, &zeta).unwrap_err();
        assert!(err.to_string().contains("continuous"));
    }

    #[test]
    fn distance_examples() {
        let cost = sq_cost();
        let a = SamplePoint::scalar(0.0);
        let b = SamplePoint::scalar(1.0);
        assert_eq!(distance_eval(&cost, &a, &b).unwrap(), 1.0);
        assert_eq!(distance_eval(&cost, &a, &a).unwrap(), 0.0);
        let c = SamplePoint::new(vec![0.5], vec![0, 1]);
        let d = SamplePoint::new(vec![0.5], vec![0, 0]);
        assert_eq!(distance_eval(&cost, &c, &d).unwrap(), 1.0);
    }

    #[test]
    fn grid_examples() {
        let s = SampleSpace::new(vec![(0.0, 1.0)], vec![], 3).unwrap();
        let nodes: Vec<f64> = s.grid().iter().map(|p| p.continuous[0]).collect();
        assert_eq!(nodes, vec![0.0, 0.5, 1.0]);

        let s = SampleSpace::new(vec![(0.0, 1.0)], vec![2], 2).unwrap();
        assert_eq!(s.grid().len(), 4);

        let s = SampleSpace::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![], 3).unwrap();
        assert_eq!(s.grid().len(), 9);
        assert_eq!(s.grid_len(), 9);
    }

    #[test]
    fn grid_points_lie_in_space() {
        let s = SampleSpace::new(vec![(-1.0, 2.0), (0.5, 0.5)], vec![3], 4).unwrap();
        for g in s.grid() {
            s.contains(&g).unwrap();
        }
        // degenerate axis collapses to one node
        assert_eq!(s.grid().len(), 4 * 3);
    }

    #[test]
    fn grid_refinement_is_superset() {
        let coarse = SampleSpace::new(vec![(0.25, 1.75)], vec![], 5).unwrap();
        let fine = coarse.with_resolution(2 * 5 - 1).unwrap();
        let fine_nodes: Vec<f64> = fine.grid().iter().map(|p| p.continuous[0]).collect();
        for node in coarse.grid() {
            assert!(fine_nodes
                .iter()
                .any(|&v| (v - node.continuous[0]).abs() < 1e-14));
        }
    }

    #[test]
    fn resolution_below_two_rejected() {
        assert!(SampleSpace::<f64>::new(vec![(0.0, 1.0)], vec![], 1).is_err());
    }

    #[test]
    fn cost_symmetry_on_random_pairs() {
        let space = SampleSpace::new(vec![(-2.0, 1.0), (0.0, 3.0)], vec![2, 3], 5).unwrap();
        let cost = TransportCost::new(3.0, 1.5, 0.7, 2.0).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = random_point(&mut rng, &space);
            let b = random_point(&mut rng, &space);
            let ab = cost_eval(&cost, &a, &b).unwrap();
            let ba = cost_eval(&cost, &b, &a).unwrap();
            assert!(ab >= 0.0);
            assert!((ab - ba).abs() < 1e-15);
        }
    }

    #[test]
    fn cost_is_distance_power_when_labels_match() {
        let space = SampleSpace::new(vec![(-1.0, 1.0), (-1.0, 1.0)], vec![2], 5).unwrap();
        let cost = TransportCost::new(2.0, 2.5, 3.0, 2.0).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let a = random_point(&mut rng, &space);
            let mut b = random_point(&mut rng, &space);
            b.labels = a.labels.clone();
            let c = cost_eval(&cost, &a, &b).unwrap();
            let d = distance_eval(&cost, &a, &b).unwrap();
            assert!((c - d.powf(2.5)).abs() <= 1e-12 * (1.0 + c));
        }
    }

    #[test]
    fn strict_positivity_off_diagonal() {
        let space = SampleSpace::new(vec![(0.0, 1.0)], vec![2], 5).unwrap();
        let cost = sq_cost();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..500 {
            let a = random_point(&mut rng, &space);
            let b = random_point(&mut rng, &space);
            let c = cost_eval(&cost, &a, &b).unwrap();
            if a != b {
                assert!(c > 0.0);
            }
        }
    }

    #[test]
    fn generic_lane_smoke_f32() {
        let cost = TransportCost::<f32>::new(2.0, 2.0, 1.0, 1.0).unwrap();
        let a = SamplePoint::continuous(vec![0.0f32, 0.0]);
        let b = SamplePoint::continuous(vec![3.0f32, 4.0]);
        assert_eq!(cost_eval(&cost, &a, &b).unwrap(), 25.0f32);
    }
}
