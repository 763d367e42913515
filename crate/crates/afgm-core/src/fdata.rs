//! Containers and quadrature for discretized functional data on [0, 1].
//!
//! Curves are observed on a shared grid of time points; integrals are
//! replaced by trapezoid quadrature on that grid, which is exact for the
//! piecewise-linear interpolant and keeps downstream eigenproblems
//! symmetric. Summation order is fixed (index-ascending) so results are
//! bit-identical across platforms and thread counts.

use ndarray::{Array3, ArrayView1};

use crate::error::{Error, Result};

/// A sorted grid of observation times in [0, 1] with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `t_count` equally spaced points spanning [0, 1].
    pub fn equispaced(t_count: usize) -> Result<TimeGrid> {
        if t_count < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {t_count}"
            )));
        }
        let step = 1.0 / (t_count - 1) as f64;
        let points: Vec<f64> = (0..t_count).map(|s| s as f64 * step).collect();
        make_trapezoid_grid(&points)
    }
}

/// Builds a grid with trapezoid-rule weights from sorted points in [0, 1].
pub fn make_trapezoid_grid(points: &[f64]) -> Result<TimeGrid> {
    let t = points.len();
    if t < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points, got {t}"
        )));
    }
    for (s, &x) in points.iter().enumerate() {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidGrid(format!(
                "point {s} = {x} outside [0, 1]"
            )));
        }
        if s > 0 && x <= points[s - 1] {
            return Err(Error::InvalidGrid(format!(
                "points not strictly increasing at index {s}"
            )));
        }
    }
    let mut weights = vec![0.0; t];
    weights[0] = (points[1] - points[0]) / 2.0;
    weights[t - 1] = (points[t - 1] - points[t - 2]) / 2.0;
    for s in 1..t - 1 {
        weights[s] = (points[s + 1] - points[s - 1]) / 2.0;
    }
    Ok(TimeGrid {
        points: points.to_vec(),
        weights,
    })
}

/// Quadrature inner product `sum_s w_s f(t_s) g(t_s)`.
pub fn inner_product(f: ArrayView1<'_, f64>, g: ArrayView1<'_, f64>, grid: &TimeGrid) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "inner_product: f has {}, g has {}, grid has {}",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    let mut acc = 0.0;
    for s in 0..grid.len() {
        // Grouping (f * g) first keeps the result bitwise symmetric in f, g.
        acc += grid.weights[s] * (f[s] * g[s]);
    }
    Ok(acc)
}

/// Observed curves for `n` subjects over `p` nodes at the grid's `T` points.
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    pub grid: TimeGrid,
    /// Shape (n, p, T).
    pub values: Array3<f64>,
    pub centered: bool,
}

impl FunctionalDataset {
    /// Validates finiteness, shape, and (when claimed) the centering invariant.
    pub fn new(grid: TimeGrid, values: Array3<f64>, centered: bool) -> Result<FunctionalDataset> {
        let (n, p, t) = values.dim();
        if n == 0 || p == 0 {
            return Err(Error::DimensionMismatch(
                "dataset needs at least one subject and one node".into(),
            ));
        }
        if t != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "values have {t} time points but grid has {}",
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("dataset contains non-finite values".into()));
        }
        if centered {
            for i in 0..p {
                for s in 0..t {
                    let mean: f64 =
                        (0..n).map(|u| values[[u, i, s]]).sum::<f64>() / n as f64;
                    if mean.abs() >= 1e-10 {
                        return Err(Error::Precondition(format!(
                            "claimed centered but node {i} time {s} has mean {mean:e}"
                        )));
                    }
                }
            }
        }
        Ok(FunctionalDataset {
            grid,
            values,
            centered,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_nodes(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_times(&self) -> usize {
        self.values.dim().2
    }
}

/// Subtracts the cross-subject mean at every (node, time) entry.
pub fn center_dataset(ds: &FunctionalDataset) -> FunctionalDataset {
    let (n, p, t) = ds.values.dim();
    let mut values = ds.values.clone();
    for i in 0..p {
        for s in 0..t {
            let mean: f64 = (0..n).map(|u| values[[u, i, s]]).sum::<f64>() / n as f64;
            for u in 0..n {
                values[[u, i, s]] -= mean;
            }
        }
    }
    FunctionalDataset {
        grid: ds.grid.clone(),
        values,
        centered: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array3};
    use proptest::prelude::*;

    #[test]
    fn trapezoid_weights_three_points() {
        let grid = make_trapezoid_grid(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(grid.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn trapezoid_weights_two_points() {
        let grid = make_trapezoid_grid(&[0.0, 1.0]).unwrap();
        assert_eq!(grid.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn equispaced_weights_sum_to_span() {
        // Closed-form sum: h/2 + (T-2)h + h/2 = (T-1)h = 1.
        let grid = TimeGrid::equispaced(101).unwrap();
        let sum: f64 = grid.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-14, "sum = {sum}");
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_trapezoid_grid(&[0.5]).is_err());
        assert!(make_trapezoid_grid(&[0.0, 0.0, 1.0]).is_err());
        assert!(make_trapezoid_grid(&[0.2, 0.1]).is_err());
        assert!(make_trapezoid_grid(&[-0.1, 0.5]).is_err());
        assert!(make_trapezoid_grid(&[0.0, 1.1]).is_err());
    }

    #[test]
    fn inner_product_of_ones_is_one() {
        let grid = TimeGrid::equispaced(64).unwrap();
        let f = arr1(&vec![1.0; 64]);
        let v = inner_product(f.view(), f.view(), &grid).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inner_product_fourier_orthogonality() {
        let grid = TimeGrid::equispaced(256).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let f = arr1(
            &grid
                .points()
                .iter()
                .map(|t| 2f64.sqrt() * (two_pi * t).sin())
                .collect::<Vec<_>>(),
        );
        let g = arr1(
            &grid
                .points()
                .iter()
                .map(|t| 2f64.sqrt() * (two_pi * t).cos())
                .collect::<Vec<_>>(),
        );
        let v = inner_product(f.view(), g.view(), &grid).unwrap();
        assert!(v.abs() < 1e-3, "got {v}");
    }

    #[test]
    fn inner_product_zero_function() {
        let grid = TimeGrid::equispaced(16).unwrap();
        let z = arr1(&vec![0.0; 16]);
        assert_eq!(inner_product(z.view(), z.view(), &grid).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_length_mismatch() {
        let grid = TimeGrid::equispaced(16).unwrap();
        let f = arr1(&vec![1.0; 15]);
        let g = arr1(&vec![1.0; 16]);
        assert!(inner_product(f.view(), g.view(), &grid).is_err());
    }

    #[test]
    fn weight_route_matches_segmentwise_integration() {
        // Independent oracle: integrate the piecewise-linear interpolant of
        // the pointwise product f*g segment by segment.
        let points = [0.0, 0.07, 0.21, 0.5, 0.77, 0.9, 1.0];
        let grid = make_trapezoid_grid(&points).unwrap();
        let f = arr1(&[1.3, -0.2, 0.5, 2.0, -1.1, 0.0, 0.8]);
        let g = arr1(&[0.4, 1.8, -0.6, 0.3, 0.9, -1.5, 0.2]);
        let lhs = inner_product(f.view(), g.view(), &grid).unwrap();
        let mut rhs = 0.0;
        for s in 0..points.len() - 1 {
            let h = points[s + 1] - points[s];
            rhs += h * (f[s] * g[s] + f[s + 1] * g[s + 1]) / 2.0;
        }
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn center_removes_mean_and_is_idempotent() {
        let grid = TimeGrid::equispaced(2).unwrap();
        let mut values = Array3::zeros((2, 1, 2));
        values[[0, 0, 0]] = 1.0;
        values[[1, 0, 0]] = 3.0;
        values[[0, 0, 1]] = -2.0;
        values[[1, 0, 1]] = -2.0;
        let ds = FunctionalDataset::new(grid, values, false).unwrap();
        let centered = center_dataset(&ds);
        assert_eq!(centered.values[[0, 0, 0]], -1.0);
        assert_eq!(centered.values[[1, 0, 0]], 1.0);
        assert_eq!(centered.values[[0, 0, 1]], 0.0);
        let twice = center_dataset(&centered);
        for (a, b) in centered.values.iter().zip(twice.values.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn center_identical_subjects_gives_zeros() {
        let grid = TimeGrid::equispaced(3).unwrap();
        let values = Array3::from_elem((4, 2, 3), 2.5);
        let ds = FunctionalDataset::new(grid, values, false).unwrap();
        let centered = center_dataset(&ds);
        assert!(centered.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dataset_rejects_false_centered_claim() {
        let grid = TimeGrid::equispaced(2).unwrap();
        let values = Array3::from_elem((2, 1, 2), 1.0);
        assert!(FunctionalDataset::new(grid, values, true).is_err());
    }

    proptest! {
        #[test]
        fn inner_product_bilinear_symmetric(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            c in -5.0f64..5.0,
        ) {
            let grid = TimeGrid::equispaced(8).unwrap();
            let fa = arr1(&a);
            let fb = arr1(&b);
            let sym_lr = inner_product(fa.view(), fb.view(), &grid).unwrap();
            let sym_rl = inner_product(fb.view(), fa.view(), &grid).unwrap();
            prop_assert_eq!(sym_lr, sym_rl);

            let scaled = arr1(&a.iter().map(|x| c * x).collect::<Vec<_>>());
            let lin = inner_product(scaled.view(), fb.view(), &grid).unwrap();
            prop_assert!((lin - c * sym_lr).abs() < 1e-9 * (1.0 + lin.abs()));
        }
    }
}
