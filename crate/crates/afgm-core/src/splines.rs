//! B-spline bases on [-1, 1] and centered block designs.
//!
//! Normalized (partition-of-unity) B-splines on a clamped, equidistant
//! knot vector. Design blocks evaluate the basis at a node's transformed
//! scores and subtract each column's empirical mean, which turns the
//! sum-to-zero constraint on the fitted additive components into an
//! unconstrained least-squares structure.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fpca::ScorePanel;

/// Clamped B-spline basis of `k_n` functions on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    pub degree: usize,
    pub interior_knot_count: usize,
    /// Full clamped knot vector: (degree+1) copies of -1, the interior
    /// knots, (degree+1) copies of +1.
    pub knots: Vec<f64>,
    pub k_n: usize,
}

/// One neighbour's centered design block for a fixed target node.
///
/// Columns are ordered score-major: column `r * k_n + k` holds the centered
/// k-th basis function evaluated at score component r.
#[derive(Debug, Clone)]
pub struct CenteredDesignBlock {
    pub target_excluded: usize,
    pub source: usize,
    /// n x (k_n * m_n); every column sums to zero.
    pub matrix: Array2<f64>,
}

/// The stacked design for one target node: blocks for each j != i in
/// ascending j.
#[derive(Debug, Clone)]
pub struct FullDesign {
    pub blocks: Vec<CenteredDesignBlock>,
    pub n: usize,
    pub p: usize,
    pub k_n: usize,
    pub m_n: usize,
}

impl FullDesign {
    /// Total number of columns, `(p - 1) * k_n * m_n`.
    pub fn n_columns(&self) -> usize {
        self.blocks.len() * self.k_n * self.m_n
    }
}

impl SplineBasis {
    /// Basis with an explicit function count; `k_n >= degree + 2` so there
    /// is at least one interior knot.
    pub fn with_basis_count(k_n: usize, degree: usize) -> Result<SplineBasis> {
        if degree < 1 {
            return Err(Error::InvalidConfig(format!(
                "spline degree must be >= 1, got {degree}"
            )));
        }
        if k_n < degree + 2 {
            return Err(Error::TooFewKnots(format!(
                "k_n = {k_n} is below degree + 2 = {}",
                degree + 2
            )));
        }
        let interior = k_n - degree - 1;
        let mut knots = Vec::with_capacity(k_n + degree + 1);
        knots.extend(std::iter::repeat(-1.0).take(degree + 1));
        let intervals = (interior + 1) as f64;
        for b in 1..=interior {
            knots.push(-1.0 + 2.0 * b as f64 / intervals);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Ok(SplineBasis {
            degree,
            interior_knot_count: interior,
            knots,
            k_n,
        })
    }
}

/// Basis sized by the sample-count rule `k_n = 4 + ceil(sqrt(n))`.
pub fn make_basis(n_samples: usize, degree: usize) -> Result<SplineBasis> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let k_n = 4 + (n_samples as f64).sqrt().ceil() as usize;
    SplineBasis::with_basis_count(k_n, degree)
}

fn find_span(basis: &SplineBasis, x: f64) -> usize {
    let last = basis.k_n - 1;
    // x = 1 belongs to the right-closed last interval.
    if x >= basis.knots[basis.k_n] {
        return last;
    }
    let mut low = basis.degree;
    let mut high = basis.k_n;
    let mut mid = (low + high) / 2;
    while x < basis.knots[mid] || x >= basis.knots[mid + 1] {
        if x < basis.knots[mid] {
            high = mid;
        } else {
            low = mid;
        }
        mid = (low + high) / 2;
    }
    mid
}

/// All `k_n` basis values at `x` via the Cox-de Boor recursion; at most
/// `degree + 1` entries are nonzero.
pub fn eval_basis(basis: &SplineBasis, x: f64) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
    }
    let p = basis.degree;
    let span = find_span(basis, x);
    let mut local = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    local[0] = 1.0;
    for j in 1..=p {
        left[j] = x - basis.knots[span + 1 - j];
        right[j] = basis.knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = local[r] / (right[r + 1] + left[j - r]);
            local[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        local[j] = saved;
    }
    let mut values = vec![0.0; basis.k_n];
    for (j, &v) in local.iter().enumerate() {
        values[span - p + j] = v;
    }
    Ok(values)
}

/// The centered basis-evaluation matrix of one panel; independent of the
/// target node it will serve.
pub(crate) fn centered_block_matrix(
    scores: &ScorePanel,
    basis: &SplineBasis,
) -> Result<Array2<f64>> {
    if !scores.transformed {
        return Err(Error::Precondition(format!(
            "node {} scores must be transformed into [-1, 1] before design assembly",
            scores.node
        )));
    }
    let n = scores.n_subjects();
    let m = scores.n_components();
    let k = basis.k_n;
    let mut matrix = Array2::zeros((n, k * m));
    for u in 0..n {
        for r in 0..m {
            let h = eval_basis(basis, scores.scores[[u, r]])?;
            for (kk, &v) in h.iter().enumerate() {
                matrix[[u, r * k + kk]] = v;
            }
        }
    }
    for c in 0..k * m {
        let mean = matrix.column(c).sum() / n as f64;
        matrix.column_mut(c).mapv_inplace(|v| v - mean);
    }
    Ok(matrix)
}

/// Builds the centered design block of `scores`' node for the given target.
pub fn build_block(
    scores: &ScorePanel,
    basis: &SplineBasis,
    target: usize,
) -> Result<CenteredDesignBlock> {
    Ok(CenteredDesignBlock {
        target_excluded: target,
        source: scores.node,
        matrix: centered_block_matrix(scores, basis)?,
    })
}

/// Stacks centered blocks for every node except `target`, ascending by node.
///
/// `panels` holds one panel per node, indexed by node; `panels[target]` is
/// skipped.
pub fn assemble_design(
    panels: &[ScorePanel],
    target: usize,
    basis: &SplineBasis,
) -> Result<FullDesign> {
    let p = panels.len();
    if target >= p {
        return Err(Error::DimensionMismatch(format!(
            "target {target} out of range for p = {p}"
        )));
    }
    if p < 2 {
        return Err(Error::DimensionMismatch(
            "need at least two nodes to form a design".into(),
        ));
    }
    let n = panels[0].n_subjects();
    let m = panels[0].n_components();
    for panel in panels {
        if panel.n_subjects() != n || panel.n_components() != m {
            return Err(Error::DimensionMismatch(format!(
                "panel for node {} has shape {}x{}, expected {}x{}",
                panel.node,
                panel.n_subjects(),
                panel.n_components(),
                n,
                m
            )));
        }
    }
    let mut blocks = Vec::with_capacity(p - 1);
    for (j, panel) in panels.iter().enumerate() {
        if j == target {
            continue;
        }
        blocks.push(build_block(panel, basis, target)?);
    }
    Ok(FullDesign {
        blocks,
        n,
        p,
        k_n: basis.k_n,
        m_n: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;

    #[test]
    fn basis_count_rule() {
        let b = make_basis(100, 3).unwrap();
        assert_eq!(b.k_n, 14);
        assert_eq!(b.interior_knot_count, 10);
        let b1 = make_basis(1, 3).unwrap();
        assert_eq!(b1.k_n, 5);
        assert_eq!(b1.interior_knot_count, 1);
    }

    #[test]
    fn interior_knots_equidistant() {
        let b = make_basis(100, 3).unwrap();
        for bb in 1..=10usize {
            let expect = -1.0 + 2.0 * bb as f64 / 11.0;
            let got = b.knots[b.degree + bb];
            assert!((got - expect).abs() < 1e-15, "knot {bb}: {got} vs {expect}");
        }
        assert_eq!(b.knots.len(), b.k_n + b.degree + 1);
    }

    #[test]
    fn too_few_knots_rejected() {
        // k_n = 4 + 1 = 5 < degree + 2 = 6.
        assert!(matches!(make_basis(1, 4), Err(Error::TooFewKnots(_))));
        assert!(SplineBasis::with_basis_count(3, 2).is_err());
    }

    #[test]
    fn clamped_left_endpoint() {
        let b = make_basis(50, 3).unwrap();
        let h = eval_basis(&b, -1.0).unwrap();
        assert_eq!(h[0], 1.0);
        assert!(h[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn right_endpoint_lands_in_last_interval() {
        let b = make_basis(50, 3).unwrap();
        let h = eval_basis(&b, 1.0).unwrap();
        assert_eq!(h[b.k_n - 1], 1.0);
        assert!(h[..b.k_n - 1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degree_one_hat_functions() {
        // Knots {-1, 0, 1} clamped, three hat functions.
        let b = SplineBasis::with_basis_count(3, 1).unwrap();
        assert_eq!(b.knots, vec![-1.0, -1.0, 0.0, 1.0, 1.0]);
        let h = eval_basis(&b, 0.5).unwrap();
        assert_eq!(h, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn domain_error_outside_interval() {
        let b = make_basis(10, 3).unwrap();
        assert!(matches!(eval_basis(&b, 1.0 + 1e-12), Err(Error::Domain(_))));
        assert!(eval_basis(&b, -1.5).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity_nonneg_local_support(x in -1.0f64..=1.0) {
            let b = make_basis(100, 3).unwrap();
            let h = eval_basis(&b, x).unwrap();
            let sum: f64 = h.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for (k, &v) in h.iter().enumerate() {
                prop_assert!(v >= 0.0);
                let lo = b.knots[k];
                let hi = b.knots[k + b.degree + 1];
                if v > 0.0 {
                    prop_assert!(x >= lo && (x <= hi));
                }
            }
        }
    }

    fn panel(scores: Array2<f64>) -> ScorePanel {
        ScorePanel {
            node: 0,
            scores,
            transformed: true,
        }
    }

    #[test]
    fn block_requires_transformed_scores() {
        let b = make_basis(4, 3).unwrap();
        let sp = ScorePanel {
            node: 1,
            scores: arr2(&[[0.1], [0.2]]),
            transformed: false,
        };
        assert!(matches!(
            build_block(&sp, &b, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn constant_score_column_centers_to_zero() {
        let b = make_basis(9, 3).unwrap();
        let sp = panel(Array2::from_elem((6, 1), 0.3));
        let block = build_block(&sp, &b, 1).unwrap();
        assert!(block.matrix.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn single_observation_block_is_zero() {
        let b = make_basis(1, 3).unwrap();
        let sp = panel(arr2(&[[0.7, -0.2]]));
        let block = build_block(&sp, &b, 1).unwrap();
        assert!(block.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_columns_sum_to_zero() {
        let b = make_basis(40, 3).unwrap();
        let mut rng = crate::rng::substream(17, "block-test", &[]);
        use rand::Rng;
        let scores = Array2::from_shape_fn((40, 3), |_| rng.random_range(-1.0..1.0));
        let block = build_block(&panel(scores), &b, 2).unwrap();
        for c in 0..block.matrix.ncols() {
            let sum: f64 = block.matrix.column(c).sum();
            assert!(sum.abs() < 1e-10, "column {c} sums to {sum:e}");
        }
        assert_eq!(block.matrix.ncols(), b.k_n * 3);
    }

    fn panels(p: usize, n: usize, m: usize) -> Vec<ScorePanel> {
        use rand::Rng;
        (0..p)
            .map(|j| {
                let mut rng = crate::rng::substream(5, "design-test", &[j as u64]);
                ScorePanel {
                    node: j,
                    scores: Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0)),
                    transformed: true,
                }
            })
            .collect()
    }

    #[test]
    fn design_single_neighbor() {
        let b = make_basis(8, 3).unwrap();
        let design = assemble_design(&panels(2, 8, 2), 0, &b).unwrap();
        assert_eq!(design.blocks.len(), 1);
        assert_eq!(design.blocks[0].source, 1);
    }

    #[test]
    fn design_block_ordering_skips_target() {
        let b = make_basis(8, 3).unwrap();
        let design = assemble_design(&panels(4, 8, 2), 1, &b).unwrap();
        let sources: Vec<usize> = design.blocks.iter().map(|bl| bl.source).collect();
        assert_eq!(sources, vec![0, 2, 3]);
        assert!(design.blocks.iter().all(|bl| bl.target_excluded == 1));
    }

    #[test]
    fn design_total_columns() {
        let b = make_basis(8, 3).unwrap();
        let design = assemble_design(&panels(5, 8, 2), 2, &b).unwrap();
        assert_eq!(design.n_columns(), 4 * b.k_n * 2);
    }

    #[test]
    fn design_rejects_inconsistent_panels() {
        let b = make_basis(8, 3).unwrap();
        let mut ps = panels(3, 8, 2);
        ps[2] = ScorePanel {
            node: 2,
            scores: Array2::zeros((8, 3)),
            transformed: true,
        };
        assert!(assemble_design(&ps, 0, &b).is_err());
    }
}
