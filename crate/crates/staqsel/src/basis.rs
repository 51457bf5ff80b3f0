//! B-spline design matrices, random-walk penalties, and the linear/smooth
//! effect decomposition.
//!
//! Covariates are standardized to [0, 1] before they reach this module. A
//! basis is described by the number of inner knots (counting both endpoints,
//! equally spaced) and the spline degree; the extended knot vector continues
//! the uniform spacing `degree` knots past each end, giving
//! `inner_knots + degree - 1` basis functions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Cubic-by-default B-spline basis on [0, 1] with uniform knots.
#[derive(Clone, Debug)]
pub struct SplineBasis {
    pub inner_knots: usize,
    pub degree: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(inner_knots: usize, degree: usize) -> Result<Self> {
        if inner_knots < 2 {
            return Err(Error::Config(format!(
                "spline basis needs at least 2 inner knots, got {inner_knots}"
            )));
        }
        if degree < 1 {
            return Err(Error::Config(format!("spline degree must be at least 1, got {degree}")));
        }
        let h = 1.0 / (inner_knots - 1) as f64;
        let knots = (0..inner_knots + 2 * degree)
            .map(|j| (j as f64 - degree as f64) * h)
            .collect();
        Ok(SplineBasis { inner_knots, degree, knots })
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.inner_knots + self.degree - 1
    }

    fn knot_spacing(&self) -> f64 {
        1.0 / (self.inner_knots - 1) as f64
    }

    // The degree+1 basis values that are non-zero at x, along with the index
    // of the first one. Triangular Cox-de Boor recursion.
    fn nonzero_values(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        if !(-1e-8..=1.0 + 1e-8).contains(&x) {
            return Err(Error::Data(format!(
                "standardized covariate value {x} falls outside [0, 1]"
            )));
        }
        let x = x.clamp(0.0, 1.0);
        let d = self.degree;
        // Interval index l with knots[l] <= x < knots[l+1]; the top interval
        // is closed so x = 1 evaluates by continuity from the left.
        let l = (d + (x / self.knot_spacing()) as usize).min(d + self.inner_knots - 2);

        let mut vals = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        vals[0] = 1.0;
        for j in 1..=d {
            left[j] = x - self.knots[l + 1 - j];
            right[j] = self.knots[l + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        Ok((l - d, vals))
    }

    /// Dense design matrix with one row per standardized covariate value.
    pub fn design(&self, x_std: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x_std.len(), self.dim());
        for (i, &x) in x_std.iter().enumerate() {
            let (first, vals) = self.nonzero_values(x)?;
            for (k, &v) in vals.iter().enumerate() {
                out[(i, first + k)] = v;
            }
        }
        Ok(out)
    }

    /// Greville abscissae: coefficient locations at which the basis
    /// reproduces linear functions exactly.
    pub fn greville(&self) -> Vec<f64> {
        let d = self.degree;
        (0..self.dim())
            .map(|j| self.knots[j + 1..j + 1 + d].iter().sum::<f64>() / d as f64)
            .collect()
    }
}

/// A coefficient penalty together with its rank and null-space basis.
#[derive(Clone, Debug)]
pub struct Penalty {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Columns span the null space of `matrix`; zero columns when full rank.
    pub kernel: DMatrix<f64>,
}

/// Second-difference penalty D2' * D2; rank dim - 2, null space spanned by
/// the constant sequence and the centered index sequence t_d = d - (dim-1)/2.
pub fn rw2_penalty(dim: usize) -> Result<Penalty> {
    if dim < 3 {
        return Err(Error::Config(format!(
            "second-order random-walk penalty needs dimension >= 3, got {dim}"
        )));
    }
    let mut d2 = DMatrix::zeros(dim - 2, dim);
    for r in 0..dim - 2 {
        d2[(r, r)] = 1.0;
        d2[(r, r + 1)] = -2.0;
        d2[(r, r + 2)] = 1.0;
    }
    let center = (dim as f64 - 1.0) / 2.0;
    let kernel = DMatrix::from_fn(dim, 2, |r, c| if c == 0 { 1.0 } else { r as f64 - center });
    Ok(Penalty { matrix: d2.transpose() * d2, rank: dim - 2, kernel })
}

/// Full-rank identity penalty (used by linear blocks); empty null space.
pub fn identity_penalty(dim: usize) -> Penalty {
    Penalty { matrix: DMatrix::identity(dim, dim), rank: dim, kernel: DMatrix::zeros(dim, 0) }
}

/// Constraint matrix that removes the penalty's null space from a block's
/// coefficients: the kernel basis transposed, one row per null direction,
/// zero rows for a full-rank penalty.
pub fn constraint_matrix(penalty: &Penalty) -> DMatrix<f64> {
    penalty.kernel.transpose()
}

/// How to re-evaluate a block's design at standardized points that were not
/// in the training data, e.g. the grid an effect curve is drawn on.
#[derive(Clone, Copy, Debug)]
pub enum DesignRecipe {
    /// Single column `x - center`, where `center` is the training mean.
    CenteredLine { center: f64 },
    /// B-spline basis evaluation with the stored knot layout.
    Spline { inner_knots: usize, degree: usize },
}

impl DesignRecipe {
    /// Design matrix at `x_std`, matching the training design column-for-column.
    pub fn design_at(&self, x_std: &[f64]) -> Result<DMatrix<f64>> {
        match *self {
            DesignRecipe::CenteredLine { center } => {
                Ok(DMatrix::from_fn(x_std.len(), 1, |r, _| x_std[r] - center))
            }
            DesignRecipe::Spline { inner_knots, degree } => {
                SplineBasis::new(inner_knots, degree)?.design(x_std)
            }
        }
    }
}

/// Design, penalty and linear constraint for one effect block, before any
/// prior state is attached.
#[derive(Clone, Debug)]
pub struct BlockDesign {
    pub design: DMatrix<f64>,
    pub penalty: Penalty,
    pub constraint: DMatrix<f64>,
    pub recipe: DesignRecipe,
}

fn reject_constant(x_std: &[f64]) -> Result<()> {
    if x_std.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::Data("covariate has zero variance".to_string()));
    }
    Ok(())
}

/// Linear effect: single centered column, identity penalty, no constraint.
pub fn linear_block_design(x_std: &[f64]) -> Result<BlockDesign> {
    reject_constant(x_std)?;
    let mean = x_std.iter().sum::<f64>() / x_std.len() as f64;
    let recipe = DesignRecipe::CenteredLine { center: mean };
    let design = recipe.design_at(x_std)?;
    Ok(BlockDesign { design, penalty: identity_penalty(1), constraint: DMatrix::zeros(0, 1), recipe })
}

/// Smooth-deviation effect: full B-spline design with the second-difference
/// penalty. The constraint keeps the kernel's linear row (no linear trend in
/// the coefficients) but swaps the constant row for the observed-data
/// centering row 1'B, which pins the fitted effect to mean zero over the
/// sample while still excluding constant coefficient vectors (each design row
/// sums to one, so 1'B applied to a constant vector gives n times it). Rows
/// that vanish (the centering row when the design has no rows) are dropped as
/// vacuous.
pub fn nonlinear_block_design(x_std: &[f64], basis: &SplineBasis) -> Result<BlockDesign> {
    if !x_std.is_empty() {
        reject_constant(x_std)?;
    }
    let design = basis.design(x_std)?;
    let penalty = rw2_penalty(basis.dim())?;
    let kernel_rows = constraint_matrix(&penalty);
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let centering = DMatrix::from_fn(1, basis.dim(), |_, c| design.column(c).sum());
    if centering.amax() > 0.0 {
        rows.push(centering);
    }
    rows.push(kernel_rows.rows(1, 1).into_owned());
    let constraint = DMatrix::from_rows(
        &rows.iter().flat_map(|m| m.row_iter().map(|r| r.into_owned())).collect::<Vec<_>>(),
    );
    let recipe = DesignRecipe::Spline { inner_knots: basis.inner_knots, degree: basis.degree };
    Ok(BlockDesign { design, penalty, constraint, recipe })
}

/// Split one covariate into its linear part and its smooth deviation, each a
/// separately selectable block.
pub fn decompose_effect(x_std: &[f64], basis: &SplineBasis) -> Result<(BlockDesign, BlockDesign)> {
    Ok((linear_block_design(x_std)?, nonlinear_block_design(x_std, basis)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn dimensions_and_knot_layout() {
        let b = SplineBasis::new(7, 3).unwrap();
        assert_eq!(b.dim(), 9);
        assert_eq!(b.knots.len(), 13);
        assert!((b.knots[3] - 0.0).abs() < 1e-15);
        assert!((b.knots[9] - 1.0).abs() < 1e-15);
        assert_eq!(SplineBasis::new(20, 3).unwrap().dim(), 22);
        assert!(SplineBasis::new(1, 3).is_err());
        assert!(SplineBasis::new(5, 0).is_err());
    }

    #[test]
    fn partition_of_unity_everywhere() {
        let b = SplineBasis::new(7, 3).unwrap();
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let m = b.design(&xs).unwrap();
        for i in 0..m.nrows() {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn local_support_width() {
        let b = SplineBasis::new(7, 3).unwrap();
        let xs: Vec<f64> = (0..=97).map(|i| i as f64 / 97.0).collect();
        let m = b.design(&xs).unwrap();
        for i in 0..m.nrows() {
            let nz = m.row(i).iter().filter(|v| v.abs() > 0.0).count();
            assert!(nz <= 4, "row {i} has {nz} non-zeros");
        }
        // At the left boundary only the first degree+1 functions can load.
        let row0 = b.design(&[0.0]).unwrap();
        for j in 4..b.dim() {
            assert_eq!(row0[(0, j)], 0.0);
        }
    }

    #[test]
    fn basis_is_continuous_across_knots() {
        let b = SplineBasis::new(7, 3).unwrap();
        for k in 1..6 {
            let t = k as f64 / 6.0;
            let lo = b.design(&[t - 1e-9]).unwrap();
            let hi = b.design(&[t + 1e-9]).unwrap();
            for j in 0..b.dim() {
                assert!((lo[(0, j)] - hi[(0, j)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn linear_reproduction_via_greville() {
        let b = SplineBasis::new(7, 3).unwrap();
        let g = b.greville();
        let xs: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let m = b.design(&xs).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let rec: f64 = (0..b.dim()).map(|j| m[(i, j)] * g[j]).sum();
            assert!((rec - x).abs() < 1e-10, "x={x} reconstructed {rec}");
        }
        // The centered-index kernel vector maps to the centered linear
        // function (inner_knots - 1) * (x - 1/2) under the basis.
        let kern = rw2_penalty(b.dim()).unwrap().kernel;
        for (i, &x) in xs.iter().enumerate() {
            let rec: f64 = (0..b.dim()).map(|j| m[(i, j)] * kern[(j, 1)]).sum();
            assert!((rec - 6.0 * (x - 0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_out_of_range_points() {
        let b = SplineBasis::new(7, 3).unwrap();
        assert!(b.design(&[-0.01]).is_err());
        assert!(b.design(&[1.01]).is_err());
        assert!(b.design(&[0.0, 1.0]).is_ok());
    }

    #[test]
    fn rw2_penalty_frozen_small_case() {
        let k = rw2_penalty(4).unwrap();
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -2.0, 1.0, 0.0, //
                -2.0, 5.0, -4.0, 1.0, //
                1.0, -4.0, 5.0, -2.0, //
                0.0, 1.0, -2.0, 1.0,
            ],
        );
        assert_eq!(k.matrix, expect);
        assert_eq!(k.rank, 2);
        assert!(rw2_penalty(2).is_err());
    }

    #[test]
    fn rw2_quadratic_form_is_sum_of_squared_second_differences() {
        let dim = 9;
        let k = rw2_penalty(dim).unwrap();
        let beta = DVector::from_fn(dim, |i, _| ((i * i) as f64).sin() + 0.3 * i as f64);
        let form = (beta.transpose() * &k.matrix * &beta)[(0, 0)];
        let direct: f64 =
            (2..dim).map(|d| (beta[d] - 2.0 * beta[d - 1] + beta[d - 2]).powi(2)).sum();
        assert!((form - direct).abs() < 1e-10 * (1.0 + direct));
    }

    #[test]
    fn rw2_penalty_annihilates_kernel_and_has_expected_rank() {
        let dim = 9;
        let p = rw2_penalty(dim).unwrap();
        assert!((&p.matrix * &p.kernel).amax() < 1e-12);

        let eig = p.matrix.clone().symmetric_eigen();
        let max = eig.eigenvalues.amax();
        let rank = eig.eigenvalues.iter().filter(|&&v| v > 1e-10 * max).count();
        assert_eq!(rank, dim - 2);
        assert_eq!(rank, p.rank);
    }

    #[test]
    fn constraint_matrix_shapes() {
        let a = constraint_matrix(&rw2_penalty(9).unwrap());
        assert_eq!((a.nrows(), a.ncols()), (2, 9));
        let a = constraint_matrix(&identity_penalty(1));
        assert_eq!((a.nrows(), a.ncols()), (0, 1));
    }

    #[test]
    fn kernel_constraint_annihilates_kernel_trends() {
        // Projecting c*1 + d*t onto the feasible set of A x = 0 with
        // A = kernel' gives zero: the kernel directions are exactly removed.
        let p = rw2_penalty(9).unwrap();
        let a = constraint_matrix(&p);
        let beta = &p.kernel * DVector::from_vec(vec![1.7, -0.4]);
        // x - A'(AA')^-1 A x for the orthogonal projector onto ker A.
        let aat = &a * a.transpose();
        let proj = &beta
            - a.transpose() * aat.clone().cholesky().unwrap().solve(&(&a * &beta));
        assert!(proj.amax() < 1e-12);
    }

    fn jittered_grid(n: usize) -> Vec<f64> {
        // Deterministic, non-uniform spread of points covering [0, 1].
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (t + 0.015 * (17.0 * t).sin()).clamp(0.0, 1.0)
            })
            .collect()
    }

    #[test]
    fn decomposition_blocks_have_expected_shapes() {
        let basis = SplineBasis::new(7, 3).unwrap();
        let x = jittered_grid(40);
        let (lin, non) = decompose_effect(&x, &basis).unwrap();
        assert_eq!((lin.design.nrows(), lin.design.ncols()), (40, 1));
        assert_eq!(lin.constraint.nrows(), 0);
        assert_eq!(lin.penalty.rank, 1);
        assert!((lin.design.column(0).sum()).abs() < 1e-12, "linear column is centered");

        assert_eq!((non.design.nrows(), non.design.ncols()), (40, 9));
        assert_eq!((non.constraint.nrows(), non.constraint.ncols()), (2, 9));
        assert_eq!(non.penalty.rank, 7);
        assert!(decompose_effect(&[0.3; 10], &basis).is_err());
    }

    #[test]
    fn nonlinear_constraint_excludes_constant_and_linear_coefficients() {
        let basis = SplineBasis::new(7, 3).unwrap();
        let x = jittered_grid(40);
        let non = nonlinear_block_design(&x, &basis).unwrap();
        let a = &non.constraint;
        // c*1 + d*t satisfies A beta = 0 only for c = d = 0.
        let ker = &non.penalty.kernel;
        let m = a * ker; // 2x2; must be invertible
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        assert!(det.abs() > 1e-6, "kernel trends must violate the constraint");
    }

    #[test]
    fn empty_sample_keeps_only_the_kernel_row() {
        let basis = SplineBasis::new(7, 3).unwrap();
        let non = nonlinear_block_design(&[], &basis).unwrap();
        assert_eq!(non.design.nrows(), 0);
        assert_eq!(non.constraint.nrows(), 1);
    }

    #[test]
    fn decomposition_spans_the_full_spline_fit() {
        // Least-squares fit on the raw spline basis must be reproduced by
        // intercept + linear block + constrained smooth block together.
        let basis = SplineBasis::new(7, 3).unwrap();
        let x = jittered_grid(60);
        let y = DVector::from_fn(60, |i, _| {
            let t = x[i];
            (2.0 * std::f64::consts::PI * t).sin() + 0.5 * t
        });

        let b = basis.design(&x).unwrap();
        let full_fit = {
            let g = b.transpose() * &b;
            let coef = g.cholesky().unwrap().solve(&(b.transpose() * &y));
            &b * coef
        };

        let (lin, non) = decompose_effect(&x, &basis).unwrap();
        // Null-space basis of the constraint via the eigenvectors of A'A
        // with zero eigenvalue.
        let a = &non.constraint;
        let eig = (a.transpose() * a).symmetric_eigen();
        let cols: Vec<usize> = (0..9)
            .filter(|&j| eig.eigenvalues[j] < 1e-10 * eig.eigenvalues.amax())
            .collect();
        assert_eq!(cols.len(), 7);
        let mut z = DMatrix::zeros(9, 7);
        for (k, &j) in cols.iter().enumerate() {
            z.set_column(k, &eig.eigenvectors.column(j));
        }

        let mut design = DMatrix::zeros(60, 1 + 1 + 7);
        design.set_column(0, &DVector::from_element(60, 1.0));
        design.set_column(1, &lin.design.column(0).into_owned());
        let bz = &non.design * &z;
        for k in 0..7 {
            design.set_column(2 + k, &bz.column(k).into_owned());
        }
        let g = design.transpose() * &design;
        let coef = g.cholesky().unwrap().solve(&(design.transpose() * &y));
        let split_fit = &design * coef;

        assert!((&full_fit - &split_fit).amax() < 1e-8);
    }
}
