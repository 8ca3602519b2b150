//! Uniform B-spline grids and basis evaluation.
//!
//! A grid over `[t_min, t_max]` with `G` intervals and degree `k` carries the
//! extended knot vector `t_j = t_min + (j - k) h`, `j = 0..G+2k`, `h = (t_max -
//! t_min)/G`. The knots keep their uniform spacing beyond the domain instead of
//! repeating the end knots, so inputs slightly outside `[t_min, t_max]` are
//! extrapolated by the outer basis functions rather than clamped. Outside the
//! extended knots every basis function is zero.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Highest supported spline degree. Local evaluation works on fixed-size
/// stack buffers of `MAX_DEGREE + 1` entries.
pub const MAX_DEGREE: usize = 7;

/// Non-zero basis values at one point: `values[r]` belongs to basis index
/// `first + r`. Indices may fall outside `0..basis_count()` near the ends of
/// the extended knot vector; callers skip those.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    pub first: isize,
    pub values: [f64; MAX_DEGREE + 1],
    pub derivatives: [f64; MAX_DEGREE + 1],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "GridParams", into = "GridParams")
)]
pub struct SplineGrid {
    t_min: f64,
    t_max: f64,
    num_intervals: usize,
    degree: usize,
    knots: Vec<f64>,
}

/// Serialized form of a [`SplineGrid`]; the knot vector is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridParams {
    pub t_min: f64,
    pub t_max: f64,
    pub num_intervals: usize,
    pub degree: usize,
}

impl TryFrom<GridParams> for SplineGrid {
    type Error = Error;

    fn try_from(p: GridParams) -> Result<Self> {
        SplineGrid::new(p.t_min, p.t_max, p.num_intervals, p.degree)
    }
}

impl From<SplineGrid> for GridParams {
    fn from(g: SplineGrid) -> Self {
        g.params()
    }
}

impl SplineGrid {
    pub fn new(t_min: f64, t_max: f64, num_intervals: usize, degree: usize) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || t_min >= t_max {
            return Err(Error::Domain(alloc::format!(
                "spline domain [{t_min}, {t_max}] must be finite with t_min < t_max"
            )));
        }
        if num_intervals == 0 {
            return Err(Error::Config("spline grid needs at least one interval".into()));
        }
        if degree > MAX_DEGREE {
            return Err(Error::Config(alloc::format!(
                "spline degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let h = (t_max - t_min) / num_intervals as f64;
        let knots = (0..num_intervals + 2 * degree + 1)
            .map(|j| t_min + (j as f64 - degree as f64) * h)
            .collect();
        Ok(Self {
            t_min,
            t_max,
            num_intervals,
            degree,
            knots,
        })
    }

    pub fn params(&self) -> GridParams {
        GridParams {
            t_min: self.t_min,
            t_max: self.t_max,
            num_intervals: self.num_intervals,
            degree: self.degree,
        }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn num_intervals(&self) -> usize {
        self.num_intervals
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Knot spacing `h`.
    pub fn step(&self) -> f64 {
        (self.t_max - self.t_min) / self.num_intervals as f64
    }

    /// Number of basis functions, `G + k`.
    pub fn basis_count(&self) -> usize {
        self.num_intervals + self.degree
    }

    #[inline]
    fn virtual_knot(&self, j: isize) -> f64 {
        self.t_min + (j - self.degree as isize) as f64 * self.step()
    }

    /// Index of the knot interval containing `x`, or `None` when `x` lies
    /// outside the extended knot vector. The domain is closed on the right so
    /// `x = t_max` belongs to the last interior interval.
    fn span(&self, x: f64) -> Option<isize> {
        let k = self.degree as isize;
        let g = self.num_intervals as isize;
        let s = if x == self.t_max {
            g + k - 1
        } else {
            math::floor((x - self.t_min) / self.step()) as isize + k
        };
        (0..g + 2 * k).contains(&s).then_some(s)
    }

    /// Evaluates the `k + 1` basis functions that may be non-zero at `x`
    /// (Cox-de Boor triangle on the uniform knots) and their derivatives.
    ///
    /// Returns `None` when every basis function vanishes at `x`.
    pub fn local_basis(&self, x: f64) -> Option<LocalBasis> {
        let s = self.span(x)?;
        let k = self.degree;
        let mut values = [0.0; MAX_DEGREE + 1];
        let mut derivatives = [0.0; MAX_DEGREE + 1];
        let mut left = [0.0; MAX_DEGREE + 1];
        let mut right = [0.0; MAX_DEGREE + 1];
        values[0] = 1.0;
        for j in 1..=k {
            if j == k {
                // Degree k-1 values are in `values[..k]`; B'_{i,k} = (B_{i,k-1} - B_{i+1,k-1}) / h.
                let inv_h = 1.0 / self.step();
                for r in 0..=k {
                    let lo = if r > 0 { values[r - 1] } else { 0.0 };
                    let hi = if r < k { values[r] } else { 0.0 };
                    derivatives[r] = (lo - hi) * inv_h;
                }
            }
            left[j] = x - self.virtual_knot(s + 1 - j as isize);
            right[j] = self.virtual_knot(s + j as isize) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Some(LocalBasis {
            first: s - k as isize,
            values,
            derivatives,
        })
    }

    /// All `G + k` basis values at `x`.
    pub fn basis(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.basis_count()];
        self.basis_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes all basis values at `x` into `out` (length `G + k`).
    pub fn basis_into(&self, x: f64, out: &mut [f64]) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Domain(alloc::format!("non-finite spline input {x}")));
        }
        if out.len() != self.basis_count() {
            return Err(crate::error::shape_err!(
                "basis buffer has length {}, grid has {} basis functions",
                out.len(),
                self.basis_count()
            ));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        if let Some(local) = self.local_basis(x) {
            for (index, value) in local.indexed(self.degree, self.basis_count()) {
                out[index] = value;
            }
        }
        Ok(())
    }

    /// `Σ coeffs[i] B_i(x)` and its derivative in `x`.
    pub fn eval_spline(&self, coeffs: &[f64], x: f64) -> (f64, f64) {
        debug_assert_eq!(coeffs.len(), self.basis_count());
        let Some(local) = self.local_basis(x) else {
            return (0.0, 0.0);
        };
        let n = self.basis_count() as isize;
        let mut value = 0.0;
        let mut slope = 0.0;
        for r in 0..=self.degree {
            let idx = local.first + r as isize;
            if (0..n).contains(&idx) {
                value += coeffs[idx as usize] * local.values[r];
                slope += coeffs[idx as usize] * local.derivatives[r];
            }
        }
        (value, slope)
    }
}

impl LocalBasis {
    /// `(basis index, value)` pairs restricted to real basis functions.
    pub fn indexed(&self, degree: usize, count: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..=degree).filter_map(move |r| {
            let idx = self.first + r as isize;
            (idx >= 0 && (idx as usize) < count).then(|| (idx as usize, self.values[r]))
        })
    }
}

/// All basis values of `grid` at `x`.
pub fn bspline_basis(x: f64, grid: &SplineGrid) -> Result<Vec<f64>> {
    grid.basis(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive Cox-de Boor over an explicit knot slice.
    fn cox_de_boor(knots: &[f64], i: usize, k: usize, x: f64) -> f64 {
        if k == 0 {
            return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + k] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * cox_de_boor(knots, i, k - 1, x);
        }
        let d2 = knots[i + k + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + k + 1] - x) / d2 * cox_de_boor(knots, i + 1, k - 1, x);
        }
        v
    }

    #[test]
    fn degree_zero_single_interval() {
        let g = SplineGrid::new(0.0, 1.0, 1, 0).unwrap();
        assert_eq!(g.basis(0.5).unwrap(), [1.0]);
        // closed right end
        assert_eq!(g.basis(1.0).unwrap(), [1.0]);
    }

    #[test]
    fn hat_function_peak_at_interior_knot() {
        let g = SplineGrid::new(0.0, 1.0, 2, 1).unwrap();
        let b = g.basis(0.5).unwrap();
        let oracle: Vec<f64> = (0..3).map(|i| cox_de_boor(g.knots(), i, 1, 0.5)).collect();
        assert_eq!(oracle, [0.0, 1.0, 0.0]);
        for (a, e) in b.iter().zip(&oracle) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn cubic_partition_of_unity() {
        let g = SplineGrid::new(0.0, 1.0, 4, 3).unwrap();
        let s: f64 = g.basis(0.3).unwrap().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn matches_recursive_oracle_including_extension() {
        for &(g, k) in &[(3usize, 1usize), (5, 2), (5, 3), (10, 3), (4, 5)] {
            let grid = SplineGrid::new(-1.0, 2.0, g, k).unwrap();
            let lo = grid.knots()[0] - 0.2;
            let hi = grid.knots()[grid.knots().len() - 1] + 0.2;
            for step in 0..=400 {
                let x = lo + (hi - lo) * step as f64 / 400.0;
                if x == grid.t_max() {
                    continue;
                }
                let b = grid.basis(x).unwrap();
                for (i, v) in b.iter().enumerate() {
                    let e = cox_de_boor(grid.knots(), i, k, x);
                    assert!((v - e).abs() < 1e-12, "g={g} k={k} x={x} i={i}: {v} vs {e}");
                }
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let grid = SplineGrid::new(-1.0, 1.0, 5, 3).unwrap();
        let coeffs = [0.3, -0.2, 0.8, 0.1, -0.5, 0.4, 0.9, -0.7];
        for &x in &[-0.93, -0.41, 0.05, 0.37, 0.88, 1.05] {
            let (_, d) = grid.eval_spline(&coeffs, x);
            let h = 1e-6;
            let fd = (grid.eval_spline(&coeffs, x + h).0 - grid.eval_spline(&coeffs, x - h).0) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7, "x={x}: {d} vs {fd}");
        }
    }

    #[test]
    fn rejects_bad_grids_and_inputs() {
        assert!(SplineGrid::new(1.0, 1.0, 3, 3).is_err());
        assert!(SplineGrid::new(0.0, 1.0, 0, 3).is_err());
        assert!(SplineGrid::new(0.0, f64::NAN, 3, 3).is_err());
        assert!(SplineGrid::new(0.0, 1.0, 3, MAX_DEGREE + 1).is_err());
        let g = SplineGrid::new(0.0, 1.0, 3, 3).unwrap();
        assert!(matches!(g.basis(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(g.basis(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn knot_layout() {
        let g = SplineGrid::new(0.0, 1.0, 5, 3).unwrap();
        assert_eq!(g.knots().len(), 5 + 2 * 3 + 1);
        assert_eq!(g.basis_count(), 8);
        for i in 0..=5 {
            assert!((g.knots()[3 + i] - i as f64 / 5.0).abs() < 1e-15);
        }
        // far outside the extended knots everything vanishes
        assert!(g.basis(5.0).unwrap().iter().all(|&v| v == 0.0));
    }
}

/// Outcome of a least-squares spline fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub coeffs: Vec<f64>,
    /// The normal equations were rank deficient and a small ridge term was
    /// added to make them solvable.
    pub ridge: bool,
}

/// Least-squares coefficients `c` minimizing `Σ_n (Σ_i c_i B_i(x_n) - y_n)²`.
pub fn fit_coefficients(grid: &SplineGrid, xs: &[f64], ys: &[f64]) -> Result<SplineFit> {
    use nalgebra::{DMatrix, DVector};

    if xs.len() != ys.len() || xs.is_empty() {
        return Err(crate::error::shape_err!(
            "spline fit needs matching non-empty samples ({} x, {} y)",
            xs.len(),
            ys.len()
        ));
    }
    let m = grid.basis_count();
    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut aty = DVector::<f64>::zeros(m);
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Domain("non-finite spline fit sample".into()));
        }
        let Some(local) = grid.local_basis(x) else {
            continue;
        };
        let pairs: Vec<(usize, f64)> = local.indexed(grid.degree(), m).collect();
        for &(a, va) in &pairs {
            aty[a] += va * y;
            for &(b, vb) in &pairs {
                ata[(a, b)] += va * vb;
            }
        }
    }
    let max_diag = (0..m).map(|i| ata[(i, i)]).fold(0.0, f64::max);
    let deficient = (0..m).any(|i| ata[(i, i)] <= 1e-12 * max_diag.max(f64::MIN_POSITIVE));
    if !deficient {
        if let Some(chol) = ata.clone().cholesky() {
            let c = chol.solve(&aty);
            if c.iter().all(|v| v.is_finite()) {
                return Ok(SplineFit {
                    coeffs: c.iter().copied().collect(),
                    ridge: false,
                });
            }
        }
    }
    let ridge = 1e-8 * max_diag.max(1.0);
    for i in 0..m {
        ata[(i, i)] += ridge;
    }
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Domain("ridge-regularized spline fit failed".into()))?;
    let c = chol.solve(&aty);
    Ok(SplineFit {
        coeffs: c.iter().copied().collect(),
        ridge: true,
    })
}

#[cfg(test)]
mod fit_tests {
    use super::*;

    #[test]
    fn reproduces_cubic_polynomial() {
        let grid = SplineGrid::new(-1.0, 1.0, 6, 3).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x * x * x - x + 0.25).collect();
        let fit = fit_coefficients(&grid, &xs, &ys).unwrap();
        assert!(!fit.ridge);
        for (&x, &y) in xs.iter().zip(&ys) {
            assert!((grid.eval_spline(&fit.coeffs, x).0 - y).abs() < 1e-10);
        }
    }

    #[test]
    fn unsupported_basis_falls_back_to_ridge() {
        let grid = SplineGrid::new(0.0, 1.0, 10, 3).unwrap();
        let xs = [0.01, 0.02, 0.03, 0.04, 0.05];
        let ys = [1.0; 5];
        let fit = fit_coefficients(&grid, &xs, &ys).unwrap();
        assert!(fit.ridge);
        for &x in &xs {
            assert!((grid.eval_spline(&fit.coeffs, x).0 - 1.0).abs() < 1e-4);
        }
    }
}
