use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::schema::FeatureSchema;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Condition number above which an input covariance block is treated as singular.
pub const MAX_BLOCK_CONDITION: f64 = 1e12;

/// Default relative size of the diagonal load added to fitted covariances.
pub const DEFAULT_REG_SCALE: f64 = 1e-6;

/// A multivariate normal with full covariance.
///
/// The Cholesky factor is computed once at construction, so every density
/// evaluation is a triangular solve in log space.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl PartialEq for GaussianComponent {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.covariance == other.covariance
    }
}

impl GaussianComponent {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Dimension("zero-dimensional Gaussian".into()));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Dimension(format!(
                "mean has length {d} but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite Gaussian parameter".into()));
        }
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidModel(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let chol = cholesky_lower(&covariance)
            .ok_or_else(|| Error::Singular(format!("{d}x{d} covariance has no Cholesky factor")))?;
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            covariance,
            chol,
            log_det,
        })
    }

    /// Adds a diagonal load to `covariance` before construction.
    /// See [`regularize_covariance`].
    pub fn regularized(mean: DVector<f64>, mut covariance: DMatrix<f64>, reg_scale: f64) -> Result<Self> {
        regularize_covariance(&mut covariance, reg_scale)?;
        Self::new(mean, covariance)
    }

    pub fn from_slices(mean: &[f64], covariance_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        if covariance_row_major.len() != d * d {
            return Err(Error::Dimension(format!(
                "covariance has {} entries, expected {}",
                covariance_row_major.len(),
                d * d
            )));
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(d, d, covariance_row_major),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Log density at `x`. `x.len()` must equal [`Self::dim`].
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let d = self.dim();
        // Forward substitution L z = x - mu, accumulating |z|^2.
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= z.len() {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut maha = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol[(i, j)] * z[j];
            }
            z[i] = s / self.chol[(i, i)];
            maha += z[i] * z[i];
        }
        -0.5 * (d as f64 * LN_2PI + self.log_det + maha)
    }

    /// The marginal over the listed dimensions, in the listed order.
    pub fn marginal(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.dim()) {
            return Err(Error::Dimension(format!("marginal index {bad} out of range")));
        }
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = submatrix(&self.covariance, indices, indices);
        Self::new(mean, cov)
    }

    /// Precomputes the regression of the output block on the input block.
    pub fn conditional(&self, schema: &FeatureSchema) -> Result<ConditionalGaussian> {
        if schema.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "schema has {} features, component has {}",
                schema.dim(),
                self.dim()
            )));
        }
        let ii = schema.input_indices();
        let oo = schema.output_indices();
        if ii.is_empty() {
            return Err(Error::InvalidSchema("regression needs at least one input feature".into()));
        }
        let s_ii = submatrix(&self.covariance, ii, ii);
        let eig = s_ii.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_BLOCK_CONDITION) {
            return Err(Error::SingularBlock { condition });
        }
        let input = self.marginal(ii)?;
        let s_oi = submatrix(&self.covariance, oo, ii);
        let s_oo = submatrix(&self.covariance, oo, oo);
        // gain = S_OI S_II^{-1}, via the cached factor of S_II.
        let chol_ii = nalgebra::Cholesky::new(s_ii)
            .ok_or(Error::SingularBlock { condition })?;
        let gain = chol_ii.solve(&s_oi.transpose()).transpose();
        let mut cov = &s_oo - &gain * s_oi.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        let mean_out = DVector::from_iterator(oo.len(), oo.iter().map(|&i| self.mean[i]));
        Ok(ConditionalGaussian {
            input,
            mean_out,
            gain,
            covariance: cov,
        })
    }
}

/// The output block of a Gaussian conditioned on its input block.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    input: GaussianComponent,
    mean_out: DVector<f64>,
    gain: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl ConditionalGaussian {
    /// Marginal of the input block, `N(mu^I, Sigma^II)`.
    pub fn input_marginal(&self) -> &GaussianComponent {
        &self.input
    }

    /// `Sigma^OI (Sigma^II)^-1`.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `Sigma^OO - Sigma^OI (Sigma^II)^-1 Sigma^IO`; independent of the input value.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `mu^O + Sigma^OI (Sigma^II)^-1 (x_in - mu^I)`.
    pub fn mean_given(&self, x_in: &[f64]) -> DVector<f64> {
        debug_assert_eq!(x_in.len(), self.input.dim());
        let mut out = self.mean_out.clone();
        for r in 0..out.len() {
            let mut s = 0.0;
            for (c, x) in x_in.iter().enumerate() {
                s += self.gain[(r, c)] * (x - self.input.mean[c]);
            }
            out[r] += s;
        }
        out
    }
}

/// Log density of `x` under `g`, with a dimension check.
pub fn gaussian_logpdf(x: &[f64], g: &GaussianComponent) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::Dimension(format!(
            "point has length {}, component has dimension {}",
            x.len(),
            g.dim()
        )));
    }
    Ok(g.log_density(x))
}

/// Conditional mean and covariance of the output block of `g` given the
/// input block value `x_in`.
pub fn condition_gaussian(
    g: &GaussianComponent,
    schema: &FeatureSchema,
    x_in: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if x_in.len() != schema.input_indices().len() {
        return Err(Error::Dimension(format!(
            "input has length {}, schema has {} inputs",
            x_in.len(),
            schema.input_indices().len()
        )));
    }
    let c = g.conditional(schema)?;
    Ok((c.mean_given(x_in), c.covariance.clone()))
}

/// Symmetrizes `cov` and adds `f * Sigma_ii` to each diagonal entry, starting
/// at `f = reg_scale`, so every variance grows by the same relative amount.
/// A zero variance is loaded by `f` times the mean variance, or by `f` alone
/// when all variances are zero. If the loaded matrix still has no Cholesky
/// factor, `f` is raised tenfold, at most eight times. Returns the final `f`.
pub fn regularize_covariance(cov: &mut DMatrix<f64>, reg_scale: f64) -> Result<f64> {
    let d = cov.nrows();
    if d == 0 || cov.ncols() != d {
        return Err(Error::Dimension("covariance must be square and nonempty".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite covariance entry".into()));
    }
    let sym = (&*cov + cov.transpose()) * 0.5;
    *cov = sym;
    if reg_scale <= 0.0 {
        return if cholesky_lower(cov).is_some() {
            Ok(0.0)
        } else {
            Err(Error::Singular("covariance is not positive definite".into()))
        };
    }
    let mean_var = cov.trace() / d as f64;
    let fallback = if mean_var > 0.0 { mean_var } else { 1.0 };
    let unit: Vec<f64> = (0..d)
        .map(|i| if cov[(i, i)] > 0.0 { cov[(i, i)] } else { fallback })
        .collect();
    let base = cov.clone();
    let mut f = reg_scale;
    for _ in 0..9 {
        let mut loaded = base.clone();
        for i in 0..d {
            loaded[(i, i)] += f * unit[i];
        }
        if cholesky_lower(&loaded).is_some() {
            *cov = loaded;
            return Ok(f);
        }
        f *= 10.0;
    }
    Err(Error::Singular(format!(
        "covariance not positive definite even with relative diagonal load {f:.3e}"
    )))
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Lower Cholesky factor reading only the lower triangle; `None` unless every
/// pivot is strictly positive and finite.
fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = m.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut s = m[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        let pivot = s.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..d {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn g1(mu: f64, var: f64) -> GaussianComponent {
        GaussianComponent::from_slices(&[mu], &[var]).unwrap()
    }

    #[test]
    fn standard_normal_mode() {
        let v = gaussian_logpdf(&[0.0], &g1(0.0, 1.0)).unwrap();
        assert!(close(v, -0.918_938_533_204_672_7, 1e-15));
    }

    #[test]
    fn bivariate_identity_mode() {
        let g = GaussianComponent::from_slices(&[1.0, 1.0], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = gaussian_logpdf(&[1.0, 1.0], &g).unwrap();
        assert!(close(v, -(2.0 * std::f64::consts::PI).ln(), 1e-15));
    }

    #[test]
    fn density_normalizes_by_quadrature() {
        // x=2, mu=0, var=4: compare against the textbook density and check
        // the trapezoid integral over +-12 sigma is one.
        let g = g1(0.0, 4.0);
        let closed = (-(2.0f64).powi(2) / 8.0).exp() / (2.0 * std::f64::consts::PI * 4.0).sqrt();
        assert!(close(g.log_density(&[2.0]).exp(), closed, 1e-15));
        let (a, b, n) = (-24.0, 24.0, 48_000);
        let h = (b - a) / n as f64;
        let mut integral = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            integral += w * g.log_density(&[a + i as f64 * h]).exp();
        }
        assert!(close(integral * h, 1.0, 1e-6));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            gaussian_logpdf(&[0.0, 1.0], &g1(0.0, 1.0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rejects_non_pd_and_asymmetric() {
        assert!(matches!(
            GaussianComponent::from_slices(&[0.0, 0.0], &[1.0, 2.0, 2.0, 1.0]),
            Err(Error::Singular(_))
        ));
        assert!(matches!(
            GaussianComponent::from_slices(&[0.0, 0.0], &[1.0, 0.1, 0.2, 1.0]),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn condition_correlated_pair() {
        let schema = FeatureSchema::new(&["i", "o"], &["o"]).unwrap();
        let g = GaussianComponent::from_slices(&[0.0, 0.0], &[1.0, 0.5, 0.5, 1.0]).unwrap();
        let (mu, sig) = condition_gaussian(&g, &schema, &[2.0]).unwrap();
        assert!(close(mu[0], 1.0, 1e-15));
        assert!(close(sig[(0, 0)], 0.75, 1e-15));
    }

    #[test]
    fn condition_independent_blocks() {
        let schema = FeatureSchema::new(&["a", "b", "o"], &["o"]).unwrap();
        let g = GaussianComponent::from_slices(
            &[1.0, -2.0, 3.0],
            &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 0.7],
        )
        .unwrap();
        for x in [[0.0, 0.0], [10.0, -4.0], [1.0, -2.0]] {
            let (mu, sig) = condition_gaussian(&g, &schema, &x).unwrap();
            assert_eq!(mu[0], 3.0);
            assert!(close(sig[(0, 0)], 0.7, 1e-15));
        }
    }

    #[test]
    fn condition_at_input_mean_returns_output_mean() {
        let schema = FeatureSchema::new(&["a", "o", "b"], &["o"]).unwrap();
        let g = GaussianComponent::from_slices(
            &[0.5, -1.5, 2.0],
            &[2.0, 0.4, 0.3, 0.4, 1.0, -0.2, 0.3, -0.2, 1.5],
        )
        .unwrap();
        let (mu, _) = condition_gaussian(&g, &schema, &[0.5, 2.0]).unwrap();
        assert_eq!(mu[0], -1.5);
    }

    #[test]
    fn near_singular_input_block() {
        let schema = FeatureSchema::new(&["a", "b", "o"], &["o"]).unwrap();
        let g = GaussianComponent::from_slices(
            &[0.0; 3],
            &[1.0, 0.0, 0.0, 0.0, 1e-13, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            condition_gaussian(&g, &schema, &[0.0, 0.0]),
            Err(Error::SingularBlock { .. })
        ));
    }

    #[test]
    fn regularize_zero_matrix() {
        let mut m = DMatrix::zeros(2, 2);
        let eps = regularize_covariance(&mut m, 1e-6).unwrap();
        assert_eq!(eps, 1e-6);
        assert_eq!(m, DMatrix::identity(2, 2) * 1e-6);
    }

    #[test]
    fn regularize_scales_each_variance() {
        let mut m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let f = regularize_covariance(&mut m, 1e-6).unwrap();
        assert_eq!(f, 1e-6);
        assert!(close(m[(0, 0)], 4.0 * (1.0 + 1e-6), 1e-15));
        assert!(close(m[(1, 1)], 2.0 * (1.0 + 1e-6), 1e-15));
        assert!(close(m[(2, 2)], 2e-6, 1e-20));
        assert_eq!(m[(0, 1)], 1.0);
    }

    #[test]
    fn regularize_escalates_for_indefinite_input() {
        let mut m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-3]);
        let f = regularize_covariance(&mut m, 1e-6).unwrap();
        assert!(f > 1e-6);
        assert!(m.clone().cholesky().is_some());
    }
}
