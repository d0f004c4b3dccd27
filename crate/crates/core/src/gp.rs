//! Gaussian-process core: squared-exponential correlation with a nugget,
//! Cholesky factorization, generalized-least-squares estimators for the
//! marginalized mean and variance, the integrated negative log-posterior
//! `H(phi | D)`, and per-`phi` predictive moments.
//!
//! All determinants are read off triangular factors and every product with
//! an inverse is a triangular solve against the cached factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::prior::LogPrior;

/// Lower bound on the nugget, `l_b`.
pub const NUGGET_LOWER: f64 = 1e-12;
/// Upper bound on the nugget.
pub const NUGGET_UPPER: f64 = 1.0;

/// Regression basis `h(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    /// `h(x) = 1`.
    Constant,
    /// `h(x) = (1, x_1, ..., x_p)`.
    Linear,
}

impl Basis {
    pub fn dim(self, p: usize) -> usize {
        match self {
            Basis::Constant => 1,
            Basis::Linear => p + 1,
        }
    }

    pub fn eval(self, x: &[f64]) -> DVector<f64> {
        match self {
            Basis::Constant => DVector::from_element(1, 1.0),
            Basis::Linear => DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied())),
        }
    }
}

/// Design points `X`, outputs `y` and the regression design matrix `H`.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    inputs: DMatrix<f64>,
    outputs: DVector<f64>,
    design: DMatrix<f64>,
    basis: Basis,
}

impl TrainingSet {
    /// Training set with the linear basis `h(x) = (1, x)`.
    pub fn new(inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        Self::with_basis(inputs, outputs, Basis::Linear)
    }

    pub fn with_basis(inputs: DMatrix<f64>, outputs: DVector<f64>, basis: Basis) -> Result<Self> {
        let (n, p) = inputs.shape();
        if p == 0 {
            return Err(Error::InvalidArgument("inputs have zero columns".into()));
        }
        if outputs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} input rows but {} outputs",
                n,
                outputs.len()
            )));
        }
        let q = basis.dim(p);
        if n < q + 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least q + 3 = {} design points, got {}",
                q + 3,
                n
            )));
        }
        if inputs.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite training data".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if inputs.row(i) == inputs.row(j) {
                    return Err(Error::InvalidArgument(format!(
                        "design points {} and {} coincide",
                        j, i
                    )));
                }
            }
        }
        let mut design = DMatrix::zeros(n, q);
        for i in 0..n {
            let row: Vec<f64> = inputs.row(i).iter().copied().collect();
            design.set_row(i, &basis.eval(&row).transpose());
        }
        let sv = design.clone().singular_values();
        let smax = sv.max();
        if sv.min() <= smax * 1e-12 {
            return Err(Error::SingularDesign);
        }
        Ok(Self {
            inputs,
            outputs,
            design,
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn p(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn q(&self) -> usize {
        self.design.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DVector<f64> {
        &self.outputs
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn input(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// Same inputs and basis with different outputs.
    pub fn with_outputs(&self, outputs: DVector<f64>) -> Result<Self> {
        if outputs.len() != self.n() || outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("replacement outputs do not fit".into()));
        }
        Ok(Self {
            outputs,
            ..self.clone()
        })
    }
}

/// Correlation length-scales `phi_1..phi_p` and the nugget `phi_delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    lengths: Vec<f64>,
    nugget: f64,
}

impl HyperParams {
    pub fn new(lengths: Vec<f64>, nugget: f64) -> Result<Self> {
        if !(NUGGET_LOWER..=NUGGET_UPPER).contains(&nugget) {
            return Err(Error::InvalidArgument(format!(
                "nugget {nugget:e} outside [{NUGGET_LOWER:e}, {NUGGET_UPPER}]"
            )));
        }
        Self::checked(lengths, nugget)
    }

    /// Pure interpolator with no nugget at all. Only meant for diagnostics;
    /// the sampler never produces these.
    pub fn interpolating(lengths: Vec<f64>) -> Result<Self> {
        Self::checked(lengths, 0.0)
    }

    fn checked(lengths: Vec<f64>, nugget: f64) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidArgument("no length-scales".into()));
        }
        if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "length-scale {bad} is not a positive finite number"
            )));
        }
        Ok(Self { lengths, nugget })
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }
}

/// Squared-exponential correlation `exp(-1/2 sum (x_i - x2_i)^2 / phi_i)`.
pub fn correlation(x: &[f64], x2: &[f64], phi: &HyperParams) -> Result<f64> {
    if x.len() != phi.dim() || x2.len() != phi.dim() {
        return Err(Error::InvalidArgument(format!(
            "points of dimension {} and {} against {} length-scales",
            x.len(),
            x2.len(),
            phi.dim()
        )));
    }
    if x.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite input".into()));
    }
    Ok(sq_exp(x, x2, &phi.lengths))
}

#[inline]
fn sq_exp<'a>(x: impl IntoIterator<Item = &'a f64>, x2: impl IntoIterator<Item = &'a f64>, lengths: &[f64]) -> f64 {
    let s: f64 = x
        .into_iter()
        .zip(x2)
        .zip(lengths)
        .map(|((a, b), l)| (a - b) * (a - b) / l)
        .sum();
    (-0.5 * s).exp()
}

fn check_dims(d: &TrainingSet, phi: &HyperParams) -> Result<()> {
    if d.p() != phi.dim() {
        return Err(Error::InvalidArgument(format!(
            "training set has {} inputs but {} length-scales were given",
            d.p(),
            phi.dim()
        )));
    }
    Ok(())
}

/// `K_delta = K + phi_delta I`. Exactly symmetric: the upper triangle is a
/// copy of the lower one.
pub fn correlation_matrix(d: &TrainingSet, phi: &HyperParams) -> Result<DMatrix<f64>> {
    check_dims(d, phi)?;
    let n = d.n();
    let x = d.inputs();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + phi.nugget;
        for j in 0..i {
            let v = sq_exp(x.row(i).iter(), x.row(j).iter(), &phi.lengths);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

struct Solved {
    lower: DMatrix<f64>,
    whitened_design: DMatrix<f64>,
    design_r: DMatrix<f64>,
    beta_hat: DVector<f64>,
    sigma2_hat: f64,
    alpha: DVector<f64>,
    log_det_k: f64,
    log_det_hkh: f64,
    degenerate: bool,
}

fn solve(d: &TrainingSet, phi: &HyperParams) -> Result<Solved> {
    let k = correlation_matrix(d, phi)?;
    let ill = || Error::IllConditioned {
        lengths: phi.lengths.clone(),
        nugget: phi.nugget,
    };
    let chol = k.cholesky().ok_or_else(ill)?;
    let lower = chol.unpack();
    if lower.diagonal().iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ill());
    }
    let whitened_design = lower.solve_lower_triangular(d.design()).ok_or_else(ill)?;
    let whitened_y = lower.solve_lower_triangular(d.outputs()).ok_or_else(ill)?;

    let q = d.q();
    let qr = whitened_design.clone().qr();
    let design_r = qr.r();
    let rdiag: Vec<f64> = design_r.diagonal().iter().map(|v| v.abs()).collect();
    let rmax = rdiag.iter().cloned().fold(0.0, f64::max);
    if !(rmax.is_finite() && rmax > 0.0) || rdiag.iter().any(|v| *v <= rmax * 1e-13) {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * &whitened_y;
    let beta_hat = design_r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;

    let wres = &whitened_y - &whitened_design * &beta_hat;
    // residuals at rounding level: y lies in the span of the basis
    let degenerate = wres.norm() <= 1e-10 * whitened_y.norm();
    let n = d.n();
    let sigma2_hat = wres.norm_squared() / (n - q - 2) as f64;
    let alpha = lower.transpose().solve_upper_triangular(&wres).ok_or_else(ill)?;
    let log_det_k = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_det_hkh = 2.0 * rdiag.iter().map(|v| v.ln()).sum::<f64>();
    Ok(Solved {
        lower,
        whitened_design,
        design_r,
        beta_hat,
        sigma2_hat,
        alpha,
        log_det_k,
        log_det_hkh,
        degenerate,
    })
}

/// Generalized-least-squares `beta_hat` and residual-variance `sigma2_hat`
/// with `beta` and `sigma^2` marginalized under the weak prior.
pub fn gls_estimates(d: &TrainingSet, phi: &HyperParams) -> Result<(DVector<f64>, f64)> {
    let s = solve(d, phi)?;
    Ok((s.beta_hat, s.sigma2_hat))
}

/// Cached factorization of `K_delta` for one `phi`.
#[derive(Clone, Debug)]
pub struct GpFactorization {
    phi: HyperParams,
    lower: DMatrix<f64>,
    whitened_design: DMatrix<f64>,
    design_r: DMatrix<f64>,
    beta_hat: DVector<f64>,
    sigma2_hat: f64,
    alpha: DVector<f64>,
    log_det_k: f64,
    log_det_hkh: f64,
    neg_log_lik: f64,
}

impl GpFactorization {
    pub fn new(d: &TrainingSet, phi: &HyperParams) -> Result<Self> {
        let s = solve(d, phi)?;
        if s.degenerate || !(s.sigma2_hat > 0.0) {
            return Err(Error::DegenerateResiduals);
        }
        let n = d.n() as f64;
        let q = d.q() as f64;
        let neg_log_lik = 0.5 * (n - q) * s.sigma2_hat.ln() + 0.5 * s.log_det_k + 0.5 * s.log_det_hkh;
        Ok(Self {
            phi: phi.clone(),
            lower: s.lower,
            whitened_design: s.whitened_design,
            design_r: s.design_r,
            beta_hat: s.beta_hat,
            sigma2_hat: s.sigma2_hat,
            alpha: s.alpha,
            log_det_k: s.log_det_k,
            log_det_hkh: s.log_det_hkh,
            neg_log_lik,
        })
    }

    pub fn phi(&self) -> &HyperParams {
        &self.phi
    }

    pub fn lower_factor(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    pub fn log_det_k(&self) -> f64 {
        self.log_det_k
    }

    pub fn log_det_hkh(&self) -> f64 {
        self.log_det_hkh
    }

    /// `H(phi | D)` under a flat prior, additive constant fixed at zero.
    pub fn neg_log_lik(&self) -> f64 {
        self.neg_log_lik
    }

    pub fn neg_log_post(&self, prior: &dyn LogPrior) -> f64 {
        self.neg_log_lik - prior.log_density(&self.phi)
    }

    pub fn predictive_mean(&self, d: &TrainingSet, xs: &[f64]) -> Result<f64> {
        self.check_point(d, xs)?;
        let t = self.cross_correlation(d, xs);
        Ok(d.basis().eval(xs).dot(&self.beta_hat) + t.dot(&self.alpha))
    }

    /// `(mu(xs), mu(ws), cov(xs, ws))`, where the covariance is `sigma2_hat`
    /// times the predictive correlation. The nugget enters the correlation
    /// only when `xs == ws` and `include_nugget` is set.
    pub fn predictive_moments(
        &self,
        d: &TrainingSet,
        xs: &[f64],
        ws: &[f64],
        include_nugget: bool,
    ) -> Result<(f64, f64, f64)> {
        self.check_point(d, xs)?;
        self.check_point(d, ws)?;
        let same = xs == ws;
        let (tx, ax, vx) = self.whiten_point(d, xs);
        let (tw, aw, vw) = if same {
            (tx.clone(), ax.clone(), vx.clone())
        } else {
            self.whiten_point(d, ws)
        };
        let mu_x = d.basis().eval(xs).dot(&self.beta_hat) + tx.dot(&self.alpha);
        let mu_w = d.basis().eval(ws).dot(&self.beta_hat) + tw.dot(&self.alpha);
        let mut corr = sq_exp(xs, ws, &self.phi.lengths) - ax.dot(&aw) + vx.dot(&vw);
        if same && include_nugget {
            corr += self.phi.nugget;
        }
        let mut cov = self.sigma2_hat * corr;
        if same {
            cov = cov.max(0.0);
        }
        Ok((mu_x, mu_w, cov))
    }

    /// Predictive mean and variance at one point.
    pub fn predict(&self, d: &TrainingSet, xs: &[f64], include_nugget: bool) -> Result<(f64, f64)> {
        let (m, _, v) = self.predictive_moments(d, xs, xs, include_nugget)?;
        Ok((m, v))
    }

    fn check_point(&self, d: &TrainingSet, x: &[f64]) -> Result<()> {
        if x.len() != d.p() {
            return Err(Error::InvalidArgument(format!(
                "test point has dimension {}, training set {}",
                x.len(),
                d.p()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite test point".into()));
        }
        Ok(())
    }

    fn cross_correlation(&self, d: &TrainingSet, x: &[f64]) -> DVector<f64> {
        let inputs = d.inputs();
        DVector::from_iterator(
            d.n(),
            (0..d.n()).map(|i| sq_exp(x, inputs.row(i).iter(), &self.phi.lengths)),
        )
    }

    /// Returns `t(x)`, `L^-1 t(x)` and `R^-T (h(x) - H^T K^-1 t(x))`.
    fn whiten_point(&self, d: &TrainingSet, x: &[f64]) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let t = self.cross_correlation(d, x);
        let a = self
            .lower
            .solve_lower_triangular(&t)
            .expect("factor has a positive diagonal");
        let u = d.basis().eval(x) - self.whitened_design.transpose() * &a;
        let v = self
            .design_r
            .transpose()
            .solve_lower_triangular(&u)
            .expect("design factor has a non-zero diagonal");
        (t, a, v)
    }
}

/// `H(phi | D) = -log p(phi) + (n-q)/2 log sigma2_hat + 1/2 log|K_delta|
/// + 1/2 log|H^T K_delta^-1 H|`.
///
/// Numerical failures (non-factorizable `K_delta`, rank-deficient design,
/// zero residual variance) yield `+inf` so a sampler can simply reject.
pub fn neg_log_posterior(d: &TrainingSet, phi: &HyperParams, prior: &dyn LogPrior) -> Result<f64> {
    check_dims(d, phi)?;
    let log_prior = prior.log_density(phi);
    if log_prior == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    match GpFactorization::new(d, phi) {
        Ok(f) => {
            let h = f.neg_log_lik() - log_prior;
            Ok(if h.is_nan() { f64::INFINITY } else { h })
        }
        Err(Error::InvalidArgument(m)) => Err(Error::InvalidArgument(m)),
        Err(_) => Ok(f64::INFINITY),
    }
}

/// One-shot predictive moments; builds the factorization for `phi` first.
pub fn predictive_moments(d: &TrainingSet, phi: &HyperParams, xs: &[f64], ws: &[f64]) -> Result<(f64, f64, f64)> {
    check_dims(d, phi)?;
    GpFactorization::new(d, phi)?.predictive_moments(d, xs, ws, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::FlatPrior;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_set(xs: &[f64], f: impl Fn(f64) -> f64) -> TrainingSet {
        let n = xs.len();
        TrainingSet::new(
            DMatrix::from_column_slice(n, 1, xs),
            DVector::from_iterator(n, xs.iter().map(|x| f(*x))),
        )
        .unwrap()
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, p: usize) -> TrainingSet {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |i, _| {
            (3.0 * x[(i, 0)]).sin() + x.row(i).sum() + 0.3 * rng.random::<f64>()
        });
        TrainingSet::new(x, y).unwrap()
    }

    /// Everything through explicit inverses and LU determinants.
    struct DenseOracle {
        beta: DVector<f64>,
        sigma2: f64,
        h: f64,
        kinv: DMatrix<f64>,
        ainv: DMatrix<f64>,
    }

    fn dense_oracle(d: &TrainingSet, phi: &HyperParams) -> DenseOracle {
        let n = d.n();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..d.p())
                    .map(|c| (d.inputs()[(i, c)] - d.inputs()[(j, c)]).powi(2) / phi.lengths()[c])
                    .sum();
                k[(i, j)] = (-0.5 * s).exp() + if i == j { phi.nugget() } else { 0.0 };
            }
        }
        let h = d.design();
        let y = d.outputs();
        let kinv = k.clone().try_inverse().unwrap();
        let a = h.transpose() * &kinv * h;
        let ainv = a.clone().try_inverse().unwrap();
        let beta = &ainv * h.transpose() * &kinv * y;
        let proj = &kinv - &kinv * h * &ainv * h.transpose() * &kinv;
        let q = d.q();
        let sigma2 = (y.transpose() * proj * y)[(0, 0)] / (n - q - 2) as f64;
        let hval = 0.5 * (n - q) as f64 * sigma2.ln() + 0.5 * k.determinant().ln() + 0.5 * a.determinant().ln();
        DenseOracle {
            beta,
            sigma2,
            h: hval,
            kinv,
            ainv,
        }
    }

    fn dense_predict(d: &TrainingSet, phi: &HyperParams, o: &DenseOracle, xs: &[f64], ws: &[f64]) -> (f64, f64, f64) {
        let t = |x: &[f64]| {
            DVector::from_fn(d.n(), |i, _| {
                let s: f64 = (0..d.p())
                    .map(|c| (x[c] - d.inputs()[(i, c)]).powi(2) / phi.lengths()[c])
                    .sum();
                (-0.5 * s).exp()
            })
        };
        let (tx, tw) = (t(xs), t(ws));
        let (hx, hw) = (d.basis().eval(xs), d.basis().eval(ws));
        let resid = d.outputs() - d.design() * &o.beta;
        let mx = hx.dot(&o.beta) + (tx.transpose() * &o.kinv * &resid)[(0, 0)];
        let mw = hw.dot(&o.beta) + (tw.transpose() * &o.kinv * &resid)[(0, 0)];
        let ux = &hx - d.design().transpose() * &o.kinv * &tx;
        let uw = &hw - d.design().transpose() * &o.kinv * &tw;
        let kxw = {
            let s: f64 = (0..d.p()).map(|c| (xs[c] - ws[c]).powi(2) / phi.lengths()[c]).sum();
            (-0.5 * s).exp() + if xs == ws { phi.nugget() } else { 0.0 }
        };
        let corr = kxw - (tx.transpose() * &o.kinv * &tw)[(0, 0)] + (ux.transpose() * &o.ainv * &uw)[(0, 0)];
        (mx, mw, o.sigma2 * corr)
    }

    #[test]
    fn correlation_examples() {
        let phi = HyperParams::new(vec![1.0, 2.0], 1e-6).unwrap();
        assert_eq!(correlation(&[0.3, 0.4], &[0.3, 0.4], &phi).unwrap(), 1.0);
        assert_relative_eq!(
            correlation(&[0.0, 0.0], &[1.0, 1.0], &phi).unwrap(),
            (-0.75f64).exp(),
            max_relative = 1e-15
        );
        let phi1 = HyperParams::new(vec![0.5], 1e-6).unwrap();
        // |x - x2|^2 = 2 phi
        assert_relative_eq!(
            correlation(&[0.0], &[1.0], &phi1).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn correlation_rejects_bad_arguments() {
        let phi = HyperParams::new(vec![1.0], 1e-6).unwrap();
        assert!(correlation(&[f64::NAN], &[0.0], &phi).is_err());
        assert!(correlation(&[0.0, 1.0], &[0.0], &phi).is_err());
        assert!(HyperParams::new(vec![0.0], 1e-6).is_err());
        assert!(HyperParams::new(vec![-1.0], 1e-6).is_err());
        assert!(HyperParams::new(vec![1.0], 2.0).is_err());
        assert!(HyperParams::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn correlation_matrix_three_points() {
        let d = toy_set(&[0.0, 0.5, 1.0, 0.2, 0.7], |x| x * x);
        let phi = HyperParams::new(vec![0.25], NUGGET_LOWER).unwrap();
        let k = correlation_matrix(&d, &phi).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dx = d.inputs()[(i, 0)] - d.inputs()[(j, 0)];
                let expected = (-0.5 * dx * dx / 0.25).exp() + if i == j { NUGGET_LOWER } else { 0.0 };
                assert_eq!(k[(i, j)], expected);
                assert_eq!(k[(i, j)].to_bits(), k[(j, i)].to_bits());
            }
            assert_eq!(k[(i, i)], 1.0 + NUGGET_LOWER);
        }
    }

    #[test]
    fn off_diagonal_at_forced_exponent() {
        let d = toy_set(&[0.0, 0.3, 0.6, 0.9, 1.2], |x| x);
        let phi = HyperParams::interpolating(vec![0.09]).unwrap();
        let k = correlation_matrix(&d, &phi).unwrap();
        assert_relative_eq!(k[(0, 1)], (-0.5f64).exp(), max_relative = 1e-12);
        assert_eq!(k[(0, 0)], 1.0);
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = random_set(&mut rng, 12, 2);
            let phi = HyperParams::new(vec![rng.random_range(0.05..2.0), rng.random_range(0.05..2.0)], 1e-6).unwrap();
            let f = GpFactorization::new(&d, &phi).unwrap();
            let k = correlation_matrix(&d, &phi).unwrap();
            let l = f.lower_factor();
            let err = (l * l.transpose() - &k).norm() / k.norm();
            assert!(err <= 1e-10, "{err}");
        }
    }

    #[test]
    fn gls_reduces_to_ols_for_identity_correlation() {
        let x: Vec<f64> = (0..6).map(|i| 1000.0 * i as f64).collect();
        let y = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let d = TrainingSet::with_basis(
            DMatrix::from_column_slice(6, 1, &x),
            DVector::from_column_slice(&y),
            Basis::Constant,
        )
        .unwrap();
        let phi = HyperParams::interpolating(vec![1.0]).unwrap();
        let (beta, s2) = gls_estimates(&d, &phi).unwrap();
        let mean = y.iter().sum::<f64>() / 6.0;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        assert_relative_eq!(beta[0], mean, max_relative = 1e-14);
        assert_relative_eq!(s2, ss / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn outputs_in_basis_span_have_zero_variance() {
        let d = toy_set(&[0.0, 0.2, 0.4, 0.6, 0.8], |x| 2.0 - 3.0 * x);
        let phi = HyperParams::new(vec![0.3], 1e-8).unwrap();
        let (beta, s2) = gls_estimates(&d, &phi).unwrap();
        assert!(s2.abs() < 1e-20, "{s2}");
        assert_relative_eq!(beta[0], 2.0, max_relative = 1e-9);
        assert_relative_eq!(beta[1], -3.0, max_relative = 1e-9);
        assert_eq!(neg_log_posterior(&d, &phi, &FlatPrior).unwrap(), f64::INFINITY);
        assert!(matches!(
            GpFactorization::new(&d, &phi),
            Err(Error::DegenerateResiduals)
        ));
    }

    #[test]
    fn matches_dense_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(6..=15);
            let d = random_set(&mut rng, n, 1);
            let phi = HyperParams::new(vec![rng.random_range(0.02..1.0)], rng.random_range(1e-6..1e-2)).unwrap();
            let o = dense_oracle(&d, &phi);
            let (beta, s2) = gls_estimates(&d, &phi).unwrap();
            for i in 0..beta.len() {
                assert_relative_eq!(beta[i], o.beta[i], max_relative = 1e-8, epsilon = 1e-10);
            }
            assert_relative_eq!(s2, o.sigma2, max_relative = 1e-8);
            let h = neg_log_posterior(&d, &phi, &FlatPrior).unwrap();
            assert_relative_eq!(h, o.h, max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn neg_log_posterior_grid_matches_dense_determinants() {
        let d = toy_set(&[0.05, 0.3, 0.5, 0.72, 0.95], |x| (5.0 * x).sin());
        for i in 0..16 {
            let phi = HyperParams::new(vec![0.01 * 1.4f64.powi(i)], 1e-4).unwrap();
            let h = neg_log_posterior(&d, &phi, &FlatPrior).unwrap();
            let o = dense_oracle(&d, &phi);
            assert_relative_eq!(h, o.h, max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn shift_along_basis_leaves_objective_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_set(&mut rng, 10, 2);
        let shifted = d
            .with_outputs(d.outputs() + d.design() * DVector::from_vec(vec![3.0, -1.5, 2.0]))
            .unwrap();
        for l in [0.05, 0.3, 1.7] {
            let phi = HyperParams::new(vec![l, 2.0 * l], 1e-5).unwrap();
            let a = neg_log_posterior(&d, &phi, &FlatPrior).unwrap();
            let b = neg_log_posterior(&shifted, &phi, &FlatPrior).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn scaling_outputs_shifts_objective_by_log_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_set(&mut rng, 9, 1);
        let c: f64 = 7.5;
        let scaled = d.with_outputs(d.outputs() * c).unwrap();
        for l in [0.02, 0.2, 2.0] {
            let phi = HyperParams::new(vec![l], 1e-5).unwrap();
            let a = neg_log_posterior(&d, &phi, &FlatPrior).unwrap();
            let b = neg_log_posterior(&scaled, &phi, &FlatPrior).unwrap();
            let expected = (d.n() - d.q()) as f64 * c.ln();
            assert_relative_eq!(b - a, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn interpolates_training_points_without_nugget() {
        let d = toy_set(&[0.0, 0.25, 0.5, 0.75, 1.0, 0.6], |x| {
            5.0 + x + x.cos() + 0.5 * (3.0 * x).sin()
        });
        let phi = HyperParams::interpolating(vec![0.1]).unwrap();
        let f = GpFactorization::new(&d, &phi).unwrap();
        for i in 0..d.n() {
            let (m, v) = f.predict(&d, &d.input(i), true).unwrap();
            assert!((m - d.outputs()[i]).abs() < 1e-6);
            assert!(v < 1e-6);
        }
    }

    #[test]
    fn training_variance_small_at_lower_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_set(&mut rng, 12, 2);
        let phi = HyperParams::new(vec![0.2, 0.4], NUGGET_LOWER).unwrap();
        let f = GpFactorization::new(&d, &phi).unwrap();
        for i in 0..d.n() {
            let (_, v) = f.predict(&d, &d.input(i), true).unwrap();
            assert!(v <= 1e-4 * f.sigma2_hat(), "{v}");
        }
    }

    #[test]
    fn far_point_variance_at_least_signal_variance() {
        let d = toy_set(&[0.0, 0.2, 0.4, 0.6, 0.8], |x| (4.0 * x).sin());
        let phi = HyperParams::interpolating(vec![0.05]).unwrap();
        let f = GpFactorization::new(&d, &phi).unwrap();
        let (_, v) = f.predict(&d, &[30.0], true).unwrap();
        assert!(v >= f.sigma2_hat());
    }

    #[test]
    fn predictive_moments_match_dense_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let d = random_set(&mut rng, 14, 2);
            // explicit inverses lose ~cond(K) digits; keep K moderately conditioned
            let phi = HyperParams::new(vec![rng.random_range(0.01..0.3), rng.random_range(0.01..0.3)], 1e-5).unwrap();
            let o = dense_oracle(&d, &phi);
            let xs = [rng.random::<f64>(), rng.random::<f64>()];
            let ws = [rng.random::<f64>(), rng.random::<f64>()];
            let (mx, mw, c) = predictive_moments(&d, &phi, &xs, &ws).unwrap();
            let (ox, ow, oc) = dense_predict(&d, &phi, &o, &xs, &ws);
            assert_relative_eq!(mx, ox, max_relative = 1e-8);
            assert_relative_eq!(mw, ow, max_relative = 1e-8);
            // cross-covariances cancel down from the sigma2 scale
            assert_relative_eq!(c, oc, max_relative = 1e-6, epsilon = 1e-8 * o.sigma2);
            let (_, _, v) = predictive_moments(&d, &phi, &xs, &xs).unwrap();
            let (_, _, ov) = dense_predict(&d, &phi, &o, &xs, &xs);
            assert_relative_eq!(v, ov, max_relative = 1e-6);
            let (_, _, swapped) = predictive_moments(&d, &phi, &ws, &xs).unwrap();
            assert_relative_eq!(c, swapped, max_relative = 1e-12);
        }
    }

    #[test]
    fn smallest_eigenvalue_grows_with_nugget() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_set(&mut rng, 10, 2);
        let mut last = f64::NEG_INFINITY;
        for e in [1e-12, 1e-8, 1e-4, 1e-2, 0.5, 1.0] {
            let phi = HyperParams::new(vec![0.3, 0.3], e).unwrap();
            let k = correlation_matrix(&d, &phi).unwrap();
            let m = k.symmetric_eigenvalues().min();
            assert!(m >= last - 1e-12);
            last = m;
        }
    }

    #[test]
    fn failure_becomes_infinite_objective() {
        struct Excluding;
        impl LogPrior for Excluding {
            fn log_density(&self, _: &HyperParams) -> f64 {
                f64::NEG_INFINITY
            }
        }
        let d = toy_set(&[0.0, 0.25, 0.5, 0.75, 1.0], |x| x * x);
        let phi = HyperParams::new(vec![0.3], 1e-3).unwrap();
        assert!(neg_log_posterior(&d, &phi, &FlatPrior).unwrap().is_finite());
        assert_eq!(neg_log_posterior(&d, &phi, &Excluding).unwrap(), f64::INFINITY);
        // outputs exactly linear: degenerate residual variance
        let flat = toy_set(&[0.0, 0.25, 0.5, 0.75, 1.0], |x| 1.0 + x);
        assert_eq!(neg_log_posterior(&flat, &phi, &FlatPrior).unwrap(), f64::INFINITY);
        let wrong_dim = HyperParams::new(vec![1.0, 1.0], 1e-3).unwrap();
        assert!(neg_log_posterior(&d, &wrong_dim, &FlatPrior).is_err());
    }

    #[test]
    fn training_set_invariants() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.1, 0.2, 0.3]);
        assert!(TrainingSet::new(x, DVector::from_element(4, 1.0)).is_err());
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 0.1, 0.1, 0.3, 0.4]);
        assert!(TrainingSet::new(x, DVector::from_element(5, 1.0)).is_err());
    }
}
