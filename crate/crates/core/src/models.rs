//! Parametric mean (manifold) models and array geometries: far-field 3D DOA,
//! near-field 2D, uniform linear array, complex exponential frequency model,
//! plus difference vectors, derivatives and beampatterns.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    ComplexCircular,
    Real,
}

type MeanFn = Arc<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>;
type DerivFn = Arc<dyn Fn(&[f64], usize) -> Vec<Complex64> + Send + Sync>;

/// Maps a real parameter vector to a complex mean vector m(theta) in C^N.
#[derive(Clone)]
pub struct ManifoldModel {
    n_sensors: usize,
    supports: Vec<(f64, f64)>,
    periodic: Vec<bool>,
    noise_kind: NoiseKind,
    mean_fn: MeanFn,
    analytic_derivative: Option<DerivFn>,
}

impl ManifoldModel {
    pub fn new(
        n_sensors: usize,
        supports: Vec<(f64, f64)>,
        noise_kind: NoiseKind,
        mean_fn: impl Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'static,
    ) -> Self {
        assert!(n_sensors >= 1);
        assert!(!supports.is_empty());
        assert!(supports.iter().all(|(lo, hi)| lo < hi));
        let periodic = vec![false; supports.len()];
        ManifoldModel {
            n_sensors,
            supports,
            periodic,
            noise_kind,
            mean_fn: Arc::new(mean_fn),
            analytic_derivative: None,
        }
    }

    pub fn with_analytic_derivative(
        mut self,
        deriv: impl Fn(&[f64], usize) -> Vec<Complex64> + Send + Sync + 'static,
    ) -> Self {
        self.analytic_derivative = Some(Arc::new(deriv));
        self
    }

    /// Declare parameter `index` as an angle: the mean function is periodic
    /// with period equal to the support width, and estimation errors are
    /// measured modulo that period (the largest meaningful error is half the
    /// width, independent of the true value).
    pub fn with_periodic_parameter(mut self, index: usize) -> Self {
        self.periodic[index] = true;
        self
    }

    pub fn is_periodic(&self, index: usize) -> bool {
        self.periodic[index]
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn param_dim(&self) -> usize {
        self.supports.len()
    }

    pub fn support(&self, index: usize) -> (f64, f64) {
        self.supports[index]
    }

    pub fn noise_kind(&self) -> NoiseKind {
        self.noise_kind
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        theta.len() == self.supports.len()
            && theta
                .iter()
                .zip(&self.supports)
                .all(|(t, (lo, hi))| *t >= lo - 1e-12 && *t <= hi + 1e-12)
    }

    fn check_support(&self, theta: &[f64]) -> Result<()> {
        if self.in_support(theta) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "parameter {theta:?} outside declared supports {:?}",
                self.supports
            )))
        }
    }

    /// m(theta); errors when theta is outside the declared support box.
    pub fn mean(&self, theta: &[f64]) -> Result<Vec<Complex64>> {
        self.check_support(theta)?;
        Ok(self.mean_unchecked(theta))
    }

    pub fn mean_unchecked(&self, theta: &[f64]) -> Vec<Complex64> {
        let m = (self.mean_fn)(theta);
        debug_assert_eq!(m.len(), self.n_sensors);
        m
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.analytic_derivative.is_some()
    }

    /// dm/dtheta_index, preferring an analytic override when one is attached.
    pub fn derivative(&self, theta: &[f64], index: usize) -> Result<Vec<Complex64>> {
        self.check_support(theta)?;
        if let Some(d) = &self.analytic_derivative {
            return Ok(d(theta, index));
        }
        Ok(manifold_derivative(self, theta, index, None)?.vector)
    }
}

/// m(theta1) - m(theta2).
pub fn mtilde(model: &ManifoldModel, theta1: &[f64], theta2: &[f64]) -> Result<Vec<Complex64>> {
    let m1 = model.mean(theta1)?;
    let m2 = model.mean(theta2)?;
    Ok(m1.iter().zip(&m2).map(|(a, b)| a - b).collect())
}

pub fn mtilde_norm(model: &ManifoldModel, theta1: &[f64], theta2: &[f64]) -> Result<f64> {
    Ok(vec_norm(&mtilde(model, theta1, theta2)?))
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Finite-difference manifold derivative.
#[derive(Debug, Clone)]
pub struct DerivativeResult {
    pub vector: Vec<Complex64>,
    /// Set when the parameter sat too close to a support boundary for a
    /// central difference and a one-sided difference was used instead.
    pub one_sided: bool,
}

pub fn manifold_derivative(
    model: &ManifoldModel,
    theta: &[f64],
    index: usize,
    step: Option<f64>,
) -> Result<DerivativeResult> {
    model.check_support(theta)?;
    let (lo, hi) = model.support(index);
    let h = step.unwrap_or(1e-6 * (hi - lo));
    if !(h > 0.0) {
        return Err(Error::Domain("derivative step must be positive".to_string()));
    }
    let t = theta[index];
    let shift = |value: f64| {
        let mut th = theta.to_vec();
        th[index] = value;
        model.mean_unchecked(&th)
    };
    if t - h >= lo && t + h <= hi {
        let plus = shift(t + h);
        let minus = shift(t - h);
        let vector = plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        Ok(DerivativeResult {
            vector,
            one_sided: false,
        })
    } else {
        // One-sided fallback at the boundary.
        let sign = if t + h > hi { -1.0 } else { 1.0 };
        let base = shift(t);
        let stepped = shift(t + sign * h);
        let vector = stepped
            .iter()
            .zip(&base)
            .map(|(s, b)| (s - b) / (sign * h))
            .collect();
        Ok(DerivativeResult {
            vector,
            one_sided: true,
        })
    }
}

/// Central second difference of the mean along one parameter.
pub fn manifold_second_derivative(
    model: &ManifoldModel,
    theta: &[f64],
    index: usize,
    step: Option<f64>,
) -> Result<Vec<Complex64>> {
    model.check_support(theta)?;
    let (lo, hi) = model.support(index);
    let h = step.unwrap_or(1e-4 * (hi - lo));
    let t = theta[index];
    if t - h < lo || t + h > hi {
        return Err(Error::Domain(
            "parameter too close to support boundary for second difference".to_string(),
        ));
    }
    let shift = |value: f64| {
        let mut th = theta.to_vec();
        th[index] = value;
        model.mean_unchecked(&th)
    };
    let plus = shift(t + h);
    let center = shift(t);
    let minus = shift(t - h);
    Ok(plus
        .iter()
        .zip(&center)
        .zip(&minus)
        .map(|((p, c), m)| (p - 2.0 * c + m) / (h * h))
        .collect())
}

/// Bartlett beampattern in dB, normalized to 0 dB at eval = steer.
pub fn beampattern(model: &ManifoldModel, steer: &[f64], eval: &[f64]) -> Result<f64> {
    let ms = model.mean(steer)?;
    let me = model.mean(eval)?;
    let inner: Complex64 = ms.iter().zip(&me).map(|(s, e)| s.conj() * e).sum();
    let norm2: f64 = ms.iter().map(|c| c.norm_sqr()).sum();
    Ok(20.0 * (inner.norm() / norm2).log10())
}

/// Sensor positions in wavelength units.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub positions: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>) -> Self {
        assert!(!positions.is_empty());
        assert!(positions.iter().flatten().all(|p| p.is_finite()));
        ArrayGeometry { positions }
    }

    pub fn n_sensors(&self) -> usize {
        self.positions.len()
    }

    /// Parse a plain-text table: one sensor per line, three whitespace
    /// separated reals (x y z in wavelengths), `#` comments allowed.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Domain(format!(
                    "geometry line {}: expected 3 coordinates, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut p = [0.0f64; 3];
            for (i, f) in fields.iter().enumerate() {
                p[i] = f.parse().map_err(|_| {
                    Error::Domain(format!("geometry line {}: bad number {f:?}", lineno + 1))
                })?;
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "geometry line {}: non-finite coordinate",
                    lineno + 1
                )));
            }
            positions.push(p);
        }
        if positions.len() < 2 {
            return Err(Error::Domain(format!(
                "geometry file must list at least 2 sensors, found {}",
                positions.len()
            )));
        }
        Ok(ArrayGeometry::new(positions))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// The 11-sensor 3D array used by the DOA scenarios, positions as tabulated.
pub fn table1_array() -> ArrayGeometry {
    ArrayGeometry::new(vec![
        [1.6667, 0.0, 0.0],
        [1.1785, 1.1785, 1.1785],
        [0.0, 1.6667, 1.6667],
        [-1.1785, 1.1785, 1.1785],
        [-1.6667, 0.0, 0.0],
        [-1.1785, -1.1785, -1.1785],
        [0.0, -1.6667, -1.6667],
        [1.1785, -1.1785, -1.1785],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.6667],
        [0.0, 0.0, -1.6667],
    ])
}

/// Planar uniform circular array of `n` sensors in the z = 0 plane.
pub fn uniform_circular_array(n: usize, radius: f64) -> ArrayGeometry {
    assert!(n >= 2 && radius > 0.0);
    ArrayGeometry::new(
        (0..n)
            .map(|k| {
                let ang = TWO_PI * k as f64 / n as f64;
                [radius * ang.cos(), radius * ang.sin(), 0.0]
            })
            .collect(),
    )
}

/// Far-field plane-wave manifold over (azimuth, elevation), unit direction
/// u = (cos phi sin theta, sin phi sin theta, cos theta).
pub fn far_field_manifold(geometry: &ArrayGeometry, amplitude: f64) -> ManifoldModel {
    let positions = geometry.positions.clone();
    let n = positions.len();
    ManifoldModel::new(
        n,
        vec![(-PI, PI), (0.0, PI)],
        NoiseKind::ComplexCircular,
        move |psi: &[f64]| {
            let (phi, theta) = (psi[0], psi[1]);
            let u = [
                phi.cos() * theta.sin(),
                phi.sin() * theta.sin(),
                theta.cos(),
            ];
            positions
                .iter()
                .map(|p| {
                    let phase = TWO_PI * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]);
                    amplitude * Complex64::new(0.0, phase).exp()
                })
                .collect()
        },
    )
    .with_periodic_parameter(0)
}

/// Near-field spherical-wavefront manifold over azimuth for a planar array
/// and a source at range `r` (wavelengths) from the array center.
pub fn near_field_manifold(geometry: &ArrayGeometry, range: f64) -> Result<ManifoldModel> {
    if !(range > 0.0) {
        return Err(Error::Domain(format!(
            "near-field range must be positive, got {range}"
        )));
    }
    let positions = geometry.positions.clone();
    let n = positions.len();
    Ok(ManifoldModel::new(
        n,
        vec![(-PI, PI)],
        NoiseKind::ComplexCircular,
        move |theta: &[f64]| {
            let phi = theta[0];
            let src = [range * phi.cos(), range * phi.sin()];
            positions
                .iter()
                .map(|p| {
                    let dx = p[0] - src[0];
                    let dy = p[1] - src[1];
                    let d = (dx * dx + dy * dy).sqrt();
                    Complex64::new(0.0, -TWO_PI * d).exp()
                })
                .collect()
        },
    ))
}

/// Half-wavelength uniform linear array over azimuth phi in [0, pi]:
/// m_n(phi) = alpha exp(j pi cos(phi) n).
pub fn ula_manifold(n: usize, amplitude: Complex64) -> ManifoldModel {
    assert!(n >= 2);
    ManifoldModel::new(
        n,
        vec![(0.0, PI)],
        NoiseKind::ComplexCircular,
        move |theta: &[f64]| {
            let omega = PI * theta[0].cos();
            (0..n)
                .map(|k| amplitude * Complex64::new(0.0, omega * k as f64).exp())
                .collect()
        },
    )
    .with_analytic_derivative(move |theta: &[f64], _| {
        // d m_n / d phi = -j pi n sin(phi) m_n
        let phi = theta[0];
        let omega = PI * phi.cos();
        (0..n)
            .map(|k| {
                let m = amplitude * Complex64::new(0.0, omega * k as f64).exp();
                Complex64::new(0.0, -PI * k as f64 * phi.sin()) * m
            })
            .collect()
    })
}

/// Complex exponential over omega in [-pi, pi]: m_n(omega) = A exp(j omega n).
pub fn frequency_manifold(n: usize, amplitude: Complex64) -> ManifoldModel {
    assert!(n >= 1);
    ManifoldModel::new(
        n,
        vec![(-PI, PI)],
        NoiseKind::ComplexCircular,
        move |theta: &[f64]| {
            let omega = theta[0];
            (0..n)
                .map(|k| amplitude * Complex64::new(0.0, omega * k as f64).exp())
                .collect()
        },
    )
    .with_analytic_derivative(move |theta: &[f64], _| {
        let omega = theta[0];
        (0..n)
            .map(|k| {
                let m = amplitude * Complex64::new(0.0, omega * k as f64).exp();
                Complex64::new(0.0, k as f64) * m
            })
            .collect()
    })
    .with_periodic_parameter(0)
}

/// Scalar identity model m(theta) = theta, useful as the Gaussian location
/// problem in either noise convention.
pub fn identity_manifold(support: (f64, f64), noise_kind: NoiseKind) -> ManifoldModel {
    ManifoldModel::new(1, vec![support], noise_kind, |theta: &[f64]| {
        vec![Complex64::new(theta[0], 0.0)]
    })
    .with_analytic_derivative(|_, _| vec![Complex64::new(1.0, 0.0)])
}

/// True model, assumed model, and the two noise variances of a
/// misspecified estimation problem.
#[derive(Clone)]
pub struct MismatchPair {
    pub true_model: ManifoldModel,
    pub assumed_model: ManifoldModel,
    pub true_noise_variance: f64,
    pub assumed_noise_variance: f64,
}

impl MismatchPair {
    pub fn new(
        true_model: ManifoldModel,
        assumed_model: ManifoldModel,
        true_noise_variance: f64,
        assumed_noise_variance: f64,
    ) -> Result<Self> {
        if true_model.n_sensors() != assumed_model.n_sensors() {
            return Err(Error::Domain(format!(
                "mismatch pair models must share N: {} vs {}",
                true_model.n_sensors(),
                assumed_model.n_sensors()
            )));
        }
        if true_model.param_dim() != assumed_model.param_dim() {
            return Err(Error::Domain(
                "mismatch pair models must share parameter dimension".to_string(),
            ));
        }
        if !(true_noise_variance > 0.0) || !(assumed_noise_variance > 0.0) {
            return Err(Error::Domain("noise variances must be positive".to_string()));
        }
        Ok(MismatchPair {
            true_model,
            assumed_model,
            true_noise_variance,
            assumed_noise_variance,
        })
    }

    /// mu(theta) = m_true(theta) - m_assumed(theta).
    pub fn mean_offset(&self, theta: &[f64]) -> Result<Vec<Complex64>> {
        let mt = self.true_model.mean(theta)?;
        let ma = self.assumed_model.mean(theta)?;
        Ok(mt.iter().zip(&ma).map(|(a, b)| a - b).collect())
    }
}

/// Freeze all but one parameter of a model, producing a scalar-parameter view
/// whose single parameter is the component `index`.
pub fn fix_all_but(model: &ManifoldModel, index: usize, fixed: &[f64]) -> ManifoldModel {
    assert_eq!(fixed.len(), model.param_dim());
    let inner = model.clone();
    let fixed = fixed.to_vec();
    let view = ManifoldModel::new(
        model.n_sensors(),
        vec![model.support(index)],
        model.noise_kind(),
        move |theta: &[f64]| {
            let mut full = fixed.clone();
            full[index] = theta[0];
            inner.mean_unchecked(&full)
        },
    );
    if model.is_periodic(index) {
        view.with_periodic_parameter(0)
    } else {
        view
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(d: f64) -> f64 {
        d * PI / 180.0
    }

    #[test]
    fn table1_values() {
        let g = table1_array();
        assert_eq!(g.n_sensors(), 11);
        assert_eq!(g.positions[0], [1.6667, 0.0, 0.0]);
        assert_eq!(g.positions[1], [1.1785, 1.1785, 1.1785]);
        assert_eq!(g.positions[10], [0.0, 0.0, -1.6667]);
    }

    #[test]
    fn far_field_single_sensor_origin() {
        let g = ArrayGeometry::new(vec![[0.0, 0.0, 0.0]]);
        let m = far_field_manifold(&g, 2.5);
        for psi in [[0.3, 1.0], [-1.2, 2.0], [deg(25.0), deg(60.0)]] {
            let a = m.mean(&psi).unwrap();
            assert_abs_diff_eq!(a[0].re, 2.5, epsilon = 1e-15);
            assert_abs_diff_eq!(a[0].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn far_field_unit_modulus() {
        let m = far_field_manifold(&table1_array(), 1.3);
        let a = m.mean(&[deg(25.0), deg(60.0)]).unwrap();
        for c in a {
            assert_abs_diff_eq!(c.norm(), 1.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn far_field_axis_sensor_phase() {
        let g = ArrayGeometry::new(vec![[1.0, 0.0, 0.0]]);
        let m = far_field_manifold(&g, 1.0);
        // (phi, theta) = (0, 90 deg): u = x-axis, phase 2 pi -> back to beta.
        let a = m.mean(&[0.0, PI / 2.0]).unwrap();
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn near_field_origin_sensor() {
        let g = ArrayGeometry::new(vec![[0.0, 0.0, 0.0]]);
        let r = 3.0;
        let m = near_field_manifold(&g, r).unwrap();
        for phi in [-1.0, 0.0, 2.2] {
            let a = m.mean(&[phi]).unwrap();
            let expect = Complex64::new(0.0, -TWO_PI * r).exp();
            assert_abs_diff_eq!(a[0].re, expect.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a[0].im, expect.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn near_field_far_limit() {
        let g = uniform_circular_array(12, 5.0 / 3.0);
        let r = 1e6;
        let nf = near_field_manifold(&g, r).unwrap();
        let ff = far_field_manifold(&g, 1.0);
        let phi = 0.7;
        let a_nf = nf.mean(&[phi]).unwrap();
        // d_n ~ r - p_n . u_phi for large r, so the near-field vector tends to
        // the far-field one at broadside elevation up to a common phase.
        let a_ff = ff.mean(&[phi, PI / 2.0]).unwrap();
        let ref_rot = a_nf[0] * a_ff[0].conj();
        for (x, y) in a_nf.iter().zip(&a_ff) {
            let rot = x * y.conj();
            let dphase = (rot * ref_rot.conj()).arg();
            assert!(dphase.abs() < 1e-3, "phase offset {dphase}");
        }
    }

    #[test]
    fn near_field_uca_unit_modulus() {
        let m = near_field_manifold(&uniform_circular_array(12, 5.0 / 3.0), 5.0).unwrap();
        for c in m.mean(&[0.4]).unwrap() {
            assert_abs_diff_eq!(c.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ula_broadside_and_rotation() {
        let alpha = Complex64::new(0.8, -0.3);
        let m = ula_manifold(15, alpha);
        let broadside = m.mean(&[PI / 2.0]).unwrap();
        for c in &broadside {
            assert_abs_diff_eq!((c - alpha).norm(), 0.0, epsilon = 1e-12);
        }
        let phi = deg(35.0);
        let a = m.mean(&[phi]).unwrap();
        let rot = Complex64::new(0.0, PI * phi.cos()).exp();
        for k in 1..15 {
            assert_abs_diff_eq!((a[k] - rot * a[k - 1]).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(a[k].norm(), alpha.norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn frequency_model_entries() {
        let m = frequency_manifold(16, Complex64::new(1.0, 0.0));
        let at_zero = m.mean(&[0.0]).unwrap();
        for c in &at_zero {
            assert_abs_diff_eq!((c - Complex64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        }
        let a = m.mean(&[PI / 2.0]).unwrap();
        assert_abs_diff_eq!((a[1] - Complex64::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-12);
        let norm2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        assert_abs_diff_eq!(norm2, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn mtilde_basics() {
        let m = frequency_manifold(2, Complex64::new(1.0, 0.0));
        let zero = mtilde(&m, &[0.7], &[0.7]).unwrap();
        assert!(zero.iter().all(|c| c.norm() < 1e-15));
        let d = mtilde(&m, &[PI], &[0.0]).unwrap();
        assert_abs_diff_eq!(d[0].norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((d[1] - Complex64::new(-2.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        // Norm symmetry.
        let a = mtilde_norm(&m, &[1.2], &[0.3]).unwrap();
        let b = mtilde_norm(&m, &[0.3], &[1.2]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn mtilde_out_of_support_errors() {
        let m = ula_manifold(4, Complex64::new(1.0, 0.0));
        assert!(mtilde(&m, &[-0.5], &[0.5]).is_err());
    }

    #[test]
    fn derivative_matches_analytic_frequency() {
        let m = frequency_manifold(8, Complex64::new(1.0, 0.0));
        let fd = manifold_derivative(&m, &[1.0], 0, None).unwrap();
        assert!(!fd.one_sided);
        let analytic = m.derivative(&[1.0], 0).unwrap();
        for (a, b) in fd.vector.iter().zip(&analytic) {
            assert!((a - b).norm() <= 1e-6 * b.norm().max(1.0));
        }
    }

    #[test]
    fn derivative_ula_broadside() {
        let m = ula_manifold(3, Complex64::new(1.0, 0.0));
        let d = manifold_derivative(&m, &[PI / 2.0], 0, None).unwrap().vector;
        // At broadside: d m_n / d phi = -j pi n.
        for (k, c) in d.iter().enumerate() {
            let expect = Complex64::new(0.0, -PI * k as f64);
            assert!((c - expect).norm() < 1e-5 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn derivative_constant_model() {
        let m = ManifoldModel::new(3, vec![(0.0, 1.0)], NoiseKind::ComplexCircular, |_| {
            vec![Complex64::new(2.0, 1.0); 3]
        });
        let d = manifold_derivative(&m, &[0.5], 0, None).unwrap();
        assert!(d.vector.iter().all(|c| c.norm() < 1e-9));
    }

    #[test]
    fn derivative_boundary_falls_back_one_sided() {
        let m = ula_manifold(4, Complex64::new(1.0, 0.0));
        let d = manifold_derivative(&m, &[0.0], 0, None).unwrap();
        assert!(d.one_sided);
    }

    #[test]
    fn beampattern_normalization_and_sidelobes() {
        let m = far_field_manifold(&table1_array(), 1.0);
        let steer = [deg(25.0), deg(60.0)];
        assert_abs_diff_eq!(beampattern(&m, &steer, &steer).unwrap(), 0.0, epsilon = 1e-12);
        // Cauchy-Schwarz: never above 0 dB, and this array has a high sidelobe.
        let mut highest_sidelobe = f64::NEG_INFINITY;
        for i in 0..360 {
            let phi = -PI + TWO_PI * i as f64 / 360.0;
            for j in 1..180 {
                let theta = PI * j as f64 / 180.0;
                let db = beampattern(&m, &steer, &[phi, theta]).unwrap();
                assert!(db <= 1e-9);
                let far = (phi - steer[0]).abs() > 0.35 || (theta - steer[1]).abs() > 0.35;
                if far {
                    highest_sidelobe = highest_sidelobe.max(db);
                }
            }
        }
        assert!(
            highest_sidelobe > -2.5,
            "highest sidelobe {highest_sidelobe} dB"
        );
    }

    #[test]
    fn geometry_text_roundtrip() {
        let text = "# test array\n1.0 0 0\n0 1.0 0  # second\n\n0 0 1.0\n";
        let g = ArrayGeometry::from_text(text).unwrap();
        assert_eq!(g.n_sensors(), 3);
        assert_eq!(g.positions[1], [0.0, 1.0, 0.0]);
        assert!(ArrayGeometry::from_text("1 2 3\n").is_err());
        assert!(ArrayGeometry::from_text("1 2\n3 4 5\n").is_err());
    }
}
