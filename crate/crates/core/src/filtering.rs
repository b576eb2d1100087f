//! Exponentially filtered data `Z_t = ∫₀ᵗ δ⁻¹ e^{-(t-s)/δ} X_s ds`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{Channel, Path};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterScheme {
    /// `Z_{k+1} = Z_k + (h/δ)(X_k - Z_k)`
    Euler,
    /// `Z_{k+1} = e^{-h/δ} Z_k + (1 - e^{-h/δ}) X_k`
    #[default]
    ExactExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub delta: f64,
    #[serde(default)]
    pub scheme: FilterScheme,
}

impl FilterConfig {
    pub fn new(delta: f64, scheme: FilterScheme) -> Result<Self> {
        let cfg = FilterConfig { delta, scheme };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn exact(delta: f64) -> Result<Self> {
        Self::new(delta, FilterScheme::ExactExponential)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "filter width must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Streaming filter state, starting from `Z_0 = 0`.
#[derive(Clone, Debug)]
pub struct ExpFilter {
    decay: f64,
    gain: f64,
    z: Vec<f64>,
}

impl ExpFilter {
    pub fn new(cfg: &FilterConfig, step: f64, dim: usize) -> Result<Self> {
        cfg.validate()?;
        let r = step / cfg.delta;
        let (decay, gain) = match cfg.scheme {
            FilterScheme::Euler => {
                if r >= 1.0 {
                    return Err(Error::UnstableStep {
                        step,
                        bound: cfg.delta,
                        reason: "Euler filter needs h < delta; use the exact-exponential scheme",
                    });
                }
                (1.0 - r, r)
            }
            FilterScheme::ExactExponential => ((-r).exp(), -(-r).exp_m1()),
        };
        Ok(ExpFilter {
            decay,
            gain,
            z: vec![0.0; dim],
        })
    }

    /// `Z_k`
    #[inline]
    pub fn state(&self) -> &[f64] {
        &self.z
    }

    /// Moves from `Z_k` to `Z_{k+1}` given `X_k`.
    #[inline]
    pub fn advance(&mut self, x: &[f64]) {
        for (z, x) in self.z.iter_mut().zip(x) {
            *z = self.decay * *z + self.gain * x;
        }
    }
}

/// Filters a channel sampled every `step`.
pub fn filter_channel(x: &Channel, step: f64, cfg: &FilterConfig) -> Result<Channel> {
    let mut filter = ExpFilter::new(cfg, step, x.dim())?;
    let mut out = Vec::with_capacity(x.as_slice().len());
    for row in x.rows() {
        out.extend_from_slice(filter.state());
        filter.advance(row);
    }
    Channel::new(x.dim(), out)
}

/// Returns `path` with its `Z` channel computed from the stored `X` points.
pub fn filter_path(path: &Path, cfg: &FilterConfig) -> Result<Path> {
    let z = filter_channel(&path.x, path.stored_step(), cfg)?;
    path.clone().with_z(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::TimeGrid;
    use proptest::prelude::*;

    fn series(f: impl Fn(f64) -> f64, h: f64, n: usize) -> Channel {
        Channel::new(1, (0..=n).map(|k| f(k as f64 * h)).collect()).unwrap()
    }

    #[test]
    fn constant_input_relaxes_exponentially() {
        for scheme in [FilterScheme::Euler, FilterScheme::ExactExponential] {
            let cfg = FilterConfig::new(0.5, scheme).unwrap();
            let h = 1e-3;
            let z = filter_channel(&series(|_| 2.0, h, 3000), h, &cfg).unwrap();
            for (k, v) in z.rows().enumerate() {
                let t = k as f64 * h;
                assert!((v[0] - 2.0 * (1.0 - (-t / 0.5).exp())).abs() < 5e-3);
            }
        }
        let cfg = FilterConfig::exact(0.5).unwrap();
        let z = filter_channel(&series(|_| 2.0, 0.1, 10), 0.1, &cfg).unwrap();
        // the exact scheme is exact on piecewise-constant input
        assert!((z.row(10)[0] - 2.0 * (1.0 - (-2.0f64).exp())).abs() < 1e-14);
    }

    /// `∫₀ᵗ e^{-(t-s)} sin s ds` by composite trapezoid with a fine grid.
    fn convolution_sin(t: f64) -> f64 {
        let n = 20_000;
        let ds = t / n as f64;
        let f = |s: f64| (-(t - s)).exp() * s.sin();
        let inner: f64 = (1..n).map(|i| f(i as f64 * ds)).sum();
        ds * (0.5 * f(0.0) + inner + 0.5 * f(t))
    }

    #[test]
    fn sine_matches_convolution_quadrature() {
        let cfg = FilterConfig::exact(1.0).unwrap();
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let n = (5.0 / h) as usize;
            let z = filter_channel(&series(f64::sin, h, n), h, &cfg).unwrap();
            let err = (0..=n)
                .step_by(n / 5)
                .map(|k| (z.row(k)[0] - convolution_sin(k as f64 * h)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 1e-2);
        let ratio = errs[0] / errs[1];
        assert!((1.4..2.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn schemes_agree_to_first_order() {
        let disc = |h: f64| {
            let n = (10.0 / h) as usize;
            let x = series(|t| (2.0 * t).cos() + 0.3 * t, h, n);
            let a = filter_channel(&x, h, &FilterConfig::new(1.0, FilterScheme::Euler).unwrap()).unwrap();
            let b = filter_channel(&x, h, &FilterConfig::exact(1.0).unwrap()).unwrap();
            a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
        };
        let ratio = disc(2e-3) / disc(1e-3);
        assert!((2.0 / 1.3..2.0 * 1.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn euler_filter_rejects_wide_step() {
        let cfg = FilterConfig::new(0.5, FilterScheme::Euler).unwrap();
        assert!(matches!(ExpFilter::new(&cfg, 0.5, 1), Err(Error::UnstableStep { .. })));
        assert!(ExpFilter::new(&FilterConfig::exact(0.5).unwrap(), 5.0, 1).is_ok());
        assert!(FilterConfig::exact(0.0).is_err());
    }

    #[test]
    fn filter_path_adds_z() {
        let grid = TimeGrid::new(0.1, 4).unwrap();
        let x = series(|t| t, 0.1, 4);
        let path = Path::new(grid, 1, None, x).unwrap();
        let filtered = filter_path(&path, &FilterConfig::exact(1.0).unwrap()).unwrap();
        let z = filtered.z.unwrap();
        assert_eq!(z.row(0), &[0.0]);
        assert_eq!(z.len(), 5);
    }

    proptest! {
        #[test]
        fn linearity(xs in prop::collection::vec(-10.0f64..10.0, 2..60),
                     ys in prop::collection::vec(-10.0f64..10.0, 60),
                     a in -3.0f64..3.0, b in -3.0f64..3.0,
                     delta in 0.05f64..5.0, euler in any::<bool>()) {
            let n = xs.len();
            let scheme = if euler { FilterScheme::Euler } else { FilterScheme::ExactExponential };
            let cfg = FilterConfig::new(delta, scheme).unwrap();
            let h = 0.01;
            let x1 = Channel::new(1, xs.clone()).unwrap();
            let x2 = Channel::new(1, ys[..n].to_vec()).unwrap();
            let mix = Channel::new(1, xs.iter().zip(&ys).map(|(u, v)| a * u + b * v).collect()).unwrap();
            let (z1, z2, zm) = (
                filter_channel(&x1, h, &cfg).unwrap(),
                filter_channel(&x2, h, &cfg).unwrap(),
                filter_channel(&mix, h, &cfg).unwrap(),
            );
            for k in 0..n {
                let expect = a * z1.row(k)[0] + b * z2.row(k)[0];
                prop_assert!((zm.row(k)[0] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            }
        }

        #[test]
        fn exact_scheme_contracts(data in prop::collection::vec(-50.0f64..50.0, 2..200),
                                  delta in 0.01f64..10.0, h in 0.001f64..1.0) {
            let x = Channel::new(2, data[..data.len() / 2 * 2].to_vec()).unwrap();
            prop_assume!(!x.is_empty());
            let z = filter_channel(&x, h, &FilterConfig::exact(delta).unwrap()).unwrap();
            let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xmax = x.rows().map(norm).fold(0.0, f64::max);
            for r in z.rows() {
                prop_assert!(norm(r) <= xmax * (1.0 + 1e-12));
            }
        }
    }
}
