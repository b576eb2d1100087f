//! Fixtures shared by the benchmarks.

use colored_drift::filtering::{filter_path, FilterConfig};
use colored_drift::simulate::{simulate_colored, InitialState};
use colored_drift::{ColoredModel, Matrix, Path, TimeGrid};

/// The unit scalar colored model at `ε = 0.1`.
pub fn unit_model() -> ColoredModel {
    ColoredModel::scalar_ou(1.0, 1.0, 1.0, 1.0, 0.1).expect("valid model")
}

/// A filtered unit-model path of `n` steps with `h = 1e-3`.
pub fn unit_path(n: usize, seed: u64) -> Path {
    let grid = TimeGrid::new(1e-3, n).expect("valid grid");
    let path = simulate_colored(&unit_model(), &grid, seed, &InitialState::default(), 1).expect("finite path");
    filter_path(&path, &FilterConfig::exact(1.0).expect("valid filter")).expect("filtered path")
}

/// A stable `n x n` drift: identity plus a skew rotation part.
pub fn stable_drift(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0 + i as f64 * 0.1,
        std::cmp::Ordering::Less => 0.3,
        std::cmp::Ordering::Greater => -0.3,
    })
}
