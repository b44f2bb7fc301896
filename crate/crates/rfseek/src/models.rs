//! Internal forward models: predictors mapping 2D position to the expected
//! target value. Two instantiations ship: local ridge regression (a
//! regularized plane fitted to data near a center) and a 2-100-1 multilayer
//! perceptron trained with classic per-sample backpropagation plus momentum.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::targets::TargetSample;
use crate::world::Position;

/// Position/value rows a model is fitted to.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub rows: Vec<(Position, f64)>,
    /// Set when a subsample truncated the original data.
    pub capped: bool,
}

impl TrainingSet {
    pub fn new(rows: Vec<(Position, f64)>) -> Self {
        Self { rows, capped: false }
    }

    pub fn from_samples(samples: &[TargetSample]) -> Self {
        Self::new(samples.iter().map(|s| (s.position, s.value)).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Cap applied before every model fit.
pub const SUBSAMPLE_CAP: usize = 10_000;

/// Uniform sample without replacement down to `cap` rows; identity when the
/// set already fits.
pub fn subsample(set: &TrainingSet, cap: usize, rng: &mut impl Rng) -> TrainingSet {
    assert!(cap >= 1, "subsample cap must be at least 1");
    if set.rows.len() <= cap {
        return set.clone();
    }
    let picked = rand::seq::index::sample(rng, set.rows.len(), cap);
    TrainingSet { rows: picked.iter().map(|i| set.rows[i]).collect(), capped: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeParams {
    /// Only rows within this radius of the fit center are used, meters.
    #[serde(default = "default_local_radius")]
    pub local_radius: f64,
    /// Tikhonov regularization strength applied to all three coefficients.
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

fn default_local_radius() -> f64 {
    5.0
}

fn default_regularization() -> f64 {
    1.0
}

impl Default for RidgeParams {
    fn default() -> Self {
        Self { local_radius: default_local_radius(), regularization: default_regularization() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Weights initialize uniformly in [-init_range, init_range].
    #[serde(default = "default_init_range")]
    pub init_range: f64,
}

fn default_hidden() -> usize {
    100
}

fn default_learning_rate() -> f64 {
    0.01
}

fn default_momentum() -> f64 {
    0.1
}

fn default_epochs() -> usize {
    3
}

fn default_init_range() -> f64 {
    0.5
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            epochs: default_epochs(),
            init_range: default_init_range(),
        }
    }
}

/// Which model to fit, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Ridge(RidgeParams),
    Mlp(MlpParams),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitError {
    /// No rows inside the local radius (or the local system is singular):
    /// the caller keeps its previous model.
    #[error("not enough local data to fit the model")]
    InsufficientData,
    /// All positions identical; standardization is undefined.
    #[error("degenerate training data")]
    DegenerateData,
}

/// A fitted plane `w0 + wx*x + wy*y`, valid everywhere by extrapolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: [f64; 3],
    pub center: Position,
}

/// A fitted MLP plus the standardization that maps raw units to network
/// units and back.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub net: Mlp,
    pub x_mean: [f64; 2],
    pub x_std: [f64; 2],
    pub y_mean: f64,
    pub y_std: f64,
}

impl MlpModel {
    fn standardize(&self, p: Position) -> [f64; 2] {
        [(p.x - self.x_mean[0]) / self.x_std[0], (p.y - self.x_mean[1]) / self.x_std[1]]
    }
}

/// A fitted predictor. Prediction is deterministic and defined for every
/// position.
#[derive(Debug, Clone)]
pub enum ForwardModel {
    Ridge(RidgeModel),
    Mlp(Box<MlpModel>),
}

impl ForwardModel {
    pub fn predict(&self, p: Position) -> f64 {
        match self {
            ForwardModel::Ridge(m) => m.weights[0] + m.weights[1] * p.x + m.weights[2] * p.y,
            ForwardModel::Mlp(m) => m.net.forward(m.standardize(p)) * m.y_std + m.y_mean,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ForwardModel::Ridge(_) => "ridge",
            ForwardModel::Mlp(_) => "mlp",
        }
    }
}

/// Fit a regularized plane to the rows within `local_radius` of `center`,
/// via the closed-form normal equations. No input preprocessing.
pub fn fit_ridge(
    set: &TrainingSet,
    params: &RidgeParams,
    center: Position,
) -> Result<ForwardModel, FitError> {
    let local: Vec<&(Position, f64)> = set
        .rows
        .iter()
        .filter(|(p, _)| p.distance_to(center) <= params.local_radius)
        .collect();
    if local.is_empty() {
        return Err(FitError::InsufficientData);
    }
    let rows: Vec<(Position, f64)> = local.into_iter().copied().collect();
    let weights =
        fit_plane_raw(&rows, params.regularization).ok_or(FitError::InsufficientData)?;
    Ok(ForwardModel::Ridge(RidgeModel { weights, center }))
}

/// Regularized least squares for `w0 + wx*x + wy*y` over all given rows:
/// solves (X^T X + alpha I) w = X^T y. None when the system is singular or
/// the result is not finite.
pub(crate) fn fit_plane_raw(rows: &[(Position, f64)], regularization: f64) -> Option<[f64; 3]> {
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &(p, v) in rows {
        let phi = [1.0, p.x, p.y];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += phi[i] * phi[j];
            }
            b[i] += phi[i] * v;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += regularization;
    }
    let w = solve3(a, b)?;
    w.iter().all(|v| v.is_finite()).then_some(w)
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Fit the MLP: standardize inputs and outputs with the set's statistics,
/// initialize uniformly from `rng`, then run exactly `epochs` passes of
/// per-sample SGD with momentum, reshuffling each epoch.
pub fn fit_mlp(
    set: &TrainingSet,
    params: &MlpParams,
    rng: &mut impl Rng,
) -> Result<ForwardModel, FitError> {
    if set.rows.len() < 2 {
        return Err(FitError::DegenerateData);
    }
    let n = set.rows.len() as f64;
    let mut x_mean = [0.0f64; 2];
    let mut y_mean = 0.0;
    for &(p, v) in &set.rows {
        x_mean[0] += p.x;
        x_mean[1] += p.y;
        y_mean += v;
    }
    x_mean[0] /= n;
    x_mean[1] /= n;
    y_mean /= n;
    let mut x_var = [0.0f64; 2];
    let mut y_var = 0.0;
    for &(p, v) in &set.rows {
        x_var[0] += (p.x - x_mean[0]).powi(2);
        x_var[1] += (p.y - x_mean[1]).powi(2);
        y_var += (v - y_mean).powi(2);
    }
    let x_std = [(x_var[0] / n).sqrt(), (x_var[1] / n).sqrt()];
    if x_std[0] == 0.0 && x_std[1] == 0.0 {
        return Err(FitError::DegenerateData);
    }
    // A single flat dimension falls back to unit scale.
    let x_std = [if x_std[0] > 0.0 { x_std[0] } else { 1.0 }, if x_std[1] > 0.0 {
        x_std[1]
    } else {
        1.0
    }];
    let y_std = {
        let s = (y_var / n).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };

    let rows_std: Vec<([f64; 2], f64)> = set
        .rows
        .iter()
        .map(|&(p, v)| {
            ([(p.x - x_mean[0]) / x_std[0], (p.y - x_mean[1]) / x_std[1]], (v - y_mean) / y_std)
        })
        .collect();

    let mut net = Mlp::new(params.hidden, params.init_range, rng);
    let mut velocity = vec![0.0f64; net.param_count()];
    let mut order: Vec<usize> = (0..rows_std.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            net.sgd_step(rows_std[i].0, rows_std[i].1, params.learning_rate, params.momentum, &mut velocity);
        }
    }
    Ok(ForwardModel::Mlp(Box::new(MlpModel { net, x_mean, x_std, y_mean, y_std })))
}

/// Dispatch on the configured model kind. `center` anchors the local ridge
/// fit and is ignored by the MLP.
pub fn fit(
    set: &TrainingSet,
    params: &ModelParams,
    center: Position,
    rng: &mut impl Rng,
) -> Result<ForwardModel, FitError> {
    match params {
        ModelParams::Ridge(p) => fit_ridge(set, p, center),
        ModelParams::Mlp(p) => fit_mlp(set, p, rng),
    }
}

/// 2 -> hidden (logistic sigmoid) -> 1 (linear) network with biases on both
/// layers. Operates in standardized units.
///
/// Flat parameter layout, used by `params`/`set_params` and the gradient:
/// `w1` row-major (hidden x 2), then `b1`, then `w2`, then `b2`.
#[derive(Debug, Clone)]
pub struct Mlp {
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl Mlp {
    pub fn new(hidden: usize, init_range: f64, rng: &mut impl Rng) -> Self {
        assert!(hidden >= 1);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-init_range..=init_range)).collect()
        };
        let w1 = draw(hidden * 2);
        let b1 = draw(hidden);
        let w2 = draw(hidden);
        let b2 = draw(1)[0];
        Self { hidden, w1, b1, w2, b2 }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.hidden * 2 + self.hidden + self.hidden + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let h = self.hidden;
        self.w1.copy_from_slice(&params[0..2 * h]);
        self.b1.copy_from_slice(&params[2 * h..3 * h]);
        self.w2.copy_from_slice(&params[3 * h..4 * h]);
        self.b2 = params[4 * h];
    }

    fn hidden_activations(&self, x: [f64; 2]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| sigmoid(self.w1[j * 2] * x[0] + self.w1[j * 2 + 1] * x[1] + self.b1[j]))
            .collect()
    }

    pub fn forward(&self, x: [f64; 2]) -> f64 {
        let mut out = self.b2;
        for (j, h) in self.hidden_activations(x).iter().enumerate() {
            out += self.w2[j] * h;
        }
        out
    }

    /// Squared-error loss `0.5 * sum (forward(x) - y)^2` over the rows.
    pub fn batch_loss(&self, rows: &[([f64; 2], f64)]) -> f64 {
        rows.iter().map(|&(x, y)| 0.5 * (self.forward(x) - y).powi(2)).sum()
    }

    /// Analytic gradient of `batch_loss`, flat layout matching `params`.
    pub fn batch_gradient(&self, rows: &[([f64; 2], f64)]) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_count()];
        for &(x, y) in rows {
            self.accumulate_gradient(x, y, &mut grad);
        }
        grad
    }

    fn accumulate_gradient(&self, x: [f64; 2], y: f64, grad: &mut [f64]) {
        let h = self.hidden;
        let acts = self.hidden_activations(x);
        let out = self.b2 + acts.iter().enumerate().map(|(j, a)| self.w2[j] * a).sum::<f64>();
        let delta = out - y;
        for j in 0..h {
            let dh = delta * self.w2[j] * acts[j] * (1.0 - acts[j]);
            grad[j * 2] += dh * x[0];
            grad[j * 2 + 1] += dh * x[1];
            grad[2 * h + j] += dh;
            grad[3 * h + j] += delta * acts[j];
        }
        grad[4 * h] += delta;
    }

    /// One per-sample update: classic momentum,
    /// `v = momentum*v - lr*grad; w += v`.
    fn sgd_step(
        &mut self,
        x: [f64; 2],
        y: f64,
        learning_rate: f64,
        momentum: f64,
        velocity: &mut [f64],
    ) {
        let h = self.hidden;
        let mut grad = vec![0.0; self.param_count()];
        self.accumulate_gradient(x, y, &mut grad);
        for (i, g) in grad.iter().enumerate() {
            velocity[i] = momentum * velocity[i] - learning_rate * g;
        }
        for j in 0..2 * h {
            self.w1[j] += velocity[j];
        }
        for j in 0..h {
            self.b1[j] += velocity[2 * h + j];
            self.w2[j] += velocity[3 * h + j];
        }
        self.b2 += velocity[4 * h];
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pos(x: f64, y: f64) -> Position {
        Position::new(x, y)
    }

    #[test]
    fn subsample_identity_below_cap() {
        let set = TrainingSet::new((0..500).map(|i| (pos(i as f64, 0.0), i as f64)).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = subsample(&set, 10_000, &mut rng);
        assert_eq!(out.rows.len(), 500);
        assert!(!out.capped);
        assert_eq!(out.rows, set.rows);
    }

    #[test]
    fn subsample_caps_to_distinct_rows() {
        let set = TrainingSet::new((0..30_000).map(|i| (pos(i as f64, 0.0), 0.0)).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = subsample(&set, 10_000, &mut rng);
        assert_eq!(out.rows.len(), 10_000);
        assert!(out.capped);
        let mut xs: Vec<i64> = out.rows.iter().map(|(p, _)| p.x as i64).collect();
        xs.sort_unstable();
        xs.dedup();
        assert_eq!(xs.len(), 10_000);
    }

    #[test]
    fn subsample_is_uniform() {
        // 1000 repetitions of choosing 10 from 20: each row expected 500
        // times, binomial 3 sigma ~ 47.
        let set = TrainingSet::new((0..20).map(|i| (pos(i as f64, 0.0), 0.0)).collect());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u32; 20];
        for _ in 0..1000 {
            for (p, _) in subsample(&set, 10, &mut rng).rows {
                counts[p.x as usize] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!((440..=560).contains(&c), "row {i} picked {c} times");
        }
    }

    #[test]
    fn subsample_preserves_mean() {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<(Position, f64)> =
            (0..30_000).map(|_| (pos(0.0, 0.0), rng.gen_range(-90.0..-30.0))).collect();
        let full_mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
        let full_var = rows.iter().map(|r| (r.1 - full_mean).powi(2)).sum::<f64>()
            / rows.len() as f64;
        let set = TrainingSet::new(rows);
        let cap = 10_000;
        let sub = subsample(&set, cap, &mut rng);
        let sub_mean = sub.rows.iter().map(|r| r.1).sum::<f64>() / cap as f64;
        let bound = 3.0 * full_var.sqrt() / (cap as f64).sqrt();
        assert!((sub_mean - full_mean).abs() <= bound);
    }

    #[test]
    fn ridge_recovers_noiseless_plane() {
        let mut rows = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let p = pos(i as f64 * 0.3, j as f64 * 0.3);
                rows.push((p, 3.0 - 2.0 * p.x + p.y));
            }
        }
        let set = TrainingSet::new(rows);
        let params = RidgeParams { local_radius: 10.0, regularization: 0.0 };
        let model = fit_ridge(&set, &params, pos(1.5, 1.5)).unwrap();
        let ForwardModel::Ridge(m) = &model else { panic!() };
        assert_relative_eq!(m.weights[0], 3.0, epsilon = 1e-8);
        assert_relative_eq!(m.weights[1], -2.0, epsilon = 1e-8);
        assert_relative_eq!(m.weights[2], 1.0, epsilon = 1e-8);
        assert_relative_eq!(model.predict(pos(1.0, 1.0)), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn ridge_shrinks_to_zero_at_huge_regularization() {
        let rows: Vec<(Position, f64)> =
            (0..50).map(|i| (pos((i % 7) as f64, (i / 7) as f64), 5.0)).collect();
        let set = TrainingSet::new(rows);
        let params = RidgeParams { local_radius: 100.0, regularization: 1e12 };
        let ForwardModel::Ridge(m) = fit_ridge(&set, &params, pos(3.0, 3.0)).unwrap() else {
            panic!()
        };
        for w in m.weights {
            assert!(w.abs() < 1e-6, "weight {w}");
        }
    }

    #[test]
    fn ridge_errors_without_local_rows() {
        let set = TrainingSet::new(vec![(pos(100.0, 100.0), -50.0)]);
        let params = RidgeParams::default();
        assert_eq!(fit_ridge(&set, &params, pos(0.0, 0.0)).unwrap_err(), FitError::InsufficientData);
    }

    // Independent oracle: assemble the same normal equations and solve by
    // Cramer's rule.
    fn ridge_oracle(rows: &[(Position, f64)], center: Position, radius: f64, alpha: f64) -> Option<[f64; 3]> {
        let local: Vec<&(Position, f64)> =
            rows.iter().filter(|(p, _)| p.distance_to(center) <= radius).collect();
        if local.is_empty() {
            return None;
        }
        let mut m = [[0.0f64; 3]; 3];
        let mut b = [0.0f64; 3];
        for (p, v) in local {
            let phi = [1.0, p.x, p.y];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += phi[i] * phi[j];
                }
                b[i] += phi[i] * v;
            }
        }
        for i in 0..3 {
            m[i][i] += alpha;
        }
        let det = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(&m);
        if d.abs() < 1e-12 {
            return None;
        }
        let mut out = [0.0; 3];
        for k in 0..3 {
            let mut mk = m;
            for i in 0..3 {
                mk[i][k] = b[i];
            }
            out[k] = det(&mk) / d;
        }
        Some(out)
    }

    #[test]
    fn ridge_matches_cramer_oracle() {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let rows: Vec<(Position, f64)> = (0..50)
                .map(|_| {
                    (pos(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)), rng.gen_range(-90.0..-30.0))
                })
                .collect();
            let set = TrainingSet::new(rows.clone());
            let center = pos(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let params = RidgeParams { local_radius: 5.0, regularization: 1.0 };
            match (fit_ridge(&set, &params, center), ridge_oracle(&rows, center, 5.0, 1.0)) {
                (Ok(ForwardModel::Ridge(m)), Some(expect)) => {
                    for k in 0..3 {
                        assert!((m.weights[k] - expect[k]).abs() < 1e-8);
                    }
                }
                (Err(FitError::InsufficientData), None) => {}
                (got, want) => panic!("mismatch: {got:?} vs {want:?}"),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ridge_invariant_under_row_permutation(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng as _;
            let mut rows: Vec<(Position, f64)> = (0..20)
                .map(|_| (pos(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)), rng.gen_range(-80.0..-40.0)))
                .collect();
            let params = RidgeParams::default();
            let a = fit_ridge(&TrainingSet::new(rows.clone()), &params, pos(0.0, 0.0)).unwrap();
            rows.reverse();
            let b = fit_ridge(&TrainingSet::new(rows), &params, pos(0.0, 0.0)).unwrap();
            let (ForwardModel::Ridge(a), ForwardModel::Ridge(b)) = (a, b) else { panic!() };
            for k in 0..3 {
                prop_assert!((a.weights[k] - b.weights[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Mlp::new(20, 0.5, &mut rng);
        let rows: Vec<([f64; 2], f64)> = (0..10)
            .map(|_| ([rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)], rng.gen_range(-1.0..1.0)))
            .collect();
        let analytic = net.batch_gradient(&rows);
        let params = net.params();
        let h = 1e-5;
        for _ in 0..10 {
            let i = rng.gen_range(0..params.len());
            let mut plus = params.clone();
            plus[i] += h;
            net.set_params(&plus);
            let lp = net.batch_loss(&rows);
            let mut minus = params.clone();
            minus[i] -= h;
            net.set_params(&minus);
            let lm = net.batch_loss(&rows);
            net.set_params(&params);
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-4,
                "param {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }

    #[test]
    fn mlp_fit_is_deterministic_per_seed() {
        use rand::Rng as _;
        let mut data_rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<(Position, f64)> = (0..200)
            .map(|_| {
                let p = pos(data_rng.gen_range(0.0..10.0), data_rng.gen_range(0.0..10.0));
                (p, -50.0 - p.x)
            })
            .collect();
        let set = TrainingSet::new(rows);
        let params = MlpParams { hidden: 30, ..MlpParams::default() };
        let a = fit_mlp(&set, &params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = fit_mlp(&set, &params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (ForwardModel::Mlp(a), ForwardModel::Mlp(b)) = (a, b) else { panic!() };
        assert_eq!(a.net.params(), b.net.params());
    }

    #[test]
    fn mlp_constant_data_predicts_the_constant() {
        let mut rows = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                rows.push((pos(i as f64 * 0.5, j as f64 * 0.5), -55.0));
            }
        }
        let set = TrainingSet::new(rows);
        let model = fit_mlp(&set, &MlpParams::default(), &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        for &(x, y) in &[(1.0, 1.0), (5.0, 5.0), (9.0, 2.0)] {
            let v = model.predict(pos(x, y));
            assert!((v + 55.0).abs() < 0.5, "predicted {v}");
        }
    }

    #[test]
    fn mlp_degenerate_positions_rejected() {
        let set = TrainingSet::new(vec![(pos(1.0, 1.0), -50.0); 10]);
        let err = fit_mlp(&set, &MlpParams::default(), &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(err.unwrap_err(), FitError::DegenerateData);
    }

    #[test]
    fn mlp_self_consistency_on_smooth_data() {
        let mut rows = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                let p = pos(i as f64 * 0.3, j as f64 * 0.3);
                rows.push((p, -40.0 - 2.0 * p.distance_to(pos(4.5, 4.5))));
            }
        }
        let set = TrainingSet::new(rows.clone());
        let model = fit_mlp(&set, &MlpParams::default(), &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let rmse = (rows.iter().map(|&(p, v)| (model.predict(p) - v).powi(2)).sum::<f64>()
            / rows.len() as f64)
            .sqrt();
        let (p, v) = rows[450];
        assert!((model.predict(p) - v).abs() <= 3.0 * rmse + 1e-6);
    }

    #[test]
    fn predict_is_pure() {
        let set = TrainingSet::new(vec![
            (pos(0.0, 0.0), -50.0),
            (pos(1.0, 0.0), -52.0),
            (pos(0.0, 1.0), -51.0),
        ]);
        let model = fit_ridge(&set, &RidgeParams::default(), pos(0.0, 0.0)).unwrap();
        let p = pos(0.3, 0.7);
        assert_eq!(model.predict(p), model.predict(p));
    }
}
