//! Pointwise potential MLP: each scaled score is mapped independently
//! through affine → layer norm → ReLU → affine → layer norm → ReLU →
//! affine → clamp, so the same parameters serve lists of any length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var, LAYER_NORM_EPS};
use crate::matrix::Matrix;

pub const DEFAULT_HIDDEN: usize = 150;
pub const DEFAULT_CLAMP: f64 = 5.0;

/// Parameter names in storage order.
pub const PARAM_NAMES: [&str; 10] = [
    "w1", "b1", "ln1_gain", "ln1_bias", "w2", "b2", "ln2_gain", "ln2_bias", "w3", "b3",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel {
    pub(crate) params: Vec<Matrix>,
    clamp: f64,
}

/// Tape handles for every parameter, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone)]
pub struct ParamVars(pub Vec<Var>);

/// ReLU and clamp activity of one forward pass. Two inputs with equal
/// patterns lie in the same smooth piece of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern(Vec<bool>);

impl PotentialModel {
    /// Fan-in scaled uniform weights `U(−1/√fan_in, 1/√fan_in)`, zero
    /// biases, unit layer-norm gain and zero shift.
    pub fn new(hidden: usize, clamp: f64, seed: u64) -> Self {
        assert!(hidden >= 1, "hidden width must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize| {
            let bound = 1.0 / (rows as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
        };
        let w1 = uniform(1, hidden);
        let w2 = uniform(hidden, hidden);
        let w3 = uniform(hidden, 1);
        Self {
            params: vec![
                w1,
                Matrix::zeros(1, hidden),
                Matrix::filled(1, hidden, 1.0),
                Matrix::zeros(1, hidden),
                w2,
                Matrix::zeros(1, hidden),
                Matrix::filled(1, hidden, 1.0),
                Matrix::zeros(1, hidden),
                w3,
                Matrix::zeros(1, 1),
            ],
            clamp,
        }
    }

    /// Rebuilds a model from parameters in [`PARAM_NAMES`] order, checking
    /// shapes against the hidden width implied by `w1`.
    pub fn from_parameters(params: Vec<Matrix>, clamp: f64) -> Result<Self, String> {
        if params.len() != PARAM_NAMES.len() {
            return Err(format!(
                "expected {} parameter blocks, got {}",
                PARAM_NAMES.len(),
                params.len()
            ));
        }
        let h = params[0].cols();
        let expected = [
            (1, h),
            (1, h),
            (1, h),
            (1, h),
            (h, h),
            (1, h),
            (1, h),
            (1, h),
            (h, 1),
            (1, 1),
        ];
        for ((p, want), name) in params.iter().zip(expected).zip(PARAM_NAMES) {
            if p.shape() != want {
                return Err(format!("{name}: shape {:?}, expected {want:?}", p.shape()));
            }
            if !p.all_finite() {
                return Err(format!("{name}: non-finite parameter"));
            }
        }
        if !(clamp > 0.0 && clamp.is_finite()) {
            return Err(format!("clamp bound must be positive, got {clamp}"));
        }
        Ok(Self { params, clamp })
    }

    pub fn hidden(&self) -> usize {
        self.params[0].cols()
    }

    pub fn clamp_bound(&self) -> f64 {
        self.clamp
    }

    pub fn parameters(&self) -> &[Matrix] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.as_slice().len()).sum()
    }

    /// Sets the output layer to zero so the model predicts `f = 0`.
    pub fn zero_output_layer(&mut self) {
        self.params[8] = Matrix::zeros(self.hidden(), 1);
        self.params[9] = Matrix::zeros(1, 1);
    }

    /// Potential values for each scaled score.
    pub fn forward(&self, u_scaled: &[f64]) -> Vec<f64> {
        self.forward_with_pattern(u_scaled).0
    }

    /// Forward pass that also reports which ReLU units and clamps were
    /// active.
    pub fn forward_with_pattern(&self, u_scaled: &[f64]) -> (Vec<f64>, ActivationPattern) {
        let p = &self.params;
        let mut pattern = Vec::new();
        let mut out = Vec::with_capacity(u_scaled.len());
        let h = self.hidden();
        let mut a1 = vec![0.0; h];
        let mut a2 = vec![0.0; h];
        for &x in u_scaled {
            for (k, a) in a1.iter_mut().enumerate() {
                *a = x * p[0][(0, k)] + p[1][(0, k)];
            }
            norm_relu(&mut a1, &p[2], &p[3], &mut pattern);
            for (m, a) in a2.iter_mut().enumerate() {
                *a = p[5][(0, m)];
            }
            for (k, &ak) in a1.iter().enumerate() {
                if ak != 0.0 {
                    for (a, w) in a2.iter_mut().zip(p[4].row(k)) {
                        *a += ak * w;
                    }
                }
            }
            norm_relu(&mut a2, &p[6], &p[7], &mut pattern);
            let z: f64 = a2
                .iter()
                .zip(p[8].as_slice())
                .map(|(a, w)| a * w)
                .sum::<f64>()
                + p[9][(0, 0)];
            pattern.push(z > -self.clamp && z < self.clamp);
            out.push(z.clamp(-self.clamp, self.clamp));
        }
        (out, ActivationPattern(pattern))
    }

    /// Records the forward pass on `tape` for an `n × 1` input column.
    pub fn forward_taped(&self, tape: &mut Tape, input: Var) -> (Var, ParamVars) {
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let mut x = input;
        for layer in 0..2 {
            let base = layer * 4;
            let z = tape.affine(x, vars[base], vars[base + 1]);
            let n = tape.layer_norm(z);
            let g = tape.mul_row(n, vars[base + 2]);
            let s = tape.add_row(g, vars[base + 3]);
            x = tape.relu(s);
        }
        let z = tape.affine(x, vars[8], vars[9]);
        let out = tape.clamp(z, -self.clamp, self.clamp);
        (out, ParamVars(vars))
    }
}

fn norm_relu(a: &mut [f64], gain: &Matrix, shift: &Matrix, pattern: &mut Vec<bool>) {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for (k, x) in a.iter_mut().enumerate() {
        let y = (*x - mean) * r * gain[(0, k)] + shift[(0, k)];
        pattern.push(y > 0.0);
        *x = y.max(0.0);
    }
}
