//! Single-layer LSTM regressor trained from scratch with
//! backpropagation-through-time and Adam.
//!
//! Gate order throughout is i, f, o, g (input, forget, output, candidate).
//! All arithmetic is f64 and every source of randomness comes from the
//! crate's seeded PRNG, so (seed, config, data) determines the trained
//! parameters bit for bit.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::SupervisedSet;
use crate::rng::Xoshiro256;
use crate::timeseries::Standardizer;

const MODEL_FORMAT_VERSION: u32 = 1;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// y += self * x
    fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            y[r] += acc;
        }
    }

    /// y += self^T * x
    fn tmul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            for (w, yc) in row.iter().zip(y.iter_mut()) {
                *yc += w * xr;
            }
        }
    }

    /// self += a * x y^T
    fn add_outer(&mut self, a: &[f64], x: &[f64]) {
        for r in 0..self.rows {
            let ar = a[r];
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += ar * xi;
            }
        }
    }
}

/// All trainable parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// Input weights per gate, each H x D.
    pub w: [Mat; 4],
    /// Recurrent weights per gate, each H x H.
    pub u: [Mat; 4],
    /// Gate biases, each length H.
    pub b: [Vec<f64>; 4],
    /// Output head weight (length H) and bias.
    pub head_w: Vec<f64>,
    pub head_b: f64,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_O: usize = 2;
const GATE_G: usize = 3;

impl LstmParams {
    /// Xavier-uniform initialization, forget-gate bias set to 1.0.
    pub fn init(seed: u64, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        if input_dim < 1 || hidden_dim < 1 {
            return Err(Error::InvalidArgument(
                "input and hidden dims must be >= 1".into(),
            ));
        }
        let mut rng = Xoshiro256::for_stage(seed, "lstm-init");
        let xavier = |rows: usize, cols: usize, rng: &mut Xoshiro256| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let mut m = Mat::zeros(rows, cols);
            for v in m.data.iter_mut() {
                *v = rng.uniform(-bound, bound);
            }
            m
        };
        let w = [
            xavier(hidden_dim, input_dim, &mut rng),
            xavier(hidden_dim, input_dim, &mut rng),
            xavier(hidden_dim, input_dim, &mut rng),
            xavier(hidden_dim, input_dim, &mut rng),
        ];
        let u = [
            xavier(hidden_dim, hidden_dim, &mut rng),
            xavier(hidden_dim, hidden_dim, &mut rng),
            xavier(hidden_dim, hidden_dim, &mut rng),
            xavier(hidden_dim, hidden_dim, &mut rng),
        ];
        let b = [
            vec![0.0; hidden_dim],
            vec![1.0; hidden_dim],
            vec![0.0; hidden_dim],
            vec![0.0; hidden_dim],
        ];
        let bound = (6.0 / (hidden_dim + 1) as f64).sqrt();
        let head_w = (0..hidden_dim).map(|_| rng.uniform(-bound, bound)).collect();
        Ok(Self {
            w,
            u,
            b,
            head_w,
            head_b: 0.0,
            input_dim,
            hidden_dim,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Mat::zeros(hidden_dim, input_dim)),
            u: std::array::from_fn(|_| Mat::zeros(hidden_dim, hidden_dim)),
            b: std::array::from_fn(|_| vec![0.0; hidden_dim]),
            head_w: vec![0.0; hidden_dim],
            head_b: 0.0,
            input_dim,
            hidden_dim,
        }
    }

    pub fn num_params(&self) -> usize {
        4 * self.hidden_dim * self.input_dim
            + 4 * self.hidden_dim * self.hidden_dim
            + 4 * self.hidden_dim
            + self.hidden_dim
            + 1
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for m in &self.w {
            out.extend_from_slice(&m.data);
        }
        for m in &self.u {
            out.extend_from_slice(&m.data);
        }
        for v in &self.b {
            out.extend_from_slice(v);
        }
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut pos = 0;
        for m in self.w.iter_mut() {
            let len = m.data.len();
            m.data.copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        for m in self.u.iter_mut() {
            let len = m.data.len();
            m.data.copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        for v in self.b.iter_mut() {
            let len = v.len();
            v.copy_from_slice(&flat[pos..pos + len]);
            pos += len;
        }
        let head_len = self.head_w.len();
        self.head_w.copy_from_slice(&flat[pos..pos + head_len]);
        pos += self.head_w.len();
        self.head_b = flat[pos];
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 42,
            validation_fraction: 0.2,
            patience: 20,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0
            || self.epochs == 0
            || self.batch_size == 0
            || self.patience == 0
            || self.learning_rate <= 0.0
            || self.clip_norm <= 0.0
        {
            return Err(Error::InvalidArgument(
                "train config fields must be positive".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::InvalidArgument(
                "validation fraction must be in (0, 0.5]".into(),
            ));
        }
        Ok(())
    }
}

/// Summary of one training run; MSEs are in standardized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_mse: f64,
    pub validation_mse: f64,
    pub epochs_run: usize,
    pub seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-timestep activations kept for backprop.
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    gates: Vec<[Vec<f64>; 4]>,
    cells: Vec<Vec<f64>>,
    cell_tanhs: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

/// Run the recurrence over a tau x D window from zero initial state.
pub fn forward(params: &LstmParams, window: &[Vec<f64>]) -> Result<(f64, ForwardCache)> {
    let h_dim = params.hidden_dim;
    if window.is_empty() {
        return Err(Error::InvalidArgument("empty window".into()));
    }
    for row in window {
        if row.len() != params.input_dim {
            return Err(Error::InvalidArgument(format!(
                "window row width {} does not match input dim {}",
                row.len(),
                params.input_dim
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite window value".into()));
        }
    }

    let tau = window.len();
    let mut cache = ForwardCache {
        inputs: window.to_vec(),
        gates: Vec::with_capacity(tau),
        cells: Vec::with_capacity(tau),
        cell_tanhs: Vec::with_capacity(tau),
        hiddens: Vec::with_capacity(tau),
    };
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    for x in window {
        let mut pre: [Vec<f64>; 4] = std::array::from_fn(|g| params.b[g].clone());
        for g in 0..4 {
            params.w[g].mul_vec_add(x, &mut pre[g]);
            params.u[g].mul_vec_add(&h, &mut pre[g]);
        }
        let mut gates: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h_dim]);
        for j in 0..h_dim {
            gates[GATE_I][j] = sigmoid(pre[GATE_I][j]);
            gates[GATE_F][j] = sigmoid(pre[GATE_F][j]);
            gates[GATE_O][j] = sigmoid(pre[GATE_O][j]);
            gates[GATE_G][j] = pre[GATE_G][j].tanh();
        }
        let mut c_new = vec![0.0; h_dim];
        let mut ct = vec![0.0; h_dim];
        let mut h_new = vec![0.0; h_dim];
        for j in 0..h_dim {
            c_new[j] = gates[GATE_F][j] * c[j] + gates[GATE_I][j] * gates[GATE_G][j];
            ct[j] = c_new[j].tanh();
            h_new[j] = gates[GATE_O][j] * ct[j];
        }
        cache.gates.push(gates);
        cache.cells.push(c_new.clone());
        cache.cell_tanhs.push(ct);
        cache.hiddens.push(h_new.clone());
        c = c_new;
        h = h_new;
    }
    let mut pred = params.head_b;
    for j in 0..h_dim {
        pred += params.head_w[j] * h[j];
    }
    Ok((pred, cache))
}

fn backward(params: &LstmParams, cache: &ForwardCache, d_pred: f64, grad: &mut LstmParams) {
    let h_dim = params.hidden_dim;
    let tau = cache.hiddens.len();

    let h_last = &cache.hiddens[tau - 1];
    for j in 0..h_dim {
        grad.head_w[j] += d_pred * h_last[j];
    }
    grad.head_b += d_pred;

    let mut dh: Vec<f64> = params.head_w.iter().map(|w| d_pred * w).collect();
    let mut dc = vec![0.0; h_dim];

    for t in (0..tau).rev() {
        let gates = &cache.gates[t];
        let ct = &cache.cell_tanhs[t];
        let c_prev: &[f64] = if t == 0 { &[] } else { &cache.cells[t - 1] };
        let h_prev: &[f64] = if t == 0 { &[] } else { &cache.hiddens[t - 1] };

        let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h_dim]);
        let mut dc_prev = vec![0.0; h_dim];
        for j in 0..h_dim {
            let o = gates[GATE_O][j];
            let i = gates[GATE_I][j];
            let f = gates[GATE_F][j];
            let g = gates[GATE_G][j];
            let d_o = dh[j] * ct[j];
            let d_c = dc[j] + dh[j] * o * (1.0 - ct[j] * ct[j]);
            let d_i = d_c * g;
            let d_g = d_c * i;
            let d_f = if t == 0 { 0.0 } else { d_c * c_prev[j] };
            dc_prev[j] = d_c * f;
            da[GATE_I][j] = d_i * i * (1.0 - i);
            da[GATE_F][j] = d_f * f * (1.0 - f);
            da[GATE_O][j] = d_o * o * (1.0 - o);
            da[GATE_G][j] = d_g * (1.0 - g * g);
        }

        let x = &cache.inputs[t];
        let mut dh_prev = vec![0.0; h_dim];
        for g in 0..4 {
            grad.w[g].add_outer(&da[g], x);
            if t > 0 {
                grad.u[g].add_outer(&da[g], h_prev);
                params.u[g].tmul_vec_add(&da[g], &mut dh_prev);
            }
            for j in 0..h_dim {
                grad.b[g][j] += da[g][j];
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }
}

/// Mean squared error over the batch and its analytic BPTT gradient.
pub fn loss_and_grad(
    params: &LstmParams,
    batch: &[(&[Vec<f64>], f64)],
) -> Result<(f64, LstmParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grad = LstmParams::zeros(params.input_dim, params.hidden_dim);
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (window, target) in batch {
        let (pred, cache) = forward(params, window)?;
        let err = pred - target;
        loss += err * err * inv_n;
        backward(params, &cache, 2.0 * err * inv_n, &mut grad);
    }
    Ok((loss, grad))
}

/// Trained model: parameters plus the standardization needed to map between
/// original and network units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmModel {
    pub format_version: u32,
    pub params: LstmParams,
    pub feature_stats: Vec<Standardizer>,
    pub target_stats: Standardizer,
    pub feature_names: Vec<String>,
    pub tau: usize,
    pub seed: u64,
}

impl LstmModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    /// Standardize a raw-unit window into network units, reordering columns
    /// by name when the caller's order differs from the training order.
    pub fn standardize_window(
        &self,
        window: &[Vec<f64>],
        feature_names: &[String],
    ) -> Result<Vec<Vec<f64>>> {
        if feature_names.len() != self.feature_names.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} features {:?}, got {}",
                self.feature_names.len(),
                self.feature_names,
                feature_names.len()
            )));
        }
        let mut perm = Vec::with_capacity(self.feature_names.len());
        for want in &self.feature_names {
            let pos = feature_names.iter().position(|n| n == want).ok_or_else(|| {
                Error::InvalidArgument(format!("missing feature column {want}"))
            })?;
            perm.push(pos);
        }
        window
            .iter()
            .map(|row| {
                if row.len() != perm.len() {
                    return Err(Error::InvalidArgument("window row width mismatch".into()));
                }
                Ok(perm
                    .iter()
                    .enumerate()
                    .map(|(j, &src)| self.feature_stats[j].apply(row[src]))
                    .collect())
            })
            .collect()
    }

    /// One-step prediction in original units.
    pub fn predict_one(&self, window: &[Vec<f64>], feature_names: &[String]) -> Result<f64> {
        let std_window = self.standardize_window(window, feature_names)?;
        let (pred, _) = forward(&self.params, &std_window)?;
        Ok(self.target_stats.invert(pred))
    }
}

fn standardized_samples(
    set: &SupervisedSet,
    train_end: usize,
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<f64>, Vec<Standardizer>, Standardizer)> {
    let n_features = set.feature_names.len();
    // Stats come from the training split only.
    let mut feature_stats = Vec::with_capacity(n_features);
    for j in 0..n_features {
        let values: Vec<Option<f64>> = set.samples[..train_end]
            .iter()
            .flat_map(|s| s.window.iter().map(move |row| Some(row[j])))
            .collect();
        feature_stats.push(Standardizer::fit_lenient(&values).map_err(|_| {
            Error::DegenerateColumn(set.feature_names[j].clone())
        })?);
    }
    let target_values: Vec<Option<f64>> = set.samples[..train_end]
        .iter()
        .map(|s| Some(s.target))
        .collect();
    let target_stats = Standardizer::fit(&target_values)
        .map_err(|_| Error::DegenerateColumn(set.target_name.clone()))?;

    let windows: Vec<Vec<Vec<f64>>> = set
        .samples
        .iter()
        .map(|s| {
            s.window
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| feature_stats[j].apply(*v))
                        .collect()
                })
                .collect()
        })
        .collect();
    let targets: Vec<f64> = set
        .samples
        .iter()
        .map(|s| target_stats.apply(s.target))
        .collect();
    Ok((windows, targets, feature_stats, target_stats))
}

/// Train on a supervised set with a chronological validation split, Adam,
/// gradient clipping, and early stopping on validation MSE.
pub fn train(set: &SupervisedSet, config: &TrainConfig) -> Result<(LstmModel, FitReport)> {
    config.validate()?;
    let n = set.len();
    if n < 50 {
        return Err(Error::EmptyDataset(format!(
            "need >= 50 samples to train, got {n}"
        )));
    }
    let n_val = ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1);
    let train_end = n - n_val;

    let (windows, targets, feature_stats, target_stats) = standardized_samples(set, train_end)?;

    let mut params = LstmParams::init(config.seed, set.feature_names.len(), config.hidden_dim)?;
    let n_params = params.num_params();
    let mut flat = params.flatten();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut adam_t = 0usize;

    let mut shuffle_rng = Xoshiro256::for_stage(config.seed, "lstm-shuffle");
    let mut order: Vec<usize> = (0..train_end).collect();

    let eval = |params: &LstmParams, range: std::ops::Range<usize>| -> Result<f64> {
        let mut mse = 0.0;
        let count = range.len();
        for i in range {
            let (pred, _) = forward(params, &windows[i])?;
            mse += (pred - targets[i]).powi(2);
        }
        Ok(mse / count as f64)
    };

    let mut best_flat = flat.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;
    let mut last_train_mse = f64::NAN;

    for epoch in 0..config.epochs {
        epochs_run = epoch + 1;
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[Vec<f64>], f64)> = chunk
                .iter()
                .map(|&i| (windows[i].as_slice(), targets[i]))
                .collect();
            let (loss, grad) = loss_and_grad(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_loss += loss;
            n_batches += 1;

            let mut g = grad.flatten();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let scale = config.clip_norm / norm;
                for x in g.iter_mut() {
                    *x *= scale;
                }
            }
            adam_t += 1;
            let bc1 = 1.0 - beta1.powi(adam_t as i32);
            let bc2 = 1.0 - beta2.powi(adam_t as i32);
            for i in 0..n_params {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                flat[i] -= config.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
            params.assign_from_flat(&flat);
        }
        last_train_mse = epoch_loss / n_batches as f64;

        let val_mse = eval(&params, train_end..n)?;
        if !val_mse.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        if val_mse < best_val {
            best_val = val_mse;
            best_flat = flat.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    params.assign_from_flat(&best_flat);
    let model = LstmModel {
        format_version: MODEL_FORMAT_VERSION,
        params,
        feature_stats,
        target_stats,
        feature_names: set.feature_names.clone(),
        tau: set.tau,
        seed: config.seed,
    };
    let report = FitReport {
        train_mse: last_train_mse,
        validation_mse: best_val,
        epochs_run,
        seed: config.seed,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{make_windows, SupervisedSet};
    use crate::timeseries::{SeriesFrame, TimeIndex};
    use chrono::NaiveDate;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn init_deterministic() {
        let a = LstmParams::init(5, 3, 4).unwrap();
        let b = LstmParams::init(5, 3, 4).unwrap();
        assert_eq!(a, b);
        let c = LstmParams::init(6, 3, 4).unwrap();
        assert_ne!(a.flatten(), c.flatten());
        assert!(a.b[GATE_F].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn forward_zero_network() {
        let params = LstmParams::zeros(2, 3);
        let window = vec![vec![0.5, -0.3], vec![1.0, 0.2]];
        let (pred, _) = forward(&params, &window).unwrap();
        assert_eq!(pred, 0.0);
    }

    #[test]
    fn forward_zero_input_depends_only_on_biases() {
        let mut a = LstmParams::init(1, 2, 3).unwrap();
        let mut b = a.clone();
        // different input weights, same biases
        for m in b.w.iter_mut() {
            for v in m.data.iter_mut() {
                *v *= -2.5;
            }
        }
        let window = vec![vec![0.0, 0.0]; 4];
        let (pa, _) = forward(&a, &window).unwrap();
        let (pb, _) = forward(&b, &window).unwrap();
        assert_eq!(pa, pb);
        // but biases do matter
        a.b[GATE_G][0] += 0.7;
        let (pc, _) = forward(&a, &window).unwrap();
        assert_ne!(pa, pc);
    }

    #[test]
    fn forward_matches_scalar_trace() {
        // H=1, D=1, tau=2, hand-set weights; independently traced recurrence.
        let mut p = LstmParams::zeros(1, 1);
        p.w[GATE_I].data[0] = 0.3;
        p.w[GATE_F].data[0] = -0.2;
        p.w[GATE_O].data[0] = 0.1;
        p.w[GATE_G].data[0] = 0.5;
        p.u[GATE_I].data[0] = 0.05;
        p.u[GATE_F].data[0] = 0.04;
        p.u[GATE_O].data[0] = -0.03;
        p.u[GATE_G].data[0] = 0.02;
        p.b[GATE_I][0] = 0.01;
        p.b[GATE_F][0] = 1.0;
        p.b[GATE_O][0] = -0.01;
        p.b[GATE_G][0] = 0.02;
        p.head_w[0] = 2.0;
        p.head_b = -0.1;

        let x = [0.4, -0.7];
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for xt in x {
            let i = sig(0.3 * xt + 0.05 * h + 0.01);
            let f = sig(-0.2 * xt + 0.04 * h + 1.0);
            let o = sig(0.1 * xt - 0.03 * h - 0.01);
            let g = (0.5 * xt + 0.02 * h + 0.02).tanh();
            c = f * c + i * g;
            h = o * c.tanh();
        }
        let expect = 2.0 * h - 0.1;

        let window = vec![vec![0.4], vec![-0.7]];
        let (pred, _) = forward(&p, &window).unwrap();
        assert!((pred - expect).abs() < 1e-12, "pred={pred} expect={expect}");
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = LstmParams::zeros(2, 2);
        assert!(forward(&p, &[vec![1.0]]).is_err());
        assert!(forward(&p, &[vec![f64::NAN, 0.0]]).is_err());
    }

    fn finite_diff_check(seed: u64, d_in: usize, h: usize, tau: usize) -> f64 {
        let params = LstmParams::init(seed, d_in, h).unwrap();
        let mut rng = Xoshiro256::seed_from_u64(seed ^ 0xabcdef);
        let window: Vec<Vec<f64>> = (0..tau)
            .map(|_| (0..d_in).map(|_| rng.normal()).collect())
            .collect();
        let target = rng.normal();
        let batch = vec![(window.as_slice(), target)];
        let (_, grad) = loss_and_grad(&params, &batch).unwrap();
        let analytic = grad.flatten();

        let flat = params.flatten();
        let step = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = params.clone();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += step;
            probe.assign_from_flat(&plus);
            let (lp, _) = loss_and_grad(&probe, &batch).unwrap();
            let mut minus = flat.clone();
            minus[i] -= step;
            probe.assign_from_flat(&minus);
            let (lm, _) = loss_and_grad(&probe, &batch).unwrap();
            let fd = (lp - lm) / (2.0 * step);
            let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, d_in, h, tau) in [(1, 1, 1, 1), (2, 2, 3, 4), (3, 3, 4, 5)] {
            let worst = finite_diff_check(seed, d_in, h, tau);
            assert!(worst < 1e-4, "seed {seed}: worst rel err {worst}");
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        // zero network predicts 0; target 0 => loss 0, gradient 0.
        let params = LstmParams::zeros(2, 3);
        let window = vec![vec![0.3, -0.1], vec![0.2, 0.9]];
        let batch = vec![(window.as_slice(), 0.0)];
        let (loss, grad) = loss_and_grad(&params, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_batch_matches_single() {
        let params = LstmParams::init(9, 2, 3).unwrap();
        let window = vec![vec![0.3, -0.1], vec![0.2, 0.9]];
        let single = vec![(window.as_slice(), 0.5)];
        let double = vec![(window.as_slice(), 0.5), (window.as_slice(), 0.5)];
        let (l1, g1) = loss_and_grad(&params, &single).unwrap();
        let (l2, g2) = loss_and_grad(&params, &double).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn sine_set(n: usize, tau: usize) -> SupervisedSet {
        let idx = TimeIndex::span(d("2019-01-01"), d("2019-01-01") + chrono::Days::new(n as u64 - 1))
            .unwrap();
        let mut frame = SeriesFrame::new(idx);
        frame
            .insert_column(
                "y",
                (0..n)
                    .map(|t| Some((t as f64 * 0.3).sin() + 2.0))
                    .collect(),
            )
            .unwrap();
        make_windows(&frame, "y", &[], tau).unwrap()
    }

    #[test]
    fn trains_noiseless_sine() {
        let set = sine_set(500, 7);
        let config = TrainConfig {
            hidden_dim: 16,
            epochs: 120,
            learning_rate: 5e-3,
            patience: 20,
            ..TrainConfig::default()
        };
        let (_, report) = train(&set, &config).unwrap();
        assert!(
            report.validation_mse < 0.01,
            "validation MSE {}",
            report.validation_mse
        );
    }

    #[test]
    fn training_deterministic() {
        let set = sine_set(120, 4);
        let config = TrainConfig {
            hidden_dim: 6,
            epochs: 10,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(&set, &config).unwrap();
        let (m2, r2) = train(&set, &config).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1.params.flatten(), m2.params.flatten());
    }

    #[test]
    fn constant_target_rejected() {
        let idx = TimeIndex::span(d("2019-01-01"), d("2019-04-10")).unwrap();
        let n = idx.len();
        let mut frame = SeriesFrame::new(idx);
        frame
            .insert_column("y", vec![Some(5.0); n])
            .unwrap();
        let set = make_windows(&frame, "y", &[], 3).unwrap();
        assert!(matches!(
            train(&set, &TrainConfig::default()),
            Err(Error::DegenerateColumn(_))
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let set = sine_set(20, 3);
        assert!(matches!(
            train(&set, &TrainConfig::default()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn predict_one_reorders_by_name() {
        let n = 200;
        let idx = TimeIndex::span(d("2019-01-01"), d("2019-01-01") + chrono::Days::new(n - 1)).unwrap();
        let mut frame = SeriesFrame::new(idx);
        frame
            .insert_column(
                "y",
                (0..n).map(|t| Some((t as f64 * 0.2).sin())).collect(),
            )
            .unwrap();
        frame
            .insert_column(
                "z",
                (0..n).map(|t| Some((t as f64 * 0.11).cos() * 3.0)).collect(),
            )
            .unwrap();
        let set = make_windows(&frame, "y", &["z".into()], 3).unwrap();
        let config = TrainConfig {
            hidden_dim: 4,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (model, _) = train(&set, &config).unwrap();

        let window = &set.samples[10].window;
        let canonical = model
            .predict_one(window, &["y".into(), "z".into()])
            .unwrap();
        let permuted: Vec<Vec<f64>> = window.iter().map(|r| vec![r[1], r[0]]).collect();
        let via_names = model
            .predict_one(&permuted, &["z".into(), "y".into()])
            .unwrap();
        assert_eq!(canonical, via_names);

        assert!(model.predict_one(window, &["y".into()]).is_err());
        let err = model
            .predict_one(window, &["y".into(), "nope".into()])
            .unwrap_err();
        assert!(err.to_string().contains("z"), "{err}");
    }

    #[test]
    fn scale_equivariance() {
        let base = sine_set(200, 4);
        let mut scaled = base.clone();
        for s in scaled.samples.iter_mut() {
            s.target *= 10.0;
            for row in s.window.iter_mut() {
                row[0] *= 10.0;
            }
        }
        let config = TrainConfig {
            hidden_dim: 6,
            epochs: 15,
            ..TrainConfig::default()
        };
        let (m1, _) = train(&base, &config).unwrap();
        let (m2, _) = train(&scaled, &config).unwrap();
        let w = &base.samples[50].window;
        let w10: Vec<Vec<f64>> = w.iter().map(|r| vec![r[0] * 10.0]).collect();
        let p1 = m1.predict_one(w, &base.feature_names).unwrap();
        let p2 = m2.predict_one(&w10, &base.feature_names).unwrap();
        assert!(
            ((p2 - 10.0 * p1) / (10.0 * p1)).abs() < 1e-6,
            "p1={p1} p2={p2}"
        );
    }

    #[test]
    fn model_round_trips_through_json() {
        let set = sine_set(120, 3);
        let config = TrainConfig {
            hidden_dim: 4,
            epochs: 2,
            ..TrainConfig::default()
        };
        let (model, _) = train(&set, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = LstmModel::load(&path).unwrap();
        assert_eq!(model.params, loaded.params);
        assert_eq!(model.feature_names, loaded.feature_names);
    }
}
