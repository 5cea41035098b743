//! Fully connected Q-network with ReLU hidden layers and a tanh output layer.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    /// `weights[i·outputs + o]` connects input `i` to output `o`.
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// `out = b + Wᵀx`, accumulated row by row so the inner loop is contiguous.
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.outputs)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

/// A multilayer perceptron `x ↦ tanh(W_L·relu(…relu(W_1·x + b_1)…) + b_L)`.
///
/// The same type doubles as the gradient and optimizer-moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub(crate) layers: Vec<Dense>,
}

/// Activations of one forward pass, input included.
pub(crate) struct Trace {
    pub(crate) activations: Vec<Vec<f64>>,
}

impl QNetwork {
    /// All-zero network with the given layer widths (input first).
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        Ok(Self {
            layers: layer_dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// Zero biases, weights uniform in `±sqrt(6/fan_in)`.
    pub fn random(layer_dims: &[usize], rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(layer_dims)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// `[2K, 200, 100, (K−1)!!]` for `k` users.
    pub fn dims_for_users(k: usize) -> Result<Vec<usize>> {
        Ok(vec![2 * k, 200, 100, crate::grouping::enumerate_pairings(k)?])
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Weight from input `i` to unit `o` of layer `layer`.
    pub fn weight(&self, layer: usize, o: usize, i: usize) -> f64 {
        let l = &self.layers[layer];
        l.weights[i * l.outputs + o]
    }

    pub fn set_weight(&mut self, layer: usize, o: usize, i: usize, value: f64) {
        let l = &mut self.layers[layer];
        l.weights[i * l.outputs + o] = value;
    }

    pub fn bias(&self, layer: usize, o: usize) -> f64 {
        self.layers[layer].biases[o]
    }

    pub fn set_bias(&mut self, layer: usize, o: usize, value: f64) {
        self.layers[layer].biases[o] = value;
    }

    /// All parameters as flat slices, weights then biases, layer by layer.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(activations.last().expect("input pushed"), &mut z);
            if li == last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        Trace { activations }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&NetworkFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<NetworkFile>(text)?.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::domain(format!("invalid layer widths {layer_dims:?}")));
    }
    Ok(())
}

/// Q-values for input `x`.
pub fn forward(net: &QNetwork, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::domain(format!(
            "input has length {}, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    Ok(net.trace(x).activations.pop().expect("output layer"))
}

/// One regression sample: input, action whose Q-value is fitted, target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Mean squared error of `Q(x_i, a_i)` against `y_i`, and its gradient.
pub fn loss_and_gradients(net: &QNetwork, batch: &[Sample<'_>]) -> Result<(f64, QNetwork)> {
    if batch.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let mut grads = QNetwork::zeros(&net.layer_dims())?;
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let last = net.layers.len() - 1;
    let mut delta = Vec::new();
    let mut delta_prev = Vec::new();

    for sample in batch {
        if sample.x.len() != net.input_dim() || sample.action >= net.output_dim() {
            return Err(Error::domain("sample does not match the network shape"));
        }
        let trace = net.trace(sample.x);
        let q = trace.activations[last + 1][sample.action];
        let residual = sample.target - q;
        loss += residual * residual;

        // only the fitted output unit carries error
        delta.clear();
        delta.resize(net.layers[last].outputs, 0.0);
        delta[sample.action] = -2.0 * residual / n * (1.0 - q * q);

        for li in (0..=last).rev() {
            let layer = &net.layers[li];
            let input = &trace.activations[li];
            let g = &mut grads.layers[li];
            for (gb, d) in g.biases.iter_mut().zip(&delta) {
                *gb += d;
            }
            let sparse = li == last;
            for (xi, grow) in input.iter().zip(g.weights.chunks_exact_mut(layer.outputs)) {
                if *xi == 0.0 {
                    continue;
                }
                if sparse {
                    grow[sample.action] += xi * delta[sample.action];
                } else {
                    for (gw, d) in grow.iter_mut().zip(&delta) {
                        *gw += xi * d;
                    }
                }
            }
            if li == 0 {
                break;
            }
            delta_prev.clear();
            for (xi, wrow) in input.iter().zip(layer.weights.chunks_exact(layer.outputs)) {
                // relu'(z) = 1 iff the post-activation is positive
                let back = if *xi > 0.0 {
                    if sparse {
                        wrow[sample.action] * delta[sample.action]
                    } else {
                        dot(wrow, &delta)
                    }
                } else {
                    0.0
                };
                delta_prev.push(back);
            }
            std::mem::swap(&mut delta, &mut delta_prev);
        }
    }
    Ok((loss / n, grads))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// On-disk form: row-major `outputs × inputs` weight matrices.
#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl From<&QNetwork> for NetworkFile {
    fn from(net: &QNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerFile {
                weights: (0..l.outputs)
                    .map(|o| (0..l.inputs).map(|i| l.weights[i * l.outputs + o]).collect())
                    .collect(),
                biases: l.biases.clone(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            layer_dims: net.layer_dims(),
            layers,
        }
    }
}

impl TryFrom<NetworkFile> for QNetwork {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::domain(format!("unsupported network format {}", file.format_version)));
        }
        let mut net = QNetwork::zeros(&file.layer_dims)?;
        if file.layers.len() != net.layers.len() {
            return Err(Error::domain("layer count does not match layer_dims"));
        }
        for (li, lf) in file.layers.into_iter().enumerate() {
            let l = &mut net.layers[li];
            if lf.biases.len() != l.outputs || lf.weights.len() != l.outputs || lf.weights.iter().any(|r| r.len() != l.inputs) {
                return Err(Error::domain(format!("layer {li} has the wrong shape")));
            }
            for (o, row) in lf.weights.iter().enumerate() {
                for (i, &w) in row.iter().enumerate() {
                    l.weights[i * l.outputs + o] = w;
                }
            }
            l.biases = lf.biases;
        }
        if !net.is_finite() {
            return Err(Error::domain("network file contains non-finite parameters"));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// 2-2-2-2 net with hand-picked parameters.
    fn toy() -> QNetwork {
        let mut net = QNetwork::zeros(&[2, 2, 2, 2]).unwrap();
        let w = [
            [[0.5, -0.3], [0.8, 0.2]],
            [[1.0, -1.0], [0.4, 0.6]],
            [[0.7, 0.1], [-0.2, 0.9]],
        ];
        let b = [[0.1, -0.2], [0.0, 0.3], [-0.1, 0.05]];
        for l in 0..3 {
            for o in 0..2 {
                for i in 0..2 {
                    net.set_weight(l, o, i, w[l][o][i]);
                }
                net.set_bias(l, o, b[l][o]);
            }
        }
        net
    }

    /// Matrix-by-matrix evaluation with out×in matrices.
    fn hand_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let dims = net.layer_dims();
        for l in 0..dims.len() - 1 {
            let mut z = vec![0.0; dims[l + 1]];
            for (o, zo) in z.iter_mut().enumerate() {
                *zo = net.bias(l, o) + (0..dims[l]).map(|i| net.weight(l, o, i) * a[i]).sum::<f64>();
            }
            a = if l == dims.len() - 2 {
                z.iter().map(|v| v.tanh()).collect()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&QNetwork::dims_for_users(6).unwrap()).unwrap();
        let q = forward(&net, &[0.3; 12]).unwrap();
        assert_eq!(q, vec![0.0; 15]);
        assert!(forward(&net, &[0.0; 11]).is_err());
    }

    #[test]
    fn toy_forward_matches_hand_evaluation() {
        let net = toy();
        let x = [0.6, -1.2];
        // first layer: z = [0.5·0.6 − 0.3·(−1.2) + 0.1, 0.8·0.6 + 0.2·(−1.2) − 0.2] = [0.76, 0.04]
        let q = forward(&net, &x).unwrap();
        let h = hand_forward(&net, &x);
        assert_eq!(q.len(), 2);
        for (a, b) in q.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
        let a1 = [0.76f64, 0.04];
        let a2 = [(a1[0] - a1[1]).max(0.0), (0.4 * a1[0] + 0.6 * a1[1] + 0.3).max(0.0)];
        let out0 = (0.7 * a2[0] + 0.1 * a2[1] - 0.1).tanh();
        assert!((q[0] - out0).abs() < 1e-12);
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let mut r = rng::stream(1, rng::streams::INIT);
        let net = QNetwork::random(&[12, 200, 100, 15], &mut r).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) * 0.7).collect();
        for q in forward(&net, &x).unwrap() {
            assert!(q > -1.0 && q < 1.0);
        }
    }

    #[test]
    fn exact_fit_has_zero_loss_and_gradient() {
        let net = toy();
        let x = [0.6, -1.2];
        let q = forward(&net, &x).unwrap();
        let batch = [Sample { x: &x, action: 1, target: q[1] }];
        let (loss, grads) = loss_and_gradients(&net, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.params().iter().all(|s| s.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn loss_scales_quadratically() {
        let net = toy();
        let xs = [[0.6, -1.2], [0.1, 0.4]];
        let q: Vec<Vec<f64>> = xs.iter().map(|x| forward(&net, x).unwrap()).collect();
        let build = |c: f64| -> f64 {
            let batch: Vec<Sample> = xs
                .iter()
                .zip(&q)
                .enumerate()
                .map(|(k, (x, qk))| Sample {
                    x,
                    action: k,
                    target: qk[k] + c * (0.1 + k as f64 * 0.2),
                })
                .collect();
            loss_and_gradients(&net, &batch).unwrap().0
        };
        let base = build(1.0);
        assert!((build(3.0) - 9.0 * base).abs() <= 1e-12 * base);
    }

    #[test]
    fn toy_gradients_match_finite_differences() {
        let net = toy();
        let xs = [[0.6, -1.2], [0.1, 0.4], [0.9, 0.5]];
        let batch: Vec<Sample> = xs
            .iter()
            .enumerate()
            .map(|(k, x)| Sample { x, action: k % 2, target: 0.3 - 0.2 * k as f64 })
            .collect();
        let (_, grads) = loss_and_gradients(&net, &batch).unwrap();
        let h = 1e-5;
        let mut probe = net.clone();
        let flat_grads: Vec<f64> = grads.params().iter().flat_map(|s| s.iter().copied()).collect();
        let mut k = 0;
        for s in 0..net.params().len() {
            for j in 0..net.params()[s].len() {
                let orig = net.params()[s][j];
                probe.params_mut()[s][j] = orig + h;
                let up = loss_and_gradients(&probe, &batch).unwrap().0;
                probe.params_mut()[s][j] = orig - h;
                let down = loss_and_gradients(&probe, &batch).unwrap().0;
                probe.params_mut()[s][j] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = flat_grads[k];
                assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6), "param {k}: {an} vs {fd}");
                k += 1;
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = rng::stream(2, rng::streams::INIT);
        let net = QNetwork::random(&[4, 5, 3], &mut r).unwrap();
        let text = net.to_json().unwrap();
        assert_eq!(QNetwork::from_json(&text).unwrap(), net);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["format_version"], 1);
        assert_eq!(value["layer_dims"], serde_json::json!([4, 5, 3]));
        // row-major out×in
        assert_eq!(value["layers"][0]["weights"][1][2].as_f64().unwrap(), net.weight(0, 1, 2));
        assert!(QNetwork::from_json(&text.replace("\"format_version\":1", "\"format_version\":9")).is_err());
    }

    #[test]
    fn init_bounds() {
        let mut r = rng::stream(3, rng::streams::INIT);
        let net = QNetwork::random(&[12, 200, 100, 15], &mut r).unwrap();
        for (l, fan_in) in [12.0f64, 200.0, 100.0].iter().enumerate() {
            let bound = (6.0 / fan_in).sqrt();
            assert!(net.layers[l].weights.iter().all(|w| w.abs() <= bound));
            assert!(net.layers[l].biases.iter().all(|&b| b == 0.0));
        }
        assert_eq!(net.num_parameters(), 12 * 200 + 200 + 200 * 100 + 100 + 100 * 15 + 15);
    }
}
