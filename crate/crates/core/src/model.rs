//! Neuron parameters, network topology and the E–I balanced weight sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid neuron parameters: {0}")]
    InvalidParams(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid weight sampler arguments: {0}")]
    InvalidWeightArgs(String),
    #[error("network JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Bounded deterministic input current `b(t)`.
///
/// Experiments use one constant per layer; `Steps` covers the piecewise
/// constant drives needed by the deterministic event integrator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Drive {
    Constant(f64),
    /// `(start_time, value)` segments; starts must begin at 0 and increase.
    Steps(Vec<(f64, f64)>),
}

impl Drive {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Drive::Constant(b) => *b,
            Drive::Steps(segs) => {
                let mut v = segs.first().map(|s| s.1).unwrap_or(0.0);
                for &(start, value) in segs {
                    if t >= start {
                        v = value;
                    } else {
                        break;
                    }
                }
                v
            }
        }
    }

    /// First drive breakpoint strictly after `t`, if any.
    pub fn next_breakpoint_after(&self, t: f64) -> Option<f64> {
        match self {
            Drive::Constant(_) => None,
            Drive::Steps(segs) => segs.iter().map(|s| s.0).find(|&s| s > t),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if let Drive::Steps(segs) = self {
            if segs.is_empty() {
                return Err(ModelError::InvalidParams("empty step drive".into()));
            }
            if segs[0].0 != 0.0 {
                return Err(ModelError::InvalidParams(
                    "step drive must start at t=0".into(),
                ));
            }
            if segs.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(ModelError::InvalidParams(
                    "step drive times must be strictly increasing".into(),
                ));
            }
            if segs.iter().any(|s| !s.0.is_finite() || !s.1.is_finite()) {
                return Err(ModelError::InvalidParams("non-finite step drive".into()));
            }
        }
        Ok(())
    }
}

/// Per-neuron membrane/synapse parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub tau_v: f64,
    pub tau_c: f64,
    pub v_th: f64,
    pub v_r: f64,
    pub sigma: f64,
    pub drive: Drive,
}

impl NeuronParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.tau_v > 0.0 && self.tau_v.is_finite()) {
            return Err(ModelError::InvalidParams("tau_v must be > 0".into()));
        }
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(ModelError::InvalidParams("tau_c must be > 0".into()));
        }
        if !(self.v_r < self.v_th) {
            return Err(ModelError::InvalidParams("v_r must be < v_th".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(ModelError::InvalidParams("sigma must be >= 0".into()));
        }
        if !self.v_th.is_finite() || !self.v_r.is_finite() {
            return Err(ModelError::InvalidParams("non-finite levels".into()));
        }
        self.drive.validate()
    }
}

/// Threshold current `I_th = (V_th - V_r) / tau_v`: the current at which the
/// voltage drift at threshold vanishes.
pub fn threshold_current(p: &NeuronParams) -> f64 {
    (p.v_th - p.v_r) / p.tau_v
}

/// A network: neuron population, signed dense weights and optional layering.
///
/// `weights[i][j]` is the jump added to neuron `i`'s current when neuron `j`
/// spikes. Feedforward networks carry `layer_of` (0-based layer indices) and
/// only next-layer blocks may be nonzero; recurrent networks leave `layer_of`
/// empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_neurons: usize,
    pub layer_of: Option<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
    pub params: Vec<NeuronParams>,
    pub excitatory_mask: Vec<bool>,
}

impl NetworkSpec {
    /// Single isolated neuron; convenient for oracles and warm-up tests.
    pub fn single(params: NeuronParams) -> Result<Self, ModelError> {
        let spec = NetworkSpec {
            n_neurons: 1,
            layer_of: Some(vec![0]),
            weights: vec![vec![0.0]],
            params: vec![params],
            excitatory_mask: vec![true],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Recurrent network from an explicit weight matrix.
    pub fn recurrent(
        params: Vec<NeuronParams>,
        weights: Vec<Vec<f64>>,
        excitatory_mask: Vec<bool>,
    ) -> Result<Self, ModelError> {
        let spec = NetworkSpec {
            n_neurons: params.len(),
            layer_of: None,
            weights,
            params,
            excitatory_mask,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_feedforward(&self) -> bool {
        self.layer_of.is_some()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_of
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(1)
    }

    /// Neurons belonging to the first `depth` layers (the whole network when
    /// no layering is present).
    pub fn prefix_neurons(&self, depth: usize) -> Vec<usize> {
        match &self.layer_of {
            Some(layers) => (0..self.n_neurons).filter(|&i| layers[i] < depth).collect(),
            None => (0..self.n_neurons).collect(),
        }
    }

    pub fn neurons_in_layer(&self, layer: usize) -> Vec<usize> {
        match &self.layer_of {
            Some(layers) => (0..self.n_neurons)
                .filter(|&i| layers[i] == layer)
                .collect(),
            None => (0..self.n_neurons).collect(),
        }
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|row| row.iter())
            .fold(0.0f64, |m, w| m.max(w.abs()))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_neurons;
        if n == 0 {
            return Err(ModelError::InvalidNetwork("empty network".into()));
        }
        if self.params.len() != n || self.excitatory_mask.len() != n || self.weights.len() != n {
            return Err(ModelError::InvalidNetwork("field lengths disagree".into()));
        }
        if self.weights.iter().any(|row| row.len() != n) {
            return Err(ModelError::InvalidNetwork("weight matrix not square".into()));
        }
        if self
            .weights
            .iter()
            .any(|row| row.iter().any(|w| !w.is_finite()))
        {
            return Err(ModelError::InvalidNetwork("non-finite weight".into()));
        }
        for p in &self.params {
            p.validate()?;
        }
        if let Some(layers) = &self.layer_of {
            if layers.len() != n {
                return Err(ModelError::InvalidNetwork("layer_of length".into()));
            }
            for (i, row) in self.weights.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    if w != 0.0 && layers[i] != layers[j] + 1 {
                        return Err(ModelError::InvalidNetwork(format!(
                            "feedforward violation: weight {j}->{i} crosses layers {} -> {}",
                            layers[j], layers[i]
                        )));
                    }
                }
            }
        }
        // Column signs must agree with the presynaptic E/I label.
        for j in 0..n {
            for i in 0..n {
                let w = self.weights[i][j];
                if self.excitatory_mask[j] && w < 0.0 {
                    return Err(ModelError::InvalidNetwork(format!(
                        "excitatory column {j} has negative entry"
                    )));
                }
                if !self.excitatory_mask[j] && w > 0.0 {
                    return Err(ModelError::InvalidNetwork(format!(
                        "inhibitory column {j} has positive entry"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and validate a network document.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let spec: NetworkSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Arguments for the E–I balanced Bernoulli weight sampler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EiWeights {
    pub p_conn: f64,
    pub c_w: f64,
    pub n_exc: usize,
    pub n_inh: usize,
}

/// Sample feedforward E–I weights between consecutive layers.
///
/// Each entry is independently nonzero with probability `p_conn`. Excitatory
/// presynaptic entries equal `c_w / sqrt(n p_conn)`; inhibitory entries equal
/// `-(n_exc/n_inh) c_w / sqrt(n p_conn)`, where `n` is the presynaptic layer
/// width. The first `n_exc` neurons of each layer are excitatory.
pub fn sample_ei_weights<R: Rng>(
    widths: &[usize],
    p_conn: f64,
    c_w: f64,
    n_exc: usize,
    n_inh: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, ModelError> {
    if widths.is_empty() {
        return Err(ModelError::InvalidWeightArgs("no layers".into()));
    }
    if !(p_conn > 0.0 && p_conn <= 1.0) {
        return Err(ModelError::InvalidWeightArgs(
            "p_conn must lie in (0, 1]".into(),
        ));
    }
    if !(c_w.is_finite() && c_w >= 0.0) {
        return Err(ModelError::InvalidWeightArgs("c_w must be >= 0".into()));
    }
    for &w in widths {
        if w != n_exc + n_inh {
            return Err(ModelError::InvalidWeightArgs(format!(
                "layer width {w} != n_exc + n_inh = {}",
                n_exc + n_inh
            )));
        }
    }
    if n_inh == 0 && n_exc == 0 {
        return Err(ModelError::InvalidWeightArgs("empty layer".into()));
    }

    let n_total: usize = widths.iter().sum();
    let mut weights = vec![vec![0.0; n_total]; n_total];
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0usize, |acc, &w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();

    for l in 1..widths.len() {
        let n_pre = widths[l - 1];
        let scale = c_w / (n_pre as f64 * p_conn).sqrt();
        for i in 0..widths[l] {
            let post = offsets[l] + i;
            for j in 0..n_pre {
                let pre = offsets[l - 1] + j;
                let connected = rng.random_bool(p_conn);
                if !connected {
                    continue;
                }
                let excitatory = j < n_exc;
                weights[post][pre] = if excitatory {
                    scale
                } else {
                    // Unreachable when n_inh == 0: every presynaptic index is
                    // then excitatory.
                    -(n_exc as f64 / n_inh as f64) * scale
                };
            }
        }
    }
    Ok(weights)
}

/// Assemble a layered feedforward network with uniform width.
///
/// `layer_params` supplies one parameter set per layer; layer 0 receives
/// external input only (its incoming weight block is identically zero).
pub fn build_feedforward(
    depth: usize,
    width: usize,
    layer_params: &[NeuronParams],
    ei: &EiWeights,
    rng: &mut impl Rng,
) -> Result<NetworkSpec, ModelError> {
    if depth < 1 || width < 1 {
        return Err(ModelError::InvalidNetwork(
            "depth and width must be >= 1".into(),
        ));
    }
    if layer_params.len() != depth {
        return Err(ModelError::InvalidNetwork(format!(
            "expected {depth} layer parameter sets, got {}",
            layer_params.len()
        )));
    }
    let widths = vec![width; depth];
    let weights = if depth == 1 {
        vec![vec![0.0; width]; width]
    } else {
        sample_ei_weights(&widths, ei.p_conn, ei.c_w, ei.n_exc, ei.n_inh, rng)?
    };
    if depth == 1 && width != ei.n_exc + ei.n_inh {
        return Err(ModelError::InvalidWeightArgs(format!(
            "layer width {width} != n_exc + n_inh = {}",
            ei.n_exc + ei.n_inh
        )));
    }

    let mut params = Vec::with_capacity(depth * width);
    let mut layer_of = Vec::with_capacity(depth * width);
    let mut excitatory_mask = Vec::with_capacity(depth * width);
    for (l, p) in layer_params.iter().enumerate() {
        p.validate()?;
        for k in 0..width {
            params.push(p.clone());
            layer_of.push(l);
            excitatory_mask.push(k < ei.n_exc);
        }
    }

    let spec = NetworkSpec {
        n_neurons: depth * width,
        layer_of: Some(layer_of),
        weights,
        params,
        excitatory_mask,
    };
    spec.validate()?;
    Ok(spec)
}
