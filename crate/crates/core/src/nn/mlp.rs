//! Multi-layer perceptron with batched forward pass and exact reverse-mode
//! gradients.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if let Activation::Tanh = self {
            z.mapv_inplace(tanh);
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the layer output.
    fn backprop(self, delta: &mut Array2<f64>, out: &Array2<f64>) {
        if let Activation::Tanh = self {
            ndarray::Zip::from(delta).and(out).for_each(|d, &y| *d *= 1.0 - y * y);
        }
    }
}

/// Branch-free `tanh` within a few ulps (absolute) of libm. The loop over a
/// layer's outputs vectorizes, which the libm routine does not.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs().min(20.0);
    (1.0 - 2.0 / (exp_nonneg(2.0 * a) + 1.0)).copysign(x)
}

/// `exp(y)` for `0 <= y <= 40`: round-to-nearest range reduction by `ln 2`
/// and a degree-12 Taylor polynomial on `|r| <= ln 2 / 2`.
#[inline(always)]
fn exp_nonneg(y: f64) -> f64 {
    const ROUND: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const COEFFS: [f64; 13] = [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    let shifted = y * std::f64::consts::LOG2_E + ROUND;
    let k = shifted - ROUND;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = COEFFS[0];
    for c in &COEFFS[1..] {
        p = p * r + c;
    }
    // the low mantissa bits of `shifted` hold k
    p * f64::from_bits(shifted.to_bits().wrapping_add(1023) << 52)
}

/// Affine layer `y = act(x W + b)` with `W` stored as `inputs x outputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward_batch`]; `acts[0]` is the input
/// and `acts[l + 1]` the output of layer `l`.
#[derive(Clone, Debug)]
pub struct Tape {
    acts: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("tape holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.acts[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Parameter gradients with the same layout as an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weight *= k;
            l.bias *= k;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n.is_finite() {
            self.scale(max_norm / n);
        }
    }

    /// Locates the first non-finite entry as `(layer, flat index in layer)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.layers.iter().enumerate().find_map(|(li, l)| {
            l.weight
                .iter()
                .chain(l.bias.iter())
                .position(|g| !g.is_finite())
                .map(|i| (li, i))
        })
    }
}

impl Mlp {
    /// Builds a network with layer widths `sizes` (input first). Weights and
    /// biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output width");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..=bound));
                let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..=bound));
                Dense {
                    weight,
                    bias,
                    activation: if l + 1 == n { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("an MLP needs at least one layer"));
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::contract(format!(
                    "layer {l} emits {} values but layer {} takes {}",
                    w[0].outputs(),
                    l + 1,
                    w[1].inputs()
                )));
            }
        }
        for (l, d) in layers.iter().enumerate() {
            if d.bias.len() != d.outputs() {
                return Err(Error::contract(format!("layer {l}: bias length {} != {}", d.bias.len(), d.outputs())));
            }
        }
        Ok(Self { layers })
    }

    /// Multiplies the last layer's parameters by `factor`, which keeps
    /// initial outputs near zero.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight *= factor;
        last.bias *= factor;
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.activation == b.activation)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        Ok(self.forward_batch(x)?.output().row(0).to_vec())
    }

    /// Runs a batch (one sample per row) and records activations for
    /// [`Mlp::backward`].
    pub fn forward_batch(&self, x: Array2<f64>) -> Result<Tape> {
        if x.ncols() != self.input_dim() {
            return Err(Error::contract(format!(
                "input width {} but network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for layer in &self.layers {
            let mut z = acts.last().expect("input pushed").dot(&layer.weight);
            z += &layer.bias;
            layer.activation.apply(&mut z);
            acts.push(z);
        }
        Ok(Tape { acts })
    }

    /// Output only, without keeping intermediate activations around.
    pub fn predict(&self, x: Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = self.forward_batch(x)?;
        Ok(tape.acts.pop().expect("non-empty"))
    }

    /// Given `upstream = dL/d(output)` for each row of the recorded batch,
    /// returns `dL/d(params)` summed over rows and `dL/d(input)` per row.
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let out = tape.output();
        if upstream.dim() != out.dim() {
            return Err(Error::contract(format!(
                "upstream gradient shape {:?} does not match output {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        let mut delta = upstream.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&mut delta, &tape.acts[l + 1]);
            let weight = tape.acts[l].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            grads.push(LayerGrad { weight, bias });
            delta = delta.dot(&layer.weight.t());
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::contract(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for p in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *p = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Applies `f(param, grad)` to every parameter in flat order.
    pub(crate) fn zip_params_mut(&mut self, grads: &Gradients, mut f: impl FnMut(usize, &mut f64, f64)) {
        let mut idx = 0;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, gv) in l.weight.iter_mut().zip(g.weight.iter()) {
                f(idx, p, *gv);
                idx += 1;
            }
            for (p, gv) in l.bias.iter_mut().zip(g.bias.iter()) {
                f(idx, p, *gv);
                idx += 1;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|p| p.is_finite()))
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::contract("soft update between networks of different shapes"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::contract(format!("tau must lie in [0, 1], got {tau}")));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        ndarray::Zip::from(&mut t.weight)
            .and(&o.weight)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        ndarray::Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_tanh_agrees_with_libm() {
        for k in -400_000..=400_000 {
            let x = k as f64 / 10_000.0;
            assert!((tanh(x) - x.tanh()).abs() <= 4.0 * f64::EPSILON, "x = {x}");
        }
        assert!(tanh(1e-300).abs() <= f64::EPSILON);
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(-50.0), -1.0);
    }
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Dense {
        Dense { weight, bias, activation }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_layers(vec![layer(Array2::eye(3), Array1::zeros(3), Activation::Identity)]).unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let net = Mlp::from_layers(vec![layer(Array2::zeros((2, 2)), array![0.3, -0.7], Activation::Identity)]).unwrap();
        assert_eq!(net.forward(&[9.0, -4.0]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn hand_set_two_layer_net() {
        // h = tanh([1, -1] W1 + b1) with W1 = [[1, 2], [0.5, -1]], b1 = [0, 0.5]
        //   = tanh([0.5, 3.5]); y = h . [1, -2] + 0.1
        let net = Mlp::from_layers(vec![
            layer(array![[1.0, 2.0], [0.5, -1.0]], array![0.0, 0.5], Activation::Tanh),
            layer(array![[1.0], [-2.0]], array![0.1], Activation::Identity),
        ])
        .unwrap();
        let y = net.forward(&[1.0, -1.0]).unwrap()[0];
        // tanh(0.5) - 2 tanh(3.5) + 0.1
        let expected = 0.46211715726000974 - 2.0 * 0.99817789761119879 + 0.1;
        assert!((y - expected).abs() < 1e-15, "{y} vs {expected}");
    }

    #[test]
    fn input_width_mismatch_is_contract_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 4, 1], Activation::Tanh, Activation::Identity, &mut rng);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Contract(_))));
        let tape = net.forward_batch(Array2::zeros((2, 3))).unwrap();
        assert!(net.backward(&tape, Array2::zeros((2, 2)).view()).is_err());
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let x = array![[0.5, -1.0, 2.0]];
        let up = array![[1.5, -0.25]];
        let tape = net.forward_batch(x.clone()).unwrap();
        let (g, dx) = net.backward(&tape, up.view()).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(g.layers[0].weight[[i, j]], x[[0, i]] * up[[0, j]]);
            }
        }
        assert_eq!(g.layers[0].bias, array![1.5, -0.25]);
        assert_eq!(dx, up.dot(&net.layers()[0].weight.t()));
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 8, 8, 2], Activation::Tanh, Activation::Tanh, &mut rng);
        let tape = net.forward_batch(Array2::from_elem((5, 4), 0.3)).unwrap();
        let (g, dx) = net.backward(&tape, Array2::zeros((5, 2)).view()).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[5, 16, 16, 3], Activation::Tanh, Activation::Tanh, &mut rng);
        let x = [0.1, -0.2, 0.3, 0.9, -1.3];
        let a = net.forward(&x).unwrap();
        let b = net.clone().forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn soft_update_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = Mlp::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let base = Mlp::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, &mut rng);

        let mut t = base.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = base.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, base);

        let mut zero = base.clone();
        zero.set_flat_params(&vec![0.0; base.num_params()]).unwrap();
        let mut two = base.clone();
        two.set_flat_params(&vec![2.0; base.num_params()]).unwrap();
        soft_update(&mut zero, &two, 0.5).unwrap();
        assert!(zero.flat_params().iter().all(|v| *v == 1.0));

        let other = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Identity, &mut rng);
        assert!(soft_update(&mut t, &other, 0.5).is_err());
        assert!(soft_update(&mut t, &online, 1.5).is_err());
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let mut other = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng);
        other.set_flat_params(&net.flat_params()).unwrap();
        assert_eq!(other, net);
        assert!(other.set_flat_params(&[1.0]).is_err());
    }
}
