//! Feed-forward and recurrent building blocks on top of [`Graph`].

use rand::Rng;

use super::graph::{BoundParams, Graph, Var};
use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Fully-connected stack `sizes[0] → sizes[1] → … → sizes.last()` with ReLU
/// between all but the final layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    prefix: String,
    sizes: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("mlp layer sizes {sizes:?}")));
        }
        Ok(Self {
            prefix: prefix.into(),
            sizes,
        })
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.w", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.b", self.prefix)
    }

    /// Uniform(±1/√fan_in) weights and biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) {
        for (i, pair) in self.sizes.windows(2).enumerate() {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            params.insert(self.weight_name(i), Tensor::uniform(&[pair[0], pair[1]], bound, rng));
            params.insert(self.bias_name(i), Tensor::uniform(&[pair[1]], bound, rng));
        }
    }

    pub fn init_zeros(&self, params: &mut ParamSet) {
        for (i, pair) in self.sizes.windows(2).enumerate() {
            params.insert(self.weight_name(i), Tensor::zeros(&[pair[0], pair[1]]));
            params.insert(self.bias_name(i), Tensor::zeros(&[pair[1]]));
        }
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        for (i, pair) in self.sizes.windows(2).enumerate() {
            let w = params.get(&self.weight_name(i))?;
            let b = params.get(&self.bias_name(i))?;
            if w.rows() != pair[0] || w.cols() != pair[1] || b.len() != pair[1] {
                return Err(Error::shape(
                    "mlp",
                    format!(
                        "layer {i} expects [{}x{}] + [{}], got {:?} + {:?}",
                        pair[0],
                        pair[1],
                        pair[1],
                        w.shape(),
                        b.shape()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, p: &BoundParams, x: Var) -> Result<Var> {
        let width = g.value(x).cols();
        if width != self.input_width() {
            return Err(Error::shape(
                "mlp_forward",
                format!("input width {width}, first layer expects {}", self.input_width()),
            ));
        }
        let layers = self.sizes.len() - 1;
        let mut h = x;
        for i in 0..layers {
            let w = p.get(&self.weight_name(i))?;
            let b = p.get(&self.bias_name(i))?;
            let z = g.matmul(h, w);
            h = g.add_row(z, b);
            if i + 1 < layers {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Every layer's output before its nonlinearity, first layer first.
    pub fn pre_activations(&self, params: &ParamSet, input: &Tensor) -> Result<Vec<Tensor>> {
        self.check_params(params)?;
        let mut g = Graph::new();
        let p = g.bind_frozen(params);
        let mut h = g.constant(input.clone());
        let layers = self.sizes.len() - 1;
        let mut out = Vec::with_capacity(layers);
        for i in 0..layers {
            let z = g.matmul(h, p.get(&self.weight_name(i))?);
            let z = g.add_row(z, p.get(&self.bias_name(i))?);
            out.push(g.value(z).clone());
            h = g.relu(z);
        }
        Ok(out)
    }
}

/// Standalone MLP evaluation on a `[rows, in]` input.
pub fn mlp_forward(mlp: &Mlp, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    mlp.check_params(params)?;
    let mut g = Graph::new();
    let p = g.bind_frozen(params);
    let x = g.constant(input.clone());
    let y = mlp.forward(&mut g, &p, x)?;
    Ok(g.value(y).clone())
}

/// Gated recurrent unit with reset gate `r`, update gate `z` and candidate
/// `n`:
///
/// ```text
/// r  = σ(x W_xr + b_xr + h W_hr + b_hr)
/// z  = σ(x W_xz + b_xz + h W_hz + b_hz)
/// n  = tanh(x W_xn + b_xn + r ⊙ (h W_hn + b_hn))
/// h' = (1 - z) ⊙ h + z ⊙ n
/// ```
///
/// The three gates share one `[in, 3h]` input matrix and one `[h, 3h]`
/// recurrent matrix, laid out `[r | z | n]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruCell {
    prefix: String,
    input: usize,
    hidden: usize,
}

impl GruCell {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::invalid("gru widths must be positive"));
        }
        Ok(Self {
            prefix: prefix.into(),
            input,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) {
        let h3 = 3 * self.hidden;
        let bx = 1.0 / (self.input as f64).sqrt();
        let bh = 1.0 / (self.hidden as f64).sqrt();
        params.insert(self.name("w_x"), Tensor::uniform(&[self.input, h3], bx, rng));
        params.insert(self.name("b_x"), Tensor::uniform(&[h3], bx, rng));
        params.insert(self.name("w_h"), Tensor::uniform(&[self.hidden, h3], bh, rng));
        params.insert(self.name("b_h"), Tensor::uniform(&[h3], bh, rng));
    }

    pub fn init_zeros(&self, params: &mut ParamSet) {
        let h3 = 3 * self.hidden;
        params.insert(self.name("w_x"), Tensor::zeros(&[self.input, h3]));
        params.insert(self.name("b_x"), Tensor::zeros(&[h3]));
        params.insert(self.name("w_h"), Tensor::zeros(&[self.hidden, h3]));
        params.insert(self.name("b_h"), Tensor::zeros(&[h3]));
    }

    pub fn step(&self, g: &mut Graph, p: &BoundParams, x: Var, h: Var) -> Result<Var> {
        let (xr, xc) = (g.value(x).rows(), g.value(x).cols());
        let (hr, hc) = (g.value(h).rows(), g.value(h).cols());
        if xc != self.input || hc != self.hidden || xr != hr {
            return Err(Error::shape(
                "gru_step",
                format!(
                    "x [{xr}x{xc}], h [{hr}x{hc}]; expected x width {}, h width {}, equal rows",
                    self.input, self.hidden
                ),
            ));
        }
        let n = self.hidden;
        let gx = g.matmul(x, p.get(&self.name("w_x"))?);
        let gx = g.add_row(gx, p.get(&self.name("b_x"))?);
        let gh = g.matmul(h, p.get(&self.name("w_h"))?);
        let gh = g.add_row(gh, p.get(&self.name("b_h"))?);

        let xr_ = g.slice_cols(gx, 0, n);
        let hr_ = g.slice_cols(gh, 0, n);
        let r = g.add(xr_, hr_);
        let r = g.sigmoid(r);

        let xz = g.slice_cols(gx, n, n);
        let hz = g.slice_cols(gh, n, n);
        let z = g.add(xz, hz);
        let z = g.sigmoid(z);

        let xn = g.slice_cols(gx, 2 * n, n);
        let hn = g.slice_cols(gh, 2 * n, n);
        let rhn = g.mul(r, hn);
        let cand = g.add(xn, rhn);
        let cand = g.tanh(cand);

        let keep = g.affine(z, -1.0, 1.0);
        let kept = g.mul(keep, h);
        let fresh = g.mul(z, cand);
        Ok(g.add(kept, fresh))
    }
}

/// Standalone GRU evaluation on `[rows, in]` and `[rows, hidden]`.
pub fn gru_step(cell: &GruCell, params: &ParamSet, x: &Tensor, h: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = g.bind_frozen(params);
    let xv = g.constant(x.clone());
    let hv = g.constant(h.clone());
    let out = cell.step(&mut g, &p, xv, hv)?;
    Ok(g.value(out).clone())
}
