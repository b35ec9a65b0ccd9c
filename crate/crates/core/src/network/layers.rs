//! Dense layers and an LSTM with explicit caches and backward passes.
//!
//! Batched tensors are `(rows, features)`. Sequences are stacked
//! time-major: row `t * batch + b` holds step `t` of sequence `b`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::param::{join, Param, Parameterized};

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, scale: f64, rng: &mut R) -> Self {
        Linear {
            w: Param::uniform(input, output, scale, rng),
            b: Param::uniform(1, output, scale, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.value.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w.value);
        y += &self.b.value;
        y
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &x.t(), dy, 1.0, &mut self.w.grad);
        self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.value.t())
    }
}

impl Parameterized for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}

/// Feedforward stack with tanh between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct FfnCache {
    /// `acts[i]` is the input of layer `i`.
    acts: Vec<Array2<f64>>,
}

impl Ffn {
    pub fn new<R: Rng + ?Sized>(dims: &[usize], scale: f64, rng: &mut R) -> Self {
        Ffn {
            layers: dims
                .windows(2)
                .map(|w| Linear::new(w[0], w[1], scale, rng))
                .collect(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FfnCache) {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = l.forward(&h);
            if i != last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(h);
            h = z;
        }
        (h, FfnCache { acts })
    }

    pub fn backward(&mut self, cache: &FfnCache, dy: &Array2<f64>) -> Array2<f64> {
        let mut d = dy.clone();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i != last {
                // Output of layer i is the (tanh) input of layer i + 1.
                let a = &cache.acts[i + 1];
                d.zip_mut_with(a, |g, &y| *g *= 1.0 - y * y);
            }
            d = self.layers[i].backward(&cache.acts[i], &d);
        }
        d
    }
}

impl Parameterized for Ffn {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Single-layer LSTM; gate blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_x: Param,
    pub w_h: Param,
    pub b: Param,
}

/// Everything the backward pass needs, stacked time-major.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    batch: usize,
    steps: usize,
    x_all: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
    masks: Option<Vec<Vec<f64>>>,
    /// Hidden state after each step, `(steps * batch, hidden)`.
    pub outputs: Array2<f64>,
    pub h_last: Array2<f64>,
    pub c_last: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub dx_all: Array2<f64>,
    pub dh0: Array2<f64>,
    pub dc0: Array2<f64>,
    /// Gradient of the per-sequence constant gate input.
    pub dextra: Array2<f64>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut b = Param::uniform(1, 4 * hidden, scale, rng);
        b.value.slice_mut(s![.., hidden..2 * hidden]).fill(1.0);
        Lstm {
            w_x: Param::uniform(input, 4 * hidden, scale, rng),
            w_h: Param::uniform(hidden, 4 * hidden, scale, rng),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.value.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.nrows()
    }

    /// Activate pre-activations in place and return the new `(c, tanh c, h)`.
    fn cell(&self, pre: &mut Array2<f64>, c_prev: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let (rows, four_h) = pre.dim();
        let hd = four_h / 4;
        let mut c = Array2::zeros((rows, hd));
        let mut tc = Array2::zeros((rows, hd));
        let mut h = Array2::zeros((rows, hd));
        let p = pre.as_slice_mut().expect("standard layout");
        let cp = c_prev.as_slice().expect("standard layout");
        let (cs, ts, hs) = (
            c.as_slice_mut().unwrap(),
            tc.as_slice_mut().unwrap(),
            h.as_slice_mut().unwrap(),
        );
        for r in 0..rows {
            let g = &mut p[r * four_h..(r + 1) * four_h];
            for j in 0..hd {
                let i_g = sigmoid(g[j]);
                let f_g = sigmoid(g[hd + j]);
                let c_g = g[2 * hd + j].tanh();
                let o_g = sigmoid(g[3 * hd + j]);
                g[j] = i_g;
                g[hd + j] = f_g;
                g[2 * hd + j] = c_g;
                g[3 * hd + j] = o_g;
                let k = r * hd + j;
                let cn = f_g * cp[k] + i_g * c_g;
                let t = cn.tanh();
                cs[k] = cn;
                ts[k] = t;
                hs[k] = o_g * t;
            }
        }
        (c, tc, h)
    }

    /// One step without caching, for inference.
    pub fn step(
        &self,
        x: &Array2<f64>,
        h: &Array2<f64>,
        c: &Array2<f64>,
        extra: Option<&Array2<f64>>,
    ) -> (Array2<f64>, Array2<f64>) {
        let mut pre = x.dot(&self.w_x.value);
        pre += &self.b.value;
        general_mat_mul(1.0, h, &self.w_h.value, 1.0, &mut pre);
        if let Some(e) = extra {
            pre += e;
        }
        let (c, _, h) = self.cell(&mut pre, c);
        (h, c)
    }

    /// Run over `x_all` (`steps * batch` rows). With `masks`, a row whose
    /// mask is 0 at step `t` carries its state through unchanged.
    pub fn forward(
        &self,
        x_all: Array2<f64>,
        batch: usize,
        h0: Array2<f64>,
        c0: Array2<f64>,
        extra: Option<&Array2<f64>>,
        masks: Option<Vec<Vec<f64>>>,
    ) -> LstmTrace {
        let hd = self.hidden();
        let steps = if batch == 0 { 0 } else { x_all.nrows() / batch };
        let mut pre_all = x_all.dot(&self.w_x.value);
        pre_all += &self.b.value;
        let n = steps * batch;
        let mut h_prev = Array2::zeros((n, hd));
        let mut c_prev = Array2::zeros((n, hd));
        let mut gates = Array2::zeros((n, 4 * hd));
        let mut tanh_c = Array2::zeros((n, hd));
        let mut outputs = Array2::zeros((n, hd));
        let mut h = h0;
        let mut c = c0;
        for t in 0..steps {
            let rows = s![t * batch..(t + 1) * batch, ..];
            let mut pre = pre_all.slice(rows).to_owned();
            general_mat_mul(1.0, &h, &self.w_h.value, 1.0, &mut pre);
            if let Some(e) = extra {
                pre += e;
            }
            let (mut cn, tc, mut hn) = self.cell(&mut pre, &c);
            if let Some(m) = &masks {
                for (b, &keep) in m[t].iter().enumerate() {
                    if keep == 0.0 {
                        cn.row_mut(b).assign(&c.row(b));
                        hn.row_mut(b).assign(&h.row(b));
                    }
                }
            }
            h_prev.slice_mut(rows).assign(&h);
            c_prev.slice_mut(rows).assign(&c);
            gates.slice_mut(rows).assign(&pre);
            tanh_c.slice_mut(rows).assign(&tc);
            outputs.slice_mut(rows).assign(&hn);
            h = hn;
            c = cn;
        }
        LstmTrace {
            batch,
            steps,
            x_all,
            h_prev,
            c_prev,
            gates,
            tanh_c,
            masks,
            outputs,
            h_last: h,
            c_last: c,
        }
    }

    /// Backpropagate through a trace. `d_outputs` is the gradient on every
    /// step's hidden output; `dh_last`/`dc_last` on the final state.
    pub fn backward(
        &mut self,
        trace: &LstmTrace,
        d_outputs: Option<&Array2<f64>>,
        dh_last: Option<&Array2<f64>>,
        dc_last: Option<&Array2<f64>>,
    ) -> LstmGrads {
        let hd = self.hidden();
        let (batch, steps) = (trace.batch, trace.steps);
        let mut dh = dh_last.cloned().unwrap_or_else(|| Array2::zeros((batch, hd)));
        let mut dc = dc_last.cloned().unwrap_or_else(|| Array2::zeros((batch, hd)));
        let mut dgates_all = Array2::zeros((steps * batch, 4 * hd));
        let mut dextra = Array2::zeros((batch, 4 * hd));
        for t in (0..steps).rev() {
            let rows = s![t * batch..(t + 1) * batch, ..];
            if let Some(d) = d_outputs {
                dh += &d.slice(rows);
            }
            let gates = trace.gates.slice(rows);
            let tanh_c = trace.tanh_c.slice(rows);
            let c_prev = trace.c_prev.slice(rows);
            let mut dg = Array2::zeros((batch, 4 * hd));
            let mut dc_prev = Array2::zeros((batch, hd));
            let mut dh_pass = Array2::zeros((batch, hd));
            for b in 0..batch {
                let m = trace.masks.as_ref().map_or(1.0, |m| m[t][b]);
                for j in 0..hd {
                    let (dh_t, dc_t) = (dh[[b, j]], dc[[b, j]]);
                    if m == 0.0 {
                        dh_pass[[b, j]] = dh_t;
                        dc_prev[[b, j]] = dc_t;
                        continue;
                    }
                    let i_g = gates[[b, j]];
                    let f_g = gates[[b, hd + j]];
                    let c_g = gates[[b, 2 * hd + j]];
                    let o_g = gates[[b, 3 * hd + j]];
                    let tc = tanh_c[[b, j]];
                    let d_o = dh_t * tc;
                    let d_c = dc_t + dh_t * o_g * (1.0 - tc * tc);
                    dg[[b, j]] = d_c * c_g * i_g * (1.0 - i_g);
                    dg[[b, hd + j]] = d_c * c_prev[[b, j]] * f_g * (1.0 - f_g);
                    dg[[b, 2 * hd + j]] = d_c * i_g * (1.0 - c_g * c_g);
                    dg[[b, 3 * hd + j]] = d_o * o_g * (1.0 - o_g);
                    dc_prev[[b, j]] = d_c * f_g;
                }
            }
            dh = dg.dot(&self.w_h.value.t());
            dh += &dh_pass;
            dc = dc_prev;
            dextra += &dg;
            dgates_all.slice_mut(rows).assign(&dg);
        }
        general_mat_mul(1.0, &trace.x_all.t(), &dgates_all, 1.0, &mut self.w_x.grad);
        general_mat_mul(1.0, &trace.h_prev.t(), &dgates_all, 1.0, &mut self.w_h.grad);
        self.b.grad += &dgates_all.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dx_all = dgates_all.dot(&self.w_x.value.t());
        LstmGrads {
            dx_all,
            dh0: dh,
            dc0: dc,
            dextra,
        }
    }
}

impl Parameterized for Lstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "w_x"), &self.w_x);
        f(&join(prefix, "w_h"), &self.w_h);
        f(&join(prefix, "b"), &self.b);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w_x"), &mut self.w_x);
        f(&join(prefix, "w_h"), &mut self.w_h);
        f(&join(prefix, "b"), &mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{grad_check, GradCheckConfig};
    use crate::rng::substream;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = substream(seed, "m", 0);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn log_softmax_normalizes() {
        let l = rand_matrix(3, 7, 1) * 30.0;
        let lp = log_softmax_rows(&l);
        for row in lp.rows() {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_gradient_is_exact() {
        let mut rng = substream(2, "init", 0);
        let mut lin = Linear::new(4, 3, 0.5, &mut rng);
        let x = rand_matrix(5, 4, 3);
        let g = rand_matrix(5, 3, 4);
        let report = grad_check(
            &mut lin,
            |l: &mut Linear| {
                let y = l.forward(&x);
                l.backward(&x, &g);
                (&y * &g).sum()
            },
            |l: &Linear| (&l.forward(&x) * &g).sum(),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-7, "{report:?}");
    }

    #[test]
    fn ffn_gradient() {
        let mut rng = substream(2, "init", 1);
        let mut ffn = Ffn::new(&[4, 6, 5, 3], 0.5, &mut rng);
        let x = rand_matrix(5, 4, 3);
        let g = rand_matrix(5, 3, 4);
        let report = grad_check(
            &mut ffn,
            |f: &mut Ffn| {
                let (y, cache) = f.forward(&x);
                f.backward(&cache, &g);
                (&y * &g).sum()
            },
            |f: &Ffn| (&f.forward(&x).0 * &g).sum(),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn masked_lstm_gradient_and_hold() {
        let mut rng = substream(2, "init", 2);
        let mut lstm = Lstm::new(3, 4, 0.5, &mut rng);
        let (batch, steps) = (2, 4);
        let x = rand_matrix(steps * batch, 3, 5);
        let extra = rand_matrix(batch, 16, 6) * 0.3;
        let h0 = rand_matrix(batch, 4, 7) * 0.5;
        // Second sequence has length 2.
        let masks: Vec<Vec<f64>> = (0..steps)
            .map(|t| vec![1.0, if t < 2 { 1.0 } else { 0.0 }])
            .collect();
        let gout = rand_matrix(steps * batch, 4, 8);
        let glast = rand_matrix(batch, 4, 9);
        let run = |l: &Lstm| {
            l.forward(
                x.clone(),
                batch,
                h0.clone(),
                Array2::zeros((batch, 4)),
                Some(&extra),
                Some(masks.clone()),
            )
        };
        let tr = run(&lstm);
        // Masked steps carry the state through.
        assert_eq!(tr.outputs.row(5), tr.outputs.row(3));
        assert_eq!(tr.h_last.row(1), tr.outputs.row(3));
        let loss = |tr: &LstmTrace| (&tr.outputs * &gout).sum() + (&tr.h_last * &glast).sum();
        let report = grad_check(
            &mut lstm,
            |l: &mut Lstm| {
                let tr = run(l);
                l.backward(&tr, Some(&gout), Some(&glast), None);
                loss(&tr)
            },
            |l: &Lstm| loss(&run(l)),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn lstm_step_matches_forward() {
        let mut rng = substream(2, "init", 3);
        let lstm = Lstm::new(3, 4, 0.5, &mut rng);
        let x = rand_matrix(2, 3, 5);
        let h0 = Array2::zeros((2, 4));
        let tr = lstm.forward(x.clone(), 2, h0.clone(), h0.clone(), None, None);
        let (h, _) = lstm.step(&x, &h0, &h0, None);
        assert_eq!(h, tr.h_last);
    }
}
