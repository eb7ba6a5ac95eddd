//! A single-layer LSTM with explicit forward caches and backpropagation
//! through time.
//!
//! Gate rows in `w` and `b` are stacked as input, forget, output and cell
//! candidate, each `hidden` rows tall. Each row of `w` spans `[x; h_prev]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::logistic::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Step {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub steps: Vec<Step>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmGrad {
    pub fn zeros(l: &Lstm) -> Self {
        Self {
            w: vec![0.0; l.w.len()],
            b: vec![0.0; l.b.len()],
        }
    }
}

impl Lstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * (input + hidden)],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform weights in ±1/sqrt(hidden); forget-gate bias starts at 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(input, hidden);
        let a = 1.0 / (hidden as f64).sqrt();
        l.w.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        l.b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        l
    }

    fn width(&self) -> usize {
        self.input + self.hidden
    }

    /// Runs the sequence from zero state. An empty sequence yields the zero
    /// state.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Trace {
        let h_dim = self.hidden;
        let width = self.width();
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            debug_assert_eq!(x.len(), self.input);
            let mut xh = Vec::with_capacity(width);
            xh.extend_from_slice(x);
            xh.extend_from_slice(&h);
            let mut z = self.b.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.w[r * width..(r + 1) * width];
                *zr += row.iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>();
            }
            let i: Vec<f64> = z[..h_dim].iter().map(|v| sigmoid(*v)).collect();
            let f: Vec<f64> = z[h_dim..2 * h_dim].iter().map(|v| sigmoid(*v)).collect();
            let o: Vec<f64> = z[2 * h_dim..3 * h_dim].iter().map(|v| sigmoid(*v)).collect();
            let g: Vec<f64> = z[3 * h_dim..].iter().map(|v| v.tanh()).collect();
            let c_prev = c.clone();
            for k in 0..h_dim {
                c[k] = f[k] * c_prev[k] + i[k] * g[k];
            }
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            for k in 0..h_dim {
                h[k] = o[k] * tanh_c[k];
            }
            steps.push(Step {
                xh,
                c_prev,
                i,
                f,
                o,
                g,
                tanh_c,
            });
        }
        Trace { steps, h }
    }

    /// Accumulates parameter gradients for a loss whose gradient w.r.t. the
    /// final hidden state is `dh_last`; returns the gradient w.r.t. each
    /// input vector.
    pub fn backward(&self, trace: &Trace, dh_last: &[f64], grad: &mut LstmGrad) -> Vec<Vec<f64>> {
        let h_dim = self.hidden;
        let width = self.width();
        let mut dxs = vec![Vec::new(); trace.steps.len()];
        let mut dh = dh_last.to_vec();
        let mut dc = vec![0.0; h_dim];
        let mut dz = vec![0.0; 4 * h_dim];
        for (t, s) in trace.steps.iter().enumerate().rev() {
            for k in 0..h_dim {
                let d_o = dh[k] * s.tanh_c[k];
                dc[k] += dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let d_i = dc[k] * s.g[k];
                let d_g = dc[k] * s.i[k];
                let d_f = dc[k] * s.c_prev[k];
                dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[h_dim + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[2 * h_dim + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dz[3 * h_dim + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                dc[k] *= s.f[k];
            }
            let mut dxh = vec![0.0; width];
            for (r, dzr) in dz.iter().enumerate() {
                if *dzr == 0.0 {
                    continue;
                }
                grad.b[r] += dzr;
                let row = &self.w[r * width..(r + 1) * width];
                let grow = &mut grad.w[r * width..(r + 1) * width];
                for j in 0..width {
                    grow[j] += dzr * s.xh[j];
                    dxh[j] += dzr * row[j];
                }
            }
            dh.copy_from_slice(&dxh[self.input..]);
            dxh.truncate(self.input);
            dxs[t] = dxh;
        }
        dxs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_zero_state() {
        let l = Lstm::zeros(3, 4);
        assert_eq!(l.forward(&[vec![1.0, -2.0, 0.5]]).h, vec![0.0; 4]);
        assert_eq!(l.forward(&[]).h, vec![0.0; 4]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = Lstm::init(3, 4, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let proj: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |l: &Lstm, xs: &[Vec<f64>]| -> f64 {
            l.forward(xs).h.iter().zip(&proj).map(|(a, b)| a * b).sum()
        };
        let trace = l.forward(&xs);
        let mut g = LstmGrad::zeros(&l);
        let dxs = l.backward(&trace, &proj, &mut g);
        let eps = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-7);
        for k in 0..l.w.len() {
            let mut p = l.clone();
            p.w[k] += eps;
            let up = loss(&p, &xs);
            p.w[k] -= 2.0 * eps;
            let down = loss(&p, &xs);
            let n = (up - down) / (2.0 * eps);
            assert!(rel(g.w[k], n) < 1e-5, "w[{k}] {} vs {n}", g.w[k]);
        }
        for k in 0..l.b.len() {
            let mut p = l.clone();
            p.b[k] += eps;
            let up = loss(&p, &xs);
            p.b[k] -= 2.0 * eps;
            let down = loss(&p, &xs);
            let n = (up - down) / (2.0 * eps);
            assert!(rel(g.b[k], n) < 1e-5, "b[{k}]");
        }
        for t in 0..xs.len() {
            for j in 0..3 {
                let mut x2 = xs.clone();
                x2[t][j] += eps;
                let up = loss(&l, &x2);
                x2[t][j] -= 2.0 * eps;
                let down = loss(&l, &x2);
                let n = (up - down) / (2.0 * eps);
                assert!(rel(dxs[t][j], n) < 1e-5, "x[{t}][{j}]");
            }
        }
    }
}
