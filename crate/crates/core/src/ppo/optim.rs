use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam (or plain SGD) over a parameter vector split into segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descend along `grad`, which is laid out as the concatenation of
    /// `segments`.
    pub fn step(&mut self, segments: &mut [&mut [f64]], grad: &[f64]) {
        let total: usize = segments.iter().map(|s| s.len()).sum();
        assert_eq!(total, grad.len(), "gradient length");
        assert_eq!(total, self.m.len(), "optimizer size");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut i = 0;
        for seg in segments.iter_mut() {
            for p in seg.iter_mut() {
                let g = grad[i];
                match self.kind {
                    OptimizerKind::Sgd => *p -= self.lr * g,
                    OptimizerKind::Adam => {
                        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                        let mh = self.m[i] / bc1;
                        let vh = self.v[i] / bc2;
                        *p -= self.lr * mh / (vh.sqrt() + self.eps);
                    }
                }
                i += 1;
            }
        }
    }
}

/// Scale `grad` so its L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.1, 2);
        let mut p = vec![1.0, -1.0];
        o.step(&mut [&mut p], &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn sgd_and_segments() {
        let mut o = Optimizer::new(OptimizerKind::Sgd, 0.5, 3);
        let mut a = vec![1.0];
        let mut b = vec![2.0, 3.0];
        o.step(&mut [&mut a, &mut b], &[1.0, 2.0, -2.0]);
        assert_eq!(a, vec![0.5]);
        assert_eq!(b, vec![1.0, 4.0]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.05, 1);
        let mut x = vec![5.0];
        for _ in 0..2000 {
            let g = 2.0 * (x[0] - 1.5);
            o.step(&mut [&mut x], &[g]);
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }
}
