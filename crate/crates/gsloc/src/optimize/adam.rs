//! First-order Adam with bias correction, on fixed-size parameter vectors.

use nalgebra::SVector;

#[derive(Debug, Clone)]
pub struct Adam<const N: usize> {
    m: SVector<f64, N>,
    v: SVector<f64, N>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<const N: usize> Adam<N> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            m: SVector::zeros(),
            v: SVector::zeros(),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    /// Moment update; returns the descent increment `lr * m_hat / (sqrt(v_hat) + eps)`.
    /// The caller applies it with a minus sign (or as `exp(-inc) * T` on the manifold).
    pub fn step(&mut self, grad: &SVector<f64, N>, lr: f64) -> SVector<f64, N> {
        self.t += 1;
        self.m = self.m * self.beta1 + grad * (1.0 - self.beta1);
        self.v = self.v * self.beta2 + grad.component_mul(grad) * (1.0 - self.beta2);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut out = SVector::<f64, N>::zeros();
        for i in 0..N {
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            out[i] = lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        out
    }
}
