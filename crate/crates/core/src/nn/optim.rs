use super::net::Param;

/// Stochastic gradient descent with classical momentum:
/// `v ← m·v − lr·g`, `w ← w + v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum }
    }

    pub fn step<'a>(&self, params: impl IntoIterator<Item = &'a mut Param>) {
        for p in params {
            sgd_momentum_step(p, self.lr, self.momentum);
        }
    }
}

pub fn sgd_momentum_step(p: &mut Param, lr: f64, momentum: f64) {
    let Param { value, grad, velocity } = p;
    for ((w, v), g) in value.data_mut().iter_mut().zip(velocity.data_mut()).zip(grad.data()) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}
