//! Two-layer rectifier network mapping a one-hot state to two action values,
//! with hand-written backpropagation of the Huber loss.

use ipd_core::{Action, RandomStream, State};
use serde::{Deserialize, Serialize};

/// `q = W₂ relu(W₁ onehot(s) + b₁) + b₂`. Parameters live in one flat vector:
/// `W₁` (H×4, row-major), `b₁` (H), `W₂` (2×H, row-major, row = action index),
/// `b₂` (2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpQNet {
    hidden: usize,
    params: Vec<f64>,
}

pub const INPUT: usize = 4;
pub const OUTPUT: usize = 2;

/// One regression sample: the value of `action` in `state` should be `target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub state: State,
    pub action: Action,
    pub target: f64,
}

impl MlpQNet {
    pub fn zeros(hidden: usize) -> MlpQNet {
        MlpQNet {
            hidden,
            params: vec![0.0; MlpQNet::param_count_for(hidden)],
        }
    }

    /// Uniform `±1/√fan_in` initialisation.
    pub fn init(hidden: usize, rng: &mut RandomStream) -> MlpQNet {
        let mut net = MlpQNet::zeros(hidden);
        let b1 = 1.0 / (INPUT as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let split = hidden * INPUT + hidden;
        for (i, p) in net.params.iter_mut().enumerate() {
            let bound = if i < split { b1 } else { b2 };
            *p = bound * (2.0 * rng.uniform() - 1.0);
        }
        net
    }

    pub fn param_count_for(hidden: usize) -> usize {
        INPUT * hidden + hidden + OUTPUT * hidden + OUTPUT
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1(&self, j: usize, s: usize) -> f64 {
        self.params[j * INPUT + s]
    }
    fn b1_at(&self) -> usize {
        self.hidden * INPUT
    }
    fn w2_at(&self) -> usize {
        self.b1_at() + self.hidden
    }
    fn b2_at(&self) -> usize {
        self.w2_at() + OUTPUT * self.hidden
    }

    fn hidden_pre(&self, s: State) -> Vec<f64> {
        let si = s.index();
        (0..self.hidden).map(|j| self.w1(j, si) + self.params[self.b1_at() + j]).collect()
    }

    /// Action values indexed by [`Action::index`] (D = 0, C = 1).
    pub fn values(&self, s: State) -> [f64; 2] {
        let h: Vec<f64> = self.hidden_pre(s).into_iter().map(|z| z.max(0.0)).collect();
        std::array::from_fn(|a| {
            let row = self.w2_at() + a * self.hidden;
            self.params[self.b2_at() + a] + (0..self.hidden).map(|j| self.params[row + j] * h[j]).sum::<f64>()
        })
    }

    /// `(q_C, q_D)` for `s`.
    pub fn forward(&self, s: State) -> (f64, f64) {
        let v = self.values(s);
        (v[Action::C.index()], v[Action::D.index()])
    }

    /// Greedy action; ties go to D.
    pub fn greedy(&self, s: State) -> Action {
        let v = self.values(s);
        if v[Action::C.index()] > v[Action::D.index()] {
            Action::C
        } else {
            Action::D
        }
    }

    pub fn greedy_profile(&self) -> [Action; 4] {
        State::ALL.map(|s| self.greedy(s))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Mean Huber loss (threshold 1) over `batch`.
    pub fn loss(&self, batch: &[Sample]) -> f64 {
        batch
            .iter()
            .map(|x| huber(self.values(x.state)[x.action.index()] - x.target))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean Huber loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Sample]) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for x in batch {
            let si = x.state.index();
            let a = x.action.index();
            let z = self.hidden_pre(x.state);
            let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            let row = self.w2_at() + a * self.hidden;
            let out = self.params[self.b2_at() + a] + (0..self.hidden).map(|j| self.params[row + j] * h[j]).sum::<f64>();
            let d = out - x.target;
            loss += huber(d);
            let g = huber_grad(d) / n;
            grad[self.b2_at() + a] += g;
            for j in 0..self.hidden {
                grad[row + j] += g * h[j];
                if z[j] > 0.0 {
                    let dz = g * self.params[row + j];
                    grad[self.b1_at() + j] += dz;
                    grad[j * INPUT + si] += dz;
                }
            }
        }
        (loss / n, grad)
    }

    /// `θ ← θ − lr ∇`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }

    /// `self ← (1 − τ) self + τ online`.
    pub fn soft_update(&mut self, online: &MlpQNet, tau: f64) {
        for (p, q) in self.params.iter_mut().zip(&online.params) {
            *p = (1.0 - tau) * *p + tau * q;
        }
    }
}

fn huber(d: f64) -> f64 {
    if d.abs() <= 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

fn huber_grad(d: f64) -> f64 {
    d.clamp(-1.0, 1.0)
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `h`; `|a − n| / max(|a| + |n|, 1e-6)`.
pub fn gradient_check(net: &MlpQNet, batch: &[Sample], h: f64) -> f64 {
    let (_, analytic) = net.loss_and_grad(batch);
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss(batch);
        probe.params[i] = orig - h;
        let down = probe.loss(batch);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_net_outputs_zero() {
        let net = MlpQNet::zeros(32);
        for s in State::ALL {
            assert_eq!(net.forward(s), (0.0, 0.0));
        }
        assert_eq!(net.params().len(), 4 * 32 + 32 + 2 * 32 + 2);
    }

    #[test]
    fn single_path() {
        // hidden unit 0 reads DD with weight 2, bias 0.5; C output reads it with weight 3
        let mut net = MlpQNet::zeros(4);
        net.params[0 * INPUT + State::DD.index()] = 2.0;
        let b1 = net.b1_at();
        net.params[b1] = 0.5;
        let w2 = net.w2_at();
        net.params[w2 + Action::C.index() * 4] = 3.0;
        let b2 = net.b2_at();
        net.params[b2 + Action::D.index()] = -1.0;
        assert_eq!(net.forward(State::DD), (7.5, -1.0));
        assert_eq!(net.forward(State::CC), (1.5, -1.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RandomStream::new(1);
        for draw in 0..20 {
            let net = MlpQNet::init(8, &mut rng);
            let batch: Vec<Sample> = (0..16)
                .map(|_| Sample {
                    state: State::from_index(rng.below(4)),
                    action: if rng.uniform() < 0.5 { Action::C } else { Action::D },
                    target: 3.0 * rng.normal(),
                })
                .collect();
            let err = gradient_check(&net, &batch, 1e-5);
            assert!(err < 1e-4, "draw {draw}: relative error {err}");
        }
    }

    #[test]
    fn soft_update_with_unit_tau_copies() {
        let mut rng = RandomStream::new(2);
        let online = MlpQNet::init(8, &mut rng);
        let mut target = MlpQNet::zeros(8);
        target.soft_update(&online, 1.0);
        assert_eq!(target, online);
    }

    proptest! {
        #[test]
        fn forward_is_finite(seed in any::<u64>()) {
            let net = MlpQNet::init(32, &mut RandomStream::new(seed));
            for s in State::ALL {
                let (c, d) = net.forward(s);
                prop_assert!(c.is_finite() && d.is_finite());
            }
        }
    }
}
