use crate::nncore::{Gradients, NnError, ParamStore, Tensor};

/// NAdam with the momentum-decay schedule `mu_t = beta1 (1 - 0.5 * 0.96^(t * decay / 0.004))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Nadam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum_decay: f64,
    pub step: u64,
    mu_product: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Nadam {
    pub fn new(lr: f64, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum_decay: 0.004,
            step: 0,
            mu_product: 1.0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn mu(&self, t: u64) -> f64 {
        self.beta1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * self.momentum_decay))
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), NnError> {
        if grads.0.len() != self.m.len() || params.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                op: "nadam",
                left: (params.len(), 1),
                right: (grads.0.len(), 1),
            });
        }
        for id in 0..self.m.len() {
            let (p, g) = (params.get(id), grads.get(id));
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "nadam",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step;
        let mu = self.mu(t);
        let mu_next = self.mu(t + 1);
        self.mu_product *= mu;
        let grad_coef = self.lr * (1.0 - mu) / (1.0 - self.mu_product);
        let mom_coef = self.lr * mu_next / (1.0 - self.mu_product * mu_next);
        let bias2 = 1.0 - self.beta2.powf(t as f64);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (id, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads.get(id).data();
            let m = self.m[id].data_mut();
            let v = self.v[id].data_mut();
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let denom = (v[k] / bias2).sqrt() + eps;
                *w -= grad_coef * g[k] / denom + mom_coef * m[k] / denom;
            }
        }
        Ok(())
    }
}

/// Outcome of one validation observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss. `None` never stops.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: Option<usize>,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// `(epoch, loss)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Observation {
        let improved = self.best.is_none_or(|(_, b)| loss < b);
        if improved {
            self.best = Some((epoch, loss));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Observation {
            improved,
            stop: self.patience.is_some_and(|p| self.since_best >= p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(w));
        s
    }

    fn grads_of(g: f64) -> Gradients {
        Gradients(vec![Tensor::scalar(g)])
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = scalar_store(0.7);
        let mut opt = Nadam::new(0.1, &s);
        for _ in 0..10 {
            opt.update(&mut s, &grads_of(0.0)).unwrap();
        }
        assert_eq!(s.get(0).item(), 0.7);
    }

    #[test]
    fn first_step_moves_against_gradient_within_bound() {
        let mut s = scalar_store(0.0);
        let mut opt = Nadam::new(0.1, &s);
        opt.update(&mut s, &grads_of(1.0)).unwrap();
        let delta = s.get(0).item();
        assert!(delta < 0.0);
        assert!(delta.abs() <= 0.1 / (1.0 - 0.9));
    }

    /// Scalar NAdam written out from the published recurrence.
    fn reference_trajectory(w0: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v, mut prod) = (w0, 0.0, 0.0, 1.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * w;
            let mu_t = b1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 / 250.0));
            let mu_n = b1 * (1.0 - 0.5 * 0.96f64.powf((t + 1) as f64 / 250.0));
            prod *= mu_t;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let v_hat = v / (1.0 - b2.powi(t as i32));
            let m_bar = (1.0 - mu_t) * g / (1.0 - prod) + mu_n * m / (1.0 - prod * mu_n);
            w -= lr * m_bar / (v_hat.sqrt() + eps);
            out.push(w);
        }
        out
    }

    #[test]
    fn minimizes_a_parabola_like_the_reference() {
        let mut s = scalar_store(1.0);
        let mut opt = Nadam::new(0.1, &s);
        let reference = reference_trajectory(1.0, 0.1, 100);
        for expected in reference {
            let w = s.get(0).item();
            opt.update(&mut s, &grads_of(2.0 * w)).unwrap();
            assert!((s.get(0).item() - expected).abs() < 1e-12);
        }
        assert!(s.get(0).item().abs() < 0.5);
    }

    #[test]
    fn rejects_misshaped_gradients() {
        let mut s = scalar_store(1.0);
        let mut opt = Nadam::new(0.1, &s);
        let bad = Gradients(vec![Tensor::zeros(2, 1)]);
        assert!(matches!(opt.update(&mut s, &bad), Err(NnError::ShapeMismatch { .. })));
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn constant_validation_loss_stops_after_patience() {
        let mut es = EarlyStopping::new(Some(10));
        let mut stopped = None;
        for epoch in 1..=100 {
            if es.observe(epoch, 1.0).stop {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(11));
        assert_eq!(es.best(), Some((1, 1.0)));
    }

    #[test]
    fn decreasing_validation_loss_never_stops() {
        let mut es = EarlyStopping::new(Some(10));
        for epoch in 1..=100 {
            assert!(!es.observe(epoch, 1.0 / epoch as f64).stop);
        }
        assert_eq!(es.best().unwrap().0, 100);
        let mut never = EarlyStopping::new(None);
        assert!((1..=500).all(|e| !never.observe(e, 1.0).stop));
    }
}
