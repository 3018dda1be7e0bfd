use serde::{Deserialize, Serialize};

use super::tensor::{Module, Real};
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using `grads`, a gradient container with the same
    /// parameter layout as `model`.
    pub fn step<T: Real, M: Module<T>>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        let g = grads.params();
        if let Some((name, _)) = g
            .iter()
            .find(|(_, p)| p.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric(format!(
                "non-finite gradient in `{name}` at step {}",
                self.step + 1
            )));
        }
        let mut params = model.params_mut();
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, ((_, p), (_, gp))) in params.iter_mut().zip(&g).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (j, (w, &gr)) in p.data.iter_mut().zip(&gp.data).enumerate() {
                let gr = gr.as_f64();
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gr;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gr * gr;
                let update = self.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                *w = T::of(w.as_f64() - update);
            }
        }
        Ok(())
    }
}

/// Halve-on-plateau learning-rate policy with early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    /// Epochs without improvement before the learning rate is reduced.
    pub patience: usize,
    /// Epochs without improvement before training stops.
    pub stop_patience: usize,
    pub best: f64,
    pub since_best: usize,
    pub since_reduce: usize,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleStep {
    pub lr: f64,
    pub improved: bool,
    pub reduced: bool,
    pub stop: bool,
}

impl PlateauSchedule {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            factor: 0.5,
            patience: 2,
            stop_patience: 10,
            best: f64::INFINITY,
            since_best: 0,
            since_reduce: 0,
        }
    }

    /// Records one epoch's validation loss.
    pub fn observe(&mut self, val_loss: f64) -> ScheduleStep {
        let improved = val_loss < self.best;
        let mut reduced = false;
        if improved {
            self.best = val_loss;
            self.since_best = 0;
            self.since_reduce = 0;
        } else {
            self.since_best += 1;
            self.since_reduce += 1;
            if self.since_reduce >= self.patience {
                self.lr *= self.factor;
                self.since_reduce = 0;
                reduced = true;
            }
        }
        ScheduleStep {
            lr: self.lr,
            improved,
            reduced,
            stop: self.since_best >= self.stop_patience,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Param;

    #[derive(Clone)]
    struct Bowl(Param<f64>);

    impl Module<f64> for Bowl {
        fn params(&self) -> Vec<(String, &Param<f64>)> {
            vec![("w".into(), &self.0)]
        }
        fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
            vec![("w".into(), &mut self.0)]
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let start = vec![0.5, -0.3, 0.8, 0.1];
        let norm0 = start.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        let mut w = Bowl(Param::from_vec(&[4], start));
        let mut adam = Adam::new(0.01);
        let mut norms = Vec::new();
        for _ in 0..200 {
            let mut g = w.zeros_like();
            for (gi, wi) in g.0.data.iter_mut().zip(&w.0.data) {
                *gi = 2.0 * wi;
            }
            adam.step(&mut w, &g).unwrap();
            norms.push(w.0.data.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        assert!(*norms.last().unwrap() < 1e-2 * norm0, "final {}", norms.last().unwrap());
        // Adam oscillates once it reaches the scale of lr; check the descent
        // phase up to that point.
        let descent: Vec<f64> = norms.iter().copied().take_while(|&n| n > 0.02).collect();
        assert!(descent.len() > 10);
        assert!(descent.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut w = Bowl(Param::from_vec(&[2], vec![1.0, 1.0]));
        let g = Bowl(Param::from_vec(&[2], vec![f64::NAN, 0.0]));
        assert!(matches!(Adam::new(0.1).step(&mut w, &g), Err(Error::Numeric(_))));
    }

    #[test]
    fn halving_after_two_stagnant_epochs() {
        let mut s = PlateauSchedule::new(1e-3);
        assert!(s.observe(1.0).improved);
        assert_eq!(s.observe(1.0).lr, 1e-3);
        let step = s.observe(1.2);
        assert!(step.reduced);
        assert_eq!(step.lr, 5e-4);
    }

    #[test]
    fn early_stop_after_ten() {
        let mut s = PlateauSchedule::new(1e-3);
        s.observe(1.0);
        let mut stops = Vec::new();
        for _ in 0..10 {
            stops.push(s.observe(2.0).stop);
        }
        assert_eq!(stops.iter().filter(|&&b| b).count(), 1);
        assert!(*stops.last().unwrap());
        assert!((s.lr - 1e-3 / 32.0).abs() < 1e-15);
    }
}
