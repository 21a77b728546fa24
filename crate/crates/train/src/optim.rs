//! Optimization: decoupled AdamW over a parameter registry and a
//! reduce-on-plateau learning-rate schedule. Both serialize their state
//! into checkpoint sections so a resumed run continues bit-for-bit.

use uxnet_core::Element;
use uxnet_core::Tensor;
use uxnet_model::{Checkpoint, ParamRegistry};

use crate::{Result, TrainError};

/// AdamW hyperparameters. `weight_decay` is decoupled: it shrinks weights
/// directly instead of entering the moment estimates.
#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.08 }
    }
}

/// Decoupled AdamW. Moments are kept in the parameter dtype so checkpoint
/// round-trips are exact; the per-element update runs in f64 on top of
/// that stored state, making it a pure function of (state, gradients).
pub struct AdamW<T: Element> {
    pub config: AdamWConfig,
    t: u64,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> AdamW<T> {
    /// Fresh state (zero moments) aligned with `registry`'s parameter order.
    pub fn new(registry: &ParamRegistry<T>, config: AdamWConfig) -> Self {
        let mut names = Vec::with_capacity(registry.len());
        let mut shapes = Vec::with_capacity(registry.len());
        let mut m = Vec::with_capacity(registry.len());
        let mut v = Vec::with_capacity(registry.len());
        for p in registry.params() {
            names.push(p.name().to_string());
            shapes.push(p.shape());
            m.push(vec![T::ZERO; p.numel()]);
            v.push(vec![T::ZERO; p.numel()]);
        }
        Self { config, t: 0, names, shapes, m, v }
    }

    /// Completed update steps.
    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one AdamW update from each parameter's accumulated gradient
    /// at learning rate `lr` (scheduler-owned, so it is passed per call).
    /// A non-finite gradient aborts before any parameter is touched.
    pub fn step(&mut self, registry: &ParamRegistry<T>, lr: f64) -> Result<()> {
        let step_index = (self.t + 1) as usize;
        for p in registry.params() {
            if p.grad().iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGrad {
                    name: p.name().to_string(),
                    step: step_index,
                });
            }
        }

        self.t += 1;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        for (p, (m, v)) in registry.params().iter().zip(self.m.iter_mut().zip(&mut self.v)) {
            p.update_value(|value, grad| {
                for i in 0..value.len() {
                    let g = grad[i].to_f64();
                    let mi = c.beta1 * m[i].to_f64() + (1.0 - c.beta1) * g;
                    let vi = c.beta2 * v[i].to_f64() + (1.0 - c.beta2) * g * g;
                    m[i] = T::from_f64(mi);
                    v[i] = T::from_f64(vi);
                    let m_hat = m[i].to_f64() / bias1;
                    let v_hat = v[i].to_f64() / bias2;
                    let w = value[i].to_f64();
                    let update = m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * w;
                    value[i] = T::from_f64(w - lr * update);
                }
            });
        }
        Ok(())
    }

    /// Adds `opt.step`, `opt.m.*`, and `opt.v.*` sections to a checkpoint.
    pub fn add_sections(&self, ckpt: &mut Checkpoint<T>) -> Result<()> {
        ckpt.push("opt.step", Tensor::from_vec(vec![1], vec![T::from_f64(self.t as f64)])?)?;
        for (i, name) in self.names.iter().enumerate() {
            ckpt.push(
                format!("opt.m.{name}"),
                Tensor::from_vec(self.shapes[i].clone(), self.m[i].clone())?,
            )?;
            ckpt.push(
                format!("opt.v.{name}"),
                Tensor::from_vec(self.shapes[i].clone(), self.v[i].clone())?,
            )?;
        }
        Ok(())
    }

    /// Restores moments and the step counter saved by [`Self::add_sections`].
    pub fn restore(&mut self, ckpt: &Checkpoint<T>) -> Result<()> {
        let step = ckpt
            .get("opt.step")
            .ok_or_else(|| TrainError::MissingSection("opt.step".to_string()))?;
        self.t = step.data()[0].to_f64() as u64;
        for (i, name) in self.names.iter().enumerate() {
            for (kind, slot) in [("m", &mut self.m[i]), ("v", &mut self.v[i])] {
                let section = format!("opt.{kind}.{name}");
                let tensor = ckpt
                    .get(&section)
                    .ok_or_else(|| TrainError::MissingSection(section.clone()))?;
                if tensor.shape() != self.shapes[i].as_slice() {
                    return Err(TrainError::Config(format!(
                        "section {section}: shape {:?} does not match parameter {:?}",
                        tensor.shape(),
                        self.shapes[i]
                    )));
                }
                slot.copy_from_slice(tensor.data());
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau schedule over a higher-is-better metric. The metric
/// must strictly exceed the best seen so far to count as progress; after
/// `patience` consecutive stalls the next stalled observation multiplies
/// the learning rate by `factor`.
///
/// The rate is derived as `initial_lr * factor^reductions`, so restoring
/// the integer state reproduces it exactly.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    initial_lr: f64,
    pub factor: f64,
    pub patience: usize,
    reductions: u32,
    best: Option<f64>,
    stalled: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64) -> Self {
        Self {
            initial_lr,
            factor: 0.9,
            patience: 10,
            reductions: 0,
            best: None,
            stalled: 0,
        }
    }

    /// Current learning rate.
    pub fn lr(&self) -> f64 {
        self.initial_lr * self.factor.powi(self.reductions as i32)
    }

    /// Best metric observed so far.
    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records one validation metric; returns whether the rate was reduced.
    pub fn observe(&mut self, metric: f64) -> bool {
        match self.best {
            Some(best) if !(metric > best) => {
                self.stalled += 1;
                if self.stalled > self.patience {
                    self.reductions += 1;
                    self.stalled = 0;
                    return true;
                }
                false
            }
            _ => {
                self.best = Some(metric);
                self.stalled = 0;
                false
            }
        }
    }

    /// Adds the `sched.state` section to a checkpoint.
    pub fn add_sections<T: Element>(&self, ckpt: &mut Checkpoint<T>) -> Result<()> {
        let state = vec![
            T::from_f64(f64::from(self.reductions)),
            T::from_f64(self.best.unwrap_or(-1.0)),
            T::from_f64(self.stalled as f64),
        ];
        ckpt.push("sched.state", Tensor::from_vec(vec![3], state)?)?;
        Ok(())
    }

    /// Restores the state saved by [`Self::add_sections`]. The stored best
    /// metric is exact as long as observations were quantized to `T` by the
    /// caller (the trainer does this before calling [`Self::observe`]).
    pub fn restore<T: Element>(&mut self, ckpt: &Checkpoint<T>) -> Result<()> {
        let state = ckpt
            .get("sched.state")
            .ok_or_else(|| TrainError::MissingSection("sched.state".to_string()))?;
        if state.numel() != 3 {
            return Err(TrainError::Config(format!(
                "sched.state holds {} values, expected 3",
                state.numel()
            )));
        }
        self.reductions = state.data()[0].to_f64() as u32;
        let best = state.data()[1].to_f64();
        self.best = if best < 0.0 { None } else { Some(best) };
        self.stalled = state.data()[2].to_f64() as usize;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use uxnet_core::ops;
    use uxnet_core::tape::{backward, Tape};
    use uxnet_model::UXNetConfig;

    fn single_param_registry(values: Vec<f64>) -> ParamRegistry<f64> {
        let mut reg = ParamRegistry::new();
        reg.create("w", Tensor::from_vec(vec![values.len()], values).unwrap())
            .unwrap();
        reg
    }

    fn backprop_identity_loss(reg: &ParamRegistry<f64>, scale: f64) {
        // loss = scale * sum(w) so every gradient component equals scale.
        let tape = Tape::new();
        let w = reg.params()[0].watch(&tape);
        let loss = ops::mul_scalar(&ops::sum_all(&w).unwrap(), scale).unwrap();
        let grads = backward(&tape, &loss).unwrap();
        reg.params()[0].accumulate_grad(&grads);
    }

    #[test]
    fn zero_gradient_step_is_pure_decay() {
        let reg = single_param_registry(vec![1.0, -2.0, 0.5]);
        let config = AdamWConfig::default();
        let mut opt = AdamW::new(&reg, config);
        opt.step(&reg, config.lr).unwrap();
        let factor = 1.0 - config.lr * config.weight_decay;
        let got = reg.params()[0].value();
        for (g, w0) in got.data().iter().zip([1.0, -2.0, 0.5]) {
            let want = w0 * factor;
            assert!((g - want).abs() < 1e-15 * want.abs().max(1.0), "{g} vs {want}");
        }
    }

    #[test]
    fn first_step_matches_the_update_formula() {
        let reg = single_param_registry(vec![2.0]);
        let config = AdamWConfig::default();
        let mut opt = AdamW::new(&reg, config);
        backprop_identity_loss(&reg, 3.0);
        opt.step(&reg, config.lr).unwrap();

        let g = 3.0f64;
        let m_hat = ((1.0 - config.beta1) * g) / (1.0 - config.beta1);
        let v_hat = ((1.0 - config.beta2) * g * g) / (1.0 - config.beta2);
        let want = 2.0 - config.lr * (m_hat / (v_hat.sqrt() + config.eps) + config.weight_decay * 2.0);
        let got = reg.params()[0].value().data()[0];
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn moments_track_a_two_step_reference() {
        let reg = single_param_registry(vec![1.0]);
        let config = AdamWConfig::default();
        let mut opt = AdamW::new(&reg, config);

        // Reference trace computed from the definition.
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
        for (t, g) in [(1, 2.0f64), (2, -1.0)] {
            backprop_identity_loss(&reg, g);
            opt.step(&reg, config.lr).unwrap();
            reg.params()[0].zero_grad();

            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            let m_hat = m / (1.0 - config.beta1.powi(t));
            let v_hat = v / (1.0 - config.beta2.powi(t));
            w -= config.lr * (m_hat / (v_hat.sqrt() + config.eps) + config.weight_decay * w);
            let got = reg.params()[0].value().data()[0];
            assert!((got - w).abs() < 1e-14, "step {t}: {got} vs {w}");
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name_before_updates() {
        let mut reg = ParamRegistry::<f64>::new();
        reg.create("a", Tensor::from_vec(vec![1], vec![1.0]).unwrap()).unwrap();
        reg.create("b", Tensor::from_vec(vec![1], vec![5.0]).unwrap()).unwrap();
        let mut opt = AdamW::new(&reg, AdamWConfig::default());

        // Poison b's gradient through a division by zero.
        let tape = Tape::new();
        let b = reg.params()[1].watch(&tape);
        let zero = tape.leaf(&Tensor::from_vec(vec![1], vec![0.0]).unwrap());
        let loss = ops::sum_all(&ops::div(&b, &zero).unwrap()).unwrap();
        let grads = backward(&tape, &loss).unwrap();
        reg.params()[1].accumulate_grad(&grads);

        let err = opt.step(&reg, 1e-4).unwrap_err();
        assert!(err.to_string().contains('b'), "{err}");
        // Nothing moved: the error fired before any update.
        assert_eq!(reg.params()[0].value().data()[0], 1.0);
        assert_eq!(reg.params()[1].value().data()[0], 5.0);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn optimizer_state_rides_checkpoints_bitwise() {
        let reg = single_param_registry(vec![1.0, 2.0]);
        let config = AdamWConfig::default();
        let mut opt = AdamW::new(&reg, config);
        for _ in 0..3 {
            backprop_identity_loss(&reg, 0.7);
            opt.step(&reg, config.lr).unwrap();
            reg.params()[0].zero_grad();
        }

        let mut ckpt = Checkpoint::<f64>::new(UXNetConfig::tiny());
        opt.add_sections(&mut ckpt).unwrap();
        let mut fresh = AdamW::new(&reg, config);
        fresh.restore(&ckpt).unwrap();
        assert_eq!(fresh.t, opt.t);
        assert_eq!(fresh.m, opt.m);
        assert_eq!(fresh.v, opt.v);

        let empty = Checkpoint::<f64>::new(UXNetConfig::tiny());
        assert!(fresh.restore(&empty).is_err());
    }

    #[test]
    fn plateau_reduces_on_the_eleventh_stalled_eval() {
        let mut sched = PlateauScheduler::new(1e-4);
        assert!(!sched.observe(0.5)); // sets the best
        for i in 0..10 {
            assert!(!sched.observe(0.5), "stall {} must not reduce", i + 1);
            assert_eq!(sched.lr(), 1e-4);
        }
        assert!(sched.observe(0.5)); // 11th stall reduces
        assert!((sched.lr() - 0.9e-4).abs() < 1e-19);

        // Strict improvement resets the stall counter.
        assert!(!sched.observe(0.6));
        for _ in 0..10 {
            assert!(!sched.observe(0.6));
        }
        assert!(sched.observe(0.59));
        assert!((sched.lr() - 0.81e-4).abs() < 1e-19);
    }

    #[test]
    fn scheduler_state_rides_checkpoints() {
        let mut sched = PlateauScheduler::new(1e-3);
        sched.observe(0.25);
        for _ in 0..11 {
            sched.observe(0.25);
        }
        assert_eq!(sched.reductions, 1);

        let mut ckpt = Checkpoint::<f32>::new(UXNetConfig::tiny());
        sched.add_sections(&mut ckpt).unwrap();
        let mut fresh = PlateauScheduler::new(1e-3);
        fresh.restore(&ckpt).unwrap();
        assert_eq!(fresh.reductions, 1);
        assert_eq!(fresh.stalled, 0);
        assert_eq!(fresh.best, Some(f64::from(0.25f32)));
        assert_eq!(fresh.lr(), sched.lr());
    }
}
