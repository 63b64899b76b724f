use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::backbone::BackboneInput;
use super::heads::cross_entropy;
use super::{DiffusionSchedule, Model, ModelError, ModelParams, Vocab};
use crate::molio::{Molecule, Vec3};

/// A training sequence: element indices and coordinates in sequence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub atoms: Vec<usize>,
    pub coords: Vec<Vec3>,
    pub class_id: Option<u32>,
}

impl Example {
    /// Takes the molecule's atoms in their stored order, which should already
    /// be canonical.
    pub fn from_molecule(mol: &Molecule, vocab: &Vocab) -> Result<Self, ModelError> {
        if mol.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if let Some(c) = mol.class_id() {
            vocab.class_token(c)?;
        }
        Ok(Self {
            atoms: mol
                .atom_types()
                .iter()
                .map(|&t| vocab.element_index(t))
                .collect::<Result<_, _>>()?,
            coords: mol.coords().to_vec(),
            class_id: mol.class_id(),
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `[BOS, class slot, atoms...]` with the special tokens at the origin.
    pub fn input(&self, vocab: &Vocab, class_id: Option<u32>) -> Result<BackboneInput, ModelError> {
        let mut tokens = vec![vocab.bos(), vocab.class_slot(class_id)?];
        tokens.extend(&self.atoms);
        let mut coords = vec![Vec3::zeros(); 2];
        coords.extend(&self.coords);
        Ok(BackboneInput { tokens, coords })
    }
}

/// Per-example random draws for one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub drop_label: bool,
    /// One noise level per atom.
    pub sigmas: Vec<f64>,
    pub eps: Vec<Vec3>,
}

impl Draws {
    pub fn sample<R: Rng>(rng: &mut R, n_atoms: usize, schedule: &DiffusionSchedule, p_drop: f64) -> Self {
        let drop_label = rng.random::<f64>() < p_drop;
        let mut sigmas = Vec::with_capacity(n_atoms);
        let mut eps = Vec::with_capacity(n_atoms);
        for _ in 0..n_atoms {
            sigmas.push(schedule.sigma_at(rng.random::<f64>()));
            eps.push(Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ));
        }
        Self {
            drop_label,
            sigmas,
            eps,
        }
    }
}

/// Mean cross-entropy over type positions and mean squared noise error over
/// coordinate positions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub type_loss: f64,
    pub diff_loss: f64,
}

impl LossParts {
    pub fn total(&self, lambda: f64) -> f64 {
        self.type_loss + lambda * self.diff_loss
    }
}

impl Model {
    fn run_example(
        &self,
        ex: &Example,
        draws: &Draws,
        lambda: f64,
        grads: Option<&mut ModelParams>,
    ) -> Result<LossParts, ModelError> {
        if ex.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let n = ex.len();
        let vocab = self.vocab();
        let class = if draws.drop_label { None } else { ex.class_id };
        let cache = self.forward_backbone(&ex.input(vocab, class)?)?;
        let d = self.cfg.d();
        let mut dh = vec![vec![0.0; d]; n + 2];
        let mut parts = LossParts::default();
        let mut head_grads = grads;
        let n_type = (n + 1) as f64;
        for pos in 1..=n + 1 {
            let target = if pos <= n { ex.atoms[pos - 1] } else { vocab.eos() };
            let (l, mut dl) = cross_entropy(&self.type_logits(&cache.h[pos]), target);
            parts.type_loss += l / n_type;
            if let Some(g) = head_grads.as_deref_mut() {
                dl.iter_mut().for_each(|v| *v /= n_type);
                let back = self.type_backward(&cache.h[pos], &dl, g);
                super::linalg::add_assign(&mut dh[pos], &back);
            }
        }
        for pos in 1..=n {
            let (sigma, eps) = (draws.sigmas[pos - 1], draws.eps[pos - 1]);
            let x_sigma = ex.coords[pos - 1] + eps * sigma;
            let out = self.denoise(&cache.h[pos], ex.atoms[pos - 1], &x_sigma, sigma);
            let err = eps - out.eps_hat;
            parts.diff_loss += err.norm_squared() / n as f64;
            if let Some(g) = head_grads.as_deref_mut() {
                let d_eps = err * (-2.0 * lambda / n as f64);
                let back = self.denoise_backward(&out, &d_eps, g);
                super::linalg::add_assign(&mut dh[pos], &back);
            }
        }
        if let Some(g) = head_grads {
            self.backward_backbone(&cache, &dh, g);
        }
        Ok(parts)
    }

    pub fn loss(&self, ex: &Example, draws: &Draws, lambda: f64) -> Result<LossParts, ModelError> {
        self.run_example(ex, draws, lambda, None)
    }

    /// Loss and the gradient of `type_loss + lambda * diff_loss`.
    pub fn loss_and_grad(
        &self,
        ex: &Example,
        draws: &Draws,
        lambda: f64,
    ) -> Result<(LossParts, ModelParams), ModelError> {
        let mut g = self.params.zeros_like();
        let parts = self.run_example(ex, draws, lambda, Some(&mut g))?;
        Ok((parts, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Gradient descent with heavy-ball momentum.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay ends at `learning_rate * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub momentum: f64,
    pub optimizer: OptimizerKind,
    /// Weight λ of the diffusion loss.
    pub loss_lambda: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 8,
            learning_rate: 0.01,
            final_lr_fraction: 1.0,
            momentum: 0.9,
            optimizer: OptimizerKind::Sgd,
            loss_lambda: 1.0,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("final_lr_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.loss_lambda >= 0.0 && self.loss_lambda.is_finite()) {
            return bad("loss_lambda must be non-negative");
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return bad("grad_clip must be non-negative");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.learning_rate;
        }
        let progress = step as f64 / (self.steps - 1) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cosine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub step: usize,
    pub loss_type: f64,
    pub loss_diff: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<StepLoss>,
}

/// Sums gradients pairwise in a fixed tree so the result does not depend on
/// how the per-example work was scheduled.
pub(crate) fn tree_sum(mut parts: Vec<ModelParams>) -> Option<ModelParams> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.add_assign(&b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

enum OptState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

/// Optimizer loop over a fixed set of examples.
pub struct Trainer {
    model: Model,
    cfg: TrainConfig,
    data: Vec<Example>,
    rng: ChaCha8Rng,
    state: OptState,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
    trace: Vec<StepLoss>,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig, data: Vec<Example>) -> Result<Self, ModelError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(ModelError::Config("training set is empty".into()));
        }
        let n = model.params.len();
        let state = match cfg.optimizer {
            OptimizerKind::Sgd => OptState::Sgd {
                velocity: vec![0.0; n],
            },
            OptimizerKind::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            order: (0..data.len()).collect(),
            cursor: data.len(),
            model,
            cfg,
            data,
            state,
            step: 0,
            trace: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn trace(&self) -> &[StepLoss] {
        &self.trace
    }

    /// Draws from reshuffled passes over the data; a batch larger than the
    /// data set holds repeated examples, each with its own noise draws.
    fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// One optimizer step; returns the batch-mean losses before the update.
    pub fn step(&mut self) -> Result<StepLoss, ModelError> {
        let batch = self.next_batch();
        let schedule = self.model.cfg.schedule;
        let p_drop = self.model.cfg.guidance.p_drop;
        let draws: Vec<Draws> = batch
            .iter()
            .map(|&i| Draws::sample(&mut self.rng, self.data[i].len(), &schedule, p_drop))
            .collect();
        let lambda = self.cfg.loss_lambda;
        let model = &self.model;
        let data = &self.data;
        let results: Vec<(LossParts, ModelParams)> = batch
            .par_iter()
            .zip(draws.par_iter())
            .map(|(&i, dr)| model.loss_and_grad(&data[i], dr, lambda))
            .collect::<Result<_, _>>()?;
        let b = results.len() as f64;
        let (loss_type, loss_diff) = results
            .iter()
            .fold((0.0, 0.0), |(t, d), (p, _)| (t + p.type_loss, d + p.diff_loss));
        let record = StepLoss {
            step: self.step,
            loss_type: loss_type / b,
            loss_diff: loss_diff / b,
        };
        let mut grad = tree_sum(results.into_iter().map(|(_, g)| g).collect()).expect("batch is non-empty");
        grad.scale(1.0 / b);
        if !(record.loss_type.is_finite() && record.loss_diff.is_finite() && grad.is_finite()) {
            return Err(ModelError::Diverged { step: self.step });
        }
        if self.cfg.grad_clip > 0.0 {
            let norm = grad.norm();
            if norm > self.cfg.grad_clip {
                grad.scale(self.cfg.grad_clip / norm);
            }
        }
        self.apply(&grad.flatten());
        if !self.model.params.is_finite() {
            return Err(ModelError::Diverged { step: self.step });
        }
        self.trace.push(record);
        self.step += 1;
        Ok(record)
    }

    fn apply(&mut self, grad: &[f64]) {
        let lr = self.cfg.learning_rate_at(self.step);
        let mut theta = self.model.params.flatten();
        match &mut self.state {
            OptState::Sgd { velocity } => {
                let mu = self.cfg.momentum;
                for ((p, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
                    *v = mu * *v + g;
                    *p -= lr * *v;
                }
            }
            OptState::Adam { m, v, t } => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let c1 = 1.0 - B1.powi(*t);
                let c2 = 1.0 - B2.powi(*t);
                for (((p, m), v), g) in theta.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grad) {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                }
            }
        }
        self.model.params.assign_flat(&theta);
    }

    /// Runs the remaining steps.
    pub fn run(mut self) -> Result<TrainOutcome, ModelError> {
        while self.step < self.cfg.steps {
            self.step()?;
        }
        Ok(TrainOutcome {
            model: self.model,
            trace: self.trace,
        })
    }
}
