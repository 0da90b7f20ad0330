//! Hyperbolic intrinsic curiosity: a feature map onto the ball, a forward
//! model predicting the next feature, and an inverse model recovering the
//! action. Intrinsic reward is the geodesic prediction error.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::hyp;
use crate::autodiff::layers::{HMlp, Mlp};
use crate::autodiff::{Mat, ParamStore, Tape, Var};
use crate::crowdsim::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::hypgeom::PoincarePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CuriosityConfig {
    /// Intrinsic reward scale.
    pub eta: f64,
    /// Weight of the forward loss; the inverse loss gets `1 - beta`.
    pub beta: f64,
    /// Weight of the curiosity loss next to the TD loss.
    pub lambda: f64,
    pub hidden: usize,
    /// Feature dimension; must equal the planner's embedding dimension.
    pub embed_dim: usize,
    pub init_seed: u64,
}

impl Default for CuriosityConfig {
    fn default() -> Self {
        Self { eta: 0.1, beta: 0.2, lambda: 0.1, hidden: 192, embed_dim: 2, init_seed: 1 }
    }
}

impl CuriosityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("curiosity.beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.eta >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::Config("curiosity.eta and curiosity.lambda must be non-negative".into()));
        }
        if self.embed_dim < 2 || self.hidden == 0 {
            return Err(Error::Config("curiosity widths must be positive and embed_dim at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuriosityLayers {
    pub phi: HMlp,
    pub forward: HMlp,
    pub inverse: Mlp,
}

/// The three curiosity networks and their parameters.
#[derive(Debug, Clone)]
pub struct CuriosityNets {
    pub config: CuriosityConfig,
    pub input_dim: usize,
    pub layers: CuriosityLayers,
    pub store: ParamStore,
}

/// Tape handles of [`CuriosityNets::loss`].
#[derive(Debug, Clone)]
pub struct CuriosityOutput {
    pub loss: Var,
    pub forward_loss: Var,
    pub inverse_loss: Var,
    /// `η · d(φ(w'), φ̂(w'))` per transition.
    pub intrinsic: Vec<f64>,
}

pub fn one_hot(actions: &[usize]) -> Mat {
    let mut m = Array2::zeros((actions.len(), NUM_ACTIONS));
    for (r, &a) in actions.iter().enumerate() {
        m[[r, a]] = 1.0;
    }
    m
}

fn row(v: &[f64]) -> Mat {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector")
}

impl CuriosityNets {
    /// `input_dim` is the length of a flattened observation.
    pub fn new(config: CuriosityConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let (n, h) = (config.embed_dim, config.hidden);
        let layers = CuriosityLayers {
            phi: HMlp::new(&mut store, "phi", &[input_dim, h, n], &mut rng),
            forward: HMlp::new(&mut store, "forward", &[n + NUM_ACTIONS, h, n], &mut rng),
            inverse: Mlp::new(&mut store, "inverse", &[2 * n, h, NUM_ACTIONS], false, &mut rng),
        };
        Ok(Self { config, input_dim, layers, store })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    fn check_width(&self, w: &Mat) -> Result<()> {
        if w.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, found: w.ncols() });
        }
        Ok(())
    }

    /// `φ(w) = h-MLP(exp_O(w))`, row-wise.
    pub fn phi(&self, tape: &mut Tape, w: Var) -> Result<Var> {
        self.phi_in(tape, &self.store, w)
    }

    fn phi_in(&self, tape: &mut Tape, store: &ParamStore, w: Var) -> Result<Var> {
        let x = hyp::exp0(tape, w)?;
        self.layers.phi.forward(tape, store, x)
    }

    /// `f(exp_O([log_O φ, onehot(a)]))`.
    pub fn forward_predict(&self, tape: &mut Tape, phi_t: Var, actions: &[usize]) -> Result<Var> {
        self.forward_predict_in(tape, &self.store, phi_t, actions)
    }

    fn forward_predict_in(&self, tape: &mut Tape, store: &ParamStore, phi_t: Var, actions: &[usize]) -> Result<Var> {
        let l = hyp::log0(tape, phi_t)?;
        let a = tape.constant(one_hot(actions));
        let cat = tape.concat_cols(l, a)?;
        let x = hyp::exp0(tape, cat)?;
        self.layers.forward.forward(tape, store, x)
    }

    /// Action logits from `[log_O φ(w), log_O φ(w')]`.
    pub fn inverse_logits(&self, tape: &mut Tape, phi_t: Var, phi_next: Var) -> Result<Var> {
        self.inverse_logits_in(tape, &self.store, phi_t, phi_next)
    }

    fn inverse_logits_in(&self, tape: &mut Tape, store: &ParamStore, phi_t: Var, phi_next: Var) -> Result<Var> {
        let a = hyp::log0(tape, phi_t)?;
        let b = hyp::log0(tape, phi_next)?;
        let cat = tape.concat_cols(a, b)?;
        self.layers.inverse.forward(tape, store, cat)
    }

    /// `β · mean d² + (1 − β) · mean CE` over a batch of transitions.
    pub fn loss(&self, tape: &mut Tape, w_t: &Mat, actions: &[usize], w_next: &Mat) -> Result<CuriosityOutput> {
        self.loss_in(tape, &self.store, w_t, actions, w_next)
    }

    /// [`CuriosityNets::loss`] reading parameters from `store`, which must
    /// share the layout of `self.store`.
    pub fn loss_in(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        w_t: &Mat,
        actions: &[usize],
        w_next: &Mat,
    ) -> Result<CuriosityOutput> {
        if actions.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_width(w_t)?;
        self.check_width(w_next)?;
        let b = actions.len();
        if w_t.nrows() != b || w_next.nrows() != b {
            return Err(Error::DimensionMismatch { expected: b, found: w_t.nrows().min(w_next.nrows()) });
        }
        let wt = tape.constant(w_t.clone());
        let wn = tape.constant(w_next.clone());
        let phi_t = self.phi_in(tape, store, wt)?;
        let phi_n = self.phi_in(tape, store, wn)?;
        let pred = self.forward_predict_in(tape, store, phi_t, actions)?;
        let dist = hyp::distance(tape, phi_n, pred)?;
        let eta = self.config.eta;
        let intrinsic = tape.value(dist).iter().map(|d| eta * d).collect();
        let d2 = hyp::distance_sq(tape, phi_n, pred)?;
        let forward_loss = tape.mean(d2);
        let logits = self.inverse_logits_in(tape, store, phi_t, phi_n)?;
        let ce = tape.cross_entropy(logits, actions)?;
        let inverse_loss = tape.mean(ce);
        let beta = self.config.beta;
        let fl = tape.scale(forward_loss, beta);
        let il = tape.scale(inverse_loss, 1.0 - beta);
        let loss = tape.add(fl, il)?;
        Ok(CuriosityOutput { loss, forward_loss, inverse_loss, intrinsic })
    }

    pub fn embed(&self, w: &[f64]) -> Result<PoincarePoint> {
        let m = row(w);
        self.check_width(&m)?;
        let mut tape = Tape::new();
        let x = tape.constant(m);
        let p = self.phi(&mut tape, x)?;
        PoincarePoint::new(tape.value(p).row(0).to_vec())
    }

    pub fn predict(&self, w: &[f64], action: usize) -> Result<PoincarePoint> {
        let m = row(w);
        self.check_width(&m)?;
        let mut tape = Tape::new();
        let x = tape.constant(m);
        let p = self.phi(&mut tape, x)?;
        let f = self.forward_predict(&mut tape, p, &[action])?;
        PoincarePoint::new(tape.value(f).row(0).to_vec())
    }

    /// `η · d(φ(w'), f(φ(w), a))`.
    pub fn intrinsic_reward(&self, w_t: &[f64], action: usize, w_next: &[f64]) -> Result<f64> {
        let target = self.embed(w_next)?;
        let pred = self.predict(w_t, action)?;
        Ok(self.config.eta * crate::hypgeom::poincare_distance(&target, &pred)?)
    }
}
