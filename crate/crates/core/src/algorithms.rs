//! Synchronous decentralized optimization steps.
//!
//! All variants share the shape: every node draws one stochastic gradient
//! at its own iterate, then exchanges vectors with graph neighbors through
//! the mixing matrix W. One step advances the whole swarm one round.
//!
//! - DSGD:  x_i <- sum_j W_ij (x_j - eta g_j)
//! - DSGDm: u_i <- beta u_i + g_i;  x_i <- sum_j W_ij (x_j - eta u_j)
//! - Momentum Tracking:
//!     u_i <- beta u_i + g_i
//!     x_i <- sum_j W_ij x_j - eta (u_i - c_i_old)
//!     c_i <- sum_j W_ij (c_j_old - u_j) + u_i
//!
//! Gradient Tracking is Momentum Tracking with beta forced to 0; it is an
//! alias, not a separate code path. The corrector c_i estimates how far the
//! local momentum sits from the swarm mean, which is what removes the
//! data-heterogeneity term from the convergence behavior. Two exactly
//! conserved quantities make the implementation checkable:
//!
//! - sum_i c_i = 0 at every round (the mixing matrix is doubly stochastic,
//!   so the c update is conservative and the initializer is mean-centered);
//! - x_bar^(r+1) = x_bar^(r) - eta u_bar^(r+1) for every variant with a
//!   momentum buffer, where bars are swarm means.
//!
//! Momentum buffers can start at zero or at the mean-centered first
//! gradient, (1/(1-beta)) (g_i - g_bar), evaluated at the shared starting
//! point. In the latter case the round-0 step reuses the same addressed
//! gradient draws, so the initializer and the first update see one
//! realization per node, not two.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError, StateField};
use crate::problem::Objective;
use crate::rng::gradient_stream;
use crate::topology::MixingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dsgd,
    Dsgdm,
    GradientTracking,
    MomentumTracking,
}

impl Variant {
    /// Whether the variant carries the tracking corrector c.
    pub fn is_tracking(self) -> bool {
        matches!(self, Variant::GradientTracking | Variant::MomentumTracking)
    }

    /// Vectors a node sends each neighbor per round: tracking variants
    /// transmit the iterate and the corrector payload, the rest only the
    /// iterate.
    pub fn vectors_per_neighbor(self) -> u64 {
        if self.is_tracking() {
            2
        } else {
            1
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Dsgd => "dsgd",
            Variant::Dsgdm => "dsgdm",
            Variant::GradientTracking => "gradient_tracking",
            Variant::MomentumTracking => "momentum_tracking",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Variant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsgd" => Ok(Variant::Dsgd),
            "dsgdm" => Ok(Variant::Dsgdm),
            "gradient_tracking" => Ok(Variant::GradientTracking),
            "momentum_tracking" => Ok(Variant::MomentumTracking),
            other => Err(SimError::Config(format!(
                "unknown variant '{other}' (expected dsgd | dsgdm | gradient_tracking | momentum_tracking)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// u = c = 0.
    Zero,
    /// u = c = (1/(1-beta)) (g_i - g_bar) at the starting point. Applies to
    /// tracking variants; others always start at zero.
    Theorem,
}

/// Validated algorithm parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    pub eta: f64,
    pub beta: f64,
    pub init: InitMode,
}

impl AlgorithmSpec {
    /// Validates ranges. Gradient Tracking pins beta to 0 whatever was
    /// passed; the returned spec always shows the effective value.
    pub fn new(variant: Variant, eta: f64, beta: f64, init: InitMode) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(SimError::Config(format!(
                "eta must be finite and nonnegative, got {eta}"
            )));
        }
        if !beta.is_finite() || !(0.0..1.0).contains(&beta) {
            return Err(SimError::Config(format!(
                "beta must be in [0, 1), got {beta}"
            )));
        }
        let beta = if variant == Variant::GradientTracking {
            0.0
        } else {
            beta
        };
        Ok(AlgorithmSpec {
            variant,
            eta,
            beta,
            init,
        })
    }

    /// The momentum the update actually applies: plain DSGD has no momentum
    /// buffer, so its effective value is 0 whatever the config says.
    pub fn effective_beta(&self) -> f64 {
        if self.variant == Variant::Dsgd {
            0.0
        } else {
            self.beta
        }
    }
}

/// One node's state: iterate x, momentum u, corrector c. Non-tracking
/// variants keep unused buffers at zero so the state shape is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub c: Vec<f64>,
}

/// The whole swarm at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub nodes: Vec<NodeState>,
    pub round: u64,
}

impl SwarmState {
    /// x_bar, summed in node order.
    pub fn average_iterate(&self) -> Vec<f64> {
        mean_of(self.nodes.iter().map(|s| &s.x))
    }

    /// u_bar.
    pub fn momentum_mean(&self) -> Vec<f64> {
        mean_of(self.nodes.iter().map(|s| &s.u))
    }

    /// sum_i c_i (not the mean: the conserved quantity itself).
    pub fn corrector_sum(&self) -> Vec<f64> {
        let d = self.nodes.first().map_or(0, |s| s.c.len());
        let mut acc = vec![0.0; d];
        for s in &self.nodes {
            for (a, v) in acc.iter_mut().zip(&s.c) {
                *a += v;
            }
        }
        acc
    }
}

fn mean_of<'a>(vecs: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for v in vecs {
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        count += 1;
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    acc
}

/// Places every node at the common starting point and fills the momentum
/// buffers per the init mode. Theorem-mode draws use the round-0 gradient
/// keys on purpose: the round-0 step then sees the same realizations.
pub fn init_swarm<O: Objective + ?Sized>(
    problem: &O,
    spec: &AlgorithmSpec,
    x0: &[f64],
    run_seed: u64,
) -> Result<SwarmState> {
    let n = problem.node_count();
    let d = problem.dim();
    if x0.len() != d {
        return Err(SimError::LengthMismatch(format!(
            "starting point has dimension {}, problem wants {d}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::Config("starting point has non-finite entries".into()));
    }
    let zeros = vec![0.0; d];
    let theorem = spec.variant.is_tracking() && spec.init == InitMode::Theorem;
    let nodes = if theorem {
        let grads: Vec<Vec<f64>> = (0..n)
            .map(|i| problem.stochastic_gradient(i, x0, gradient_stream(run_seed, i, 0)))
            .collect();
        let gbar = mean_of(grads.iter());
        let scale = 1.0 / (1.0 - spec.beta);
        grads
            .iter()
            .map(|g| {
                let uc: Vec<f64> = g
                    .iter()
                    .zip(&gbar)
                    .map(|(gi, gb)| scale * (gi - gb))
                    .collect();
                NodeState {
                    x: x0.to_vec(),
                    u: uc.clone(),
                    c: uc,
                }
            })
            .collect()
    } else {
        (0..n)
            .map(|_| NodeState {
                x: x0.to_vec(),
                u: zeros.clone(),
                c: zeros.clone(),
            })
            .collect()
    };
    Ok(SwarmState { nodes, round: 0 })
}

/// Advances one round with the spec's variant.
pub fn step<O: Objective + ?Sized>(
    swarm: &SwarmState,
    w: &MixingMatrix,
    problem: &O,
    spec: &AlgorithmSpec,
    run_seed: u64,
) -> Result<SwarmState> {
    match spec.variant {
        Variant::Dsgd => step_dsgd(swarm, w, problem, spec, run_seed),
        Variant::Dsgdm => step_dsgdm(swarm, w, problem, spec, run_seed),
        Variant::GradientTracking | Variant::MomentumTracking => {
            step_momentum_tracking(swarm, w, problem, spec, run_seed)
        }
    }
}

fn draw_gradients<O: Objective + ?Sized>(
    swarm: &SwarmState,
    problem: &O,
    run_seed: u64,
) -> Vec<Vec<f64>> {
    swarm
        .nodes
        .iter()
        .enumerate()
        .map(|(i, s)| problem.stochastic_gradient(i, &s.x, gradient_stream(run_seed, i, swarm.round)))
        .collect()
}

/// x_i <- sum_j W_ij (x_j - eta g_j). Momentum and corrector ride along
/// unchanged.
pub fn step_dsgd<O: Objective + ?Sized>(
    swarm: &SwarmState,
    w: &MixingMatrix,
    problem: &O,
    spec: &AlgorithmSpec,
    run_seed: u64,
) -> Result<SwarmState> {
    let grads = draw_gradients(swarm, problem, run_seed);
    let shifted: Vec<Vec<f64>> = swarm
        .nodes
        .iter()
        .zip(&grads)
        .map(|(s, g)| s.x.iter().zip(g).map(|(x, gk)| x - spec.eta * gk).collect())
        .collect();
    let x_new = w.mix(&shifted);
    finalize(swarm, x_new, None, None)
}

/// u_i <- beta u_i + g_i; x_i <- sum_j W_ij (x_j - eta u_j).
pub fn step_dsgdm<O: Objective + ?Sized>(
    swarm: &SwarmState,
    w: &MixingMatrix,
    problem: &O,
    spec: &AlgorithmSpec,
    run_seed: u64,
) -> Result<SwarmState> {
    let grads = draw_gradients(swarm, problem, run_seed);
    let u_new: Vec<Vec<f64>> = swarm
        .nodes
        .iter()
        .zip(&grads)
        .map(|(s, g)| s.u.iter().zip(g).map(|(u, gk)| spec.beta * u + gk).collect())
        .collect();
    let shifted: Vec<Vec<f64>> = swarm
        .nodes
        .iter()
        .zip(&u_new)
        .map(|(s, u)| s.x.iter().zip(u).map(|(x, uk)| x - spec.eta * uk).collect())
        .collect();
    let x_new = w.mix(&shifted);
    finalize(swarm, x_new, Some(u_new), None)
}

/// The tracking step: momentum update, iterate gossip with the corrected
/// momentum direction, corrector gossip that conserves sum_i c_i.
pub fn step_momentum_tracking<O: Objective + ?Sized>(
    swarm: &SwarmState,
    w: &MixingMatrix,
    problem: &O,
    spec: &AlgorithmSpec,
    run_seed: u64,
) -> Result<SwarmState> {
    let grads = draw_gradients(swarm, problem, run_seed);
    let u_new: Vec<Vec<f64>> = swarm
        .nodes
        .iter()
        .zip(&grads)
        .map(|(s, g)| s.u.iter().zip(g).map(|(u, gk)| spec.beta * u + gk).collect())
        .collect();

    let xs: Vec<Vec<f64>> = swarm.nodes.iter().map(|s| s.x.clone()).collect();
    let mut x_new = w.mix(&xs);
    for ((xi, ui), s) in x_new.iter_mut().zip(&u_new).zip(&swarm.nodes) {
        for ((xk, uk), ck) in xi.iter_mut().zip(ui).zip(&s.c) {
            *xk -= spec.eta * (uk - ck);
        }
    }

    // Payload c_j_old - u_j_new is what travels the edges; adding back the
    // local u keeps the swarm sum of c at zero because W is doubly
    // stochastic: sum_i c_i_new = sum_j (c_j - u_j) + sum_i u_i = sum_j c_j.
    let payload: Vec<Vec<f64>> = swarm
        .nodes
        .iter()
        .zip(&u_new)
        .map(|(s, u)| s.c.iter().zip(u).map(|(ck, uk)| ck - uk).collect())
        .collect();
    let mut c_new = w.mix(&payload);
    for (ci, ui) in c_new.iter_mut().zip(&u_new) {
        for (ck, uk) in ci.iter_mut().zip(ui) {
            *ck += uk;
        }
    }

    finalize(swarm, x_new, Some(u_new), Some(c_new))
}

/// Assembles the next SwarmState and screens it for non-finite entries.
fn finalize(
    old: &SwarmState,
    x: Vec<Vec<f64>>,
    u: Option<Vec<Vec<f64>>>,
    c: Option<Vec<Vec<f64>>>,
) -> Result<SwarmState> {
    let round = old.round + 1;
    let n = old.nodes.len();
    let u = u.unwrap_or_else(|| old.nodes.iter().map(|s| s.u.clone()).collect());
    let c = c.unwrap_or_else(|| old.nodes.iter().map(|s| s.c.clone()).collect());
    for i in 0..n {
        for (vecs, field) in [
            (&x[i], StateField::Iterate),
            (&u[i], StateField::Momentum),
            (&c[i], StateField::Corrector),
        ] {
            if vecs.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Diverged {
                    round,
                    node: i,
                    field,
                });
            }
        }
    }
    let nodes = x
        .into_iter()
        .zip(u)
        .zip(c)
        .map(|((x, u), c)| NodeState { x, u, c })
        .collect();
    Ok(SwarmState { nodes, round })
}
