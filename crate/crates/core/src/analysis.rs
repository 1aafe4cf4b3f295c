//! Diagnostics: the tracking-variant rate bound, heterogeneity-independence
//! verdicts over sweep results, a mean-iterate replay oracle, and the
//! invariant battery behind the `verify` command.
//!
//! The rate bound for Momentum Tracking, with unit constants, is the sum of
//!
//! - term1 = sqrt(r0 sigma^2 L / (N R))
//! - term2 = (r0^2 sigma^2 L^2 / (p^4 R^2 (1-b)) * (1 + p b^2 / (1-b)))^(1/3)
//! - term3 = (L r0 / ((1-b) p^2 R)) * sqrt(1 + b^2 / ((1-b^2)^3 p))
//!
//! where r0 = f(x_bar^0) - f*, L is smoothness, p the spectral gap, b the
//! momentum, N the node count, R the round budget. Gradient heterogeneity
//! is not an input: the bound has no term for it, which is the point of the
//! tracking corrector. The terms scale as R^(-1/2), R^(-2/3), R^(-1).

use serde::Serialize;

use crate::algorithms::{init_swarm, step, InitMode, Variant};
use crate::engine::{RunConfig, RunResult};
use crate::error::{Result, SimError};
use crate::problem::Objective;
use crate::rng::{gradient_stream, RandomStream};
use crate::topology::{spectral_gap, Graph, MixingMatrix};

// ---------------------------------------------------------------------------
// Rate bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBoundInputs {
    /// Initial suboptimality f(x_bar^0) - f*.
    pub r0: f64,
    /// Gradient noise level.
    pub sigma2: f64,
    /// Smoothness constant L.
    pub smoothness: f64,
    /// Spectral gap p in (0, 1].
    pub gap: f64,
    /// Momentum beta in [0, 1).
    pub beta: f64,
    pub nodes: u64,
    pub rounds: u64,
}

impl RateBoundInputs {
    fn validate(&self) -> Result<()> {
        if !(self.r0 >= 0.0) {
            return Err(SimError::Config(format!(
                "r0 must be nonnegative, got {}",
                self.r0
            )));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(SimError::Config(format!(
                "sigma2 must be nonnegative, got {}",
                self.sigma2
            )));
        }
        if !(self.smoothness >= 0.0) {
            return Err(SimError::Config(format!(
                "smoothness must be nonnegative, got {}",
                self.smoothness
            )));
        }
        if !self.gap.is_finite() || self.gap <= 0.0 || self.gap > 1.0 {
            return Err(SimError::Config(format!(
                "gap must be in (0, 1], got {}",
                self.gap
            )));
        }
        if !self.beta.is_finite() || !(0.0..1.0).contains(&self.beta) {
            return Err(SimError::Config(format!(
                "beta must be in [0, 1), got {}",
                self.beta
            )));
        }
        if self.nodes == 0 {
            return Err(SimError::Config("nodes must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(SimError::Config("rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBound {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub total: f64,
}

/// Evaluates the three-term bound. Heterogeneity takes no part in it.
pub fn mt_rate_bound(inputs: &RateBoundInputs) -> Result<RateBound> {
    inputs.validate()?;
    let RateBoundInputs {
        r0,
        sigma2,
        smoothness: l,
        gap: p,
        beta,
        nodes,
        rounds,
    } = *inputs;
    let n = nodes as f64;
    let r = rounds as f64;
    let om = 1.0 - beta;

    let term1 = (r0 * sigma2 * l / (n * r)).sqrt();
    let term2 = (r0 * r0 * sigma2 * l * l / (p.powi(4) * r * r * om)
        * (1.0 + p * beta * beta / om))
        .cbrt();
    let term3 = l * r0 / (om * p * p * r)
        * (1.0 + beta * beta / ((1.0 - beta * beta).powi(3) * p)).sqrt();
    Ok(RateBound {
        term1,
        term2,
        term3,
        total: term1 + term2 + term3,
    })
}

/// Step size guaranteed admissible for the tracking variants:
/// eta <= (1-b)^2 p^2 / (16 L sqrt(7836 b^2 / ((1-b^2)^3 p) + 282)).
pub fn admissible_step_size(smoothness: f64, gap: f64, beta: f64) -> Result<f64> {
    let inputs = RateBoundInputs {
        r0: 0.0,
        sigma2: 0.0,
        smoothness,
        gap,
        beta,
        nodes: 1,
        rounds: 1,
    };
    inputs.validate()?;
    if smoothness <= 0.0 {
        return Err(SimError::Config(format!(
            "smoothness must be positive, got {smoothness}"
        )));
    }
    let om = 1.0 - beta;
    let inner = 7836.0 * beta * beta / ((1.0 - beta * beta).powi(3) * gap) + 282.0;
    Ok(om * om * gap * gap / (16.0 * smoothness * inner.sqrt()))
}

// ---------------------------------------------------------------------------
// Heterogeneity independence
// ---------------------------------------------------------------------------

/// Default acceptance ratio between the largest and smallest level mean.
pub const INDEPENDENCE_THRESHOLD: f64 = 1.5;
/// Default fraction of the recorded series averaged, from the tail.
pub const INDEPENDENCE_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSummary {
    /// The swept heterogeneity level.
    pub value: f64,
    /// Mean ||grad f(x_bar)||^2 over each run's tail window, averaged over
    /// the level's runs.
    pub mean_grad_norm_sq: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub threshold: f64,
    pub window_fraction: f64,
    /// Sorted by level value, ascending.
    pub levels: Vec<LevelSummary>,
    pub max_min_ratio: f64,
    pub pass: bool,
}

impl IndependenceReport {
    /// Whether the level means grow strictly with the level value. The
    /// signature a heterogeneity-sensitive algorithm leaves behind.
    pub fn strictly_increasing(&self) -> bool {
        self.levels.windows(2).all(|w| {
            w[1].mean_grad_norm_sq > w[0].mean_grad_norm_sq
        })
    }

    /// Ratio between the highest and lowest level's means.
    pub fn extreme_ratio(&self) -> f64 {
        let first = self.levels.first().map_or(0.0, |l| l.mean_grad_norm_sq);
        let last = self.levels.last().map_or(0.0, |l| l.mean_grad_norm_sq);
        ratio_of(last, first)
    }
}

fn ratio_of(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == b {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Verdict on whether final gradient norms depend on the swept level.
/// Expects at least 2 levels with at least 3 completed runs each, all with
/// equal recorded lengths.
pub fn heterogeneity_independence_test(
    levels: &[(f64, &[RunResult])],
) -> Result<IndependenceReport> {
    heterogeneity_independence_test_with(levels, INDEPENDENCE_THRESHOLD, INDEPENDENCE_WINDOW)
}

pub fn heterogeneity_independence_test_with(
    levels: &[(f64, &[RunResult])],
    threshold: f64,
    window_fraction: f64,
) -> Result<IndependenceReport> {
    if levels.len() < 2 {
        return Err(SimError::Config(format!(
            "independence test needs at least 2 levels, got {}",
            levels.len()
        )));
    }
    if !(threshold >= 1.0) {
        return Err(SimError::Config(format!(
            "threshold must be at least 1, got {threshold}"
        )));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(SimError::Config(format!(
            "window fraction must be in (0, 1], got {window_fraction}"
        )));
    }
    let expected_len = levels
        .first()
        .and_then(|(_, runs)| runs.first())
        .map(|r| r.metrics.len())
        .unwrap_or(0);
    let mut summaries = Vec::with_capacity(levels.len());
    for (value, runs) in levels {
        if runs.len() < 3 {
            return Err(SimError::Config(format!(
                "level {value} has {} runs, need at least 3",
                runs.len()
            )));
        }
        let mut level_mean = 0.0;
        for r in *runs {
            if r.metrics.len() != expected_len {
                return Err(SimError::LengthMismatch(format!(
                    "level {value}: run has {} recorded rounds, expected {expected_len}",
                    r.metrics.len()
                )));
            }
            let window = ((expected_len as f64 * window_fraction) as usize).max(1);
            let tail = &r.metrics[expected_len - window..];
            level_mean +=
                tail.iter().map(|m| m.grad_norm_sq).sum::<f64>() / window as f64;
        }
        summaries.push(LevelSummary {
            value: *value,
            mean_grad_norm_sq: level_mean / runs.len() as f64,
            runs: runs.len(),
        });
    }
    summaries.sort_by(|a, b| a.value.total_cmp(&b.value));
    let max = summaries
        .iter()
        .map(|l| l.mean_grad_norm_sq)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = summaries
        .iter()
        .map(|l| l.mean_grad_norm_sq)
        .fold(f64::INFINITY, f64::min);
    let max_min_ratio = ratio_of(max, min);
    Ok(IndependenceReport {
        threshold,
        window_fraction,
        levels: summaries,
        max_min_ratio,
        pass: max_min_ratio <= threshold,
    })
}

// ---------------------------------------------------------------------------
// Mean-iterate replay oracle
// ---------------------------------------------------------------------------

/// Replays the swarm-mean recursion from a gradient log alone:
/// u_bar <- beta u_bar + g_bar^(r); x_bar <- x_bar - eta u_bar.
/// Returns the x_bar series, length rounds + 1 (round 0 first). The swarm
/// means of every variant here obey this recursion exactly (in exact
/// arithmetic) because the mixing matrix is doubly stochastic and the
/// momentum initializers are mean-centered.
pub fn reference_sgdm_xbar(
    gradients: &[Vec<Vec<f64>>],
    eta: f64,
    beta: f64,
    x0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if gradients.is_empty() {
        return Err(SimError::Config("empty gradient log".into()));
    }
    let d = x0.len();
    let mut xbar = x0.to_vec();
    let mut ubar = vec![0.0; d];
    let mut out = Vec::with_capacity(gradients.len() + 1);
    out.push(xbar.clone());
    for (r, round_grads) in gradients.iter().enumerate() {
        if round_grads.is_empty() {
            return Err(SimError::LengthMismatch(format!(
                "round {r}: no gradients logged"
            )));
        }
        let n = round_grads.len() as f64;
        let mut gbar = vec![0.0; d];
        for g in round_grads {
            if g.len() != d {
                return Err(SimError::LengthMismatch(format!(
                    "round {r}: gradient has dimension {}, expected {d}",
                    g.len()
                )));
            }
            for (acc, v) in gbar.iter_mut().zip(g) {
                *acc += v;
            }
        }
        for ((u, g), x) in ubar.iter_mut().zip(&gbar).zip(xbar.iter_mut()) {
            *u = beta * *u + g / n;
            *x -= eta * *u;
        }
        out.push(xbar.clone());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Invariant battery
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub pass: bool,
    /// Worst observed residual, in the check's own units.
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl InvariantCheck {
    fn new(name: &str, residual: f64, tolerance: f64, detail: String) -> Self {
        InvariantCheck {
            name: name.into(),
            pass: residual <= tolerance,
            residual,
            tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<InvariantCheck>,
    pub pass: bool,
}

/// Runs the full battery against the config's own network.
pub fn verify_invariants(config: &RunConfig, rounds: u64) -> Result<VerifyReport> {
    let (graph, w) = config.build_network()?;
    verify_invariants_with(config, &graph, &w, rounds)
}

/// Same battery against a caller-supplied matrix, so tooling can check a
/// matrix it constructed (or deliberately damaged) itself.
pub fn verify_invariants_with(
    config: &RunConfig,
    graph: &Graph,
    w: &MixingMatrix,
    rounds: u64,
) -> Result<VerifyReport> {
    config.validate()?;
    if rounds == 0 {
        return Err(SimError::Config("verify rounds must be at least 1".into()));
    }
    let n = w.node_count();
    let mut checks = Vec::new();

    // Matrix-level checks.
    let mut row_col_residual = 0.0f64;
    let mut sym_residual = 0.0f64;
    let mut min_entry = f64::INFINITY;
    let mut sparsity_violations = 0usize;
    let mut is_edge = vec![false; n * n];
    for &(a, b) in graph.edges() {
        is_edge[a * n + b] = true;
        is_edge[b * n + a] = true;
    }
    for i in 0..n {
        let mut row_sum = 0.0;
        let mut col_sum = 0.0;
        for j in 0..n {
            let wij = w.get(i, j);
            row_sum += wij;
            col_sum += w.get(j, i);
            sym_residual = sym_residual.max((wij - w.get(j, i)).abs());
            min_entry = min_entry.min(wij);
            if i != j && wij != 0.0 && !is_edge[i * n + j] {
                sparsity_violations += 1;
            }
        }
        row_col_residual = row_col_residual
            .max((row_sum - 1.0).abs())
            .max((col_sum - 1.0).abs());
    }
    checks.push(InvariantCheck::new(
        "double_stochasticity",
        row_col_residual,
        1e-12,
        format!("worst row/column sum deviation {row_col_residual:.3e}"),
    ));
    checks.push(InvariantCheck::new(
        "symmetry",
        sym_residual,
        0.0,
        format!("worst |w_ij - w_ji| = {sym_residual:.3e}"),
    ));
    checks.push(InvariantCheck::new(
        "nonnegativity",
        (-min_entry).max(0.0),
        0.0,
        format!("smallest entry {min_entry:.3e}"),
    ));
    checks.push(InvariantCheck::new(
        "edge_sparsity",
        sparsity_violations as f64,
        0.0,
        format!("{sparsity_violations} nonzero weights off the edge set"),
    ));

    let gap = match spectral_gap(w) {
        Ok(p) => {
            checks.push(InvariantCheck::new(
                "spectral_gap",
                0.0,
                0.0,
                format!("p = {p:.6}"),
            ));
            Some(p)
        }
        Err(SimError::NoSpectralGap { lambda }) => {
            checks.push(InvariantCheck::new(
                "spectral_gap",
                lambda,
                1.0 - 1e-10,
                format!("|lambda_2| = {lambda}, no averaging power"),
            ));
            None
        }
        Err(e) => return Err(e),
    };

    // Contraction over random spread matrices.
    if let Some(p) = gap {
        let dim = 8;
        let stream = RandomStream::new(config.run.seed ^ 0xC0_47_AC);
        let mut worst = 0.0f64;
        for trial in 0..200u64 {
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut v = vec![0.0; dim];
                    stream
                        .substream(trial)
                        .substream(i as u64)
                        .fill_standard_normal(&mut v);
                    v
                })
                .collect();
            let before = spread_energy(&xs);
            let after = spread_energy(&w.mix(&xs));
            if before > 0.0 {
                worst = worst.max((after - (1.0 - p) * before) / before);
            }
        }
        checks.push(InvariantCheck::new(
            "gossip_contraction",
            worst.max(0.0),
            1e-9,
            format!("worst normalized excess {worst:.3e} over 200 random states"),
        ));
    }

    // Dynamic checks on a short instrumented run of the config's variant.
    let problem = config.build_problem()?;
    let spec = config.algorithm_spec()?;
    let x0 = config.run.x0.resolve(problem.dim())?;
    let seed = config.run.seed;
    let mut swarm = init_swarm(&problem, &spec, &x0, seed)?;
    checks.push(InvariantCheck::new(
        "round_zero_consensus",
        crate::engine::consensus_distance(&swarm),
        0.0,
        "all nodes share the starting point".into(),
    ));

    let mut grads_log = Vec::with_capacity(rounds as usize);
    let mut xbar_log = vec![swarm.average_iterate()];
    let mut c_residual = 0.0f64;
    for _ in 0..rounds {
        let grads: Vec<Vec<f64>> = swarm
            .nodes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                problem.stochastic_gradient(i, &s.x, gradient_stream(seed, i, swarm.round))
            })
            .collect();
        grads_log.push(grads);
        swarm = step(&swarm, w, &problem, &spec, seed)?;
        xbar_log.push(swarm.average_iterate());
        let c_scale = swarm
            .nodes
            .iter()
            .fold(1.0f64, |acc, s| acc.max(norm(&s.c)));
        c_residual = c_residual.max(norm(&swarm.corrector_sum()) / c_scale);
    }
    checks.push(InvariantCheck::new(
        "corrector_sum",
        c_residual,
        1e-9,
        format!("worst ||sum c|| / scale = {c_residual:.3e} over {rounds} rounds"),
    ));

    let replay = reference_sgdm_xbar(&grads_log, spec.eta, spec.effective_beta(), &x0)?;
    let mut replay_residual = 0.0f64;
    for (recorded, predicted) in xbar_log.iter().zip(&replay) {
        let scale = 1.0f64.max(norm(recorded));
        let diff = recorded
            .iter()
            .zip(predicted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        replay_residual = replay_residual.max(diff / scale);
    }
    checks.push(InvariantCheck::new(
        "mean_iterate_recursion",
        replay_residual,
        1e-9,
        format!("worst ||x_bar - replay|| / scale = {replay_residual:.3e}"),
    ));

    // Alias plumbing: tracking with beta 0 and the gradient-tracking tag
    // must produce the same bits.
    {
        let mt = crate::algorithms::AlgorithmSpec::new(
            Variant::MomentumTracking,
            spec.eta,
            0.0,
            InitMode::Zero,
        )?;
        let gt = crate::algorithms::AlgorithmSpec::new(
            Variant::GradientTracking,
            spec.eta,
            0.9, // deliberately nonzero: the alias must pin it
            InitMode::Zero,
        )?;
        let mut a = init_swarm(&problem, &mt, &x0, seed)?;
        let mut b = init_swarm(&problem, &gt, &x0, seed)?;
        let mut alias_residual = 0.0f64;
        for _ in 0..rounds.min(100) {
            a = step(&a, w, &problem, &mt, seed)?;
            b = step(&b, w, &problem, &gt, seed)?;
            for (na, nb) in a.nodes.iter().zip(&b.nodes) {
                for (xa, xb) in na.x.iter().zip(&nb.x) {
                    if xa.to_bits() != xb.to_bits() {
                        alias_residual = alias_residual.max((xa - xb).abs().max(f64::MIN_POSITIVE));
                    }
                }
            }
        }
        checks.push(InvariantCheck::new(
            "tracking_alias_bitwise",
            alias_residual,
            0.0,
            "gradient tracking is momentum tracking at beta 0".into(),
        ));
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport { checks, pass })
}

fn spread_energy(xs: &[Vec<f64>]) -> f64 {
    let n = xs.len();
    let dim = xs[0].len();
    let mut mean = vec![0.0; dim];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    xs.iter()
        .map(|x| {
            x.iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
