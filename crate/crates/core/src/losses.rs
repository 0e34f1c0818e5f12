//! Exact population evaluations and analytic gradients of every objective:
//! pairwise preference losses (DPO, IPO, f-DPO and the quasi-convex family
//! that generalizes them), the TYPO loss with its separable supervised and
//! unsupervised terms, the KL-regularized reward-maximization loss with its
//! closed-form solution, and the implicit reward induced by a policy.
//!
//! All pairwise losses are reported per unit weight (normalized by the total
//! tuple weight), so values are comparable across data sizes. Gradients are
//! taken with respect to the policy logits, derived through the softmax.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::policy::TabularPolicy;
use crate::world::{sigmoid, softplus, DiscreteWorld, PreferenceData};

/// Monotonically increasing link applied to policy/reference ratios.
///
/// `ReverseKl` and `JensenShannon` are the derivatives of the matching
/// f-divergences; `Log` is the plain logarithm used by DPO and IPO.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkFn {
    Log,
    ReverseKl,
    JensenShannon,
}

impl LinkFn {
    pub fn name(&self) -> &'static str {
        match self {
            LinkFn::Log => "log",
            LinkFn::ReverseKl => "reverse_kl",
            LinkFn::JensenShannon => "jensen_shannon",
        }
    }

    /// mu(u) for a ratio u > 0; NaN outside the domain.
    pub fn value(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::NAN;
        }
        match self {
            LinkFn::Log => u.ln(),
            LinkFn::ReverseKl => u.ln() + 1.0,
            LinkFn::JensenShannon => (2.0 * u / (1.0 + u)).ln(),
        }
    }

    /// First derivative mu'(u).
    pub fn deriv(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::NAN;
        }
        match self {
            LinkFn::Log | LinkFn::ReverseKl => 1.0 / u,
            LinkFn::JensenShannon => 1.0 / (u * (1.0 + u)),
        }
    }

    /// mu(e^l): evaluation from the log-ratio, stable for extreme ratios.
    fn value_from_log_ratio(&self, l: f64) -> f64 {
        match self {
            LinkFn::Log => l,
            LinkFn::ReverseKl => l + 1.0,
            // log(2u/(1+u)) = log 2 + l - log(1 + e^l)
            LinkFn::JensenShannon => std::f64::consts::LN_2 + l - softplus(l),
        }
    }

    /// mu'(u) * u evaluated from the log-ratio; this is the factor the
    /// softmax chain rule needs.
    fn deriv_times_u(&self, l: f64) -> f64 {
        match self {
            LinkFn::Log | LinkFn::ReverseKl => 1.0,
            LinkFn::JensenShannon => sigmoid(-l),
        }
    }
}

/// Quasi-convex shape applied to the link difference. Each variant documents
/// its own lambda coupling: `LogisticNll` couples multiplicatively (DPO
/// style), `SquaredTarget` through the target 1/(2 lambda) (IPO style), and
/// `Hinge` through a multiplicative margin (SLiC style).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFn {
    LogisticNll,
    SquaredTarget,
    Hinge,
}

impl ShapeFn {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeFn::LogisticNll => "logistic",
            ShapeFn::SquaredTarget => "square",
            ShapeFn::Hinge => "hinge",
        }
    }

    /// psi(d, lambda).
    pub fn value(&self, d: f64, lambda: f64) -> f64 {
        match self {
            ShapeFn::LogisticNll => softplus(-lambda * d),
            ShapeFn::SquaredTarget => {
                let c = 1.0 / (2.0 * lambda);
                (d - c) * (d - c)
            }
            ShapeFn::Hinge => (1.0 - lambda * d).max(0.0),
        }
    }

    /// d psi / d d.
    pub fn deriv(&self, d: f64, lambda: f64) -> f64 {
        match self {
            ShapeFn::LogisticNll => -lambda * sigmoid(-lambda * d),
            ShapeFn::SquaredTarget => 2.0 * (d - 1.0 / (2.0 * lambda)),
            ShapeFn::Hinge => {
                if lambda * d < 1.0 {
                    -lambda
                } else {
                    0.0
                }
            }
        }
    }
}

/// f-divergence selecting the link of an f-DPO loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    ReverseKl,
    JensenShannon,
}

impl Divergence {
    pub fn link(&self) -> LinkFn {
        match self {
            Divergence::ReverseKl => LinkFn::ReverseKl,
            Divergence::JensenShannon => LinkFn::JensenShannon,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Divergence::ReverseKl => "reverse_kl",
            Divergence::JensenShannon => "js",
        }
    }
}

/// Reward table selector for the KL-regularized loss.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardSpec {
    /// log pi_star: the reward whose induced optimum reproduces the
    /// ground-truth preferences.
    BtOptimal,
    /// Expected win probability against reference-drawn opponents.
    IpoReward,
    /// Explicit per-(prompt, response) table.
    Table(Vec<Vec<f64>>),
}

impl RewardSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RewardSpec::BtOptimal => "bt",
            RewardSpec::IpoReward => "ipo",
            RewardSpec::Table(_) => "table",
        }
    }
}

/// Materializes a reward spec into a per-(prompt, response) table.
pub fn resolve_reward(world: &DiscreteWorld, spec: &RewardSpec) -> Result<Vec<Vec<f64>>> {
    match spec {
        RewardSpec::BtOptimal => Ok((0..world.n_prompts())
            .map(|x| world.pi_star(x).iter().map(|p| p.ln()).collect())
            .collect()),
        RewardSpec::IpoReward => Ok(world.ipo_reward()),
        RewardSpec::Table(t) => {
            if t.len() != world.n_prompts() {
                return Err(Error::ShapeMismatch(format!(
                    "reward table covers {} prompts, world has {}",
                    t.len(),
                    world.n_prompts()
                )));
            }
            for (x, row) in t.iter().enumerate() {
                if row.len() != world.n_responses(x) {
                    return Err(Error::ShapeMismatch(format!(
                        "reward table prompt {x}: {} entries, world has {} responses",
                        row.len(),
                        world.n_responses(x)
                    )));
                }
                for (y, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("reward[{x}][{y}]")));
                    }
                }
            }
            Ok(t.clone())
        }
    }
}

/// Squared-norm penalty instantiating weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyTarget {
    /// alpha * sum_x p(x) * ||pi_theta(.|x)||^2 (the default reading).
    Probabilities,
    /// alpha * sum_x p(x) * ||theta_x||^2.
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub alpha: f64,
    pub target: PenaltyTarget,
}

/// Selected objective with its trade-off parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    Dpo { lambda: f64 },
    Ipo { lambda: f64 },
    Fdpo { divergence: Divergence, lambda: f64 },
    Qpo { psi: ShapeFn, mu: LinkFn, lambda: f64 },
    Typo { lambda: f64 },
    Rlhf { reward: RewardSpec, lambda: f64 },
}

/// A loss plus an optional penalty term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub penalty: Option<Penalty>,
}

impl LossSpec {
    pub fn new(kind: LossKind, penalty: Option<Penalty>) -> Result<Self> {
        let spec = Self { kind, penalty };
        spec.validate()?;
        Ok(spec)
    }

    pub fn bare(kind: LossKind) -> Self {
        Self { kind, penalty: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda() <= 0.0 || !self.lambda().is_finite() {
            return Err(Error::Config(format!(
                "lambda: positive finite value required, got {}",
                self.lambda()
            )));
        }
        if let Some(p) = &self.penalty {
            if p.alpha < 0.0 || !p.alpha.is_finite() {
                return Err(Error::Config(format!(
                    "penalty.alpha: nonnegative finite value required, got {}",
                    p.alpha
                )));
            }
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        match &self.kind {
            LossKind::Dpo { lambda }
            | LossKind::Ipo { lambda }
            | LossKind::Fdpo { lambda, .. }
            | LossKind::Qpo { lambda, .. }
            | LossKind::Typo { lambda }
            | LossKind::Rlhf { lambda, .. } => *lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        match &mut out.kind {
            LossKind::Dpo { lambda: l }
            | LossKind::Ipo { lambda: l }
            | LossKind::Fdpo { lambda: l, .. }
            | LossKind::Qpo { lambda: l, .. }
            | LossKind::Typo { lambda: l }
            | LossKind::Rlhf { lambda: l, .. } => *l = lambda,
        }
        out
    }

    pub fn with_penalty(&self, penalty: Option<Penalty>) -> Self {
        Self {
            kind: self.kind.clone(),
            penalty,
        }
    }

    /// Base kind key, used for optimizer preset lookup.
    pub fn kind_key(&self) -> &'static str {
        match &self.kind {
            LossKind::Dpo { .. } => "dpo",
            LossKind::Ipo { .. } => "ipo",
            LossKind::Fdpo { .. } => "fdpo",
            LossKind::Qpo { .. } => "qpo",
            LossKind::Typo { .. } => "typo",
            LossKind::Rlhf { .. } => "rlhf",
        }
    }

    /// Report label distinguishing variants of the same base kind.
    pub fn label(&self) -> String {
        match &self.kind {
            LossKind::Dpo { .. } => "dpo".into(),
            LossKind::Ipo { .. } => "ipo".into(),
            LossKind::Fdpo { divergence, .. } => format!("fdpo_{}", divergence.name()),
            LossKind::Qpo { psi, mu, .. } => format!("qpo_{}_{}", psi.name(), mu.name()),
            LossKind::Typo { .. } => "typo".into(),
            LossKind::Rlhf { reward, .. } => format!("rlhf_{}", reward.name()),
        }
    }
}

/// TYPO loss value split into its separable factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypoLoss {
    pub total: f64,
    pub supervised: f64,
    pub unsupervised: f64,
}

fn ref_log(world: &DiscreteWorld, x: usize) -> Vec<f64> {
    world.pi_ref(x).iter().map(|p| p.ln()).collect()
}

/// Negative log-sigmoid of the scaled implicit-reward difference, averaged
/// over tuples.
pub fn dpo_loss(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
    lambda: f64,
) -> f64 {
    let lp = policy.all_log_probs();
    let lr: Vec<Vec<f64>> = (0..world.n_prompts()).map(|x| ref_log(world, x)).collect();
    let w_total = data.total_weight();
    if w_total <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in &data.tuples {
        let d = lambda
            * ((lp[t.prompt][t.winner] - lr[t.prompt][t.winner])
                - (lp[t.prompt][t.loser] - lr[t.prompt][t.loser]));
        acc += t.weight * softplus(-d);
    }
    acc / w_total
}

/// Squared distance of the log-odds ratio from the constant target
/// 1/(2 lambda), averaged over tuples.
pub fn ipo_loss(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
    lambda: f64,
) -> f64 {
    let lp = policy.all_log_probs();
    let lr: Vec<Vec<f64>> = (0..world.n_prompts()).map(|x| ref_log(world, x)).collect();
    let w_total = data.total_weight();
    if w_total <= 0.0 {
        return 0.0;
    }
    let c = 1.0 / (2.0 * lambda);
    let mut acc = 0.0;
    for t in &data.tuples {
        let h = (lp[t.prompt][t.winner] - lr[t.prompt][t.winner])
            - (lp[t.prompt][t.loser] - lr[t.prompt][t.loser]);
        acc += t.weight * (h - c) * (h - c);
    }
    acc / w_total
}

/// The generalized quasi-convex loss: psi applied to the link difference of
/// winner and loser policy/reference ratios.
pub fn qpo_loss(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
    psi: ShapeFn,
    mu: LinkFn,
    lambda: f64,
) -> f64 {
    let lp = policy.all_log_probs();
    let lr: Vec<Vec<f64>> = (0..world.n_prompts()).map(|x| ref_log(world, x)).collect();
    let w_total = data.total_weight();
    if w_total <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in &data.tuples {
        let lw = lp[t.prompt][t.winner] - lr[t.prompt][t.winner];
        let ll = lp[t.prompt][t.loser] - lr[t.prompt][t.loser];
        let d = mu.value_from_log_ratio(lw) - mu.value_from_log_ratio(ll);
        acc += t.weight * psi.value(d, lambda);
    }
    acc / w_total
}

/// f-DPO: the logistic shape with the f-divergence derivative as link.
pub fn fdpo_loss(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
    divergence: Divergence,
    lambda: f64,
) -> f64 {
    qpo_loss(policy, world, data, ShapeFn::LogisticNll, divergence.link(), lambda)
}

/// TYPO: supervised pairwise term plus lambda times the cross-entropy form
/// of the forward KL to the reference.
pub fn typo_loss(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
    lambda: f64,
) -> TypoLoss {
    let lp = policy.all_log_probs();
    let w_total = data.total_weight();
    let mut sup = 0.0;
    if w_total > 0.0 {
        for t in &data.tuples {
            // log(1 + pi(l)/pi(w)) = softplus(log pi(l) - log pi(w))
            sup += t.weight * softplus(lp[t.prompt][t.loser] - lp[t.prompt][t.winner]);
        }
        sup /= w_total;
    }
    let mut unsup = 0.0;
    for x in 0..world.n_prompts() {
        let m = world.prompt_mass(x);
        for (y, &r) in world.pi_ref(x).iter().enumerate() {
            unsup += m * r * (-lp[x][y]);
        }
    }
    TypoLoss {
        total: sup + lambda * unsup,
        supervised: sup,
        unsupervised: unsup,
    }
}

/// Expected negative reward under the policy plus lambda times the KL to the
/// reference, evaluated exactly over the discrete response sets.
pub fn rlhf_loss(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    reward: &[Vec<f64>],
    lambda: f64,
    penalty: Option<&Penalty>,
) -> f64 {
    let mut acc = 0.0;
    for x in 0..world.n_prompts() {
        let p = policy.probs(x);
        let lp = policy.log_probs(x);
        let m = world.prompt_mass(x);
        let mut term = 0.0;
        for (y, &r) in world.pi_ref(x).iter().enumerate() {
            term += p[y] * (-reward[x][y] + lambda * (lp[y] - r.ln()));
        }
        acc += m * term;
    }
    if let Some(pen) = penalty {
        acc += penalty_term(policy, world, pen.alpha, pen.target);
    }
    acc
}

/// alpha-scaled squared norm of the policy, in probability or logit space,
/// weighted by prompt mass.
pub fn penalty_term(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    alpha: f64,
    target: PenaltyTarget,
) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for x in 0..world.n_prompts() {
        let m = world.prompt_mass(x);
        match target {
            PenaltyTarget::Probabilities => {
                let p = policy.probs(x);
                acc += m * p.iter().map(|v| v * v).sum::<f64>();
            }
            PenaltyTarget::Logits => {
                acc += m * policy.logits()[x].iter().map(|v| v * v).sum::<f64>();
            }
        }
    }
    alpha * acc
}

/// The exact minimizer of the KL-regularized loss: reference times
/// exponentiated reward over lambda, normalized per prompt.
pub fn rlhf_closed_form(
    world: &DiscreteWorld,
    reward: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::Precondition(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let mut out = Vec::with_capacity(world.n_prompts());
    for x in 0..world.n_prompts() {
        let exps: Vec<f64> = world
            .pi_ref(x)
            .iter()
            .zip(&reward[x])
            .map(|(&r, &rew)| r.ln() + rew / lambda)
            .collect();
        let max = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut row: Vec<f64> = exps.iter().map(|&e| (e - max).exp()).collect();
        let z: f64 = row.iter().sum();
        for v in &mut row {
            *v /= z;
        }
        out.push(row);
    }
    Ok(out)
}

/// lambda * log(pi_theta / pi_ref): the reward this policy implicitly
/// optimizes, up to a per-prompt constant.
pub fn implicit_reward(
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    lambda: f64,
) -> Vec<Vec<f64>> {
    (0..world.n_prompts())
        .map(|x| {
            let lp = policy.log_probs(x);
            world
                .pi_ref(x)
                .iter()
                .zip(lp)
                .map(|(&r, l)| lambda * (l - r.ln()))
                .collect()
        })
        .collect()
}

/// Value of the selected objective (including any penalty).
pub fn eval_loss(
    spec: &LossSpec,
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
) -> Result<f64> {
    let base = match &spec.kind {
        LossKind::Dpo { lambda } => dpo_loss(policy, world, data, *lambda),
        LossKind::Ipo { lambda } => ipo_loss(policy, world, data, *lambda),
        LossKind::Fdpo { divergence, lambda } => {
            fdpo_loss(policy, world, data, *divergence, *lambda)
        }
        LossKind::Qpo { psi, mu, lambda } => qpo_loss(policy, world, data, *psi, *mu, *lambda),
        LossKind::Typo { lambda } => typo_loss(policy, world, data, *lambda).total,
        LossKind::Rlhf { reward, lambda } => {
            let table = resolve_reward(world, reward)?;
            // rlhf_loss applies the penalty itself
            return Ok(rlhf_loss(policy, world, &table, *lambda, spec.penalty.as_ref()));
        }
    };
    let pen = spec
        .penalty
        .as_ref()
        .map(|p| penalty_term(policy, world, p.alpha, p.target))
        .unwrap_or(0.0);
    Ok(base + pen)
}

/// Exact gradient of the selected objective with respect to all logits.
pub fn loss_gradient(
    spec: &LossSpec,
    policy: &TabularPolicy,
    world: &DiscreteWorld,
    data: &PreferenceData,
) -> Result<Vec<Vec<f64>>> {
    let mut grad: Vec<Vec<f64>> = policy.logits().iter().map(|r| vec![0.0; r.len()]).collect();
    let probs = policy.all_probs();
    let lp = policy.all_log_probs();
    let lr: Vec<Vec<f64>> = (0..world.n_prompts()).map(|x| ref_log(world, x)).collect();
    let w_total = data.total_weight();

    match &spec.kind {
        LossKind::Dpo { lambda } => {
            if w_total > 0.0 {
                for t in &data.tuples {
                    let d = lambda
                        * ((lp[t.prompt][t.winner] - lr[t.prompt][t.winner])
                            - (lp[t.prompt][t.loser] - lr[t.prompt][t.loser]));
                    let s = t.weight / w_total * lambda * (sigmoid(d) - 1.0);
                    grad[t.prompt][t.winner] += s;
                    grad[t.prompt][t.loser] -= s;
                }
            }
        }
        LossKind::Ipo { lambda } => {
            if w_total > 0.0 {
                let c = 1.0 / (2.0 * lambda);
                for t in &data.tuples {
                    let h = (lp[t.prompt][t.winner] - lr[t.prompt][t.winner])
                        - (lp[t.prompt][t.loser] - lr[t.prompt][t.loser]);
                    let s = t.weight / w_total * 2.0 * (h - c);
                    grad[t.prompt][t.winner] += s;
                    grad[t.prompt][t.loser] -= s;
                }
            }
        }
        LossKind::Fdpo { divergence, lambda } => {
            qpo_gradient_into(
                &mut grad,
                &probs,
                &lp,
                &lr,
                data,
                ShapeFn::LogisticNll,
                divergence.link(),
                *lambda,
            );
        }
        LossKind::Qpo { psi, mu, lambda } => {
            qpo_gradient_into(&mut grad, &probs, &lp, &lr, data, *psi, *mu, *lambda);
        }
        LossKind::Typo { lambda } => {
            if w_total > 0.0 {
                for t in &data.tuples {
                    // pi(l) / (pi(w) + pi(l)) = sigmoid(log pi(l) - log pi(w))
                    let c = sigmoid(lp[t.prompt][t.loser] - lp[t.prompt][t.winner]);
                    let s = t.weight / w_total * c;
                    grad[t.prompt][t.winner] -= s;
                    grad[t.prompt][t.loser] += s;
                }
            }
            for x in 0..world.n_prompts() {
                let m = world.prompt_mass(x);
                for (y, &r) in world.pi_ref(x).iter().enumerate() {
                    grad[x][y] += lambda * m * (probs[x][y] - r);
                }
            }
        }
        LossKind::Rlhf { reward, lambda } => {
            let table = resolve_reward(world, reward)?;
            for x in 0..world.n_prompts() {
                let m = world.prompt_mass(x);
                let p = &probs[x];
                let mut expected_reward = 0.0;
                let mut kl = 0.0;
                for (y, &r) in world.pi_ref(x).iter().enumerate() {
                    expected_reward += p[y] * table[x][y];
                    kl += p[y] * (lp[x][y] - r.ln());
                }
                for (y, &r) in world.pi_ref(x).iter().enumerate() {
                    let log_ratio = lp[x][y] - r.ln();
                    grad[x][y] += m
                        * (-(p[y] * (table[x][y] - expected_reward))
                            + lambda * p[y] * (log_ratio - kl));
                }
            }
        }
    }

    if let Some(pen) = &spec.penalty {
        if pen.alpha > 0.0 {
            for x in 0..world.n_prompts() {
                let m = world.prompt_mass(x);
                match pen.target {
                    PenaltyTarget::Probabilities => {
                        let p = &probs[x];
                        let sq: f64 = p.iter().map(|v| v * v).sum();
                        for (y, g) in grad[x].iter_mut().enumerate() {
                            *g += 2.0 * pen.alpha * m * (p[y] * p[y] - p[y] * sq);
                        }
                    }
                    PenaltyTarget::Logits => {
                        for (y, g) in grad[x].iter_mut().enumerate() {
                            *g += 2.0 * pen.alpha * m * policy.logits()[x][y];
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}

#[allow(clippy::too_many_arguments)]
fn qpo_gradient_into(
    grad: &mut [Vec<f64>],
    probs: &[Vec<f64>],
    lp: &[Vec<f64>],
    lr: &[Vec<f64>],
    data: &PreferenceData,
    psi: ShapeFn,
    mu: LinkFn,
    lambda: f64,
) {
    let w_total = data.total_weight();
    if w_total <= 0.0 {
        return;
    }
    for t in &data.tuples {
        let lw = lp[t.prompt][t.winner] - lr[t.prompt][t.winner];
        let ll = lp[t.prompt][t.loser] - lr[t.prompt][t.loser];
        let d = mu.value_from_log_ratio(lw) - mu.value_from_log_ratio(ll);
        let s = t.weight / w_total * psi.deriv(d, lambda);
        // d mu(ratio_y) / d theta_k = mu'(u_y) u_y (delta_yk - p_k)
        let aw = mu.deriv_times_u(lw);
        let al = mu.deriv_times_u(ll);
        grad[t.prompt][t.winner] += s * aw;
        grad[t.prompt][t.loser] -= s * al;
        let common = s * (aw - al);
        for (k, g) in grad[t.prompt].iter_mut().enumerate() {
            *g -= common * probs[t.prompt][k];
        }
    }
}

/// Global L2 norm of a logit gradient.
pub fn gradient_norm(grad: &[Vec<f64>]) -> f64 {
    grad.iter()
        .flat_map(|r| r.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}
