//! Tabular softmax policies and the distance measures used for reporting.

use crate::error::{Error, Result};
use crate::world::DiscreteWorld;

/// Trainable policy: one real logit vector per prompt, probabilities via
/// normalized exponentials.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    logits: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(logits: Vec<Vec<f64>>) -> Result<Self> {
        for (x, row) in logits.iter().enumerate() {
            for (y, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("logits[{x}][{y}]")));
                }
            }
        }
        Ok(Self { logits })
    }

    /// Policy with `theta = log pi_ref`, so the induced probabilities start
    /// at the reference policy.
    pub fn from_reference(world: &DiscreteWorld) -> Self {
        Self {
            logits: (0..world.n_prompts())
                .map(|x| world.pi_ref(x).iter().map(|p| p.ln()).collect())
                .collect(),
        }
    }

    /// All-zero logits: uniform over each prompt's responses.
    pub fn zeros(world: &DiscreteWorld) -> Self {
        Self {
            logits: (0..world.n_prompts())
                .map(|x| vec![0.0; world.n_responses(x)])
                .collect(),
        }
    }

    pub fn n_prompts(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.logits
    }

    /// Softmax of the prompt's logits, computed with max-subtraction.
    pub fn probs(&self, x: usize) -> Vec<f64> {
        let row = &self.logits[x];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = out.iter().sum();
        for v in &mut out {
            *v /= z;
        }
        out
    }

    /// Log-probabilities (logits minus log-sum-exp), the stable path for
    /// ratio-based losses.
    pub fn log_probs(&self, x: usize) -> Vec<f64> {
        let row = &self.logits[x];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + z.ln();
        row.iter().map(|&v| v - lse).collect()
    }

    pub fn all_probs(&self) -> Vec<Vec<f64>> {
        (0..self.n_prompts()).map(|x| self.probs(x)).collect()
    }

    pub fn all_log_probs(&self) -> Vec<Vec<f64>> {
        (0..self.n_prompts()).map(|x| self.log_probs(x)).collect()
    }

    /// Checks this policy's shape against a world, naming the offending
    /// prompt on mismatch.
    pub fn check_shape(&self, world: &DiscreteWorld) -> Result<()> {
        if self.logits.len() != world.n_prompts() {
            return Err(Error::ShapeMismatch(format!(
                "policy covers {} prompts, world has {}",
                self.logits.len(),
                world.n_prompts()
            )));
        }
        for x in 0..world.n_prompts() {
            if self.logits[x].len() != world.n_responses(x) {
                return Err(Error::ShapeMismatch(format!(
                    "prompt {x}: policy has {} logits, world has {} responses",
                    self.logits[x].len(),
                    world.n_responses(x)
                )));
            }
        }
        Ok(())
    }
}

/// Distance measure between per-prompt distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMetric {
    TotalVariation,
    ForwardKL,
    BackwardKL,
    L2,
}

impl PolicyMetric {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyMetric::TotalVariation => "tv",
            PolicyMetric::ForwardKL => "forward_kl",
            PolicyMetric::BackwardKL => "backward_kl",
            PolicyMetric::L2 => "l2",
        }
    }
}

fn per_prompt_metric(p: &[f64], q: &[f64], metric: PolicyMetric, x: usize) -> Result<f64> {
    match metric {
        PolicyMetric::TotalVariation => {
            Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
        }
        PolicyMetric::L2 => Ok(p
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
        PolicyMetric::ForwardKL => kl(p, q, x),
        PolicyMetric::BackwardKL => kl(q, p, x),
    }
}

fn kl(p: &[f64], q: &[f64], x: usize) -> Result<f64> {
    let mut acc = 0.0;
    for (y, (&a, &b)) in p.iter().zip(q).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::KlZeroSupport { prompt: x, response: y });
        }
        acc += a * (a / b).ln();
    }
    Ok(acc)
}

/// Prompt-mass-weighted distance between two per-prompt distribution sets.
pub fn policy_distance(
    world: &DiscreteWorld,
    p1: &[Vec<f64>],
    p2: &[Vec<f64>],
    metric: PolicyMetric,
) -> Result<f64> {
    let all: Vec<usize> = (0..world.n_prompts()).collect();
    policy_distance_on(world, p1, p2, metric, &all)
}

/// Distance restricted to a prompt subset; the subset's masses are
/// renormalized so the result is a conditional average.
pub fn policy_distance_on(
    world: &DiscreteWorld,
    p1: &[Vec<f64>],
    p2: &[Vec<f64>],
    metric: PolicyMetric,
    prompts: &[usize],
) -> Result<f64> {
    if prompts.is_empty() {
        return Err(Error::Precondition("empty prompt subset".into()));
    }
    let mut mass = 0.0;
    let mut acc = 0.0;
    for &x in prompts {
        if x >= world.n_prompts() {
            return Err(Error::UnknownPrompt(x));
        }
        let (a, b) = (&p1[x], &p2[x]);
        if a.len() != world.n_responses(x) || b.len() != world.n_responses(x) {
            return Err(Error::ShapeMismatch(format!(
                "prompt {x}: distribution length does not match world"
            )));
        }
        let m = world.prompt_mass(x);
        mass += m;
        acc += m * per_prompt_metric(a, b, metric, x)?;
    }
    if mass == 0.0 {
        return Err(Error::Precondition(
            "prompt subset has zero total mass".into(),
        ));
    }
    Ok(acc / mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn world() -> DiscreteWorld {
        DiscreteWorld::new(
            vec![0.5, 0.5],
            vec![vec![0.6, 0.3, 0.1], vec![0.4, 0.2, 0.4]],
            vec![vec![0.6, 0.3, 0.1], vec![0.6, 0.2, 0.2]],
        )
        .unwrap()
    }

    #[test]
    fn probs_basic() {
        let p = TabularPolicy::new(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        for &v in p.probs(0).iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let q = TabularPolicy::new(vec![vec![0.4f64.ln(), 0.4f64.ln(), 0.2f64.ln()]]).unwrap();
        let pr = q.probs(0);
        assert!((pr[0] - 0.4).abs() < 1e-15);
        assert!((pr[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn probs_overflow_safe() {
        let p = TabularPolicy::new(vec![vec![1000.0, 0.0, 0.0]]).unwrap();
        let pr = p.probs(0);
        assert!(pr.iter().all(|v| v.is_finite()));
        assert!(pr[0] > 1.0 - 1e-12);
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_reference_round_trip() {
        let w = world();
        let p = TabularPolicy::from_reference(&w);
        for x in 0..w.n_prompts() {
            for (a, b) in p.probs(x).iter().zip(w.pi_ref(x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let uniform = DiscreteWorld::new(
            vec![1.0],
            vec![vec![0.6, 0.4]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let q = TabularPolicy::from_reference(&uniform);
        assert_eq!(q.logits()[0][0], q.logits()[0][1]);
    }

    #[test]
    fn rejects_non_finite_logits() {
        assert!(TabularPolicy::new(vec![vec![f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn tv_on_preservation_bad_prompt() {
        let w = world();
        let d = policy_distance_on(
            &w,
            w.pi_ref_all(),
            w.pi_star_all(),
            PolicyMetric::TotalVariation,
            &[1],
        )
        .unwrap();
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn forward_kl_direct_evaluation() {
        let w = DiscreteWorld::new(
            vec![1.0],
            vec![vec![0.5, 0.5]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let p = vec![vec![0.5, 0.5]];
        let q = vec![vec![0.25, 0.75]];
        let d = policy_distance(&w, &p, &q, PolicyMetric::ForwardKL).unwrap();
        // direct evaluation 0.5*ln2 + 0.5*ln(2/3)
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.14384).abs() < 5e-6);
    }

    #[test]
    fn distance_zero_on_self() {
        let w = world();
        let p = w.pi_ref_all();
        for m in [
            PolicyMetric::TotalVariation,
            PolicyMetric::ForwardKL,
            PolicyMetric::BackwardKL,
            PolicyMetric::L2,
        ] {
            assert_eq!(policy_distance(&w, p, p, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn kl_zero_support_is_domain_error() {
        let w = DiscreteWorld::new(
            vec![1.0],
            vec![vec![0.5, 0.5]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let p = vec![vec![0.5, 0.5]];
        let q = vec![vec![1.0, 0.0]];
        assert!(matches!(
            policy_distance(&w, &p, &q, PolicyMetric::ForwardKL),
            Err(Error::KlZeroSupport { .. })
        ));
    }

    #[test]
    fn restricted_to_all_prompts_equals_unrestricted() {
        let w = world();
        let p = w.pi_ref_all();
        let q = w.pi_star_all();
        for m in [PolicyMetric::TotalVariation, PolicyMetric::L2] {
            let full = policy_distance(&w, p, q, m).unwrap();
            let sub = policy_distance_on(&w, p, q, m, &[0, 1]).unwrap();
            assert_eq!(full, sub);
        }
    }

    #[test]
    fn kl_asymmetry_witness() {
        let w = DiscreteWorld::new(
            vec![1.0],
            vec![vec![0.5, 0.5]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let p = vec![vec![0.9, 0.1]];
        let q = vec![vec![0.5, 0.5]];
        let f = policy_distance(&w, &p, &q, PolicyMetric::ForwardKL).unwrap();
        let b = policy_distance(&w, &p, &q, PolicyMetric::BackwardKL).unwrap();
        assert!((f - b).abs() > 1e-3);
    }

    proptest! {
        #[test]
        fn logit_shift_invariance(
            l0 in -5.0f64..5.0, l1 in -5.0f64..5.0, l2 in -5.0f64..5.0,
            shift in -20.0f64..20.0,
        ) {
            let a = TabularPolicy::new(vec![vec![l0, l1, l2]]).unwrap();
            let b = TabularPolicy::new(vec![vec![l0 + shift, l1 + shift, l2 + shift]]).unwrap();
            for (x, y) in a.probs(0).iter().zip(b.probs(0).iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn tv_symmetry_and_triangle(
            a in proptest::array::uniform3(0.01f64..1.0),
            b in proptest::array::uniform3(0.01f64..1.0),
            c in proptest::array::uniform3(0.01f64..1.0),
        ) {
            let norm = |v: [f64; 3]| {
                let s: f64 = v.iter().sum();
                vec![v[0] / s, v[1] / s, v[2] / s]
            };
            let w = DiscreteWorld::new(
                vec![1.0],
                vec![vec![0.6, 0.3, 0.1]],
                vec![vec![0.4, 0.4, 0.2]],
            ).unwrap();
            let (pa, pb, pc) = (vec![norm(a)], vec![norm(b)], vec![norm(c)]);
            let m = PolicyMetric::TotalVariation;
            let ab = policy_distance(&w, &pa, &pb, m).unwrap();
            let ba = policy_distance(&w, &pb, &pa, m).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            let ac = policy_distance(&w, &pa, &pc, m).unwrap();
            let cb = policy_distance(&w, &pc, &pb, m).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }
}
