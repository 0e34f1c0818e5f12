//! Built-in worlds and named optimizer presets for the shipped studies.
//!
//! The two bandit worlds are the ones the synthetic studies are defined on;
//! the optimizer budgets are sized so that every study trains to its
//! population optimum under exact full-population gradients. A
//! `paper_batches` variant swaps in the sampled batch-size-20 protocol.

use crate::losses::{Divergence, LossKind, LossSpec, RewardSpec};
use crate::optim::{BatchMode, InitMode, OptimConfig};
use crate::world::{DiscreteWorld, PairLabel};

/// Single-prompt interpolation world: pi_star = (0.6, 0.3, 0.1),
/// pi_ref = (0.4, 0.4, 0.2).
pub fn interpolation_world() -> DiscreteWorld {
    DiscreteWorld::new(
        vec![1.0],
        vec![vec![0.6, 0.3, 0.1]],
        vec![vec![0.4, 0.4, 0.2]],
    )
    .expect("valid built-in world")
}

/// Two-prompt preservation world. Prompt 0 ("good") has pi_ref = pi_star;
/// prompt 1 ("bad") has pi_ref at total-variation 0.2 from pi_star.
pub fn preservation_world() -> DiscreteWorld {
    DiscreteWorld::new(
        vec![0.5, 0.5],
        vec![vec![0.6, 0.3, 0.1], vec![0.4, 0.2, 0.4]],
        vec![vec![0.6, 0.3, 0.1], vec![0.6, 0.2, 0.2]],
    )
    .expect("valid built-in world")
}

/// Two-response world with equiprobable references, the construction under
/// which the forward/backward KL duality holds at lambda = 1.
pub fn duality_world() -> DiscreteWorld {
    DiscreteWorld::new(
        vec![0.5, 0.5],
        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    )
    .expect("valid built-in world")
}

/// Total ordering a > b > c over the interpolation world's responses.
pub fn degenerate_labels() -> Vec<PairLabel> {
    vec![
        PairLabel { prompt: 0, winner: 0, loser: 1 },
        PairLabel { prompt: 0, winner: 1, loser: 2 },
        PairLabel { prompt: 0, winner: 0, loser: 2 },
    ]
}

/// The second reference policy of the degenerate-data study.
pub fn degenerate_alt_ref() -> Vec<Vec<f64>> {
    vec![vec![0.2, 0.3, 0.5]]
}

/// 13 log-spaced trade-off values in [1e-5, 1e3].
pub fn lambda_grid() -> Vec<f64> {
    (0..13)
        .map(|k| 10f64.powf(-5.0 + 8.0 * k as f64 / 12.0))
        .collect()
}

/// Penalty strengths for the constraint study.
pub fn alpha_grid() -> Vec<f64> {
    vec![0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
}

/// Trade-off values for the trained-versus-closed-form oracle.
pub fn rlhf_oracle_lambdas() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

/// The four losses compared by the interpolation and preservation studies.
pub fn study_losses() -> Vec<LossSpec> {
    vec![
        LossSpec::bare(LossKind::Dpo { lambda: 1.0 }),
        LossSpec::bare(LossKind::Ipo { lambda: 1.0 }),
        LossSpec::bare(LossKind::Fdpo {
            divergence: Divergence::JensenShannon,
            lambda: 1.0,
        }),
        LossSpec::bare(LossKind::Typo { lambda: 1.0 }),
    ]
}

/// The loss pair trained against each other in the constraint study.
pub fn constraint_losses() -> Vec<LossSpec> {
    vec![
        LossSpec::bare(LossKind::Dpo { lambda: 0.1 }),
        LossSpec::bare(LossKind::Rlhf {
            reward: RewardSpec::BtOptimal,
            lambda: 0.1,
        }),
    ]
}

/// The losses contrasted by the degenerate-data study (TYPO is the control
/// whose optimum keeps depending on the reference).
pub fn degenerate_losses() -> Vec<LossSpec> {
    vec![
        LossSpec::bare(LossKind::Dpo { lambda: 1.0 }),
        LossSpec::bare(LossKind::Fdpo {
            divergence: Divergence::JensenShannon,
            lambda: 1.0,
        }),
        LossSpec::bare(LossKind::Typo { lambda: 1.0 }),
    ]
}

/// Full-population optimizer preset for the interpolation and preservation
/// studies: learning rate 1e-3 (5e-4 for TYPO) and a 3x epoch budget for
/// the slower-converging Jensen-Shannon variant. Budgets are sized for
/// exact population gradients, where one epoch is a single update.
pub fn interpolation_optim(loss_key: &str) -> OptimConfig {
    let base = OptimConfig {
        learning_rate: 1e-3,
        epochs: 8000,
        record_every: 200,
        ..OptimConfig::default()
    };
    match loss_key {
        "typo" => OptimConfig { learning_rate: 5e-4, ..base },
        "fdpo" => OptimConfig { epochs: 24000, record_every: 600, ..base },
        _ => base,
    }
}

/// Sampled batch-size-20 protocol: 1000 epochs (3000 for the Jensen-Shannon
/// variant), one fresh minibatch per epoch.
pub fn paper_batches_optim(loss_key: &str, seed: u64) -> OptimConfig {
    let mut config = interpolation_optim(loss_key);
    config.batch = BatchMode::Minibatch { size: 20, seed };
    config.epochs = if loss_key == "fdpo" { 3000 } else { 1000 };
    config.record_every = 50;
    config
}

/// Constraint study: lambda = 0.1 and 100 epochs for both losses; the
/// learning rate is raised so that 100 updates reach the optimum's
/// neighborhood.
pub fn constraint_optim() -> OptimConfig {
    OptimConfig {
        learning_rate: 0.1,
        epochs: 100,
        record_every: 10,
        ..OptimConfig::default()
    }
}

/// Degenerate-data study budgets: long enough for the reference-independent
/// losses' runaway optima to coincide between the two references.
pub fn degenerate_optim(loss_key: &str) -> OptimConfig {
    let base = OptimConfig {
        learning_rate: 1e-3,
        epochs: 12000,
        record_every: 300,
        ..OptimConfig::default()
    };
    match loss_key {
        "typo" => OptimConfig { learning_rate: 5e-4, ..base },
        "fdpo" => OptimConfig { epochs: 24000, record_every: 600, ..base },
        _ => base,
    }
}

/// Budget under which trained KL-regularized policies match the closed form
/// within total variation 0.01 for lambda in {0.1, 1, 10}.
pub fn rlhf_oracle_optim() -> OptimConfig {
    OptimConfig {
        learning_rate: 5e-3,
        epochs: 4000,
        record_every: 1000,
        ..OptimConfig::default()
    }
}

/// Default initialization shared by all presets.
pub fn default_init() -> InitMode {
    InitMode::Reference
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{policy_distance_on, PolicyMetric};

    #[test]
    fn worlds_are_valid_and_match_expected_structure() {
        let w = interpolation_world();
        assert_eq!(w.n_prompts(), 1);
        assert_eq!(w.pi_star(0), &[0.6, 0.3, 0.1]);
        assert_eq!(w.pi_ref(0), &[0.4, 0.4, 0.2]);

        let p = preservation_world();
        let good = policy_distance_on(
            &p,
            p.pi_ref_all(),
            p.pi_star_all(),
            PolicyMetric::TotalVariation,
            &[0],
        )
        .unwrap();
        let bad = policy_distance_on(
            &p,
            p.pi_ref_all(),
            p.pi_star_all(),
            PolicyMetric::TotalVariation,
            &[1],
        )
        .unwrap();
        assert_eq!(good, 0.0);
        assert!((bad - 0.2).abs() < 1e-15);
    }

    #[test]
    fn lambda_grid_is_13_log_spaced_points() {
        let g = lambda_grid();
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-5).abs() < 1e-18);
        assert!((g[12] - 1e3).abs() < 1e-9);
        for pair in g.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!((ratio - g[1] / g[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn presets_validate() {
        for key in ["dpo", "ipo", "fdpo", "typo"] {
            interpolation_optim(key).validate().unwrap();
            degenerate_optim(key).validate().unwrap();
            paper_batches_optim(key, 0).validate().unwrap();
        }
        constraint_optim().validate().unwrap();
        rlhf_oracle_optim().validate().unwrap();
    }
}
