//! The four synthetic studies as deterministic grid runs: interpolation
//! across the trade-off grid, selective preservation on the two-prompt
//! world, constraint sensitivity of the DPO/RLHF correspondence under
//! weight decay, and the degenerate-data behavior under two references.
//!
//! Grid cells are independent jobs; a bounded worker pool may run them
//! concurrently and the report is assembled by a deterministic sort, so
//! output bytes are independent of scheduling.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec, Penalty, PenaltyTarget};
use crate::optim::{initial_policy, train, BatchMode, OptimConfig, TrainResult};
use crate::policy::{policy_distance_on, PolicyMetric, TabularPolicy};
use crate::report::{ExperimentReport, Row};
use crate::world::{DataMode, DiscreteWorld};

/// Which study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Interpolation,
    Preservation,
    Constraint,
    Degenerate,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Interpolation => "interpolation",
            ExperimentKind::Preservation => "preservation",
            ExperimentKind::Constraint => "constraint",
            ExperimentKind::Degenerate => "degenerate",
        }
    }
}

/// Runtime knobs that are not part of the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads for grid cells. Results are identical for any value.
    pub jobs: usize,
    /// Swap each cell's optimizer to the sampled batch-size-20 protocol.
    pub paper_batches: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, paper_batches: false }
    }
}

pub fn run_experiment(
    kind: ExperimentKind,
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let report = match kind {
        ExperimentKind::Interpolation => run_interpolation(config, options)?,
        ExperimentKind::Preservation => run_preservation(config, options)?,
        ExperimentKind::Constraint => run_constraint(config, options)?,
        ExperimentKind::Degenerate => run_degenerate(config, options)?,
    };
    report.validate()?;
    Ok(report)
}

/// Runs `f` over the items with a bounded worker pool. Results keep item
/// order, so downstream output is independent of completion order.
fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items
            .iter()
            .enumerate()
            .map(|(i, t)| f(i, t))
            .collect::<Result<Vec<R>>>();
    }
    let n = items.len();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<R>>>> =
        (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i, &items[i]);
                *slots[i].lock().expect("worker slot") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("worker slot").expect("slot filled"))
        .collect()
}

/// Deterministic per-cell stream id derived from the run seed; independent
/// of worker scheduling.
fn cell_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn apply_paper_batches(config: &mut OptimConfig, loss_key: &str, seed: u64) {
    config.batch = BatchMode::Minibatch { size: 20, seed };
    config.epochs = if loss_key == "fdpo" { 3000 } else { 1000 };
    config.record_every = 50;
}

struct RowBuilder<'a> {
    experiment: &'a str,
    seed: u64,
}

impl<'a> RowBuilder<'a> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        loss: &str,
        lambda: f64,
        alpha: f64,
        partition: &str,
        metric: &str,
        epoch: u64,
        value: f64,
    ) -> Row {
        Row {
            experiment: self.experiment.to_string(),
            loss: loss.to_string(),
            lambda,
            alpha,
            partition: partition.to_string(),
            metric: metric.to_string(),
            epoch,
            value,
            seed: self.seed,
        }
    }
}

/// Trajectory rows: the recorded loss plus per-prompt response
/// probabilities.
fn trajectory_rows(
    rb: &RowBuilder,
    loss: &str,
    lambda: f64,
    alpha: f64,
    partition_prefix: Option<&str>,
    result: &TrainResult,
) -> Vec<Row> {
    let mut rows = Vec::new();
    let loss_partition = partition_prefix.unwrap_or("all");
    for point in &result.trajectory {
        rows.push(rb.row(loss, lambda, alpha, loss_partition, "loss", point.epoch as u64, point.loss));
        for (x, probs) in point.probs.iter().enumerate() {
            let partition = match partition_prefix {
                Some(p) => format!("{p}/prompt_{x}"),
                None => format!("prompt_{x}"),
            };
            for (y, &v) in probs.iter().enumerate() {
                rows.push(rb.row(
                    loss,
                    lambda,
                    alpha,
                    &partition,
                    &format!("prob_{y}"),
                    point.epoch as u64,
                    v,
                ));
            }
        }
    }
    rows
}

/// Final distances from the trained policy to a target distribution set,
/// for each configured metric. KL metrics that are undefined against the
/// target (zero support) are skipped.
#[allow(clippy::too_many_arguments)]
fn distance_rows(
    rb: &RowBuilder,
    loss: &str,
    lambda: f64,
    alpha: f64,
    world: &DiscreteWorld,
    metrics: &[PolicyMetric],
    trained: &[Vec<f64>],
    target: &[Vec<f64>],
    target_name: &str,
    partitions: &[(&str, Vec<usize>)],
    epoch: u64,
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &metric in metrics {
        for (partition, prompts) in partitions {
            match policy_distance_on(world, trained, target, metric, prompts) {
                Ok(v) => rows.push(rb.row(
                    loss,
                    lambda,
                    alpha,
                    partition,
                    &format!("{}_to_{}", metric.name(), target_name),
                    epoch,
                    v,
                )),
                Err(Error::KlZeroSupport { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

/// Trains every configured loss at every grid trade-off on the single-prompt
/// world and records trajectories plus final distances to the ground-truth,
/// reference, and mode policies.
pub fn run_interpolation(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let world = &config.world;
    let data = world.build_preference_data(DataMode::Population)?;
    let mode = world.mode_policy().ok();
    let cells: Vec<(LossSpec, f64)> = config
        .losses
        .iter()
        .flat_map(|l| config.lambda_grid.iter().map(move |&lam| (l.with_lambda(lam), lam)))
        .collect();
    let rb = RowBuilder { experiment: "interpolation", seed: config.seed };
    let results = parallel_map(cells, options.jobs, |i, (spec, lambda)| {
        let mut optim = config.optim_for(spec.kind_key())?;
        if options.paper_batches {
            apply_paper_batches(&mut optim, spec.kind_key(), cell_seed(config.seed, i));
        }
        let init = initial_policy(world, optim.init);
        let result = train(spec, world, &data, init, &optim)?;
        let label = spec.label();
        let mut rows = trajectory_rows(&rb, &label, *lambda, 0.0, None, &result);
        let trained = result.policy.all_probs();
        let all: Vec<(&str, Vec<usize>)> = vec![("all", (0..world.n_prompts()).collect())];
        let epoch = optim.epochs as u64;
        rows.extend(distance_rows(
            &rb, &label, *lambda, 0.0, world, &config.metrics, &trained,
            world.pi_star_all(), "star", &all, epoch,
        )?);
        rows.extend(distance_rows(
            &rb, &label, *lambda, 0.0, world, &config.metrics, &trained,
            world.pi_ref_all(), "ref", &all, epoch,
        )?);
        if let Some(mode) = &mode {
            rows.extend(distance_rows(
                &rb, &label, *lambda, 0.0, world, &config.metrics, &trained, mode, "mode",
                &all, epoch,
            )?);
        }
        Ok(rows)
    })?;
    Ok(ExperimentReport::new(results.into_iter().flatten().collect()))
}

/// Identifies the preservation world's partitions: prompts where the
/// reference already equals the ground truth ("good") versus the rest
/// ("bad").
fn preservation_partitions(world: &DiscreteWorld) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for x in 0..world.n_prompts() {
        let tv = policy_distance_on(
            world,
            world.pi_ref_all(),
            world.pi_star_all(),
            PolicyMetric::TotalVariation,
            &[x],
        )?;
        if tv < 1e-9 {
            good.push(x);
        } else {
            bad.push(x);
        }
    }
    if good.is_empty() || bad.is_empty() {
        return Err(Error::Precondition(
            "preservation world must contain prompts with pi_ref = pi_star and prompts with pi_ref != pi_star"
                .into(),
        ));
    }
    Ok((good, bad))
}

/// Like the interpolation study but on the two-prompt world, reporting
/// distances separately on the preserved ("good") and improvable ("bad")
/// prompt partitions, plus the reference baseline.
pub fn run_preservation(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let world = &config.world;
    let (good, bad) = preservation_partitions(world)?;
    let data = world.build_preference_data(DataMode::Population)?;
    let cells: Vec<(LossSpec, f64)> = config
        .losses
        .iter()
        .flat_map(|l| config.lambda_grid.iter().map(move |&lam| (l.with_lambda(lam), lam)))
        .collect();
    let rb = RowBuilder { experiment: "preservation", seed: config.seed };
    let results = parallel_map(cells, options.jobs, |i, (spec, lambda)| {
        let mut optim = config.optim_for(spec.kind_key())?;
        if options.paper_batches {
            apply_paper_batches(&mut optim, spec.kind_key(), cell_seed(config.seed, i));
        }
        let init = initial_policy(world, optim.init);
        let result = train(spec, world, &data, init, &optim)?;
        let label = spec.label();
        let mut rows = trajectory_rows(&rb, &label, *lambda, 0.0, None, &result);
        let trained = result.policy.all_probs();
        let partitions: Vec<(&str, Vec<usize>)> = vec![
            ("all", (0..world.n_prompts()).collect()),
            ("good", good.clone()),
            ("bad", bad.clone()),
        ];
        let epoch = optim.epochs as u64;
        rows.extend(distance_rows(
            &rb, &label, *lambda, 0.0, world, &config.metrics, &trained,
            world.pi_star_all(), "star", &partitions, epoch,
        )?);
        rows.extend(distance_rows(
            &rb, &label, *lambda, 0.0, world, &config.metrics, &trained,
            world.pi_ref_all(), "ref", &partitions, epoch,
        )?);
        Ok(rows)
    })?;
    let mut rows: Vec<Row> = results.into_iter().flatten().collect();
    // reference baseline: how far pi_ref itself is from pi_star
    let partitions: Vec<(&str, Vec<usize>)> =
        vec![("good", good.clone()), ("bad", bad.clone())];
    rows.extend(distance_rows(
        &rb, "reference", 0.0, 0.0, world, &config.metrics,
        world.pi_ref_all(), world.pi_star_all(), "star", &partitions, 0,
    )?);
    Ok(ExperimentReport::new(rows))
}

/// Trains the pairwise-logistic and reward-maximization losses from
/// identical initializations under a shared weight-decay penalty and records
/// the distance between the two trained policies as the penalty grows.
pub fn run_constraint(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    let world = &config.world;
    if config.lambda_grid.len() != 1 {
        return Err(Error::Config(
            "lambda_grid: the constraint study uses a single trade-off value".into(),
        ));
    }
    let lambda = config.lambda_grid[0];
    let dpo = config
        .losses
        .iter()
        .find(|l| matches!(l.kind, LossKind::Dpo { .. }))
        .ok_or_else(|| Error::Config("losses: constraint study needs a dpo entry".into()))?;
    let rlhf = config
        .losses
        .iter()
        .find(|l| matches!(l.kind, LossKind::Rlhf { .. }))
        .ok_or_else(|| Error::Config("losses: constraint study needs an rlhf entry".into()))?;
    let data = world.build_preference_data(DataMode::Population)?;
    let rb = RowBuilder { experiment: "constraint", seed: config.seed };
    let cells: Vec<f64> = config.alpha_grid.clone();
    let results = parallel_map(cells, options.jobs, |_, &alpha| {
        let mut rows = Vec::new();
        let mut finals: Vec<(String, TabularPolicy, u64)> = Vec::new();
        for spec in [dpo, rlhf] {
            let spec = spec.with_lambda(lambda).with_penalty(Some(Penalty {
                alpha,
                target: spec
                    .penalty
                    .map(|p| p.target)
                    .unwrap_or(PenaltyTarget::Probabilities),
            }));
            let optim = config.optim_for(spec.kind_key())?;
            let init = initial_policy(world, optim.init);
            let result = train(&spec, world, &data, init, &optim)?;
            let label = spec.label();
            rows.extend(trajectory_rows(&rb, &label, lambda, alpha, None, &result));
            let trained = result.policy.all_probs();
            let all: Vec<(&str, Vec<usize>)> = vec![("all", (0..world.n_prompts()).collect())];
            let epoch = optim.epochs as u64;
            rows.extend(distance_rows(
                &rb, &label, lambda, alpha, world, &config.metrics, &trained,
                world.pi_star_all(), "star", &all, epoch,
            )?);
            finals.push((label, result.policy, epoch));
        }
        let (pa, pb) = (finals[0].1.all_probs(), finals[1].1.all_probs());
        let epoch = finals[0].2.max(finals[1].2);
        for &metric in &config.metrics {
            let v = policy_distance_on(
                world,
                &pa,
                &pb,
                metric,
                &(0..world.n_prompts()).collect::<Vec<_>>(),
            )?;
            rows.push(rb.row("dpo_vs_rlhf", lambda, alpha, "all", metric.name(), epoch, v));
        }
        Ok(rows)
    })?;
    Ok(ExperimentReport::new(results.into_iter().flatten().collect()))
}

/// Trains each loss on fixed-winner data under two different reference
/// policies and records the distance between the two resulting policies.
/// The reparameterized losses must coincide; the control loss with an
/// explicit reference anchor must not.
pub fn run_degenerate(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    let world_a = &config.world;
    let alt = config.alt_pi_ref.as_ref().ok_or_else(|| {
        Error::Config("alt_pi_ref: required for the degenerate study".into())
    })?;
    let labels = config.labels.as_ref().ok_or_else(|| {
        Error::Config("labels: required for the degenerate study".into())
    })?;
    let world_b = world_a.with_pi_ref(alt.clone())?;
    let data = world_a.degenerate_dataset(labels)?;
    let rb = RowBuilder { experiment: "degenerate", seed: config.seed };
    let cells: Vec<(LossSpec, f64)> = config
        .losses
        .iter()
        .flat_map(|l| config.lambda_grid.iter().map(move |&lam| (l.with_lambda(lam), lam)))
        .collect();
    let results = parallel_map(cells, options.jobs, |_, (spec, lambda)| {
        let optim = config.optim_for(spec.kind_key())?;
        let label = spec.label();
        let mut rows = Vec::new();
        let mut trained = Vec::new();
        for (tag, world) in [("ref_a", world_a), ("ref_b", &world_b)] {
            let init = initial_policy(world, optim.init);
            let result = train(spec, world, &data, init, &optim)?;
            rows.extend(trajectory_rows(&rb, &label, *lambda, 0.0, Some(tag), &result));
            trained.push(result.policy.all_probs());
        }
        let epoch = optim.epochs as u64;
        for &metric in &config.metrics {
            let v = policy_distance_on(
                world_a,
                &trained[0],
                &trained[1],
                metric,
                &(0..world_a.n_prompts()).collect::<Vec<_>>(),
            )?;
            rows.push(rb.row(
                &label,
                *lambda,
                0.0,
                "all",
                &format!("{}_between_refs", metric.name()),
                epoch,
                v,
            ));
        }
        Ok(rows)
    })?;
    Ok(ExperimentReport::new(results.into_iter().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order_for_any_jobs() {
        let items: Vec<usize> = (0..37).collect();
        let square = |_: usize, v: &usize| -> Result<usize> { Ok(v * v) };
        let serial = parallel_map(items.clone(), 1, square).unwrap();
        for jobs in [2, 4, 16, 64] {
            let parallel = parallel_map(items.clone(), jobs, square).unwrap();
            assert_eq!(serial, parallel);
        }
    }

    #[test]
    fn parallel_map_propagates_errors() {
        let items: Vec<usize> = (0..8).collect();
        let f = |_: usize, v: &usize| -> Result<usize> {
            if *v == 5 {
                Err(Error::Precondition("boom".into()))
            } else {
                Ok(*v)
            }
        };
        assert!(parallel_map(items, 4, f).is_err());
    }

    #[test]
    fn cell_seed_is_stable() {
        assert_eq!(cell_seed(7, 3), cell_seed(7, 3));
        assert_ne!(cell_seed(7, 3), cell_seed(7, 4));
        assert_ne!(cell_seed(7, 3), cell_seed(8, 3));
    }

    #[test]
    fn preservation_partition_detection() {
        let w = crate::presets::preservation_world();
        let (good, bad) = preservation_partitions(&w).unwrap();
        assert_eq!(good, vec![0]);
        assert_eq!(bad, vec![1]);
        let uniform = crate::presets::interpolation_world();
        assert!(preservation_partitions(&uniform).is_err());
    }
}
