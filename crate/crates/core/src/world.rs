//! Discrete preference worlds: prompts, responses, ground-truth and reference
//! policies, the Bradley-Terry preference model, and preference-data generation.
//!
//! A world is a finite bandit-style environment. Each prompt carries a
//! probability mass, an ordered response set, a ground-truth policy `pi_star`
//! whose ratios reproduce all pairwise preferences, and a reference policy
//! `pi_ref` that both generates response pairs and anchors regularization.
//! The latent reward is represented as `log pi_star`; any other valid reward
//! differs by a per-prompt constant that cancels in the preference model.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROB_TOL: f64 = 1e-12;

/// Finite prompt/response world with ground-truth and reference policies.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld {
    prompt_mass: Vec<f64>,
    pi_star: Vec<Vec<f64>>,
    pi_ref: Vec<Vec<f64>>,
}

impl DiscreteWorld {
    /// Builds a world after checking every distribution invariant:
    /// prompt masses and per-prompt probability vectors sum to one within
    /// 1e-12, and both policies are strictly positive everywhere.
    pub fn new(
        prompt_mass: Vec<f64>,
        pi_star: Vec<Vec<f64>>,
        pi_ref: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if prompt_mass.is_empty() {
            return Err(Error::InvalidDistribution(
                "prompts: at least one prompt required".into(),
            ));
        }
        if pi_star.len() != prompt_mass.len() || pi_ref.len() != prompt_mass.len() {
            return Err(Error::ShapeMismatch(format!(
                "pi_star/pi_ref must cover all {} prompts",
                prompt_mass.len()
            )));
        }
        for (x, &m) in prompt_mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "prompts[{x}].mass: nonnegative finite value required, got {m}"
                )));
            }
        }
        let total: f64 = prompt_mass.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidDistribution(format!(
                "prompts: masses sum to {total}, expected 1 within {PROB_TOL}"
            )));
        }
        for x in 0..prompt_mass.len() {
            if pi_star[x].len() < 2 {
                return Err(Error::InvalidDistribution(format!(
                    "responses[{x}]: at least 2 responses required"
                )));
            }
            if pi_ref[x].len() != pi_star[x].len() {
                return Err(Error::ShapeMismatch(format!(
                    "pi_ref[{x}]: length {} does not match pi_star length {}",
                    pi_ref[x].len(),
                    pi_star[x].len()
                )));
            }
            check_positive_distribution(&pi_star[x], &format!("pi_star[{x}]"))?;
            check_positive_distribution(&pi_ref[x], &format!("pi_ref[{x}]"))?;
        }
        Ok(Self {
            prompt_mass,
            pi_star,
            pi_ref,
        })
    }

    pub fn n_prompts(&self) -> usize {
        self.prompt_mass.len()
    }

    pub fn n_responses(&self, x: usize) -> usize {
        self.pi_star[x].len()
    }

    pub fn prompt_mass(&self, x: usize) -> f64 {
        self.prompt_mass[x]
    }

    pub fn masses(&self) -> &[f64] {
        &self.prompt_mass
    }

    pub fn pi_star(&self, x: usize) -> &[f64] {
        &self.pi_star[x]
    }

    pub fn pi_ref(&self, x: usize) -> &[f64] {
        &self.pi_ref[x]
    }

    pub fn pi_star_all(&self) -> &[Vec<f64>] {
        &self.pi_star
    }

    pub fn pi_ref_all(&self) -> &[Vec<f64>] {
        &self.pi_ref
    }

    /// Copy of this world with the reference policy replaced (used by the
    /// degenerate-data study, which trains one dataset under two references).
    pub fn with_pi_ref(&self, pi_ref: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.prompt_mass.clone(), self.pi_star.clone(), pi_ref)
    }

    fn check_pair(&self, x: usize, y1: usize, y2: usize) -> Result<()> {
        if x >= self.n_prompts() {
            return Err(Error::UnknownPrompt(x));
        }
        for y in [y1, y2] {
            if y >= self.n_responses(x) {
                return Err(Error::UnknownResponse {
                    prompt: x,
                    response: y,
                });
            }
        }
        Ok(())
    }

    /// Ground-truth preference probability `p*(y1 > y2 | x)` from the
    /// ratio form of the Bradley-Terry model. Self-comparisons are 1/2 by
    /// convention.
    pub fn bt_preference(&self, x: usize, y1: usize, y2: usize) -> Result<f64> {
        self.check_pair(x, y1, y2)?;
        if y1 == y2 {
            return Ok(0.5);
        }
        let s = &self.pi_star[x];
        // evaluate one fixed orientation per pair so that the two orderings
        // sum to one exactly
        let (lo, hi) = (y1.min(y2), y1.max(y2));
        let p_lo = s[lo] / (s[lo] + s[hi]);
        Ok(if y1 == lo { p_lo } else { 1.0 - p_lo })
    }

    /// Degenerate policy placing all mass on the per-prompt argmax of
    /// `pi_star`. Errors when the argmax is not unique.
    pub fn mode_policy(&self) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.n_prompts());
        for x in 0..self.n_prompts() {
            let s = &self.pi_star[x];
            let mut best = 0usize;
            for (y, &p) in s.iter().enumerate() {
                if p > s[best] {
                    best = y;
                }
            }
            if s.iter().enumerate().any(|(y, &p)| y != best && p == s[best]) {
                return Err(Error::TiedMode(x));
            }
            let mut row = vec![0.0; s.len()];
            row[best] = 1.0;
            out.push(row);
        }
        Ok(out)
    }

    /// Expected win probability of each response against an opponent drawn
    /// from the reference policy; the self-match contributes 1/2. Values
    /// lie in [0, 1].
    pub fn ipo_reward(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_prompts());
        for x in 0..self.n_prompts() {
            let n = self.n_responses(x);
            let mut row = vec![0.0; n];
            for (y, r) in row.iter_mut().enumerate() {
                for yp in 0..n {
                    let p = if y == yp {
                        0.5
                    } else {
                        self.pi_star[x][y] / (self.pi_star[x][y] + self.pi_star[x][yp])
                    };
                    *r += self.pi_ref[x][yp] * p;
                }
            }
            out.push(row);
        }
        out
    }

    /// Exact or sampled preference data for this world.
    pub fn build_preference_data(&self, mode: DataMode) -> Result<PreferenceData> {
        match mode {
            DataMode::Population => Ok(self.population_data()),
            DataMode::Sampled { seed, count } => self.sampled_data(seed, count),
        }
    }

    fn population_data(&self) -> PreferenceData {
        let mut tuples = Vec::new();
        for x in 0..self.n_prompts() {
            let n = self.n_responses(x);
            for w in 0..n {
                for l in 0..n {
                    if w == l {
                        continue;
                    }
                    let p = self.pi_star[x][w] / (self.pi_star[x][w] + self.pi_star[x][l]);
                    tuples.push(PreferenceTuple {
                        prompt: x,
                        winner: w,
                        loser: l,
                        weight: self.prompt_mass[x] * self.pi_ref[x][w] * self.pi_ref[x][l] * p,
                    });
                }
            }
        }
        PreferenceData::new(DataMode::Population, tuples)
    }

    /// Draws tuples with a ChaCha8 stream seeded from `seed`: prompt from the
    /// prompt masses, a distinct response pair i.i.d. from the reference
    /// policy, then the winner from the ground-truth preference probability.
    fn sampled_data(&self, seed: u64, count: u64) -> Result<PreferenceData> {
        if count == 0 {
            return Err(Error::EmptySample);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prompt_dist = WeightedIndex::new(&self.prompt_mass)
            .map_err(|e| Error::InvalidDistribution(format!("prompts: {e}")))?;
        let ref_dists: Vec<WeightedIndex<f64>> = self
            .pi_ref
            .iter()
            .enumerate()
            .map(|(x, r)| {
                WeightedIndex::new(r)
                    .map_err(|e| Error::InvalidDistribution(format!("pi_ref[{x}]: {e}")))
            })
            .collect::<Result<_>>()?;
        let w = 1.0 / count as f64;
        let mut tuples = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let x = prompt_dist.sample(&mut rng);
            let y1 = ref_dists[x].sample(&mut rng);
            let mut y2 = ref_dists[x].sample(&mut rng);
            while y2 == y1 {
                y2 = ref_dists[x].sample(&mut rng);
            }
            let p = self.pi_star[x][y1] / (self.pi_star[x][y1] + self.pi_star[x][y2]);
            let (winner, loser) = if rng.gen::<f64>() < p { (y1, y2) } else { (y2, y1) };
            tuples.push(PreferenceTuple {
                prompt: x,
                winner,
                loser,
                weight: w,
            });
        }
        Ok(PreferenceData::new(DataMode::Sampled { seed, count }, tuples))
    }

    /// Population-style data where each unordered pair appears once with a
    /// fixed winner, weighted by prompt mass. Requires exactly one label per
    /// pair.
    pub fn degenerate_dataset(&self, labels: &[PairLabel]) -> Result<PreferenceData> {
        let mut seen: Vec<Vec<bool>> = (0..self.n_prompts())
            .map(|x| {
                let n = self.n_responses(x);
                vec![false; n * n]
            })
            .collect();
        let mut tuples = Vec::with_capacity(labels.len());
        for lab in labels {
            self.check_pair(lab.prompt, lab.winner, lab.loser)?;
            if lab.winner == lab.loser {
                return Err(Error::ConflictingPairLabel {
                    prompt: lab.prompt,
                    y1: lab.winner,
                    y2: lab.loser,
                });
            }
            let n = self.n_responses(lab.prompt);
            let (a, b) = (lab.winner.min(lab.loser), lab.winner.max(lab.loser));
            let slot = &mut seen[lab.prompt][a * n + b];
            if *slot {
                return Err(Error::ConflictingPairLabel {
                    prompt: lab.prompt,
                    y1: a,
                    y2: b,
                });
            }
            *slot = true;
            tuples.push(PreferenceTuple {
                prompt: lab.prompt,
                winner: lab.winner,
                loser: lab.loser,
                weight: self.prompt_mass[lab.prompt],
            });
        }
        for x in 0..self.n_prompts() {
            let n = self.n_responses(x);
            for a in 0..n {
                for b in (a + 1)..n {
                    if !seen[x][a * n + b] {
                        return Err(Error::MissingPairLabel { prompt: x, y1: a, y2: b });
                    }
                }
            }
        }
        Ok(PreferenceData::new(DataMode::Population, tuples))
    }
}

fn check_positive_distribution(p: &[f64], name: &str) -> Result<()> {
    for (y, &v) in p.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "{name}[{y}]: strictly positive finite probability required, got {v}"
            )));
        }
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{name}: entries sum to {s}, expected 1 within {PROB_TOL}"
        )));
    }
    Ok(())
}

/// Preference probability from an explicit reward table via the logistic of
/// the reward difference.
pub fn bt_from_reward(reward: &[Vec<f64>], x: usize, y1: usize, y2: usize) -> Result<f64> {
    let row = reward.get(x).ok_or(Error::UnknownPrompt(x))?;
    for y in [y1, y2] {
        let v = *row.get(y).ok_or(Error::UnknownResponse {
            prompt: x,
            response: y,
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("reward[{x}][{y}]")));
        }
    }
    Ok(sigmoid(row[y1] - row[y2]))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// How preference data was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataMode {
    /// Exact expectation over the data-generating distribution: one weighted
    /// tuple per ordered distinct response pair.
    Population,
    /// Finite i.i.d. sample, reproducible from the seed.
    Sampled { seed: u64, count: u64 },
}

/// One labeled comparison: `winner` beat `loser` on `prompt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceTuple {
    pub prompt: usize,
    pub winner: usize,
    pub loser: usize,
    pub weight: f64,
}

/// A fixed winner assignment for one unordered response pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairLabel {
    pub prompt: usize,
    pub winner: usize,
    pub loser: usize,
}

/// Weighted collection of preference tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceData {
    pub mode: DataMode,
    pub tuples: Vec<PreferenceTuple>,
    total_weight: f64,
}

impl PreferenceData {
    pub fn new(mode: DataMode, tuples: Vec<PreferenceTuple>) -> Self {
        let total_weight = tuples.iter().map(|t| t.weight).sum();
        Self {
            mode,
            tuples,
            total_weight,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }
}
