//! Regularized (aging) evolution over block genomes.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::{Field, SearchSpace};
use super::trial::{run_trial, Baseline, ProxyTrainer, TrialConfig, TrialOutcome};
use crate::error::{bail, Result};
use crate::model::BlockSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Population size `p`.
    pub population_size: usize,
    /// Rounds after the initial population.
    pub rounds: usize,
    /// Defaults to `max(2, p / 5)`.
    pub tournament_size: Option<usize>,
    /// Defaults to `p`.
    pub children_per_round: Option<usize>,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 16,
            rounds: 10,
            tournament_size: None,
            children_per_round: None,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            bail!(Config, "population_size must be at least 2");
        }
        if self.tournament_size == Some(0) || self.children_per_round == Some(0) {
            bail!(
                Config,
                "tournament_size and children_per_round must be positive"
            );
        }
        Ok(())
    }

    pub fn tournament_size(&self) -> usize {
        self.tournament_size
            .unwrap_or_else(|| (self.population_size / 5).max(2))
    }

    pub fn children_per_round(&self) -> usize {
        self.children_per_round.unwrap_or(self.population_size)
    }
}

/// A genome awaiting evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub trial_id: u64,
    pub parent_id: Option<u64>,
    pub round: usize,
    pub mutated_field: Option<Field>,
    pub genome: BlockSpec,
}

/// One line of the trial ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub parent_id: Option<u64>,
    pub round: usize,
    pub mutated_field: Option<Field>,
    pub genome: BlockSpec,
    #[serde(flatten)]
    pub outcome: TrialOutcome,
}

impl TrialRecord {
    pub fn new(c: Candidate, outcome: TrialOutcome) -> Self {
        Self {
            trial_id: c.trial_id,
            parent_id: c.parent_id,
            round: c.round,
            mutated_field: c.mutated_field,
            genome: c.genome,
            outcome,
        }
    }

    pub fn candidate(&self) -> Candidate {
        Candidate {
            trial_id: self.trial_id,
            parent_id: self.parent_id,
            round: self.round,
            mutated_field: self.mutated_field,
            genome: self.genome.clone(),
        }
    }
}

/// Selection order: completed trials above stopped ones, then higher
/// reward, then the earlier trial id.
pub fn rank(a: &TrialRecord, b: &TrialRecord) -> Ordering {
    b.outcome
        .completed()
        .cmp(&a.outcome.completed())
        .then_with(|| b.outcome.reward.total_cmp(&a.outcome.reward))
        .then_with(|| a.trial_id.cmp(&b.trial_id))
}

/// Runs a generation of candidates and returns their outcomes in order.
pub trait TrialExecutor {
    fn execute(
        &self,
        jobs: &[Candidate],
        run: &(dyn Fn(&Candidate) -> TrialOutcome + Sync),
    ) -> Result<Vec<TrialOutcome>>;
}

impl<X: TrialExecutor + ?Sized> TrialExecutor for &X {
    fn execute(
        &self,
        jobs: &[Candidate],
        run: &(dyn Fn(&Candidate) -> TrialOutcome + Sync),
    ) -> Result<Vec<TrialOutcome>> {
        (**self).execute(jobs, run)
    }
}

/// Evaluates candidates one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialExecutor;

impl TrialExecutor for SequentialExecutor {
    fn execute(
        &self,
        jobs: &[Candidate],
        run: &(dyn Fn(&Candidate) -> TrialOutcome + Sync),
    ) -> Result<Vec<TrialOutcome>> {
        Ok(jobs.iter().map(run).collect())
    }
}

/// Serves outcomes of already recorded trials and forwards the rest to
/// `inner`. A recorded trial whose candidate differs from the regenerated
/// one means the ledger belongs to another search and is an error.
#[derive(Debug, Clone)]
pub struct ReplayExecutor<X> {
    recorded: BTreeMap<u64, TrialRecord>,
    pub inner: X,
}

impl<X> ReplayExecutor<X> {
    pub fn new(records: impl IntoIterator<Item = TrialRecord>, inner: X) -> Self {
        Self {
            recorded: records.into_iter().map(|r| (r.trial_id, r)).collect(),
            inner,
        }
    }

    pub fn is_recorded(&self, trial_id: u64) -> bool {
        self.recorded.contains_key(&trial_id)
    }
}

impl<X: TrialExecutor> TrialExecutor for ReplayExecutor<X> {
    fn execute(
        &self,
        jobs: &[Candidate],
        run: &(dyn Fn(&Candidate) -> TrialOutcome + Sync),
    ) -> Result<Vec<TrialOutcome>> {
        let fresh: Vec<Candidate> = jobs
            .iter()
            .filter(|j| !self.recorded.contains_key(&j.trial_id))
            .cloned()
            .collect();
        let mut computed = self.inner.execute(&fresh, run)?.into_iter();
        let mut out = Vec::with_capacity(jobs.len());
        for job in jobs {
            match self.recorded.get(&job.trial_id) {
                Some(r) => {
                    if r.candidate() != *job {
                        bail!(
                            Config,
                            "ledger record {} does not match the replayed search",
                            job.trial_id
                        );
                    }
                    out.push(r.outcome.clone());
                }
                None => out.push(computed.next().expect("one outcome per fresh job")),
            }
        }
        Ok(out)
    }
}

/// Coordinator state. Only the coordinator mutates it, between rounds.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    /// Trial ids of the living population, oldest first.
    pub population: VecDeque<u64>,
    /// Every evaluated trial in id order; `history[i].trial_id == i`.
    pub history: Vec<TrialRecord>,
    pub rng: ChaCha8Rng,
    pub baseline: Option<Baseline>,
    /// Rounds finished after the initial population.
    pub rounds_completed: usize,
}

impl EvolutionState {
    pub fn new(seed: u64, baseline: Option<Baseline>) -> Self {
        Self {
            population: VecDeque::new(),
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            baseline,
            rounds_completed: 0,
        }
    }

    pub fn record(&self, trial_id: u64) -> &TrialRecord {
        &self.history[trial_id as usize]
    }

    /// Best trial of the whole history under [`rank`].
    pub fn best(&self) -> Option<&TrialRecord> {
        self.history.iter().min_by(|a, b| rank(a, b))
    }

    fn next_id(&self) -> u64 {
        self.history.len() as u64
    }

    /// Tournament over `s` distinct members drawn uniformly from the
    /// population; the winner under [`rank`] is returned.
    fn tournament(&mut self, s: usize) -> u64 {
        let n = self.population.len();
        let picks = rand::seq::index::sample(&mut self.rng, n, s.min(n));
        picks
            .iter()
            .map(|i| self.population[i])
            .min_by(|&a, &b| rank(&self.history[a as usize], &self.history[b as usize]))
            .expect("non-empty population")
    }

    fn admit(&mut self, records: Vec<TrialRecord>, max_population: usize) {
        for r in records {
            self.population.push_back(r.trial_id);
            self.history.push(r);
            while self.population.len() > max_population {
                self.population.pop_front();
            }
        }
    }
}

/// Everything [`evolve`] needs besides the callbacks.
pub struct Search<'a, P: ?Sized, X: ?Sized> {
    pub space: &'a SearchSpace,
    pub config: &'a EvolutionConfig,
    pub trial: &'a TrialConfig,
    pub proxy: &'a P,
    pub executor: &'a X,
    pub baseline: Option<Baseline>,
}

/// Runs regularized evolution.
///
/// Round 0 samples and evaluates `p` genomes. Each later round draws
/// `children_per_round` parents by tournament from the current population,
/// mutates each once, evaluates the children as one batch, then appends them
/// in trial-id order while evicting the oldest members beyond `p`.
/// `on_record` sees every record in trial-id order.
pub fn evolve<P, X>(
    search: &Search<'_, P, X>,
    on_record: &mut dyn FnMut(&TrialRecord) -> Result<()>,
) -> Result<EvolutionState>
where
    P: ProxyTrainer + ?Sized,
    X: TrialExecutor + ?Sized,
{
    let cfg = search.config;
    cfg.validate()?;
    search.space.validate()?;
    let mut state = EvolutionState::new(cfg.seed, search.baseline);
    let baseline = search.baseline;
    let run = |c: &Candidate| run_trial(search.proxy, &c.genome, search.trial, baseline.as_ref());

    let mut initial = Vec::with_capacity(cfg.population_size);
    for i in 0..cfg.population_size {
        initial.push(Candidate {
            trial_id: i as u64,
            parent_id: None,
            round: 0,
            mutated_field: None,
            genome: search.space.sample(&mut state.rng)?,
        });
    }
    evaluate_round(
        &mut state,
        initial,
        search.executor,
        &run,
        cfg.population_size,
        on_record,
    )?;

    for round in 1..=cfg.rounds {
        let mut children = Vec::with_capacity(cfg.children_per_round());
        for i in 0..cfg.children_per_round() {
            let parent_id = state.tournament(cfg.tournament_size());
            let parent = state.record(parent_id).genome.clone();
            let (genome, field) = search.space.mutate(&parent, &mut state.rng)?;
            children.push(Candidate {
                trial_id: state.next_id() + i as u64,
                parent_id: Some(parent_id),
                round,
                mutated_field: Some(field),
                genome,
            });
        }
        evaluate_round(
            &mut state,
            children,
            search.executor,
            &run,
            cfg.population_size,
            on_record,
        )?;
        state.rounds_completed = round;
    }
    Ok(state)
}

fn evaluate_round<X: TrialExecutor + ?Sized>(
    state: &mut EvolutionState,
    jobs: Vec<Candidate>,
    executor: &X,
    run: &(dyn Fn(&Candidate) -> TrialOutcome + Sync),
    max_population: usize,
    on_record: &mut dyn FnMut(&TrialRecord) -> Result<()>,
) -> Result<()> {
    let outcomes = executor.execute(&jobs, run)?;
    if outcomes.len() != jobs.len() {
        bail!(
            Usage,
            "executor returned {} outcomes for {} jobs",
            outcomes.len(),
            jobs.len()
        );
    }
    let records: Vec<TrialRecord> = jobs
        .into_iter()
        .zip(outcomes)
        .map(|(c, o)| TrialRecord::new(c, o))
        .collect();
    for r in &records {
        on_record(r)?;
    }
    state.admit(records, max_population);
    Ok(())
}
