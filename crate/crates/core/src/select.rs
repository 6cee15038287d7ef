//! Time/space-efficient auto-selection: per module, keep the regressors
//! within an accuracy tolerance band of the best, then within an R-squared
//! tolerance band of the best survivor, then pick the one minimizing the
//! time or size objective. Ties at every argmax/argmin break toward the
//! lexicographically smallest regressor name and are recorded in the audit
//! trail.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::kernel::ModuleKind;
use crate::metrics::EvalResult;
use crate::regressors::RegressorId;

/// Extra objective minimized after both tolerance filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Objective {
    TimePerSample,
    ModelSize,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::TimePerSample => "time",
            Objective::ModelSize => "space",
        }
    }

    pub fn parse(name: &str) -> Option<Objective> {
        match name {
            "time" => Some(Objective::TimePerSample),
            "space" => Some(Objective::ModelSize),
            _ => None,
        }
    }

    fn value_of(&self, result: &EvalResult) -> f64 {
        match self {
            Objective::TimePerSample => result.tps_ms,
            Objective::ModelSize => result.size_kb,
        }
    }
}

/// Tolerances and objective for one selection run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SelectionConfig {
    pub epsilon_a: f64,
    pub epsilon_r: f64,
    pub objective: Objective,
}

impl SelectionConfig {
    pub fn new(epsilon_a: f64, epsilon_r: f64, objective: Objective) -> Result<Self, SelectError> {
        if epsilon_a < 0.0 || epsilon_r < 0.0 {
            return Err(SelectError::InvalidTolerance { epsilon_a, epsilon_r });
        }
        Ok(Self { epsilon_a, epsilon_r, objective })
    }
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("no evaluation results to select from")]
    EmptyResults,
    #[error("duplicate (module, regressor) pair: ({module}, {regressor})")]
    DuplicatePair { module: ModuleKind, regressor: RegressorId },
    #[error("tolerances must be >= 0 (epsilon_a = {epsilon_a}, epsilon_r = {epsilon_r})")]
    InvalidTolerance { epsilon_a: f64, epsilon_r: f64 },
    #[error("module {0} not present in the selection")]
    UnknownModule(ModuleKind),
}

/// Metrics snapshot of one candidate, kept in the audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateMetrics {
    pub regressor: RegressorId,
    pub acc: f64,
    pub r: f64,
    pub objective_value: f64,
}

/// Full decision record for one module: the candidate set, both filter
/// bands, the winner, and any tie-breaks taken.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionAudit {
    pub module: ModuleKind,
    /// All candidates for the module, ordered by regressor name.
    pub candidates: Vec<CandidateMetrics>,
    pub accuracy_leader: RegressorId,
    pub max_acc: f64,
    /// Survivors of the accuracy tolerance filter.
    pub accuracy_band: Vec<RegressorId>,
    pub r_leader: RegressorId,
    pub max_r_in_band: f64,
    /// Survivors of the R-squared tolerance filter.
    pub r_band: Vec<RegressorId>,
    pub winner: RegressorId,
    pub winner_objective: f64,
    pub tie_notes: Vec<String>,
}

/// The module -> regressor mapping produced by one selection run, with a
/// per-module audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionMap {
    pub objective: Objective,
    pub epsilon_a: f64,
    pub epsilon_r: f64,
    pub winners: BTreeMap<ModuleKind, RegressorId>,
    pub audits: BTreeMap<ModuleKind, SelectionAudit>,
}

/// Argmax over candidates by `key`, breaking exact ties toward the smallest
/// regressor name; returns the winner index and whether a tie occurred.
fn argmax_by(candidates: &[CandidateMetrics], key: impl Fn(&CandidateMetrics) -> f64) -> (usize, bool) {
    let mut best = 0;
    let mut tied = false;
    for i in 1..candidates.len() {
        let (v, b) = (key(&candidates[i]), key(&candidates[best]));
        if v > b {
            best = i;
            tied = false;
        } else if v == b {
            tied = true;
            if candidates[i].regressor < candidates[best].regressor {
                best = i;
            }
        }
    }
    (best, tied)
}

fn argmin_objective(candidates: &[&CandidateMetrics]) -> (usize, bool) {
    let mut best = 0;
    let mut tied = false;
    for i in 1..candidates.len() {
        if candidates[i].objective_value < candidates[best].objective_value {
            best = i;
            tied = false;
        } else if candidates[i].objective_value == candidates[best].objective_value {
            tied = true;
            if candidates[i].regressor < candidates[best].regressor {
                best = i;
            }
        }
    }
    (best, tied)
}

/// Run the selection over evaluation results. Every (module, regressor)
/// pair must appear at most once; every module present gets exactly one
/// winner.
pub fn auto_select(results: &[EvalResult], cfg: &SelectionConfig) -> Result<SelectionMap, SelectError> {
    if results.is_empty() {
        return Err(SelectError::EmptyResults);
    }
    if cfg.epsilon_a < 0.0 || cfg.epsilon_r < 0.0 {
        return Err(SelectError::InvalidTolerance { epsilon_a: cfg.epsilon_a, epsilon_r: cfg.epsilon_r });
    }
    let mut seen = BTreeSet::new();
    let mut by_module: BTreeMap<ModuleKind, Vec<CandidateMetrics>> = BTreeMap::new();
    for result in results {
        if !seen.insert((result.module, result.regressor)) {
            return Err(SelectError::DuplicatePair { module: result.module, regressor: result.regressor });
        }
        by_module.entry(result.module).or_default().push(CandidateMetrics {
            regressor: result.regressor,
            acc: result.acc,
            r: result.r,
            objective_value: cfg.objective.value_of(result),
        });
    }

    let mut winners = BTreeMap::new();
    let mut audits = BTreeMap::new();
    for (module, mut candidates) in by_module {
        candidates.sort_by(|a, b| a.regressor.cmp(&b.regressor));
        let mut tie_notes = Vec::new();

        let (acc_idx, acc_tie) = argmax_by(&candidates, |c| c.acc);
        let accuracy_leader = candidates[acc_idx].regressor;
        let max_acc = candidates[acc_idx].acc;
        if acc_tie {
            tie_notes.push(format!("accuracy argmax tie resolved to {accuracy_leader}"));
        }
        let accuracy_band: Vec<&CandidateMetrics> =
            candidates.iter().filter(|c| max_acc - c.acc <= cfg.epsilon_a).collect();

        let band_owned: Vec<CandidateMetrics> = accuracy_band.iter().map(|c| (*c).clone()).collect();
        let (r_idx, r_tie) = argmax_by(&band_owned, |c| c.r);
        let r_leader = band_owned[r_idx].regressor;
        let max_r_in_band = band_owned[r_idx].r;
        if r_tie {
            tie_notes.push(format!("r-squared argmax tie resolved to {r_leader}"));
        }
        let r_band: Vec<&CandidateMetrics> =
            accuracy_band.iter().copied().filter(|c| max_r_in_band - c.r <= cfg.epsilon_r).collect();

        let (win_idx, obj_tie) = argmin_objective(&r_band);
        let winner = r_band[win_idx].regressor;
        let winner_objective = r_band[win_idx].objective_value;
        if obj_tie {
            tie_notes.push(format!("objective argmin tie resolved to {winner}"));
        }

        winners.insert(module, winner);
        audits.insert(
            module,
            SelectionAudit {
                module,
                accuracy_leader,
                max_acc,
                accuracy_band: accuracy_band.iter().map(|c| c.regressor).collect(),
                r_leader,
                max_r_in_band,
                r_band: r_band.iter().map(|c| c.regressor).collect(),
                winner,
                winner_objective,
                tie_notes,
                candidates,
            },
        );
    }

    Ok(SelectionMap {
        objective: cfg.objective,
        epsilon_a: cfg.epsilon_a,
        epsilon_r: cfg.epsilon_r,
        winners,
        audits,
    })
}

/// Audit record for one module of a selection map.
pub fn explain_selection<'a>(map: &'a SelectionMap, module: ModuleKind) -> Result<&'a SelectionAudit, SelectError> {
    map.audits.get(&module).ok_or(SelectError::UnknownModule(module))
}
