use std::fmt::Write as _;

use super::{linearize, solve_normal_equations, FactorGraph, LinearSolverKind, Values};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LmConfig {
    pub initial_lambda: f64,
    pub lambda_factor: f64,
    pub max_lambda: f64,
    /// Stop when `(f − f_new)/f` of an accepted step falls below this.
    pub rtol: f64,
    /// Stop when the proposed step's norm falls below this.
    pub xtol: f64,
    /// Total step attempts, accepted or rejected.
    pub max_iterations: usize,
    pub solver: LinearSolverKind,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            initial_lambda: 1e-4,
            lambda_factor: 10.0,
            max_lambda: 1e8,
            rtol: 1e-9,
            xtol: 1e-10,
            max_iterations: 100,
            solver: LinearSolverKind::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ZeroObjective,
    RelativeDecrease,
    StepNorm,
    MaxIterations,
    /// Damping exceeded the configured maximum without an acceptable step.
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ZeroObjective => "zero_objective",
            Termination::RelativeDecrease => "relative_decrease",
            Termination::StepNorm => "step_norm",
            Termination::MaxIterations => "max_iterations",
            Termination::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Damping used for this attempt.
    pub lambda: f64,
    /// Objective after the attempt: the new value if accepted, else unchanged.
    pub objective: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub termination: Termination,
    pub records: Vec<IterationRecord>,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::ZeroObjective | Termination::RelativeDecrease | Termination::StepNorm
        )
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn accepted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    /// One line per attempt: `iteration lambda objective accepted`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# termination {}", self.termination.as_str());
        let _ = writeln!(s, "# converged {}", self.converged());
        let _ = writeln!(s, "# initial_objective {:.16e}", self.initial_objective);
        let _ = writeln!(s, "# final_objective {:.16e}", self.final_objective);
        let _ = writeln!(s, "# iteration lambda objective accepted");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{} {:.6e} {:.16e} {}",
                r.iteration, r.lambda, r.objective, r.accepted as u8
            );
        }
        s
    }
}

/// Levenberg-Marquardt with multiplicative damping updates.
///
/// Divergence is not an error: the last accepted values are returned with
/// [`Termination::Diverged`]. Errors are reserved for malformed graphs and
/// for gauge deficiency when damping is configured to zero.
pub fn lm_optimize(
    graph: &FactorGraph,
    initial: &Values,
    config: &LmConfig,
) -> Result<(Values, ConvergenceReport)> {
    if !(config.initial_lambda >= 0.0) || !(config.lambda_factor > 1.0) {
        return Err(Error::InvalidArgument("bad damping schedule".into()));
    }
    let mut values = initial.clone();
    let mut f = graph.objective(&values)?;
    let initial_objective = f;
    let mut lambda = config.initial_lambda;
    let mut records = Vec::new();
    let mut lin = linearize(graph, &values)?;

    let termination = loop {
        if f == 0.0 {
            break Termination::ZeroObjective;
        }
        if records.len() >= config.max_iterations {
            break Termination::MaxIterations;
        }
        let iteration = records.len() + 1;
        let delta = match solve_normal_equations(&lin, lambda, config.solver) {
            Ok(d) => Some(d),
            Err(Error::Singular(_)) if lambda > 0.0 => None,
            Err(e) => return Err(e),
        };
        let Some(delta) = delta else {
            records.push(IterationRecord {
                iteration,
                lambda,
                objective: f,
                step_norm: f64::NAN,
                accepted: false,
            });
            lambda *= config.lambda_factor;
            if lambda > config.max_lambda {
                break Termination::Diverged;
            }
            continue;
        };
        let step_norm = delta.norm();
        if step_norm < config.xtol {
            break Termination::StepNorm;
        }
        let candidate = values.retract(&lin.ordering, &delta);
        let f_new = graph.objective(&candidate)?;
        let accepted = f_new <= f;
        records.push(IterationRecord {
            iteration,
            lambda,
            objective: if accepted { f_new } else { f },
            step_norm,
            accepted,
        });
        if accepted {
            let rel = (f - f_new) / f;
            values = candidate;
            f = f_new;
            lambda /= config.lambda_factor;
            if f == 0.0 {
                break Termination::ZeroObjective;
            }
            if rel < config.rtol {
                break Termination::RelativeDecrease;
            }
            lin = linearize(graph, &values)?;
        } else {
            lambda *= config.lambda_factor;
            if lambda > config.max_lambda {
                break Termination::Diverged;
            }
        }
    };

    Ok((
        values,
        ConvergenceReport {
            initial_objective,
            final_objective: f,
            termination,
            records,
        },
    ))
}
