use serde::{Deserialize, Serialize};

use super::LdpError;
use crate::diagnostics::penetration_report;
use crate::solver::Trajectory;
use crate::space::Field;

/// Scalar path functionals usable as event levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFunctional {
    /// `||u(T)||_H`
    TerminalHNorm,
    /// `sup_t ||u(t)||_H`
    SupHNorm,
    /// `sup_t ||u(t) - pi(u(t))||_H`
    SupPenetration,
    /// `int ||u||_V^2 dt`
    EnergyV,
}

impl PathFunctional {
    pub fn evaluate(self, traj: &Trajectory) -> f64 {
        let norms = &traj.step_norms;
        match self {
            PathFunctional::TerminalHNorm => norms.last().map_or(0.0, |s| s.h_sq.sqrt()),
            PathFunctional::SupHNorm => norms.iter().map(|s| s.h_sq).fold(0.0, f64::max).sqrt(),
            PathFunctional::SupPenetration => penetration_report(traj, traj.n_pen).sup_pen_h.unwrap_or_default(),
            PathFunctional::EnergyV => norms.iter().take(traj.time.steps).map(|s| s.v_sq).sum::<f64>() * traj.dt(),
        }
    }
}

/// Path events whose probabilities are estimated.
#[derive(Debug, Clone)]
pub enum EventSpec {
    /// `||u(T) - center||_H <= radius`, or `> radius` with `complement`.
    TerminalBall { center: Field, radius: f64, complement: bool },
    /// `sup_t ||u(t) - reference(t)||_H >= threshold`, compared at the
    /// stored snapshots.
    SupExceed { reference: Vec<Field>, threshold: f64 },
    /// `functional(u) >= level`.
    FunctionalThreshold { functional: PathFunctional, level: f64 },
}

impl EventSpec {
    pub fn terminal_ball(center: Field, radius: f64) -> Result<Self, LdpError> {
        let e = EventSpec::TerminalBall { center, radius, complement: false };
        e.check()?;
        Ok(e)
    }

    pub fn ball_exit(center: Field, radius: f64) -> Result<Self, LdpError> {
        let e = EventSpec::TerminalBall { center, radius, complement: true };
        e.check()?;
        Ok(e)
    }

    pub fn check(&self) -> Result<(), LdpError> {
        match self {
            EventSpec::TerminalBall { center, radius, .. } => {
                center.check_finite().map_err(|e| LdpError::InvalidEvent(e.to_string()))?;
                if radius.is_nan() || *radius <= 0.0 {
                    return Err(LdpError::InvalidEvent(format!("ball radius must be positive, got {radius}")));
                }
            }
            EventSpec::SupExceed { reference, threshold } => {
                if reference.is_empty() || threshold.is_nan() || *threshold < 0.0 {
                    return Err(LdpError::InvalidEvent("sup_exceed needs a reference path and a threshold >= 0".into()));
                }
            }
            EventSpec::FunctionalThreshold { level, .. } => {
                if !level.is_finite() {
                    return Err(LdpError::InvalidEvent(format!("functional level must be finite, got {level}")));
                }
            }
        }
        Ok(())
    }

    /// Distance of the terminal state to the ball center.
    pub fn terminal_distance(&self, terminal: &Field) -> Result<f64, LdpError> {
        match self {
            EventSpec::TerminalBall { center, .. } => Ok(terminal.sub(center)?.h_norm()),
            _ => Err(LdpError::InvalidEvent("only terminal_ball events have a terminal distance".into())),
        }
    }

    pub fn occurs(&self, traj: &Trajectory) -> Result<bool, LdpError> {
        match self {
            EventSpec::TerminalBall { radius, complement, .. } => {
                let dist = self.terminal_distance(traj.terminal())?;
                Ok(if *complement { dist > *radius } else { dist <= *radius })
            }
            EventSpec::SupExceed { reference, threshold } => {
                if reference.len() != traj.snapshots.len() {
                    return Err(LdpError::InvalidEvent(format!(
                        "reference has {} snapshots, trajectory {}",
                        reference.len(),
                        traj.snapshots.len()
                    )));
                }
                let mut sup: f64 = 0.0;
                for (u, r) in traj.snapshots.iter().zip(reference) {
                    sup = sup.max(u.sub(r)?.h_norm());
                }
                Ok(sup >= *threshold)
            }
            EventSpec::FunctionalThreshold { functional, level } => Ok(functional.evaluate(traj) >= *level),
        }
    }
}
