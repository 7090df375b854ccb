use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_DAY: u64 = 24 * 60;
pub const FULL_BATTERY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    Exploring,
    Training,
    DockedCharging,
}

impl SchedulerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerMode::Exploring => "exploring",
            SchedulerMode::Training => "training",
            SchedulerMode::DockedCharging => "docked_charging",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// One simulated minute passes.
    Tick,
    DetectionAcquired,
    TrainingFinished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    None,
    StartTraining,
    ResumeExploring,
    Dock,
}

/// What moves the robot from exploring to training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    /// Train after every `n` acquired detections.
    Quota { n: usize },
    /// Drain per exploring tick; dock and train once below `threshold`,
    /// charge per docked tick and resume exploring when full.
    Battery { threshold: f64, drain: f64, charge: f64 },
    /// Explore in `[day_start, night_start)` minutes of the day, train at night.
    DayNight { day_start: u64, night_start: u64 },
}

impl Default for Condition {
    fn default() -> Self {
        Condition::Quota { n: 10 }
    }
}

impl Condition {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let ok = match *self {
            Condition::Quota { n } => n >= 1,
            Condition::Battery { threshold, drain, charge } => {
                (0.0..=FULL_BATTERY).contains(&threshold) && drain > 0.0 && charge > 0.0
            }
            Condition::DayNight { day_start, night_start } => {
                day_start < night_start && night_start <= MINUTES_PER_DAY
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SchedulerError::Config(format!("invalid scheduler condition {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedulerError {
    #[error("event {event:?} is not allowed while {mode}")]
    Protocol { event: Event, mode: &'static str },
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub mode: SchedulerMode,
    pub battery: f64,
    /// Simulated minutes since start.
    pub clock: u64,
    pub acquired_since_train: usize,
    pub condition: Condition,
    /// Docked below threshold and the training run has not started yet.
    dock_training_due: bool,
    /// Training steps observed while not in training mode.
    violations: usize,
}

impl SchedulerState {
    pub fn new(condition: Condition, clock: u64) -> Result<Self, SchedulerError> {
        condition.validate()?;
        Ok(Self {
            mode: SchedulerMode::Exploring,
            battery: FULL_BATTERY,
            clock,
            acquired_since_train: 0,
            condition,
            dock_training_due: false,
            violations: 0,
        })
    }

    pub fn minute_of_day(&self) -> u64 {
        self.clock % MINUTES_PER_DAY
    }

    fn is_day(&self) -> bool {
        match self.condition {
            Condition::DayNight { day_start, night_start } => (day_start..night_start).contains(&self.minute_of_day()),
            _ => true,
        }
    }

    pub fn violations(&self) -> usize {
        self.violations
    }

    /// Called by anything about to run a training step. Counts the step as
    /// a violation unless the scheduler is in training mode.
    pub fn record_training_step(&mut self) -> bool {
        let ok = self.mode == SchedulerMode::Training;
        if !ok {
            self.violations += 1;
        }
        ok
    }

    /// Pure transition function.
    pub fn step(&self, event: Event) -> Result<(SchedulerState, Action), SchedulerError> {
        let mut next = self.clone();
        let action = next.apply(event)?;
        Ok((next, action))
    }

    /// In-place transition. On error the state is unchanged.
    pub fn apply(&mut self, event: Event) -> Result<Action, SchedulerError> {
        use SchedulerMode::*;
        let protocol = |mode: SchedulerMode| SchedulerError::Protocol { event, mode: mode.as_str() };
        match (self.mode, event) {
            (Exploring | DockedCharging, Event::TrainingFinished) => Err(protocol(self.mode)),
            (Exploring, Event::DetectionAcquired) => {
                self.acquired_since_train += 1;
                if let Condition::Quota { n } = self.condition {
                    if self.acquired_since_train >= n {
                        self.acquired_since_train = 0;
                        self.mode = Training;
                        return Ok(Action::StartTraining);
                    }
                }
                Ok(Action::None)
            }
            // detections only count while exploring
            (Training | DockedCharging, Event::DetectionAcquired) => Ok(Action::None),
            (Exploring, Event::Tick) => {
                self.clock += 1;
                match self.condition {
                    Condition::Battery { threshold, drain, .. } => {
                        self.battery = (self.battery - drain).max(0.0);
                        if self.battery < threshold {
                            self.mode = DockedCharging;
                            self.dock_training_due = true;
                            return Ok(Action::Dock);
                        }
                    }
                    Condition::DayNight { .. } if !self.is_day() => {
                        self.mode = Training;
                        self.acquired_since_train = 0;
                        return Ok(Action::StartTraining);
                    }
                    _ => {}
                }
                Ok(Action::None)
            }
            (Training, Event::Tick) => {
                self.clock += 1;
                self.charge();
                Ok(Action::None)
            }
            (DockedCharging, Event::Tick) => {
                self.clock += 1;
                self.charge();
                if self.dock_training_due {
                    self.dock_training_due = false;
                    self.acquired_since_train = 0;
                    self.mode = Training;
                    return Ok(Action::StartTraining);
                }
                Ok(self.try_resume())
            }
            (Training, Event::TrainingFinished) => {
                self.mode = DockedCharging;
                Ok(self.try_resume())
            }
        }
    }

    fn charge(&mut self) {
        if let Condition::Battery { charge, .. } = self.condition {
            self.battery = (self.battery + charge).min(FULL_BATTERY);
        }
    }

    /// From docked: resume when the condition allows, otherwise keep idling.
    fn try_resume(&mut self) -> Action {
        let ready = match self.condition {
            Condition::Quota { .. } => true,
            Condition::Battery { .. } => self.battery >= FULL_BATTERY,
            Condition::DayNight { .. } => self.is_day(),
        };
        if ready {
            self.mode = SchedulerMode::Exploring;
            Action::ResumeExploring
        } else {
            Action::None
        }
    }
}
