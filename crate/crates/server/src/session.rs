//! One steerable simulation: its world, command log and per-tick hashes.
//!
//! Callers serialize access, so the world is always between ticks when a
//! command arrives; commands take effect at that boundary and are logged
//! with it. Replaying the log against a fresh world reproduces the hashes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use evtwin_core::config::{ConfigError, PolicySet, ScenarioConfig, Violation};
use evtwin_core::sim::{Event, SimError, World};
use evtwin_core::site::SiteGraph;
use evtwin_core::weather::WeatherSeries;

use crate::snapshot::Snapshot;

/// Allowed run speeds, in ticks per second.
pub const SPEEDS: [u32; 4] = [1, 6, 12, 60];
/// Largest single `step` request.
pub const MAX_STEP: u64 = 288 * 366;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    Start { speed: u32 },
    Pause,
    Step { n: u64 },
    SetPolicies { policies: PolicySet },
    SetPorts { area_id: String, n11: u32, n30: u32 },
    Reset { seed: Option<u64> },
}

impl Command {
    /// Whether the command changes simulated state (as opposed to pacing).
    pub fn steers_world(&self) -> bool {
        matches!(self, Command::SetPolicies { .. } | Command::SetPorts { .. } | Command::Reset { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedCommand {
    /// Session tick at whose boundary the command applied.
    pub tick: u64,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Mode {
    Paused,
    Running { speed: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub applied_at_tick: u64,
    pub tick: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// Session tick during which the event happened.
    pub session_tick: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPage {
    pub events: Vec<SessionEvent>,
    pub next: u64,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("speed {0} not allowed; use one of 1, 6, 12, 60")]
    InvalidSpeed(u32),
    #[error("step count must be between 1 and {MAX_STEP}, got {0}")]
    InvalidStep(u64),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl SessionError {
    /// Field-level violations, for 400 responses.
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            SessionError::Config(e) => e.violations().to_vec(),
            SessionError::Sim(SimError::Config(e)) => e.violations().to_vec(),
            SessionError::InvalidSpeed(_) => vec![Violation { field: "speed".into(), message: self.to_string() }],
            SessionError::InvalidStep(_) => vec![Violation { field: "n".into(), message: self.to_string() }],
            SessionError::Sim(SimError::UnknownArea(a)) => {
                vec![Violation { field: "area_id".into(), message: format!("unknown area {a:?}") }]
            }
            SessionError::Sim(e) => vec![Violation { field: String::new(), message: e.to_string() }],
        }
    }
}

pub struct Session {
    config: ScenarioConfig,
    weather: Arc<WeatherSeries>,
    site: Arc<SiteGraph>,
    world: World,
    tick: u64,
    mode: Mode,
    log: Vec<LoggedCommand>,
    events: Vec<SessionEvent>,
    hashes: Vec<String>,
    latest: Arc<Snapshot>,
}

impl Session {
    pub fn new(config: ScenarioConfig, weather: Arc<WeatherSeries>, site: Arc<SiteGraph>) -> Result<Self, SessionError> {
        config.validate()?;
        let world = World::new(config.clone(), weather.clone(), site.clone())?.with_events();
        let latest = Arc::new(Snapshot::capture(&world, 0, 0));
        let hashes = vec![latest.content_hash()];
        Ok(Self { config, weather, site, world, tick: 0, mode: Mode::Paused, log: Vec::new(), events: Vec::new(), hashes, latest })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn log(&self) -> &[LoggedCommand] {
        &self.log
    }

    /// Content hash after creation, then after every tick.
    pub fn hashes(&self) -> &[String] {
        &self.hashes
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.latest.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.world.is_finished()
    }

    fn drain_events(&mut self) {
        for event in std::mem::take(&mut self.world.events) {
            let seq = self.events.len() as u64;
            self.events.push(SessionEvent { seq, session_tick: self.tick, event });
        }
    }

    fn refresh(&mut self) {
        self.drain_events();
        self.latest = Arc::new(Snapshot::capture(&self.world, self.tick, self.events.len() as u64));
    }

    /// Advances one tick; `false` once the horizon is reached.
    pub fn advance(&mut self) -> bool {
        if self.world.is_finished() {
            self.mode = Mode::Paused;
            return false;
        }
        self.world.step();
        self.tick += 1;
        self.refresh();
        self.hashes.push(self.latest.content_hash());
        true
    }

    pub fn control(&mut self, command: Command) -> Result<Ack, SessionError> {
        let applied_at_tick = self.tick;
        match &command {
            Command::Start { speed } => {
                if !SPEEDS.contains(speed) {
                    return Err(SessionError::InvalidSpeed(*speed));
                }
                self.mode = Mode::Running { speed: *speed };
            }
            Command::Pause => self.mode = Mode::Paused,
            Command::Step { n } => {
                if !(1..=MAX_STEP).contains(n) {
                    return Err(SessionError::InvalidStep(*n));
                }
                self.mode = Mode::Paused;
                for _ in 0..*n {
                    if !self.advance() {
                        break;
                    }
                }
            }
            Command::SetPolicies { policies } => {
                let mut probe = self.world.config().clone();
                probe.policies = policies.clone();
                probe.validate()?;
                self.world.set_policies(policies.clone());
                self.refresh();
            }
            Command::SetPorts { area_id, n11, n30 } => {
                self.world.set_ports(area_id, *n11, *n30)?;
                self.refresh();
            }
            Command::Reset { seed } => {
                let mut cfg = self.config.clone();
                if let Some(s) = seed {
                    cfg.rng_seed = *s;
                }
                self.world = World::new(cfg, self.weather.clone(), self.site.clone())?.with_events();
                self.refresh();
            }
        }
        self.log.push(LoggedCommand { tick: applied_at_tick, command });
        Ok(Ack { applied_at_tick, tick: self.tick, mode: self.mode })
    }

    pub fn events_since(&self, since: u64, limit: usize) -> EventPage {
        let start = (since as usize).min(self.events.len());
        let events: Vec<SessionEvent> = self.events[start..].iter().take(limit).cloned().collect();
        let next = start as u64 + events.len() as u64;
        EventPage { events, next }
    }

    /// Rebuilds a session from its scenario and command log, advancing to
    /// `ticks`. Pacing commands are skipped; the tick count carries them.
    pub fn replay(
        config: ScenarioConfig,
        weather: Arc<WeatherSeries>,
        site: Arc<SiteGraph>,
        log: &[LoggedCommand],
        ticks: u64,
    ) -> Result<Session, SessionError> {
        let mut s = Session::new(config, weather, site)?;
        let mut pending = log.iter().filter(|c| c.command.steers_world()).peekable();
        loop {
            while let Some(c) = pending.next_if(|c| c.tick == s.tick) {
                s.control(c.command.clone())?;
            }
            if s.tick >= ticks || !s.advance() {
                break;
            }
        }
        Ok(s)
    }
}
