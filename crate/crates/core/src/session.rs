//! Puppeteer session: spawn the virtual arm, execute one move at a time, and
//! hand out the waypoints that fell due so they can be mirrored.
//!
//! The session itself does no I/O. `tick` returns what must be sent and
//! published; the gateway does the sending.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{ColorTarget, Mode, MoveCommand};
use crate::robot::{
    plan_trajectory, pose_unchecked, EePose, JointConfig, KinematicParams, PlanOptions,
    TargetTable, Trajectory, Waypoint, Q_HOME,
};

/// Everything a session needs to plan motions. Shared between sessions.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub params: Arc<KinematicParams>,
    pub home: JointConfig,
    pub targets: Arc<TargetTable>,
    pub plan: PlanOptions,
    pub tutorial_mode: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let params = KinematicParams::panda();
        let targets = TargetTable::default_for(&params, &Q_HOME);
        Self {
            params: Arc::new(params),
            home: Q_HOME,
            targets: Arc::new(targets),
            plan: PlanOptions::default(),
            tutorial_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    q: JointConfig,
    ee: EePose,
    pub base: [f64; 3],
}

impl RobotState {
    fn new(q: JointConfig, base: [f64; 3], params: &KinematicParams) -> Self {
        Self {
            q,
            ee: pose_unchecked(&q, params),
            base,
        }
    }

    pub fn q(&self) -> &JointConfig {
        &self.q
    }

    /// Always the forward kinematics of `q`.
    pub fn ee(&self) -> &EePose {
        &self.ee
    }

    fn set_q(&mut self, q: JointConfig, params: &KinematicParams) {
        self.q = q;
        self.ee = pose_unchecked(&q, params);
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub color: ColorTarget,
    pub trajectory: Arc<Trajectory>,
    /// Index of the last emitted waypoint.
    pub progress: Option<usize>,
    pub started_at: Instant,
    /// Seconds between spawn and the start of this execution.
    pub time_offset: f64,
}

#[derive(Debug, Clone)]
pub enum SessionState {
    Unspawned,
    Ready(RobotState),
    Executing(RobotState, Execution),
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Unspawned => "unspawned",
            SessionState::Ready(_) => "ready",
            SessionState::Executing(..) => "executing",
        }
    }

    pub fn robot(&self) -> Option<&RobotState> {
        match self {
            SessionState::Unspawned => None,
            SessionState::Ready(r) | SessionState::Executing(r, _) => Some(r),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Rejection {
    #[error("not-spawned")]
    NotSpawned,
    #[error("busy")]
    Busy,
    #[error("tutorial-only")]
    TutorialOnly,
    #[error("mode-idle")]
    ModeIdle,
    #[error("infeasible")]
    Infeasible(String),
}

impl Rejection {
    /// Short machine-readable reason.
    pub fn reason(&self) -> &'static str {
        match self {
            Rejection::NotSpawned => "not-spawned",
            Rejection::Busy => "busy",
            Rejection::TutorialOnly => "tutorial-only",
            Rejection::ModeIdle => "mode-idle",
            Rejection::Infeasible(_) => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    pub color: ColorTarget,
    pub waypoints: usize,
    pub duration: f64,
}

/// A waypoint that fell due, with its timestamp on the wire (seconds since spawn).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DueWaypoint {
    pub index: usize,
    pub waypoint: Waypoint,
    pub wire_t: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    pub due: Vec<DueWaypoint>,
    /// Set on the tick that reached the final waypoint.
    pub completed: Option<ColorTarget>,
}

impl TickOutput {
    pub fn is_empty(&self) -> bool {
        self.due.is_empty() && self.completed.is_none()
    }
}

#[derive(Debug)]
pub struct Session {
    id: String,
    mode: Mode,
    state: SessionState,
    config: SessionConfig,
    spawned_at: Option<Instant>,
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Self {
        Self {
            id: id.into(),
            mode: Mode::Idle,
            state: SessionState::Unspawned,
            config,
            spawned_at: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn is_executing(&self) -> bool {
        matches!(self.state, SessionState::Executing(..))
    }

    /// Places the arm at `q_home` on `base` and switches to puppeteer mode.
    pub fn spawn(&mut self, base: [f64; 3], now: Instant) -> Result<&RobotState, Rejection> {
        if self.is_executing() {
            return Err(Rejection::Busy);
        }
        self.state =
            SessionState::Ready(RobotState::new(self.config.home, base, &self.config.params));
        self.mode = Mode::Puppeteer;
        self.spawned_at = Some(now);
        Ok(self.state.robot().expect("just spawned"))
    }

    pub fn submit(&mut self, cmd: &MoveCommand, now: Instant) -> Result<Accepted, Rejection> {
        let robot = match &self.state {
            SessionState::Unspawned => return Err(Rejection::NotSpawned),
            SessionState::Executing(..) => return Err(Rejection::Busy),
            SessionState::Ready(robot) => robot,
        };
        if self.mode != Mode::Puppeteer {
            return Err(Rejection::ModeIdle);
        }
        if cmd.target.tutorial_only() && !self.config.tutorial_mode {
            return Err(Rejection::TutorialOnly);
        }
        let trajectory = plan_trajectory(
            robot.q(),
            cmd.target,
            &self.config.targets,
            &self.config.params,
            &self.config.plan,
        )
        .map_err(|e| Rejection::Infeasible(e.to_string()))?;
        let accepted = Accepted {
            color: cmd.target,
            waypoints: trajectory.len(),
            duration: trajectory.duration(),
        };
        let time_offset = self
            .spawned_at
            .map_or(0.0, |at| now.saturating_duration_since(at).as_secs_f64());
        let robot = robot.clone();
        self.state = SessionState::Executing(
            robot,
            Execution {
                color: cmd.target,
                trajectory: Arc::new(trajectory),
                progress: None,
                started_at: now,
                time_offset,
            },
        );
        Ok(accepted)
    }

    /// Emits every waypoint whose time has come since the last tick.
    pub fn tick(&mut self, now: Instant) -> TickOutput {
        let SessionState::Executing(robot, exec) = &mut self.state else {
            return TickOutput::default();
        };
        let elapsed = now.saturating_duration_since(exec.started_at).as_secs_f64();
        let waypoints = &exec.trajectory.waypoints;
        let first = exec.progress.map_or(0, |p| p + 1);
        let due: Vec<DueWaypoint> = waypoints[first..]
            .iter()
            .take_while(|w| w.t <= elapsed)
            .enumerate()
            .map(|(i, w)| DueWaypoint {
                index: first + i,
                waypoint: *w,
                wire_t: exec.time_offset + w.t,
            })
            .collect();
        let Some(last) = due.last() else {
            return TickOutput::default();
        };
        exec.progress = Some(last.index);
        robot.set_q(last.waypoint.q, &self.config.params);

        if last.index + 1 == waypoints.len() {
            let color = exec.color;
            let robot = robot.clone();
            self.state = SessionState::Ready(robot);
            TickOutput {
                due,
                completed: Some(color),
            }
        } else {
            TickOutput {
                due,
                completed: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Stage;
    use crate::robot::forward_kinematics;
    use std::time::Duration;

    fn cmd(color: ColorTarget) -> MoveCommand {
        MoveCommand::new(color, Stage::Quick, format!("move to {color}"))
    }

    fn spawned(now: Instant) -> Session {
        let mut s = Session::new("s", SessionConfig::default());
        s.spawn([0.0; 3], now).unwrap();
        s
    }

    #[test]
    fn spawn_sets_home_and_mode() {
        let now = Instant::now();
        let mut s = Session::new("s", SessionConfig::default());
        assert_eq!(s.mode(), Mode::Idle);
        let robot = s.spawn([0.0; 3], now).unwrap().clone();
        assert_eq!(robot.q(), &Q_HOME);
        let fk = forward_kinematics(&Q_HOME, &KinematicParams::panda()).unwrap();
        assert_eq!(robot.ee(), &fk);
        assert_eq!(s.mode(), Mode::Puppeteer);
        assert_eq!(s.state().name(), "ready");
    }

    #[test]
    fn respawn_resets_to_home_at_new_base() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        s.submit(&cmd(ColorTarget::Red), t0).unwrap();
        s.tick(t0 + Duration::from_secs(60));
        assert_ne!(s.state().robot().unwrap().q(), &Q_HOME);
        s.spawn([1.0, 2.0, 0.0], t0 + Duration::from_secs(61))
            .unwrap();
        let robot = s.state().robot().unwrap();
        assert_eq!(robot.q(), &Q_HOME);
        assert_eq!(robot.base, [1.0, 2.0, 0.0]);
    }

    #[test]
    fn rejections() {
        let t0 = Instant::now();
        let mut s = Session::new("s", SessionConfig::default());
        assert_eq!(
            s.submit(&cmd(ColorTarget::Red), t0),
            Err(Rejection::NotSpawned)
        );
        s.spawn([0.0; 3], t0).unwrap();
        assert_eq!(
            s.submit(&cmd(ColorTarget::Black), t0),
            Err(Rejection::TutorialOnly)
        );
        s.submit(&cmd(ColorTarget::Orange), t0).unwrap();
        assert_eq!(s.state().name(), "executing");
        assert_eq!(s.submit(&cmd(ColorTarget::Red), t0), Err(Rejection::Busy));
        assert_eq!(s.spawn([0.0; 3], t0).unwrap_err(), Rejection::Busy);
    }

    #[test]
    fn idle_mode_rejects() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        s.set_mode(Mode::Idle);
        assert_eq!(
            s.submit(&cmd(ColorTarget::Red), t0),
            Err(Rejection::ModeIdle)
        );
    }

    #[test]
    fn tutorial_mode_allows_black() {
        let t0 = Instant::now();
        let config = SessionConfig {
            tutorial_mode: true,
            ..SessionConfig::default()
        };
        let mut s = Session::new("s", config);
        s.spawn([0.0; 3], t0).unwrap();
        assert!(s.submit(&cmd(ColorTarget::Black), t0).is_ok());
    }

    #[test]
    fn tick_while_ready_is_noop() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        assert!(s.tick(t0 + Duration::from_secs(1)).is_empty());
    }

    #[test]
    fn ticks_emit_every_waypoint_once_in_order() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        let accepted = s.submit(&cmd(ColorTarget::Orange), t0).unwrap();
        let mut emitted = Vec::new();
        let mut completed = 0;
        let mut k = 0u64;
        while s.is_executing() {
            // irregular ticks, including a 25 ms stall
            k += if k % 7 == 3 { 25 } else { 10 };
            let out = s.tick(t0 + Duration::from_millis(k));
            completed += usize::from(out.completed.is_some());
            emitted.extend(out.due.iter().map(|d| d.index));
        }
        assert_eq!(emitted, (0..accepted.waypoints).collect::<Vec<_>>());
        assert_eq!(completed, 1);
        let SessionState::Ready(robot) = s.state() else {
            panic!()
        };
        let goal = s.config().targets.position(ColorTarget::Orange).unwrap();
        assert!((robot.ee().position - goal).norm() < 1e-3);
    }

    #[test]
    fn stall_catches_up_without_skipping() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        s.submit(&cmd(ColorTarget::Green), t0).unwrap();
        assert_eq!(s.tick(t0).due.len(), 1);
        assert_eq!(s.tick(t0 + Duration::from_millis(10)).due.len(), 1);
        let out = s.tick(t0 + Duration::from_millis(35));
        assert_eq!(
            out.due.iter().map(|d| d.index).collect::<Vec<_>>(),
            vec![2, 3]
        );
    }

    #[test]
    fn wire_time_counts_from_spawn() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        let start = t0 + Duration::from_secs(2);
        s.submit(&cmd(ColorTarget::Blue), start).unwrap();
        let out = s.tick(start + Duration::from_millis(10));
        assert!((out.due[0].wire_t - 2.0).abs() < 1e-9);
        assert!((out.due[1].wire_t - 2.01).abs() < 1e-9);
    }

    #[test]
    fn ee_tracks_q_during_execution() {
        let t0 = Instant::now();
        let mut s = spawned(t0);
        s.submit(&cmd(ColorTarget::Yellow), t0).unwrap();
        s.tick(t0 + Duration::from_millis(500));
        let robot = s.state().robot().unwrap();
        let fk = forward_kinematics(robot.q(), &KinematicParams::panda()).unwrap();
        assert_eq!(robot.ee(), &fk);
    }
}
