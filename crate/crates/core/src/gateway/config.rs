//! Gateway configuration file (JSON). Every field is optional.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::gate::WakewordConfig;
use crate::llm::{EndpointConfig, WireFormat};
use crate::osc::DEFAULT_MTU;
use crate::pipeline::{ColorTarget, CommandQueue, PipelinePolicy, UncertainPolicy};
use crate::robot::{IkOptions, JointConfig, KinematicParams, PlanOptions, TargetTable, Q_HOME};
use crate::session::SessionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub max_revalidations: u32,
    pub llm_timeout_ms: u64,
    pub uncertain_policy: UncertainPolicy,
    pub queue_depth: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            max_revalidations: 1,
            llm_timeout_ms: 3000,
            uncertain_policy: UncertainPolicy::Discard,
            queue_depth: CommandQueue::<()>::DEFAULT_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoints: Vec<EndpointConfig>,
    pub probe_interval_ms: u64,
    pub wire: WireFormat,
    /// Serve validation from built-in keyword stubs instead of `endpoints`.
    pub stub: bool,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            endpoints: vec![
                EndpointConfig::new("http://127.0.0.1:8080"),
                EndpointConfig::new("http://127.0.0.1:8081"),
            ],
            probe_interval_ms: 30_000,
            wire: WireFormat::default(),
            stub: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscSection {
    pub dest: SocketAddr,
    pub mtu: usize,
}

impl Default for OscSection {
    fn default() -> Self {
        Self {
            dest: "127.0.0.1:9000".parse().unwrap(),
            mtu: DEFAULT_MTU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MirrorSection {
    pub tick_ms: u64,
}

impl Default for MirrorSection {
    fn default() -> Self {
        Self { tick_ms: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub params_path: Option<PathBuf>,
    pub home_q: JointConfig,
    /// Overrides for individual color targets, base frame meters.
    pub targets: BTreeMap<ColorTarget, [f64; 3]>,
    pub plan: PlanOptions,
    pub ik: Option<IkOptions>,
}

impl Default for RobotSection {
    fn default() -> Self {
        Self {
            params_path: None,
            home_q: Q_HOME,
            targets: BTreeMap::new(),
            plan: PlanOptions::default(),
            ik: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListenSection {
    pub ingest: SocketAddr,
    pub http: SocketAddr,
}

impl Default for ListenSection {
    fn default() -> Self {
        Self {
            ingest: "127.0.0.1:7070".parse().unwrap(),
            http: "127.0.0.1:7071".parse().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsSection {
    pub ring_size: usize,
}

impl Default for EventsSection {
    fn default() -> Self {
        Self { ring_size: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub wakeword: WakewordConfig,
    pub pipeline: PipelineSection,
    pub llm: LlmSection,
    pub osc: OscSection,
    pub mirror: MirrorSection,
    pub robot: RobotSection,
    pub tutorial_mode: bool,
    pub listen: ListenSection,
    pub events: EventsSection,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parses, fills defaults and validates.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::invalid(
                if path == "." { String::new() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.wakeword.validate()?;
        if self.pipeline.queue_depth == 0 {
            return Err(ConfigError::invalid(
                "pipeline.queue_depth",
                "must be positive",
            ));
        }
        if self.pipeline.llm_timeout_ms == 0 {
            return Err(ConfigError::invalid(
                "pipeline.llm_timeout_ms",
                "must be positive",
            ));
        }
        if self.mirror.tick_ms == 0 {
            return Err(ConfigError::invalid("mirror.tick_ms", "must be positive"));
        }
        if self.events.ring_size == 0 {
            return Err(ConfigError::invalid("events.ring_size", "must be positive"));
        }
        if !self.llm.stub && self.llm.endpoints.is_empty() {
            return Err(ConfigError::invalid(
                "llm.endpoints",
                "at least one endpoint required",
            ));
        }
        for (i, e) in self.llm.endpoints.iter().enumerate() {
            reqwest::Url::parse(&e.url()).map_err(|err| {
                ConfigError::invalid(format!("llm.endpoints[{i}].base_url"), err.to_string())
            })?;
        }
        self.check_ports()?;
        let params = self.kinematic_params()?;
        let bad = params.violations(&self.robot.home_q);
        if !bad.is_empty() {
            return Err(ConfigError::invalid(
                "robot.home_q",
                format!("joints {bad:?} outside limits"),
            ));
        }
        Ok(())
    }

    /// Local ports in use must differ. Port 0 (ephemeral) is exempt.
    fn check_ports(&self) -> Result<(), ConfigError> {
        let mut ports: Vec<(String, u16)> = vec![
            ("listen.ingest".into(), self.listen.ingest.port()),
            ("listen.http".into(), self.listen.http.port()),
        ];
        if !self.llm.stub {
            for (i, e) in self.llm.endpoints.iter().enumerate() {
                let Ok(url) = reqwest::Url::parse(&e.url()) else {
                    continue;
                };
                let local = matches!(url.host_str(), Some("localhost" | "127.0.0.1" | "[::1]"));
                if let (true, Some(port)) = (local, url.port_or_known_default()) {
                    ports.push((format!("llm.endpoints[{i}]"), port));
                }
            }
        }
        if self.osc.dest.ip().is_loopback() {
            ports.push(("osc.dest".into(), self.osc.dest.port()));
        }
        for (i, (name, port)) in ports.iter().enumerate() {
            if *port == 0 {
                continue;
            }
            if let Some((other, _)) = ports[..i].iter().find(|(_, p)| p == port) {
                return Err(ConfigError::invalid(
                    name.clone(),
                    format!("port {port} duplicates {other}"),
                ));
            }
        }
        Ok(())
    }

    pub fn kinematic_params(&self) -> Result<KinematicParams, ConfigError> {
        match &self.robot.params_path {
            Some(path) => KinematicParams::load(path),
            None => Ok(KinematicParams::panda()),
        }
    }

    pub fn policy(&self) -> PipelinePolicy {
        PipelinePolicy {
            max_revalidations: self.pipeline.max_revalidations,
            llm_timeout: Duration::from_millis(self.pipeline.llm_timeout_ms),
            uncertain_after_exhaustion: self.pipeline.uncertain_policy,
        }
    }

    /// Kinematics, targets and planning options for sessions.
    pub fn session_config(&self) -> Result<SessionConfig, ConfigError> {
        let params = self.kinematic_params()?;
        let home = self.robot.home_q;
        let mut targets = TargetTable::default_for(&params, &home);
        for (color, p) in &self.robot.targets {
            targets.set(*color, Vector3::new(p[0], p[1], p[2]));
        }
        let mut plan = self.robot.plan;
        if let Some(ik) = self.robot.ik {
            plan.ik = ik;
        }
        targets
            .validate(&params, &home)
            .map_err(|e| ConfigError::invalid("robot.targets", e.to_string()))?;
        Ok(SessionConfig {
            params: params.into(),
            home,
            targets: targets.into(),
            plan,
            tutorial_mode: self.tutorial_mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = GatewayConfig::from_json("{}").unwrap();
        assert_eq!(c, GatewayConfig::default());
        assert_eq!(c.wakeword.wakeword, "blueberry");
        assert_eq!(c.wakeword.sensitivity, 0.9);
        assert_eq!(c.llm.endpoints.len(), 2);
        assert_eq!(c.llm.endpoints[0].url(), "http://127.0.0.1:8080/completion");
        assert_eq!(c.llm.endpoints[1].url(), "http://127.0.0.1:8081/completion");
        assert_eq!(c.osc.dest, "127.0.0.1:9000".parse().unwrap());
        assert_eq!(c.policy(), PipelinePolicy::default());
        assert!(!c.tutorial_mode);
    }

    #[test]
    fn sensitivity_out_of_range() {
        let err = GatewayConfig::from_json(r#"{"wakeword":{"sensitivity":1.5}}"#).unwrap_err();
        assert_eq!(err.to_string(), "wakeword.sensitivity out of [0,1]");
    }

    #[test]
    fn duplicate_ports() {
        let err = GatewayConfig::from_json(
            r#"{"listen":{"ingest":"127.0.0.1:7000","http":"127.0.0.1:7000"}}"#,
        )
        .unwrap_err();
        assert_eq!(err.path(), "listen.http");
        let err = GatewayConfig::from_json(r#"{"osc":{"dest":"127.0.0.1:8080"}}"#).unwrap_err();
        assert_eq!(err.path(), "osc.dest");
        // a remote robot may share a port number with local listeners
        assert!(GatewayConfig::from_json(r#"{"osc":{"dest":"10.0.0.2:7070"}}"#).is_ok());
    }

    #[test]
    fn parse_errors_carry_field_path() {
        let err =
            GatewayConfig::from_json(r#"{"pipeline":{"max_revalidations":"x"}}"#).unwrap_err();
        assert_eq!(err.path(), "pipeline.max_revalidations");
        let err =
            GatewayConfig::from_json(r#"{"robot":{"targets":{"teal":[0,0,0]}}}"#).unwrap_err();
        assert!(err.path().starts_with("robot.targets"));
        let err = GatewayConfig::from_json(r#"{"bogus":1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn endpoints_required_unless_stub() {
        assert!(GatewayConfig::from_json(r#"{"llm":{"endpoints":[]}}"#).is_err());
        assert!(GatewayConfig::from_json(r#"{"llm":{"endpoints":[],"stub":true}}"#).is_ok());
    }

    #[test]
    fn home_outside_limits() {
        let err = GatewayConfig::from_json(r#"{"robot":{"home_q":[0,0,0,0,0,0,0]}}"#).unwrap_err();
        assert_eq!(err.path(), "robot.home_q");
    }

    #[test]
    fn full_schema_parses() {
        let c = GatewayConfig::from_json(
            r#"{
                "wakeword": {"word": "blueberry", "sensitivity": 0.8},
                "pipeline": {"max_revalidations": 2, "llm_timeout_ms": 500, "uncertain_policy": "treat_invalid"},
                "llm": {"endpoints": [{"base_url": "http://127.0.0.1:9500", "path": "/v1/complete"}]},
                "osc": {"dest": "127.0.0.1:9100", "mtu": 1200},
                "robot": {"targets": {"red": [0.4, -0.2, 0.15]}},
                "tutorial_mode": true
            }"#,
        )
        .unwrap();
        assert_eq!(
            c.policy().uncertain_after_exhaustion,
            UncertainPolicy::TreatInvalid
        );
        assert_eq!(
            c.llm.endpoints[0].url(),
            "http://127.0.0.1:9500/v1/complete"
        );
        let session = c.session_config().unwrap();
        assert_eq!(
            session.targets.position(ColorTarget::Red).unwrap(),
            Vector3::new(0.4, -0.2, 0.15)
        );
        assert!(session.tutorial_mode);
    }
}
