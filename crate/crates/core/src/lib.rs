//! Voice-commanded robot puppeteering.
//!
//! Transcripts pass a wakeword gate, are validated by string match or by a
//! round-robin pool of LLM endpoints, and become move commands for a
//! virtual 7-DOF arm whose trajectory is mirrored over OSC/UDP to a second
//! robot.

pub mod error;
pub mod gate;
pub mod gateway;
pub mod llm;
pub mod osc;
pub mod pipeline;
pub mod robot;
pub mod session;
pub mod sim;
