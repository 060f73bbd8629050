//! Retrieval-selected cartesian impedance control, simulated at desk scale.
//!
//! The pipeline runs left to right:
//!
//! ```text
//! image ─► perception (yes/no decision tree over a VLM client)
//!       ─► retrieval  (stage 1: label → impedance scenario,
//!                      stage 2: scenario ⊕ label → gripper entry)
//!       ─► simulation (reference trajectory ─► impedance filter ─► DLS IK ─► plant)
//!       ─► metrics    (mean/max |e_z|, max |F_virt,z|)
//! ```
//!
//! Batch work (fixture evaluation, scenario sweeps, oracle sweeps, batched
//! search) goes through [`exec`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iteration otherwise.

pub mod exec;
pub mod impedance;
pub mod kinematics;
pub mod knowledgebase;
pub mod perception;
pub mod retrieval;
pub mod serde_util;
pub mod simulation;
#[cfg(feature = "http")]
pub mod transport;
pub mod vecindex;

pub use impedance::{ArmId, ImpedanceParams, ImpedanceState, VirtualForce};
pub use kinematics::{KinematicChain, Pose};
pub use knowledgebase::{GripperEntry, KnowledgeBase, ScenarioEntry};
pub use retrieval::{ControlParameters, RetrievalReport};
pub use vecindex::{EmbeddingProvider, EmbeddingVector, FlatIndex, HashingEmbedder, SearchHit};
