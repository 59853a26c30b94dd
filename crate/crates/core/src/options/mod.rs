//! The learnable Desires policy: an option graph of small node policies.

mod desires;
pub mod features;
pub mod gating;
pub mod graph;
pub mod path;
pub mod policy;
pub mod traverse;

pub use desires::{Desires, Label};
pub use gating::{gate, GatingSchedule};
pub use graph::{InputKind, MappingConstants, Node, NodeKind, OptionGraphDef, ParamSetDef};
pub use path::{anchor_lane, lateral_target, Commitment, LateralChoice, Maneuver, OptionPath, SpeedChoice};
pub use policy::PolicyParams;
pub use traverse::{desires_from_traversal, trace_grad, traverse, Chooser, NodeDecision, TraversalTrace, TraverseContext};
