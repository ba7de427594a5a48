//! Decentralized multi-intent parsing and agent routing.
//!
//! An utterance is expanded into a tree of parse states (every way of
//! splitting it at conjunctions, connective pairs, punctuation, or
//! coordinated noun runs). Each candidate fragment is broadcast to a
//! registry of independent agents, which report how confident they are that
//! they can handle it. Node scores aggregate the best per-fragment
//! confidence, a max backup picks the optimal parse, and the pipeline routes
//! each fragment to its winning agent.
//!
//! ```
//! use splitroute_core::{agents::{Registry, StubAgent}, pipeline::{self, PipelineConfig}};
//!
//! let mut registry = Registry::new();
//! registry.register(StubAgent::new("flight-agent", "flight")
//!     .with_score("list available flights", 0.97)).unwrap();
//! registry.register(StubAgent::new("meal-agent", "meal")
//!     .with_score("show me meal options for my next flight", 0.92)).unwrap();
//!
//! let routing = pipeline::route(
//!     "List available flights and show me meal options for my next flight",
//!     &registry,
//!     &PipelineConfig::default(),
//! ).unwrap();
//! assert_eq!(routing.plan.entries.len(), 2);
//! assert!((routing.plan.provenance.score - 0.945).abs() < 1e-9);
//! ```

pub mod agents;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod splitter;
pub mod synthetic;
pub mod tree;

pub use agents::{Agent, AgentDescriptor, Binding, EvaluationResult, IntentModel, Registry};
pub use error::{Error, Result};
pub use eval::{normalize_for_comparison, DatasetInstance, MetricsReport, OutcomeCategory};
pub use pipeline::{ExecutionPlan, PipelineConfig};
pub use splitter::{SplitConfig, SplitKind, SplitPoint, Token, TokenKind, Utterance};
pub use tree::{ParseNode, ParseOutcome, ParseTree, ScoringMode};
