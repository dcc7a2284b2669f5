//! Human-in-the-loop seed labeling: session state, its event log and the
//! HTTP API the annotation UI talks to.

pub mod events;
pub mod http;
pub mod session;

pub use http::{router, serve, AppState, RegistryError};
pub use session::{
    AnnotationSession, PropagationSummary, QueueItem, QueueStrategy, SampleStatus, SessionConfig, SessionError,
    SessionStats,
};
