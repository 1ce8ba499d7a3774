//! Urgency-based web resource delivery toolkit.
//!
//! The crate models the urgency/incremental priority signaling of RFC 9218,
//! maps Chromium resource priorities onto urgency levels under three
//! strategies, and replays website resource manifests through a deterministic
//! multiplexed-link simulator to compare delivery schedules by proxy page
//! metrics.

pub mod eps;
pub mod manifest;
pub mod mapping;
pub mod netsim;
pub mod report;
pub mod scheduler;

pub use eps::{PriorityParams, UrgencyLevel};
pub use manifest::{load_manifest, ResourceDescriptor, WebsiteManifest};
pub use mapping::{ChromiumPriority, MappingStrategy, ResourceType};
pub use netsim::{DeliveryStrategy, DeliveryTrace, LinkModel, ProxyMetrics};
pub use scheduler::{Scheduler, SchedulerMode, StreamId};
