//! Edge-side messaging: the measurement store, the send-now-or-wait
//! decision, and the outbound XML message.

pub mod store;
pub mod transmit;
pub mod xml;

pub use store::{file_stem, IngestReport, MeasurementStore, Rejection, TransmitState};
pub use transmit::{decide_transmission, prepare_message, Decision, Schedule};
pub use xml::{build_message_xml, parse_message_xml, OutboundMessage, Urgency};
