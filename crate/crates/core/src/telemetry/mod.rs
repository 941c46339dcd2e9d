//! Wire format and the simulated radio link.

pub mod channel;
pub mod codec;

pub use channel::{
    propagate, receive_at, summarize, transmit_schedule, ChannelModel, Outcome, ReceptionRecord, Station,
    StationSummary, TxEvent,
};
pub use codec::{decode, encode, quantized, CodecError, TelemetryPacket, PACKET_LEN};
