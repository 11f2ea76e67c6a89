//! Control packets exchanged by the routing protocol.

use crate::traffic::DataPacket;
use crate::NodeId;

/// Route request, flooded during discovery. `(src, broadcast_id)`
/// identifies one flood; `first_hop` stays unset until the first relay
/// stamps its own id.
#[derive(Debug, Clone, Copy)]
pub struct Rreq {
    pub src: NodeId,
    pub src_seqno: u64,
    pub broadcast_id: u64,
    pub dest: NodeId,
    pub dest_seqno_known: Option<u64>,
    pub hopcount: u32,
    pub first_hop: Option<NodeId>,
}

/// Route reply, unicast from the destination back along one reverse
/// path. `reply_path_id` names that path by its first hop, which every
/// node on the path recorded identically when the flood passed through.
#[derive(Debug, Clone, Copy)]
pub struct Rrep {
    pub dest: NodeId,
    pub dest_seqno: u64,
    pub src: NodeId,
    pub hopcount: u32,
    pub reply_path_id: NodeId,
}

/// Route error, broadcast when a node loses its last path to one or more
/// destinations. Never empty.
#[derive(Debug, Clone)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, u64)>,
}

/// Link-failure warning: `weak_node` received a route request below the
/// prediction threshold and warns the node it heard it from.
#[derive(Debug, Clone, Copy)]
pub struct Wrng {
    pub weak_node: NodeId,
    pub rreq_src: NodeId,
    pub broadcast_id: u64,
}

#[derive(Debug, Clone)]
pub enum ControlPacket {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Wrng(Wrng),
}

impl ControlPacket {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlPacket::Rreq(_) => "rreq",
            ControlPacket::Rrep(_) => "rrep",
            ControlPacket::Rerr(_) => "rerr",
            ControlPacket::Wrng(_) => "wrng",
        }
    }

    /// Nominal wire size, used only for transmission-delay accounting.
    pub fn size_bytes(&self) -> usize {
        match self {
            ControlPacket::Rreq(_) => 48,
            ControlPacket::Rrep(_) => 40,
            ControlPacket::Rerr(r) => 12 + 8 * r.unreachable.len(),
            ControlPacket::Wrng(_) => 16,
        }
    }
}

/// Anything a radio can carry.
#[derive(Debug, Clone)]
pub enum Packet {
    Control(ControlPacket),
    Data(DataPacket),
}

impl Packet {
    pub fn size_bytes(&self) -> usize {
        match self {
            Packet::Control(c) => c.size_bytes(),
            Packet::Data(d) => d.size_bytes,
        }
    }
}
