//! Link transfer timing and shim channel arbitration.

use std::collections::BTreeSet;

use crate::fabric::{link_bandwidth_bits, Endpoint, FabricSpec, LinkKind};

/// Cycles one element occupies a link and, for shim-fed or shim-drained
/// links, the shim channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferTiming {
    pub link_cycles: u64,
    pub shim_cycles: u64,
    pub duration: u64,
}

pub fn transfer_timing(
    fabric: &FabricSpec,
    kind: LinkKind,
    streams: u32,
    bits: u64,
    via_shim: bool,
) -> TransferTiming {
    let lanes = if matches!(kind, LinkKind::Stream | LinkKind::StreamBroadcast) {
        streams.max(1)
    } else {
        1
    };
    let width = u64::from(link_bandwidth_bits(fabric, kind)) * u64::from(lanes);
    let link_cycles = bits.div_ceil(width.max(1));
    let shim_cycles = if via_shim {
        bits.div_ceil(u64::from(fabric.shim_channel_bits.max(1)))
    } else {
        0
    };
    TransferTiming {
        link_cycles,
        shim_cycles,
        duration: link_cycles.max(shim_cycles),
    }
}

/// One consumer's copy of a broadcast element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub consumer: Endpoint,
    pub at: u64,
    /// Bits written by the consumer's DMA.
    pub dma_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastOutcome {
    /// Cycles the link is busy; paid once whatever the fan-out.
    pub link_busy: u64,
    pub deliveries: Vec<Delivery>,
}

/// Sends one element of `bits` from `start` to every consumer at once.
pub fn broadcast_transfer(
    fabric: &FabricSpec,
    kind: LinkKind,
    streams: u32,
    bits: u64,
    consumers: &[Endpoint],
    start: u64,
    via_shim: bool,
) -> BroadcastOutcome {
    let t = transfer_timing(fabric, kind, streams, bits, via_shim);
    BroadcastOutcome {
        link_busy: t.duration,
        deliveries: consumers
            .iter()
            .map(|&consumer| Delivery {
                consumer,
                at: start + t.duration,
                dma_bits: bits,
            })
            .collect(),
    }
}

/// Grants one channel to one requester at a time. Waiting requesters are
/// served round-robin by id, starting after the last one served.
#[derive(Debug, Clone, Default)]
pub struct ChannelArbiter {
    owner: Option<usize>,
    last: Option<usize>,
    waiting: BTreeSet<usize>,
}

impl ChannelArbiter {
    pub fn is_busy(&self) -> bool {
        self.owner.is_some()
    }

    /// True if `who` now owns the channel; otherwise it is queued.
    pub fn request(&mut self, who: usize) -> bool {
        if self.owner.is_none() && self.waiting.is_empty() {
            self.owner = Some(who);
            self.last = Some(who);
            return true;
        }
        if self.owner != Some(who) {
            self.waiting.insert(who);
        }
        false
    }

    /// Frees the channel and hands it to the next waiter, if any.
    pub fn release(&mut self) -> Option<usize> {
        self.owner = None;
        let next = match self.last {
            Some(l) => self
                .waiting
                .range(l + 1..)
                .next()
                .or_else(|| self.waiting.iter().next()),
            None => self.waiting.iter().next(),
        }
        .copied()?;
        self.waiting.remove(&next);
        self.owner = Some(next);
        self.last = Some(next);
        Some(next)
    }
}
