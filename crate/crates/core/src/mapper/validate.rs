use std::collections::BTreeSet;

use super::build::{dma_demand, fifo_buffers};
use super::{MappingPlan, ShimDirection, WorkAssignment};
use crate::error::{Violation, ViolationKind};
use crate::fabric::{validate_link, validate_slot, Endpoint, FabricSpec, LinkKind};

/// Every structural problem with `plan` on `fabric`: slots, links, FIFO
/// wiring, shim capacity and the work partition.
pub fn validate_plan(plan: &MappingPlan, fabric: &FabricSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for slot in &plan.slots {
        if !seen.insert(slot.position) {
            out.push(Violation::new(
                ViolationKind::DuplicateCore,
                format!("two slots at {}", slot.position),
            ));
        }
        let mut effective = slot.clone();
        let (inbound, outbound) = dma_demand(plan, slot.position);
        effective.dma_uses = slot.dma_uses.max(inbound).max(outbound);
        let derived: usize = fifo_buffers(plan, slot.position)
            .iter()
            .map(|b| b.footprint())
            .sum();
        if derived > effective.memory_bytes() {
            effective.buffers = fifo_buffers(plan, slot.position);
        }
        out.extend(validate_slot(fabric, &effective));
    }
    check_fifos(plan, fabric, &mut out);
    check_shims(plan, fabric, &mut out);
    out.extend(check_partition(&plan.work_division));
    out
}

fn check_fifos(plan: &MappingPlan, fabric: &FabricSpec, out: &mut Vec<Violation>) {
    let endpoint_exists = |e: &Endpoint| match e {
        Endpoint::Core(p) => plan.slot(*p).is_some(),
        Endpoint::Shim { .. } => true,
    };
    let mut names = BTreeSet::new();
    for f in &plan.fifos {
        if !names.insert(f.name.as_str()) {
            out.push(Violation::new(
                ViolationKind::FifoEndpoint,
                format!("duplicate fifo name {}", f.name),
            ));
        }
        if f.depth == 0
            || f.acquire_consume == 0
            || f.acquire_consume > f.capacity()
            || f.acquire_produce > f.capacity()
        {
            out.push(Violation::new(
                ViolationKind::FifoDepth,
                format!(
                    "fifo {}: depth {} (capacity {}) with acquire {}/{}",
                    f.name,
                    f.depth,
                    f.capacity(),
                    f.acquire_consume,
                    f.acquire_produce
                ),
            ));
        }
        for e in std::iter::once(&f.producer).chain(&f.consumers) {
            if !endpoint_exists(e) {
                out.push(Violation::new(
                    ViolationKind::FifoEndpoint,
                    format!("fifo {} endpoint {e} is not a placed core", f.name),
                ));
            }
        }
        if f.consumers.len() > 1 && f.link != LinkKind::StreamBroadcast {
            out.push(Violation::new(
                ViolationKind::FifoLink,
                format!(
                    "fifo {} has {} consumers over {:?}",
                    f.name,
                    f.consumers.len(),
                    f.link
                ),
            ));
        }
        let is_stream = matches!(f.link, LinkKind::Stream | LinkKind::StreamBroadcast);
        if f.streams == 0
            || (is_stream && f.streams > fabric.streams_per_direction)
            || (!is_stream && f.streams != 1)
        {
            out.push(Violation::new(
                ViolationKind::StreamWidth,
                format!(
                    "fifo {} uses {} streams over {:?}",
                    f.name, f.streams, f.link
                ),
            ));
        }
        let links: Vec<_> = plan.links.iter().filter(|l| l.fifo == f.name).collect();
        match links.as_slice() {
            [l] if l.kind == f.link && l.src == f.producer && l.dsts == f.consumers => {
                out.extend(validate_link(fabric, l.kind, l.src, &l.dsts));
            }
            _ => out.push(Violation::new(
                ViolationKind::FifoLink,
                format!(
                    "fifo {} needs exactly one matching link, found {}",
                    f.name,
                    links.len()
                ),
            )),
        }
    }
    for l in &plan.links {
        if plan.fifo(&l.fifo).is_none() {
            out.push(Violation::new(
                ViolationKind::FifoLink,
                format!("link for unknown fifo {}", l.fifo),
            ));
        }
    }
}

fn check_shims(plan: &MappingPlan, fabric: &FabricSpec, out: &mut Vec<Violation>) {
    let mut shims = BTreeSet::new();
    for a in &plan.shim_assignments {
        shims.insert(a.shim);
        let channels = match a.direction {
            ShimDirection::Read => fabric.shim_read_channels,
            ShimDirection::Write => fabric.shim_write_channels,
        };
        if a.shim >= fabric.shim_count || a.channel >= channels {
            out.push(Violation::new(
                ViolationKind::ShimOvercommit,
                format!(
                    "fifo {} uses shim {} channel {}, which does not exist",
                    a.fifo, a.shim, a.channel
                ),
            ));
        }
        let matches = plan.fifo(&a.fifo).is_some_and(|f| {
            let end = match a.direction {
                ShimDirection::Read => f.shim_source(),
                ShimDirection::Write => f.shim_sink(),
            };
            end == Some((a.shim, a.channel))
        });
        if !matches {
            out.push(Violation::new(
                ViolationKind::FifoEndpoint,
                format!("shim assignment for {} does not match its fifo", a.fifo),
            ));
        }
    }
    if shims.len() > fabric.shim_count {
        out.push(Violation::new(
            ViolationKind::ShimOvercommit,
            format!(
                "plan uses {} shims, fabric has {}",
                shims.len(),
                fabric.shim_count
            ),
        ));
    }
    for f in &plan.fifos {
        let shim_ends = f.shim_source().is_some() as usize
            + f.consumers
                .iter()
                .filter(|c| matches!(c, Endpoint::Shim { .. }))
                .count();
        let assigned = plan
            .shim_assignments
            .iter()
            .filter(|a| a.fifo == f.name)
            .count();
        if shim_ends != assigned {
            out.push(Violation::new(
                ViolationKind::FifoEndpoint,
                format!(
                    "fifo {} has {shim_ends} shim ends but {assigned} assignments",
                    f.name
                ),
            ));
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Checks that the assignments own every (plane, row) pair exactly once.
/// Residue classes repeat with the lcm of their moduli, so one period is
/// enough.
pub fn check_partition(work: &[WorkAssignment]) -> Vec<Violation> {
    let mut out = Vec::new();
    if work.is_empty() {
        out.push(Violation::new(ViolationKind::WorkGap, "no work assigned"));
        return out;
    }
    if let Some(w) = work
        .iter()
        .find(|w| w.planes.modulus == 0 || w.rows.modulus == 0 || w.cores.is_empty())
    {
        out.push(Violation::new(
            ViolationKind::WorkGap,
            format!("malformed assignment {w:?}"),
        ));
        return out;
    }
    let plane_period = work.iter().fold(1, |acc, w| lcm(acc, w.planes.modulus));
    let row_period = work.iter().fold(1, |acc, w| lcm(acc, w.rows.modulus));
    if plane_period.saturating_mul(row_period) > 1 << 20 {
        out.push(Violation::new(
            ViolationKind::WorkGap,
            "work division period too large to check",
        ));
        return out;
    }
    for d in 0..plane_period {
        for r in 0..row_period {
            let owners: Vec<_> = work
                .iter()
                .filter(|w| w.planes.contains(d) && w.rows.contains(r))
                .map(|w| w.worker())
                .collect();
            match owners.len() {
                1 => {}
                0 => out.push(Violation::new(
                    ViolationKind::WorkGap,
                    format!("planes ≡ {d} (mod {plane_period}), rows ≡ {r} (mod {row_period}) unowned"),
                )),
                _ => out.push(Violation::new(
                    ViolationKind::WorkOverlap,
                    format!(
                        "planes ≡ {d} (mod {plane_period}), rows ≡ {r} (mod {row_period}) owned by {owners:?}"
                    ),
                )),
            }
        }
    }
    out
}
