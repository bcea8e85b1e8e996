use alloc::vec::Vec;

/// Inclusive time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// One candidate combination at a tree level: the block at position `2n`
/// with the block at `2n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSlot {
    /// Position of the pair within its level.
    pub node: usize,
    pub left: Span,
    pub right: Span,
    /// False when the right block lies entirely in the padding; the left
    /// block (if any) then passes through unchanged.
    pub active: bool,
}

/// Level-synchronous pairing plan over `T + 1` leaves padded to a power of
/// two. At level `l`, adjacent blocks of width `2^l` are paired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombineSchedule {
    pub horizon: usize,
    pub padded_size: usize,
    pub levels: Vec<Vec<PairSlot>>,
}

impl CombineSchedule {
    /// Tree depth, `ceil(log2(T + 1))`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn active_combines(&self) -> usize {
        self.levels.iter().flatten().filter(|p| p.active).count()
    }
}

pub fn build_schedule(horizon: usize) -> CombineSchedule {
    let leaves = horizon + 1;
    let padded_size = leaves.next_power_of_two();
    let depth = padded_size.trailing_zeros() as usize;
    let mut levels = Vec::with_capacity(depth);
    for level in 0..depth {
        let width = 1usize << level;
        let pairs = padded_size >> (level + 1);
        let mut slots = Vec::with_capacity(pairs);
        for node in 0..pairs {
            let ls = 2 * node * width;
            let rs = ls + width;
            if ls > horizon {
                break;
            }
            slots.push(PairSlot {
                node,
                left: Span { start: ls, end: (rs - 1).min(horizon) },
                right: Span { start: rs, end: (rs + width - 1).min(horizon) },
                active: rs <= horizon,
            });
        }
        levels.push(slots);
    }
    CombineSchedule { horizon, padded_size, levels }
}
