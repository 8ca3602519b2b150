//! Stage seeds. Each stage uses `global + constant` (wrapping), so any stage
//! can be rerun on its own and still see the same random stream.

pub const TRAIN_SCENARIOS: u64 = 0x1000;
pub const TEST_SCENARIOS: u64 = 0x2000;
pub const NETWORK_INIT: u64 = 0x3000;
pub const TRAINING: u64 = 0x4000;

pub fn derive(global: u64, stage: u64) -> u64 {
    global.wrapping_add(stage)
}
