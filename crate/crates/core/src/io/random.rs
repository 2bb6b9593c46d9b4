//! Seeded random I/O program: arbitrary transfers interleaved with random
//! fast-memory updates. Useful for checking that two executions of the same
//! program (for example direct and emulated) end in identical slow memory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Direction, FastMemory, IoError, IoParams, IoProgram, Round, Transfer};
use crate::memory::Word;

#[derive(Debug, Clone)]
pub struct RandomProgram {
    params: IoParams,
    slow_blocks: u64,
    rounds_left: u64,
    touches_per_round: u64,
    compute_only_prob: f64,
    rng: ChaCha8Rng,
}

impl RandomProgram {
    pub fn new(
        params: IoParams,
        slow_blocks: u64,
        rounds: u64,
        touches_per_round: u64,
        seed: u64,
    ) -> Self {
        RandomProgram {
            params,
            slow_blocks: slow_blocks.max(1),
            rounds_left: rounds,
            touches_per_round,
            compute_only_prob: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Fraction of rounds that perform no transfer.
    pub fn with_compute_only(mut self, p: f64) -> Self {
        self.compute_only_prob = p.clamp(0.0, 1.0);
        self
    }
}

impl IoProgram for RandomProgram {
    fn params(&self) -> IoParams {
        self.params
    }

    fn slow_blocks(&self) -> u64 {
        self.slow_blocks
    }

    fn initial_slow(&self) -> Vec<Word> {
        (0..self.slow_blocks * self.params.block)
            .map(|i| i * 7 + 1)
            .collect()
    }

    fn next_round(&mut self) -> Option<Round> {
        if self.rounds_left == 0 {
            return None;
        }
        self.rounds_left -= 1;
        if self.rng.gen_bool(self.compute_only_prob) {
            return Some(Round::Compute);
        }
        let direction = if self.rng.gen_bool(0.5) {
            Direction::Load
        } else {
            Direction::Store
        };
        Some(Round::Transfer(Transfer {
            direction,
            slow_block: self.rng.gen_range(0..self.slow_blocks),
            frame: self.rng.gen_range(0..self.params.frames()),
        }))
    }

    fn compute(&mut self, fast: &mut dyn FastMemory) -> Result<(), IoError> {
        let size = self.params.memory;
        for _ in 0..self.touches_per_round / 2 {
            let a = self.rng.gen_range(0..size);
            let b = self.rng.gen_range(0..size);
            let v = fast.read(a)?;
            fast.write(b, v.wrapping_mul(31).wrapping_add(a))?;
        }
        fast.work(1);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::run_io;

    #[test]
    fn deterministic_under_clone() {
        let params = IoParams::new(128, 16).unwrap();
        let p = RandomProgram::new(params, 20, 300, 6, 42).with_compute_only(0.2);
        let mut a = p.clone();
        let mut b = p;
        let init = a.initial_slow();
        let ra = run_io(&mut a, init.clone()).unwrap();
        let rb = run_io(&mut b, init).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.1.rounds, 300);
        assert!(ra.1.transfers < 300);
        assert_eq!(ra.1.work, 300);
    }
}
