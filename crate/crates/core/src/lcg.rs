//! The 64-bit linear congruential generator used for every seeded check, so runs
//! in other languages can reproduce the same random fields.

pub const MULTIPLIER: u64 = 6364136223846793005;
pub const INCREMENT: u64 = 1442695040888963407;

#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Lcg64 {
        Lcg64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        self.state
    }

    /// Uniform on `[0, 1)` from the top 53 bits of the next state.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
