//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream_id, substream_id, k)`,
//! computed with Philox4x64-10. One Philox block yields four 64-bit words,
//! which become four standard normals through two Box-Muller pairs.

const M0: u64 = 0xD2E7_470E_E14C_6C93;
const M1: u64 = 0xCA5A_8263_9512_1157;
const W0: u64 = 0x9E37_79B9_7F4A_7C15;
const W1: u64 = 0xBB67_AE85_84CA_A73B;

const TWO_PI: f64 = 2.0 * core::f64::consts::PI;
const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0;

#[inline]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// Philox4x64 with 10 rounds.
pub fn philox4x64(mut ctr: [u64; 4], mut key: [u64; 2]) -> [u64; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// Address of an independent random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    pub substream_id: u64,
}

impl RngStream {
    pub const fn new(seed: u64, stream_id: u64, substream_id: u64) -> Self {
        RngStream { seed, stream_id, substream_id }
    }

    /// Same seed and stream, different substream.
    pub const fn substream(self, substream_id: u64) -> Self {
        RngStream { substream_id, ..self }
    }

    /// Raw block `b` of the stream.
    pub fn block(&self, b: u64) -> [u64; 4] {
        philox4x64([b, self.substream_id, self.stream_id, 0], [self.seed, 0])
    }

    /// Four standard normals: variates `4b .. 4b+4`.
    pub fn normal_block(&self, b: u64) -> [f64; 4] {
        let w = self.block(b);
        let (z0, z1) = box_muller(w[0], w[1]);
        let (z2, z3) = box_muller(w[2], w[3]);
        [z0, z1, z2, z3]
    }

    /// The `k`-th uniform variate in `[0, 1)`.
    pub fn uniform(&self, k: u64) -> f64 {
        let w = self.block(k / 4);
        (w[(k % 4) as usize] >> 11) as f64 * INV_2_53
    }

    /// Sequential reader over the normals of this stream, starting at 0.
    pub fn normals(&self) -> Normals {
        Normals { stream: *self, next: 0, cache: [0.0; 4] }
    }
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    // u1 in (0, 1] keeps the logarithm finite.
    let u1 = ((a >> 11) + 1) as f64 * INV_2_53;
    let u2 = (b >> 11) as f64 * INV_2_53;
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let (s, c) = libm::sincos(TWO_PI * u2);
    (r * c, r * s)
}

/// The `k`-th standard normal variate of `stream`.
pub fn gaussian_draw(stream: &RngStream, k: u64) -> f64 {
    stream.normal_block(k / 4)[(k % 4) as usize]
}

/// Iterator that caches one Philox block at a time.
#[derive(Debug, Clone)]
pub struct Normals {
    stream: RngStream,
    next: u64,
    cache: [f64; 4],
}

impl Normals {
    /// Index of the variate the next call returns.
    pub fn position(&self) -> u64 {
        self.next
    }
}

impl Iterator for Normals {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        let lane = (self.next % 4) as usize;
        if lane == 0 {
            self.cache = self.stream.normal_block(self.next / 4);
        }
        self.next += 1;
        Some(self.cache[lane])
    }
}
