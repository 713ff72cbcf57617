//! The byte stream every random decision is drawn from.
//!
//! In record mode bytes come from a seeded RNG (after an optional fixed
//! prefix) and are appended to the buffer. In replay mode they come from a
//! fixed buffer, so a recorded buffer reproduces the same value exactly.
//! Shrinking works on buffers: a shortlex-smaller buffer that still fails
//! is a simpler failure, because every draw maps zero bytes to its simplest
//! outcome (the range origin, `false`, "stop").

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Upper bound on the bytes one test case may consume in record mode.
pub const MAX_BUFFER: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ChoiceError {
    #[error("choice sequence exhausted")]
    Overrun,
}

#[derive(Debug, Clone)]
enum Source {
    Record(Box<ChaCha8Rng>),
    Replay,
}

/// A recorded or replayed sequence of choices.
#[derive(Debug, Clone)]
pub struct ChoiceSequence {
    buf: Vec<u8>,
    pos: usize,
    source: Source,
    blocks: Vec<(usize, usize)>,
    inclusion: f64,
}

impl ChoiceSequence {
    /// Records fresh choices from `seed`.
    pub fn record(seed: u64) -> Self {
        Self::record_with_prefix(Vec::new(), seed)
    }

    /// Replays `prefix` and then continues with fresh choices from `seed`.
    pub fn record_with_prefix(prefix: Vec<u8>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Swarm testing: each case gets its own probability of including
        // optional parts, so some cases are sparse and others dense.
        let inclusion = [0.1, 0.5, 0.9][rng.gen_range(0..3)];
        ChoiceSequence {
            buf: prefix,
            pos: 0,
            source: Source::Record(Box::new(rng)),
            blocks: Vec::new(),
            inclusion,
        }
    }

    /// Replays a fixed buffer. Running past its end is an error.
    pub fn replay(bytes: &[u8]) -> Self {
        ChoiceSequence {
            buf: bytes.to_vec(),
            pos: 0,
            source: Source::Replay,
            blocks: Vec::new(),
            inclusion: 0.5,
        }
    }

    pub fn is_recording(&self) -> bool {
        matches!(self.source, Source::Record(_))
    }

    /// Bytes consumed so far.
    pub fn consumed(&self) -> &[u8] {
        &self.buf[..self.pos]
    }

    pub fn into_bytes(mut self) -> Vec<u8> {
        self.buf.truncate(self.pos);
        self.buf
    }

    /// `(start, len)` of every draw so far.
    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// Probability used for optional inclusions when recording.
    pub fn inclusion_probability(&self) -> f64 {
        self.inclusion
    }

    /// Takes `n` bytes. When recording past the prefix, `make` supplies them.
    fn take(&mut self, n: usize, make: impl FnOnce(&mut ChaCha8Rng) -> Vec<u8>) -> Result<&[u8], ChoiceError> {
        let start = self.pos;
        if self.pos + n > self.buf.len() {
            let at_end = start == self.buf.len();
            let missing = self.pos + n - self.buf.len();
            let fresh = match &mut self.source {
                Source::Record(rng) if at_end => make(rng),
                Source::Record(rng) => {
                    // Prefix ends inside this block: pad with random bytes.
                    let mut v = vec![0u8; missing];
                    rng.fill(&mut v[..]);
                    v
                }
                Source::Replay => return Err(ChoiceError::Overrun),
            };
            if self.buf.len() + fresh.len() > MAX_BUFFER {
                return Err(ChoiceError::Overrun);
            }
            self.buf.extend_from_slice(&fresh[..missing.min(fresh.len())]);
        }
        self.pos += n;
        self.blocks.push((start, n));
        Ok(&self.buf[start..start + n])
    }

    /// Draws `n` raw bytes.
    pub fn draw_bytes(&mut self, n: usize) -> Result<Vec<u8>, ChoiceError> {
        self.take(n, |rng| {
            let mut v = vec![0u8; n];
            rng.fill(&mut v[..]);
            v
        })
        .map(|b| b.to_vec())
    }

    /// A boolean that is true with probability `p` when recording.
    pub fn draw_bool(&mut self, p: f64) -> Result<bool, ChoiceError> {
        let p = p.clamp(0.0, 1.0);
        let b = self.take(1, |rng| {
            vec![if rng.gen_bool(p) { rng.gen_range(1..=255) } else { 0 }]
        })?;
        Ok(b[0] != 0)
    }

    /// Continue flag for variable-length collections.
    pub fn more(&mut self, p: f64) -> Result<bool, ChoiceError> {
        self.draw_bool(p)
    }

    /// Index in `0..n`; `n` must be positive.
    pub fn draw_index(&mut self, n: usize) -> Result<usize, ChoiceError> {
        if n <= 1 {
            return Ok(0);
        }
        let v = self.draw_integer(Some(0), Some(n as i128 - 1))?;
        Ok(v as usize)
    }

    /// Index in `0..n`, uniform when recording. Zero bytes still give 0.
    pub fn draw_uniform_index(&mut self, n: usize) -> Result<usize, ChoiceError> {
        if n <= 1 {
            return Ok(0);
        }
        let span = n as u128 - 1;
        let width = byte_width(span);
        let b = self.take(width, |rng| rng.gen_range(0..=span).to_be_bytes()[16 - width..].to_vec())?;
        let raw = decode(b);
        Ok((if raw > span { raw % (span + 1) } else { raw }) as usize)
    }

    /// Uniform float in `[0, 1)`.
    pub fn draw_unit(&mut self) -> Result<f64, ChoiceError> {
        let b = self.take(7, |rng| {
            let x: u64 = rng.gen::<u64>() >> 8;
            x.to_be_bytes()[1..].to_vec()
        })?;
        let mut full = [0u8; 8];
        full[1..].copy_from_slice(b);
        let x = u64::from_be_bytes(full) >> 3;
        Ok(x as f64 / (1u64 << 53) as f64)
    }

    /// An integer in the given range; unbounded sides are limited to
    /// 63 bits of magnitude from the origin. Bounds must not cross.
    pub fn draw_integer(&mut self, lo: Option<i128>, hi: Option<i128>) -> Result<i128, ChoiceError> {
        const WIDE: u128 = (1u128 << 63) - 1;
        match (lo, hi) {
            (Some(l), Some(h)) if l <= 0 && h >= 0 && l != h => self.draw_signed(l, h),
            (None, None) => self.draw_signed(-(WIDE as i128), WIDE as i128),
            (Some(l), Some(h)) => {
                let span = (h - l).max(0) as u128;
                Ok(l + self.draw_offset(span)? as i128)
            }
            (Some(l), None) => Ok(l + self.draw_offset(WIDE)? as i128),
            (None, Some(h)) => Ok(h - self.draw_offset(WIDE)? as i128),
        }
    }

    /// Offset in `0..=span` from the origin.
    fn draw_offset(&mut self, span: u128) -> Result<u128, ChoiceError> {
        if span == 0 {
            return Ok(0);
        }
        let width = byte_width(span);
        let b = self.take(width, |rng| {
            let v = biased(rng, span);
            v.to_be_bytes()[16 - width..].to_vec()
        })?;
        let raw = decode(b);
        Ok(if raw > span { raw % (span + 1) } else { raw })
    }

    /// Sign and magnitude, so the simplest value is zero.
    fn draw_signed(&mut self, lo: i128, hi: i128) -> Result<i128, ChoiceError> {
        let max_mag = hi.max(-lo) as u128;
        let width = byte_width(max_mag.saturating_mul(2).saturating_add(1));
        let b = self.take(width, |rng| {
            let neg = rng.gen_bool(0.5);
            let limit = if neg { (-lo) as u128 } else { hi as u128 };
            let mag = biased(rng, limit);
            let v = (mag << 1) | neg as u128;
            v.to_be_bytes()[16 - width..].to_vec()
        })?;
        let raw = decode(b);
        let neg = raw & 1 == 1;
        let mag = raw >> 1;
        Ok(if neg {
            let limit = (-lo) as u128;
            if limit == 0 {
                (mag % (hi as u128 + 1)) as i128
            } else {
                -((if mag > limit { mag % (limit + 1) } else { mag }) as i128)
            }
        } else {
            let limit = hi as u128;
            if limit == 0 {
                -((mag % ((-lo) as u128 + 1)) as i128)
            } else {
                (if mag > limit { mag % (limit + 1) } else { mag }) as i128
            }
        })
    }
}

fn byte_width(span: u128) -> usize {
    let bits = 128 - span.leading_zeros() as usize;
    bits.div_ceil(8).max(1)
}

fn decode(b: &[u8]) -> u128 {
    b.iter().fold(0u128, |acc, &x| (acc << 8) | x as u128)
}

/// A value in `0..=span` biased towards small values and the extremes.
fn biased(rng: &mut ChaCha8Rng, span: u128) -> u128 {
    if rng.gen_ratio(1, 8) {
        let edges = [0, 1.min(span), span.saturating_sub(1), span];
        return edges[rng.gen_range(0..edges.len())];
    }
    let max_bits = 128 - span.leading_zeros();
    let bits = rng.gen_range(0..=max_bits);
    let v: u128 = if bits == 0 { 0 } else { rng.gen::<u128>() >> (128 - bits) };
    if v > span {
        v % (span + 1)
    } else {
        v
    }
}
