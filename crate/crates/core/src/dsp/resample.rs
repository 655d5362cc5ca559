//! Polyphase windowed-sinc resampling with a Kaiser window.

/// Filter taps evaluated per output sample.
pub const TAPS: usize = 32;
/// Cutoff as a fraction of the lower of the two rates.
pub const CUTOFF_FRACTION: f64 = 0.45;
/// Kaiser shape parameter (about 70 dB stopband for this length).
pub const KAISER_BETA: f64 = 6.8;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Precomputed polyphase filter for a fixed rational rate change.
pub struct Resampler {
    up: u64,
    down: u64,
    /// `up` phases of `TAPS` coefficients each.
    table: Vec<f32>,
}

impl Resampler {
    pub fn new(in_rate: u32, out_rate: u32) -> Self {
        let g = gcd(u64::from(in_rate), u64::from(out_rate));
        let up = u64::from(out_rate) / g;
        let down = u64::from(in_rate) / g;
        // Normalized cutoff in cycles per input sample.
        let fc = CUTOFF_FRACTION * f64::from(in_rate.min(out_rate)) / f64::from(in_rate);
        let half = (TAPS / 2) as f64;
        let i0b = bessel_i0(KAISER_BETA);
        let mut table = Vec::with_capacity(up as usize * TAPS);
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let start = table.len();
            for j in 0..TAPS {
                // tap j sits at input index floor(t) - (TAPS/2 - 1) + j
                let tau = frac + (TAPS / 2 - 1) as f64 - j as f64;
                let r = (tau / half).clamp(-1.0, 1.0);
                let win = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0b;
                table.push((2.0 * fc * sinc(2.0 * fc * tau) * win) as f32);
            }
            // Unity DC gain per phase.
            let sum: f64 = table[start..].iter().map(|&v| f64::from(v)).sum();
            for v in &mut table[start..] {
                *v = (f64::from(*v) / sum) as f32;
            }
        }
        Resampler { up, down, table }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u64 * self.up).div_ceil(self.down)) as usize
    }

    pub fn process(&self, input: &[f32]) -> Vec<f32> {
        if self.up == self.down {
            return input.to_vec();
        }
        let n_out = self.output_len(input.len());
        let n_in = input.len() as i64;
        let mut out = Vec::with_capacity(n_out);
        for n in 0..n_out as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = (pos % self.up) as usize;
            let coeffs = &self.table[phase * TAPS..(phase + 1) * TAPS];
            let first = base - (TAPS as i64 / 2 - 1);
            let mut acc = 0.0f64;
            for (j, &c) in coeffs.iter().enumerate() {
                let k = first + j as i64;
                if (0..n_in).contains(&k) {
                    acc += f64::from(c) * f64::from(input[k as usize]);
                }
            }
            out.push(acc as f32);
        }
        out
    }
}

pub fn resample(input: &[f32], in_rate: u32, out_rate: u32) -> Vec<f32> {
    if in_rate == out_rate {
        return input.to_vec();
    }
    Resampler::new(in_rate, out_rate).process(input)
}
