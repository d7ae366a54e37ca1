//! Causal IIR filters realized as cascades of second-order sections.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f / fs);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (1.0 + z1 * self.a[0] + z2 * self.a[1])
    }
}

/// Series of biquads with independent state per channel (transposed direct form II).
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    state: Vec<Vec<[f64; 2]>>,
}

impl SosFilter {
    pub fn new(sections: Vec<Biquad>, channels: usize) -> Self {
        let state = vec![vec![[0.0; 2]; sections.len()]; channels];
        Self { sections, state }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn channels(&self) -> usize {
        self.state.len()
    }

    pub fn reset(&mut self) {
        for ch in &mut self.state {
            ch.iter_mut().for_each(|s| *s = [0.0; 2]);
        }
    }

    pub fn process_sample(&mut self, channel: usize, x: f64) -> f64 {
        let mut v = x;
        for (sec, st) in self.sections.iter().zip(self.state[channel].iter_mut()) {
            let y = sec.b[0] * v + st[0];
            st[0] = sec.b[1] * v - sec.a[0] * y + st[1];
            st[1] = sec.b[2] * v - sec.a[1] * y;
            v = y;
        }
        v
    }

    /// Filters one multichannel frame in place.
    pub fn process_frame(&mut self, frame: &mut [f64]) {
        for (c, x) in frame.iter_mut().enumerate() {
            *x = self.process_sample(c, *x);
        }
    }

    /// Filters a whole single-channel signal from a fresh state.
    pub fn filter_signal(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
        let mut f = Self::new(sections.to_vec(), 1);
        x.iter().map(|&v| f.process_sample(0, v)).collect()
    }

    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        cascade_response(&self.sections, f, fs)
    }
}

pub fn cascade_response(sections: &[Biquad], f: f64, fs: f64) -> Complex64 {
    sections
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(f, fs))
}

/// Second-order notch (bilinear-transform design) at `f0` with quality `q`.
pub fn notch(f0: f64, q: f64, fs: f64) -> Result<Biquad> {
    if !(f0 > 0.0 && f0 < fs / 2.0 && q > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "notch f0 = {f0}, q = {q}, fs = {fs}"
        )));
    }
    let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let c = w0.cos();
    let a0 = 1.0 + alpha;
    Ok(Biquad {
        b: [1.0 / a0, -2.0 * c / a0, 1.0 / a0],
        a: [-2.0 * c / a0, (1.0 - alpha) / a0],
    })
}

/// Butterworth band-pass from an analog prototype of order `order`, mapped
/// low-pass to band-pass and discretized by the bilinear transform with the
/// band edges prewarped. Yields `order` sections, unit gain at the centre.
pub fn butterworth_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Result<Vec<Biquad>> {
    if order == 0 || !(0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "band-pass order {order}, band {f_lo}..{f_hi} Hz at fs {fs}"
        )));
    }
    use std::f64::consts::PI;
    let w_lo = (PI * f_lo / fs).tan();
    let w_hi = (PI * f_hi / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let mut upper = Vec::new();
    let mut real = Vec::new();
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let disc = (p * p * bw * bw - 4.0 * w0_sq).sqrt();
        for s in [(p * bw + disc) * 0.5, (p * bw - disc) * 0.5] {
            let z = (1.0 + s) / (1.0 - s);
            if z.im > 1e-14 {
                upper.push(z);
            } else if z.im.abs() <= 1e-14 {
                real.push(z.re);
            }
        }
    }
    real.sort_by(|a, b| a.total_cmp(b));
    let mut sections: Vec<Biquad> = upper
        .iter()
        .map(|z| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-2.0 * z.re, z.norm_sqr()],
        })
        .collect();
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-(r1 + r2), r1 * r2],
        });
    }
    let fc = fs / PI * w0_sq.sqrt().atan();
    let g = cascade_response(&sections, fc, fs).norm();
    if let Some(first) = sections.first_mut() {
        first.b.iter_mut().for_each(|b| *b /= g);
    }
    Ok(sections)
}

/// Squared magnitude of the ideal Butterworth band-pass after the bilinear
/// mapping: `1 / (1 + W^(2n))`, `W = (w^2 - w0^2) / (w B)`, `w = tan(pi f / fs)`.
pub fn butterworth_bandpass_gain_sq(order: usize, f_lo: f64, f_hi: f64, fs: f64, f: f64) -> f64 {
    use std::f64::consts::PI;
    let w_lo = (PI * f_lo / fs).tan();
    let w_hi = (PI * f_hi / fs).tan();
    let w = (PI * f / fs).tan();
    let big_w = (w * w - w_lo * w_hi) / (w * (w_hi - w_lo));
    1.0 / (1.0 + big_w.powi(2 * order as i32))
}
