//! Butterworth bandpass design as cascaded second-order sections.
//!
//! Analog lowpass prototype → lowpass-to-bandpass transform → bilinear
//! transform with prewarped band edges → conjugate pole pairs grouped into
//! biquads. A prototype of order `n` yields a digital filter of order `2n`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One second-order section, `a0` normalised to 1.
///
/// `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

/// A designed IIR bandpass filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub fs: f64,
    pub band: (f64, f64),
    pub prototype_order: usize,
}

impl BiquadCascade {
    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    /// Digital filter order (two per section).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }
}

/// Designs a Butterworth bandpass for `f_lo < f < f_hi` at sampling rate `fs`.
///
/// `prototype_order` is the order of the analog lowpass prototype; the
/// resulting digital filter has twice that order.
pub fn design_butterworth_bandpass(
    prototype_order: usize,
    f_lo: f64,
    f_hi: f64,
    fs: f64,
) -> Result<BiquadCascade> {
    if prototype_order == 0 {
        return Err(Error::Domain("filter order must be positive".into()));
    }
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(Error::Domain(format!(
            "band ({f_lo}, {f_hi}) Hz invalid for fs = {fs} Hz; need 0 < lo < hi < fs/2"
        )));
    }
    let n = prototype_order;

    // analog prototype poles on the unit circle, left half plane
    let proto: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    // prewarp band edges
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (w_lo, w_hi) = (warp(f_lo), warp(f_hi));
    let bw = w_hi - w_lo;
    let w0 = (w_lo * w_hi).sqrt();

    // lowpass -> bandpass: each prototype pole splits into two
    let mut analog_poles = Vec::with_capacity(2 * n);
    for p in &proto {
        let half = p * (bw / 2.0);
        let root = (half * half - w0 * w0).sqrt();
        analog_poles.push(half + root);
        analog_poles.push(half - root);
    }
    // n zeros at s = 0 (and n at infinity); gain bw^n

    // bilinear transform
    let k2 = 2.0 * fs;
    let digital: Vec<Complex64> = analog_poles.iter().map(|&p| (k2 + p) / (k2 - p)).collect();
    // s = 0 zeros map to z = 1, zeros at infinity to z = -1
    let mut gain = Complex64::new(bw.powi(n as i32), 0.0);
    gain *= Complex64::new(k2.powi(n as i32), 0.0);
    for &p in &analog_poles {
        gain /= k2 - p;
    }
    let gain = gain.re;

    let pairs = conjugate_pairs(&digital)?;
    let per_section = gain.abs().powf(1.0 / pairs.len() as f64);
    let mut sections: Vec<Biquad> = pairs
        .iter()
        .map(|(p, q)| {
            let a1 = -(p + q).re;
            let a2 = (p * q).re;
            Biquad {
                b0: per_section,
                b1: 0.0,
                b2: -per_section,
                a1,
                a2,
            }
        })
        .collect();
    if gain < 0.0 {
        let s = &mut sections[0];
        s.b0 = -s.b0;
        s.b2 = -s.b2;
    }
    Ok(BiquadCascade {
        sections,
        fs,
        band: (f_lo, f_hi),
        prototype_order,
    })
}

/// Groups poles into conjugate (or real) pairs, ordered by increasing radius.
fn conjugate_pairs(poles: &[Complex64]) -> Result<Vec<(Complex64, Complex64)>> {
    const TOL: f64 = 1e-12;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > TOL).collect();
    let mut real: Vec<Complex64> = poles
        .iter()
        .filter(|p| p.im.abs() <= TOL)
        .map(|p| Complex64::new(p.re, 0.0))
        .collect();
    let lower = poles.iter().filter(|p| p.im < -TOL).count();
    if lower != upper.len() || real.len() % 2 != 0 {
        return Err(Error::Numeric("unpaired filter poles".into()));
    }
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut pairs: Vec<(Complex64, Complex64)> =
        real.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    pairs.extend(upper.into_iter().map(|p| (p, p.conj())));
    pairs.sort_by(|a, b| {
        a.0.norm()
            .max(a.1.norm())
            .total_cmp(&b.0.norm().max(b.1.norm()))
    });
    Ok(pairs)
}
