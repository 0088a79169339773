//! Seeded synthetic scenes: a few smooth material spectra mixed by abundance
//! maps with both soft blobs and hard rectangular edges.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{CubeDims, HsiCube};

pub const SCENE_MATERIALS: usize = 4;

struct Material {
    base: f64,
    harmonics: [(f64, f64); 3],
    blob: (f64, f64, f64),
    rect: (f64, f64, f64, f64),
}

impl Material {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let harmonics = [(); 3].map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU)));
        let blob = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.15..0.4));
        let (u0, v0) = (rng.gen_range(0.0..0.7), rng.gen_range(0.0..0.7));
        let rect = (u0, u0 + rng.gen_range(0.15..0.3), v0, v0 + rng.gen_range(0.15..0.3));
        Self {
            base: rng.gen_range(0.25..0.7),
            harmonics,
            blob,
            rect,
        }
    }

    /// Reflectance at normalized wavelength `t`; stays within `base ± 0.18`.
    fn spectrum(&self, t: f64) -> f64 {
        let s: f64 = self
            .harmonics
            .iter()
            .enumerate()
            .map(|(j, (a, phi))| a * (TAU * (j + 1) as f64 * t + phi).sin() / (j + 1) as f64)
            .sum();
        self.base + 0.18 * s / (1.0 + 0.5 + 1.0 / 3.0)
    }

    fn abundance(&self, u: f64, v: f64) -> f64 {
        let (cu, cv, r) = self.blob;
        let d2 = (u - cu).powi(2) + (v - cv).powi(2);
        let (u0, u1, v0, v1) = self.rect;
        let inside = (u0..u1).contains(&u) && (v0..v1).contains(&v);
        0.05 + (-d2 / (2.0 * r * r)).exp() + if inside { 2.0 } else { 0.0 }
    }
}

/// Deterministic `bands × width × height` scene with values in `(0.05, 0.95)`.
pub fn synthetic_scene(bands: usize, width: usize, height: usize, seed: u64) -> Result<HsiCube> {
    if bands == 0 || width == 0 || height == 0 {
        return Err(Error::InvalidParameter("scene dims must be nonzero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let materials: Vec<Material> = (0..SCENE_MATERIALS).map(|_| Material::sample(&mut rng)).collect();
    let (fu, fv) = (rng.gen_range(5.0..11.0), rng.gen_range(5.0..11.0));

    let t_of = |b: usize| if bands == 1 { 0.5 } else { b as f64 / (bands - 1) as f64 };
    let spectra: Vec<Vec<f64>> = materials
        .iter()
        .map(|m| (0..bands).map(|b| m.spectrum(t_of(b))).collect())
        .collect();

    let n = width * height;
    let mut weights = vec![[0.0; SCENE_MATERIALS]; n];
    let mut texture = vec![0.0; n];
    for u in 0..width {
        for v in 0..height {
            let (uu, vv) = ((u as f64 + 0.5) / width as f64, (v as f64 + 0.5) / height as f64);
            let k = u * height + v;
            let mut a = [0.0; SCENE_MATERIALS];
            for (slot, m) in a.iter_mut().zip(&materials) {
                *slot = m.abundance(uu, vv);
            }
            let s: f64 = a.iter().sum();
            weights[k] = a.map(|x| x / s);
            texture[k] = 1.0 + 0.05 * (TAU * (fu * uu + fv * vv)).sin();
        }
    }

    HsiCube::from_fn(CubeDims::new(bands, width, height), |b, u, v| {
        let k = u * height + v;
        let mix: f64 = weights[k].iter().zip(&spectra).map(|(w, s)| w * s[b]).sum();
        mix * texture[k]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synthetic_scene(8, 16, 12, 3).unwrap();
        let b = synthetic_scene(8, 16, 12, 3).unwrap();
        let c = synthetic_scene(8, 16, 12, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn values_in_open_band() {
        for seed in 0..20 {
            let z = synthetic_scene(31, 32, 32, seed).unwrap();
            assert!(z.data().iter().all(|&v| v > 0.05 && v < 0.95), "seed {seed}");
        }
    }

    #[test]
    fn scene_has_spatial_and_spectral_structure() {
        let z = synthetic_scene(16, 32, 32, 0).unwrap();
        let band = z.band(5);
        let spread = band.iter().cloned().fold(f64::MIN, f64::max) - band.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 0.05);
        let spectrum: Vec<f64> = (0..16).map(|b| z.get(b, 10, 10)).collect();
        let s_spread = spectrum.iter().cloned().fold(f64::MIN, f64::max)
            - spectrum.iter().cloned().fold(f64::MAX, f64::min);
        assert!(s_spread > 0.01);
    }

    #[test]
    fn rejects_empty() {
        assert!(synthetic_scene(0, 4, 4, 0).is_err());
    }
}
