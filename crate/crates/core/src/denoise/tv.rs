//! Total-variation denoising by Chambolle's dual projection.
//!
//! Solves the ROF problem `min_u TV(u) + ‖u − f‖² / (2λ)` through the dual
//! field `p`, updated as
//!
//! ```text
//! p ← (p + τ ∇(div p − f/λ)) / (1 + τ |∇(div p − f/λ)|)
//! u = f − λ div p
//! ```
//!
//! with forward-difference gradient, the matching backward-difference
//! divergence, and zero flux across the border.

use crate::datasets::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvParams {
    /// Fidelity weight λ; larger values smooth more.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the largest per-pixel change of `u` drops below this.
    pub tol: f64,
    /// Dual step size τ, at most 1/4.
    pub tau: f64,
}

impl Default for TvParams {
    fn default() -> Self {
        TvParams {
            lambda: 0.12,
            max_iter: 200,
            tol: 1e-5,
            tau: 0.248,
        }
    }
}

impl TvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "TV lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("TV max_iter must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "TV tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 0.25) {
            return Err(Error::InvalidArgument(format!(
                "TV tau must lie in (0, 0.25], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Forward differences `(∂x u, ∂y u)` with zero difference on the last column/row.
pub fn gradient(u: &[f64], height: usize, width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; u.len()];
    let mut gy = vec![0.0; u.len()];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                gx[i] = u[i + 1] - u[i];
            }
            if r + 1 < height {
                gy[i] = u[i + width] - u[i];
            }
        }
    }
    (gx, gy)
}

/// Backward-difference divergence, the negative adjoint of [`gradient`].
pub fn divergence(px: &[f64], py: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mut div = vec![0.0; px.len()];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let dx = match c {
                0 => px[i],
                _ if c == width - 1 => -px[i - 1],
                _ => px[i] - px[i - 1],
            };
            let dy = match r {
                0 => py[i],
                _ if r == height - 1 => -py[i - width],
                _ => py[i] - py[i - width],
            };
            // a single column or row has no interior differences
            div[i] = if width == 1 { 0.0 } else { dx } + if height == 1 { 0.0 } else { dy };
        }
    }
    div
}

/// Isotropic total variation `Σ |∇u|`.
pub fn total_variation(u: &[f64], height: usize, width: usize) -> f64 {
    let (gx, gy) = gradient(u, height, width);
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum()
}

/// ROF objective `TV(u) + ‖u − f‖² / (2λ)`.
pub fn rof_energy(u: &Image, f: &Image, lambda: f64) -> f64 {
    let fidelity: f64 = u.pixels().iter().zip(f.pixels()).map(|(a, b)| (a - b) * (a - b)).sum();
    total_variation(u.pixels(), u.height(), u.width()) + fidelity / (2.0 * lambda)
}

/// Iteration state of the dual projection solver.
pub struct ChambolleTv<'a> {
    f: &'a Image,
    params: TvParams,
    px: Vec<f64>,
    py: Vec<f64>,
    u: Vec<f64>,
    iterations: usize,
}

impl<'a> ChambolleTv<'a> {
    pub fn new(f: &'a Image, params: TvParams) -> Result<Self> {
        params.validate()?;
        let n = f.pixels().len();
        Ok(ChambolleTv {
            f,
            params,
            px: vec![0.0; n],
            py: vec![0.0; n],
            u: f.pixels().to_vec(),
            iterations: 0,
        })
    }

    /// One dual update. Returns the largest absolute change of `u`.
    pub fn step(&mut self) -> f64 {
        let (h, w) = (self.f.height(), self.f.width());
        let lambda = self.params.lambda;
        let tau = self.params.tau;
        let div = divergence(&self.px, &self.py, h, w);
        let target: Vec<f64> = div.iter().zip(self.f.pixels()).map(|(d, f)| d - f / lambda).collect();
        let (gx, gy) = gradient(&target, h, w);
        for i in 0..self.px.len() {
            let norm = 1.0 + tau * gx[i].hypot(gy[i]);
            self.px[i] = (self.px[i] + tau * gx[i]) / norm;
            self.py[i] = (self.py[i] + tau * gy[i]) / norm;
        }
        let div = divergence(&self.px, &self.py, h, w);
        let mut change: f64 = 0.0;
        for ((u, f), d) in self.u.iter_mut().zip(self.f.pixels()).zip(&div) {
            let next = f - lambda * d;
            change = change.max((next - *u).abs());
            *u = next;
        }
        self.iterations += 1;
        change
    }

    /// Largest pointwise magnitude `|p|` of the dual field.
    pub fn dual_norm_max(&self) -> f64 {
        self.px
            .iter()
            .zip(&self.py)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Current primal estimate, before clipping.
    pub fn primal(&self) -> &[f64] {
        &self.u
    }

    /// Runs until the change falls below `tol` or `max_iter` is reached.
    pub fn run(mut self) -> Result<Image> {
        while self.iterations < self.params.max_iter {
            if self.step() < self.params.tol {
                break;
            }
        }
        Image::from_clipped(self.f.height(), self.f.width(), self.u)
    }
}

pub fn tv_denoise(image: &Image, params: &TvParams) -> Result<Image> {
    ChambolleTv::new(image, *params)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_divergence_adjoint() {
        let (h, w) = (5, 7);
        let u: Vec<f64> = (0..h * w).map(|i| ((i * 13) % 17) as f64 / 17.0).collect();
        let px: Vec<f64> = (0..h * w).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let py: Vec<f64> = (0..h * w).map(|i| ((i * 3) % 11) as f64 / 3.0).collect();
        let (gx, gy) = gradient(&u, h, w);
        let lhs: f64 = gx.iter().zip(&px).chain(gy.iter().zip(&py)).map(|(a, b)| a * b).sum();
        let div = divergence(&px, &py, h, w);
        let rhs: f64 = -u.iter().zip(&div).map(|(a, b)| a * b).sum::<f64>();
        // the divergence ignores p on the last column/row, where the gradient is zero
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = Image::filled(12, 9, 0.37);
        assert_eq!(tv_denoise(&img, &TvParams::default()).unwrap(), img);
    }

    #[test]
    fn tiny_lambda_keeps_input() {
        let img = Image::from_fn(16, 16, |r, c| ((r * 5 + c * 3) % 7) as f64 / 7.0);
        let params = TvParams {
            lambda: 1e-6,
            ..TvParams::default()
        };
        let out = tv_denoise(&img, &params).unwrap();
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let img = Image::filled(4, 4, 0.5);
        for p in [
            TvParams {
                lambda: 0.0,
                ..TvParams::default()
            },
            TvParams {
                tau: 0.3,
                ..TvParams::default()
            },
            TvParams {
                tol: 0.0,
                ..TvParams::default()
            },
            TvParams {
                max_iter: 0,
                ..TvParams::default()
            },
        ] {
            assert!(matches!(tv_denoise(&img, &p), Err(Error::InvalidArgument(_))));
        }
    }
}
