//! Rectangular observation windows and point patterns.

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(DppError::InvalidInput("window corners must have the same positive dimension".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a)) {
            return Err(DppError::InvalidInput(format!("window needs upper > lower componentwise: {lower:?} {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, side]^d`.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![side; dim])
    }

    /// Parses `"x0,y0,x1,y1"` (lower corner then upper corner).
    pub fn parse(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| DppError::InvalidInput(format!("bad window '{s}': {e}")))?;
        if v.is_empty() || v.len() % 2 != 0 {
            return Err(DppError::InvalidInput(format!("window '{s}' needs 2d comma-separated numbers")));
        }
        let d = v.len() / 2;
        Self::new(v[..d].to_vec(), v[d..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sides(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).collect()
    }

    pub fn min_side(&self) -> f64 {
        self.sides().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| v >= a && v <= b)
    }

    /// `D^{⊖r}`: points at distance at least `r` from the complement; `None` when empty.
    pub fn erode(&self, r: f64) -> Option<Window> {
        let lower: Vec<f64> = self.lower.iter().map(|a| a + r).collect();
        let upper: Vec<f64> = self.upper.iter().map(|b| b - r).collect();
        Window::new(lower, upper).ok()
    }

    /// `|D ∩ (D + z)| = Π max(0, L_i - |z_i|)`.
    pub fn translation_overlap(&self, z: &[f64]) -> f64 {
        self.sides().iter().zip(z).map(|(l, zi)| (l - zi.abs()).max(0.0)).product()
    }

    /// The window scaled by `s` about its lower corner.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let upper = self.lower.iter().zip(self.sides()).map(|(a, l)| a + s * l).collect();
        Self::new(self.lower.clone(), upper)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub model: Option<ModelSpec>,
    pub method: String,
    /// Fourier modes kept on the periodisation torus.
    pub modes_used: Option<usize>,
    pub torus_sides: Option<Vec<f64>>,
}

/// A finite configuration in a window; coordinates stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub window: Window,
    pub coords: Vec<f64>,
    pub provenance: Provenance,
}

impl PointPattern {
    pub fn new(window: Window, coords: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let d = window.dim();
        if coords.len() % d != 0 {
            return Err(DppError::InvalidInput("coordinate count is not a multiple of the dimension".into()));
        }
        let p = Self { window, coords, provenance };
        if let Some(i) = (0..p.len()).find(|&i| !p.window.contains(p.point(i))) {
            return Err(DppError::InvalidInput(format!("point {i} {:?} lies outside the window", p.point(i))));
        }
        Ok(p)
    }

    pub fn from_points(window: Window, points: &[Vec<f64>]) -> Result<Self> {
        if points.iter().any(|p| p.len() != window.dim()) {
            return Err(DppError::InvalidInput("point dimension differs from window dimension".into()));
        }
        Self::new(window, points.concat(), Provenance::default())
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    /// Number of points inside a sub-window.
    pub fn count_in(&self, w: &Window) -> usize {
        self.points().filter(|p| w.contains(p)).count()
    }

    /// Restriction to a sub-window (which becomes the pattern's window).
    pub fn restrict(&self, w: &Window) -> Result<Self> {
        let coords = self.points().filter(|p| w.contains(p)).flatten().copied().collect();
        Self::new(w.clone(), coords, self.provenance.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_basics() {
        let w = Window::parse("0,0,2,3").unwrap();
        assert_eq!(w.volume(), 6.0);
        assert_eq!(w.translation_overlap(&[0.5, 1.0]), 3.0);
        assert_eq!(w.translation_overlap(&[0.0, 0.0]), 6.0);
        assert_eq!(w.translation_overlap(&[2.0, 0.0]), 0.0);
        assert!(w.erode(1.0).is_none());
        let e = w.erode(0.5).unwrap();
        assert_eq!(e.sides(), vec![1.0, 2.0]);
        assert!(Window::parse("0,0,1").is_err());
        assert!(Window::parse("1,0,0,1").is_err());
    }

    #[test]
    fn translation_overlap_matches_grid_count() {
        // Brute force: fraction of grid cells x in D with x + z in D.
        let w = Window::parse("0,0,2,3").unwrap();
        let z = [0.5, 1.0];
        let n = 400;
        let mut hits = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x = [(i as f64 + 0.5) * 2.0 / n as f64, (j as f64 + 0.5) * 3.0 / n as f64];
                if w.contains(&[x[0] + z[0], x[1] + z[1]]) {
                    hits += 1;
                }
            }
        }
        let est = hits as f64 / (n * n) as f64 * 6.0;
        assert!((est - 3.0).abs() < 0.02);
    }

    #[test]
    fn pattern_rejects_outside_points() {
        let w = Window::cube(2, 1.0).unwrap();
        assert!(PointPattern::from_points(w.clone(), &[vec![0.5, 0.5], vec![1.5, 0.2]]).is_err());
        let p = PointPattern::from_points(w, &[vec![0.5, 0.5], vec![0.1, 0.2]]).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.point(1), &[0.1, 0.2]);
    }
}
