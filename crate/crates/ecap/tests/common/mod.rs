//! Shared helpers for the integration suites: a tabulated version of the
//! quadrature score oracle for bulk evaluation, and small utilities.

use ecap::simulation::{true_score_numeric, PriorSpec};

/// Dense tabulation of the numerically exact score `(g*, g*')` on the flipped
/// scale, linearly interpolated. Built from the pointwise quadrature oracle;
/// node spacing is far below the score's variation scale, so interpolation
/// error is negligible next to the tolerances asserted in tests.
pub struct ScoreTable {
    lo: f64,
    step: f64,
    g: Vec<f64>,
    gp: Vec<f64>,
}

impl ScoreTable {
    pub fn build(prior: &PriorSpec, gamma: f64, nodes: usize) -> Self {
        let lo = 1e-4;
        let hi = 0.5;
        let step = (hi - lo) / (nodes - 1) as f64;
        let mut g = Vec::with_capacity(nodes);
        let mut gp = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let v = lo + step * i as f64;
            let (gi, gpi) = true_score_numeric(prior, gamma, v).expect("score oracle");
            g.push(gi);
            gp.push(gpi);
        }
        Self { lo, step, g, gp }
    }

    /// Interpolated `(g*, g*')` at a flipped value in `[0, 0.5]`.
    pub fn eval(&self, v: f64) -> (f64, f64) {
        let t = ((v - self.lo) / self.step).clamp(0.0, (self.g.len() - 1) as f64);
        let i = (t as usize).min(self.g.len() - 2);
        let w = t - i as f64;
        (
            self.g[i] * (1.0 - w) + self.g[i + 1] * w,
            self.gp[i] * (1.0 - w) + self.gp[i + 1] * w,
        )
    }

    /// Score at an arbitrary estimate, using the odd reflection around 0.5.
    #[allow(dead_code)] // used by the properties suite only
    pub fn eval_any(&self, x: f64) -> (f64, f64) {
        if x <= 0.5 {
            self.eval(x)
        } else {
            let (g, gp) = self.eval(1.0 - x);
            (-g, gp)
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
