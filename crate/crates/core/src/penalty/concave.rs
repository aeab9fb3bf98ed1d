use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcaveKind {
    Scad,
    Mcp,
}

/// Folded-concave generator `g_λ` on `[0, ∞)`: increasing, concave,
/// `g(0) = 0` and `g'(0+) = λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcaveGenerator {
    pub kind: ConcaveKind,
    pub pen_val: f64,
    /// `a > 2` for SCAD, `γ > 1` for MCP.
    pub shape: f64,
}

impl ConcaveGenerator {
    pub fn scad(pen_val: f64, a: f64) -> Result<Self> {
        let g = Self {
            kind: ConcaveKind::Scad,
            pen_val,
            shape: a,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn mcp(pen_val: f64, gamma: f64) -> Result<Self> {
        let g = Self {
            kind: ConcaveKind::Mcp,
            pen_val,
            shape: gamma,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pen_val >= 0.0 && self.pen_val.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "penalty value must be >= 0, got {}",
                self.pen_val
            )));
        }
        let ok = match self.kind {
            ConcaveKind::Scad => self.shape > 2.0,
            ConcaveKind::Mcp => self.shape > 1.0,
        };
        if ok && self.shape.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid {:?} shape parameter {}",
                self.kind, self.shape
            )))
        }
    }

    pub fn with_pen_val(mut self, pen_val: f64) -> Self {
        self.pen_val = pen_val;
        self
    }

    /// `(a₁, b₁)` such that `x <= b₁ λ` implies `g'(x) >= a₁ λ`.
    pub fn lla_constants(&self) -> (f64, f64) {
        match self.kind {
            ConcaveKind::Scad => (1.0, 1.0),
            ConcaveKind::Mcp => (0.5, 0.5 * self.shape),
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::InvalidInput(format!("concave generator needs x >= 0, got {x}")));
        }
        Ok(self.value_unchecked(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::InvalidInput(format!("concave generator needs x >= 0, got {x}")));
        }
        Ok(self.derivative_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: f64) -> f64 {
        let lam = self.pen_val;
        let a = self.shape;
        match self.kind {
            ConcaveKind::Scad => {
                if x <= lam {
                    lam * x
                } else if x <= a * lam {
                    (2.0 * a * lam * x - x * x - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    0.5 * (a + 1.0) * lam * lam
                }
            }
            ConcaveKind::Mcp => {
                if x <= a * lam {
                    lam * x - x * x / (2.0 * a)
                } else {
                    0.5 * a * lam * lam
                }
            }
        }
    }

    pub(crate) fn derivative_unchecked(&self, x: f64) -> f64 {
        let lam = self.pen_val;
        let a = self.shape;
        match self.kind {
            ConcaveKind::Scad => {
                if x <= lam {
                    lam
                } else if x < a * lam {
                    (a * lam - x) / (a - 1.0)
                } else {
                    0.0
                }
            }
            ConcaveKind::Mcp => (lam - x / a).max(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scad_values() {
        let g = ConcaveGenerator::scad(1.0, 3.7).unwrap();
        assert_eq!(g.value(0.0).unwrap(), 0.0);
        let sat = 0.5 * 4.7;
        assert!((g.value(3.7).unwrap() - sat).abs() < 1e-12);
        assert_eq!(g.value(10.0).unwrap(), sat);
        assert_eq!(g.derivative(0.0).unwrap(), 1.0);
        assert_eq!(g.derivative(3.7).unwrap(), 0.0);
    }

    #[test]
    fn mcp_value() {
        let g = ConcaveGenerator::mcp(1.0, 3.0).unwrap();
        assert!((g.value(1.0).unwrap() - (1.0 - 1.0 / 6.0)).abs() < 1e-15);
        assert_eq!(g.value(5.0).unwrap(), 1.5);
    }

    #[test]
    fn negative_arguments_are_rejected() {
        let g = ConcaveGenerator::mcp(1.0, 3.0).unwrap();
        assert!(g.value(-1.0).is_err());
        assert!(g.derivative(-0.1).is_err());
        assert!(ConcaveGenerator::scad(1.0, 2.0).is_err());
        assert!(ConcaveGenerator::mcp(1.0, 1.0).is_err());
    }

    #[test]
    fn shape_properties_on_a_grid() {
        for g in [
            ConcaveGenerator::scad(0.7, 3.7).unwrap(),
            ConcaveGenerator::mcp(0.7, 2.5).unwrap(),
        ] {
            let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.005).collect();
            for w in xs.windows(2) {
                assert!(g.value(w[1]).unwrap() >= g.value(w[0]).unwrap());
                assert!(g.derivative(w[1]).unwrap() <= g.derivative(w[0]).unwrap());
            }
            assert_eq!(g.value(0.0).unwrap(), 0.0);
            assert_eq!(g.derivative(0.0).unwrap(), g.pen_val);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for g in [
            ConcaveGenerator::scad(0.8, 3.7).unwrap(),
            ConcaveGenerator::mcp(0.8, 3.0).unwrap(),
        ] {
            // stay away from the kinks at λ, aλ, γλ
            for x in [0.3, 1.2, 1.9, 2.5] {
                let h = 1e-6;
                let fd = (g.value(x + h).unwrap() - g.value(x - h).unwrap()) / (2.0 * h);
                let an = g.derivative(x).unwrap();
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{x}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn lla_constants_satisfy_their_defining_property() {
        for g in [
            ConcaveGenerator::scad(1.3, 3.7).unwrap(),
            ConcaveGenerator::mcp(1.3, 2.2).unwrap(),
        ] {
            let (a1, b1) = g.lla_constants();
            for i in 0..=1000 {
                let x = b1 * g.pen_val * i as f64 / 1000.0;
                assert!(g.derivative(x).unwrap() >= a1 * g.pen_val - 1e-12);
            }
        }
    }
}
