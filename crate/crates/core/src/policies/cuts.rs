//! Polyhedral lower approximations of the Bellman value functions.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::State;

/// Affine minorant `x ↦ λ·x + β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub lambda: [f64; 4],
    pub beta: f64,
}

impl Cut {
    pub const ZERO: Cut = Cut { lambda: [0.0; 4], beta: 0.0 };

    pub fn eval(&self, x: &[f64; 4]) -> f64 {
        self.lambda[0] * x[0] + self.lambda[1] * x[1] + self.lambda[2] * x[2] + self.lambda[3] * x[3] + self.beta
    }

    pub fn is_finite(&self) -> bool {
        self.beta.is_finite() && self.lambda.iter().all(|v| v.is_finite())
    }
}

/// `cuts[t]` for `t = 0..=T`; the last list encodes the terminal cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunctions {
    pub cuts: Vec<Vec<Cut>>,
}

/// The four affine pieces of `κ (max(0, b0 - b) + max(0, h0 - h))`.
pub fn terminal_cuts(x0: &State, kappa: f64) -> Vec<Cut> {
    vec![
        Cut::ZERO,
        Cut { lambda: [-kappa, 0.0, 0.0, 0.0], beta: kappa * x0.b },
        Cut { lambda: [0.0, -kappa, 0.0, 0.0], beta: kappa * x0.h },
        Cut { lambda: [-kappa, -kappa, 0.0, 0.0], beta: kappa * (x0.b + x0.h) },
    ]
}

impl ValueFunctions {
    /// A single zero cut per stage and the exact terminal cost at `T`.
    pub fn initial(horizon: usize, x0: &State, kappa: f64) -> Self {
        let mut cuts = vec![vec![Cut::ZERO]; horizon];
        cuts.push(terminal_cuts(x0, kappa));
        ValueFunctions { cuts }
    }

    pub fn horizon(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn stage(&self, t: usize) -> &[Cut] {
        &self.cuts[t]
    }

    pub fn add_cut(&mut self, t: usize, cut: Cut) {
        self.cuts[t].push(cut);
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cuts.is_empty() {
            return Err("no stages".into());
        }
        for (t, c) in self.cuts.iter().enumerate() {
            if c.is_empty() {
                return Err(format!("stage {t} has no cuts"));
            }
            if c.iter().any(|k| !k.is_finite()) {
                return Err(format!("stage {t} has a non-finite cut"));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let f = File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let f = File::open(path)?;
        let vf: ValueFunctions = serde_json::from_reader(std::io::BufReader::new(f))?;
        vf.validate().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(vf)
    }
}

/// `max_j λ_j·x + β_j` over the cuts of stage `t`.
pub fn evaluate_vf(vf: &ValueFunctions, t: usize, x: &State) -> f64 {
    max_cut(vf.stage(t), &x.to_array()).1
}

/// Index and value of the highest cut at `x`; ties keep the earliest cut.
pub fn max_cut(cuts: &[Cut], x: &[f64; 4]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, c) in cuts.iter().enumerate() {
        let v = c.eval(x);
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cut_everywhere_zero() {
        let vf = ValueFunctions { cuts: vec![vec![Cut::ZERO]] };
        assert_eq!(evaluate_vf(&vf, 0, &State::new(1.0, -2.0, 3.0, 4.0)), 0.0);
    }

    #[test]
    fn max_of_two_affine_pieces() {
        let vf = ValueFunctions {
            cuts: vec![vec![
                Cut { lambda: [1.0, 0.0, 0.0, 0.0], beta: 0.0 },
                Cut { lambda: [-1.0, 0.0, 0.0, 0.0], beta: 2.0 },
            ]],
        };
        assert_eq!(evaluate_vf(&vf, 0, &State::new(0.5, 0.0, 0.0, 0.0)), 1.5);
    }

    #[test]
    fn terminal_pieces_reproduce_penalty() {
        let x0 = State::new(2.0, 3.0, 18.0, 19.0);
        let vf = ValueFunctions::initial(2, &x0, 1.5);
        for (b, h) in [(1.0, 1.0), (2.5, 1.0), (1.0, 4.0), (3.0, 4.0)] {
            let x = State::new(b, h, 0.0, 0.0);
            let exact = crate::model::terminal_cost(&x, &x0, 1.5);
            assert!((evaluate_vf(&vf, 2, &x) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn json_layout() {
        let vf = ValueFunctions { cuts: vec![vec![Cut { lambda: [1.0, 2.0, 3.0, 4.0], beta: 5.0 }]] };
        let s = serde_json::to_string(&vf).unwrap();
        assert_eq!(s, r#"[[{"lambda":[1.0,2.0,3.0,4.0],"beta":5.0}]]"#);
        assert_eq!(serde_json::from_str::<ValueFunctions>(&s).unwrap(), vf);
    }
}
