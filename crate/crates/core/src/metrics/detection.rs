use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Whether an object is present in this cell.
    pub object: bool,
    pub class_probs: Vec<f64>,
}

/// `s × s` grid of cells, each with an object indicator and a class
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionGrid {
    side: usize,
    classes: usize,
    cells: Vec<GridCell>,
}

impl DetectionGrid {
    pub fn new(side: usize, cells: Vec<GridCell>) -> Result<Self> {
        if side == 0 || cells.len() != side * side {
            return Err(Error::domain(format!(
                "grid of side {side} needs {} cells, got {}",
                side * side,
                cells.len()
            )));
        }
        let classes = cells[0].class_probs.len();
        for (i, cell) in cells.iter().enumerate() {
            if cell.class_probs.len() != classes {
                return Err(Error::domain(format!("cell {i} has a different class count")));
            }
            let sum: f64 = cell.class_probs.iter().sum();
            if cell.class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::domain(format!("cell {i} is not a probability vector (sum {sum})")));
            }
        }
        Ok(Self { side, classes, cells })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }
}

/// `Σ_cells Σ_classes 1_obj · (p(c) − p̂(c))²`, with the indicator taken
/// from `truth`.
pub fn detection_loss(truth: &DetectionGrid, pred: &DetectionGrid) -> Result<f64> {
    if truth.side != pred.side || truth.classes != pred.classes {
        return Err(Error::domain("detection grids differ in shape"));
    }
    Ok(truth
        .cells
        .iter()
        .zip(&pred.cells)
        .filter(|(t, _)| t.object)
        .map(|(t, p)| {
            t.class_probs
                .iter()
                .zip(&p.class_probs)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum())
}
