use super::{EmbeddingTable, Gradients};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every row of a table. Survives server
/// overwrites of the embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m_entities: Matrix,
    v_entities: Matrix,
    m_relations: Matrix,
    v_relations: Matrix,
}

impl AdamState {
    pub fn for_table(table: &EmbeddingTable) -> Self {
        let (er, ec) = (table.entities.rows(), table.entities.cols());
        let (rr, rc) = (table.relations.rows(), table.relations.cols());
        Self {
            step: 0,
            m_entities: Matrix::zeros(er, ec),
            v_entities: Matrix::zeros(er, ec),
            m_relations: Matrix::zeros(rr, rc),
            v_relations: Matrix::zeros(rr, rc),
        }
    }
}

/// Bias-corrected Adam update of a single row.
pub fn update_row(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for k in 0..params.len() {
        let g = grad[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[k] / bc1;
        let v_hat = v[k] / bc2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// One sparse Adam step: only rows present in `grads` move, and only their
/// moments are decayed.
pub fn adam_step(
    table: &mut EmbeddingTable,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    adam_step_except(table, grads, state, cfg, &[])
}

/// [`adam_step`] that leaves entity rows flagged in `frozen` alone.
pub fn adam_step_except(
    table: &mut EmbeddingTable,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    frozen: &[bool],
) -> Result<()> {
    if state.m_entities.rows() != table.entities.rows()
        || state.m_entities.cols() != table.entities.cols()
        || state.m_relations.rows() != table.relations.rows()
        || state.m_relations.cols() != table.relations.cols()
        || grads.entities.rows() != table.entities.rows()
        || grads.entities.cols() != table.entities.cols()
        || grads.relations.cols() != table.relations.cols()
    {
        return Err(Error::Shape("adam state or gradients do not match the table".into()));
    }
    state.step += 1;
    let step = state.step;
    for &i in grads.touched_entities() {
        if frozen.get(i).copied().unwrap_or(false) {
            continue;
        }
        update_row(
            table.entities.row_mut(i),
            grads.entities.row(i),
            state.m_entities.row_mut(i),
            state.v_entities.row_mut(i),
            step,
            cfg,
        );
    }
    for &i in grads.touched_relations() {
        update_row(
            table.relations.row_mut(i),
            grads.relations.row(i),
            state.m_relations.row_mut(i),
            state.v_relations.row_mut(i),
            step,
            cfg,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.5, -0.25];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        for step in 1..5 {
            update_row(&mut p, &[0.0, 0.0], &mut m, &mut v, step, &cfg);
        }
        assert_eq!(p, vec![0.5, -0.25]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // step 1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        for g in [0.3, -2.0, 1e-2] {
            let mut p = vec![1.0];
            let (mut m, mut v) = (vec![0.0], vec![0.0]);
            update_row(&mut p, &[g], &mut m, &mut v, 1, &cfg);
            let expected = 1.0 - 1e-4 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!(((1.0 - p[0]).abs() - 1e-4).abs() < 1e-9);
        }
    }
}
