//! Deterministic 2-D embedding projections.
//!
//! PCA with a cyclic Jacobi eigensolver and a fixed sign convention (the
//! largest-magnitude loading of each component is positive), so the same
//! embeddings always land on the same picture. The basis is fitted on
//! sample embeddings only; prompt rows are projected into it afterwards.

use std::path::Path;

use crate::apt::PromptBank;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    SampleEmbedding,
    InitialPrompt,
    TunedPrompt,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Role::SampleEmbedding => "sample-embedding",
            Role::InitialPrompt => "initial-prompt",
            Role::TunedPrompt => "tuned-prompt",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ProjPoint {
    pub label: usize,
    pub role: Role,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub points: Vec<ProjPoint>,
}

/// The fitted 2-component basis.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

impl PcaBasis {
    /// Fit on row vectors (population covariance, 1/n).
    pub fn fit(rows: &[Vec<f64>]) -> Result<PcaBasis, EvalError> {
        let distinct = {
            let mut keys: Vec<Vec<u64>> = rows
                .iter()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            keys.sort();
            keys.dedup();
            keys.len()
        };
        if distinct < 3 {
            return Err(EvalError::RankDeficient { distinct });
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0f64; d];
        for row in rows {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut cov = vec![0.0f64; d * d];
        for row in rows {
            for i in 0..d {
                let ci = row[i] - mean[i];
                for j in i..d {
                    cov[i * d + j] += ci * (row[j] - mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / n;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        let (eigenvalues, components) = top2_symmetric(cov, d);
        Ok(PcaBasis { mean, components, eigenvalues })
    }

    pub fn project(&self, row: &[f64]) -> (f64, f64) {
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        let dot = |c: &[f64]| centered.iter().zip(c).map(|(&a, &b)| a * b).sum::<f64>();
        (dot(&self.components[0]), dot(&self.components[1]))
    }
}

/// Cyclic Jacobi sweeps; returns the two leading eigenpairs with the
/// sign convention applied.
fn top2_symmetric(mut a: Vec<f64>, d: usize) -> ([f64; 2], [Vec<f64>; 2]) {
    let mut v = vec![0.0f64; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    // rank eigenpairs by eigenvalue, ties broken by index
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]).then(i.cmp(&j)));
    let take = |slot: usize| -> (f64, Vec<f64>) {
        let idx = order[slot];
        let mut col: Vec<f64> = (0..d).map(|k| v[k * d + idx]).collect();
        // sign convention: the largest-magnitude loading is positive
        let lead = col
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(y.0.cmp(&x.0)))
            .map(|(i, _)| i)
            .unwrap();
        if col[lead] < 0.0 {
            for c in &mut col {
                *c = -*c;
            }
        }
        (a[idx * d + idx], col)
    };
    let (e0, c0) = take(0);
    let (e1, c1) = take(1);
    ([e0, e1], [c0, c1])
}

/// Fit on sample embeddings, then place samples and both banks' prompt
/// rows in the shared basis.
pub fn project_embeddings(
    sample_embeddings: &[(usize, Vec<f32>)],
    bank_initial: &PromptBank,
    bank_tuned: &PromptBank,
) -> Result<ProjectionSet, EvalError> {
    let rows: Vec<Vec<f64>> = sample_embeddings
        .iter()
        .map(|(_, e)| e.iter().map(|&v| v as f64).collect())
        .collect();
    let basis = PcaBasis::fit(&rows)?;
    let mut points = Vec::new();
    for ((label, _), row) in sample_embeddings.iter().zip(&rows) {
        let (x, y) = basis.project(row);
        points.push(ProjPoint { label: *label, role: Role::SampleEmbedding, x, y });
    }
    for (bank, role) in [(bank_initial, Role::InitialPrompt), (bank_tuned, Role::TunedPrompt)] {
        for &class_id in &bank.class_ids {
            let row: Vec<f64> = bank
                .row(class_id)
                .map_err(|_| EvalError::MissingClass { class_id })?
                .iter()
                .map(|&v| v as f64)
                .collect();
            let (x, y) = basis.project(&row);
            points.push(ProjPoint { label: class_id, role, x, y });
        }
    }
    Ok(ProjectionSet { points })
}

/// CSV emission: label, role, x, y.
pub fn emit_projection(set: &ProjectionSet, path: &Path) -> Result<(), EvalError> {
    let mut out = String::from("label,role,x,y\n");
    for p in &set.points {
        out.push_str(&format!("{},{},{},{}\n", p.label, p.role, p.x, p.y));
    }
    std::fs::write(path, out)?;
    Ok(())
}
