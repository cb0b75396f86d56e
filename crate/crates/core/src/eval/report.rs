//! System evaluation and report emission.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apt::PromptBank;
use crate::corpus::MixtureExample;
use crate::models::{bind_sep, build_sep_graph, prepare_sep_input, SepMode, TrainSet, UssModel};

use super::sdr::{median, sdr};
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemLabel {
    BaselineZeroShot,
    Apt,
    Joint,
    Oracle,
}

impl std::fmt::Display for SystemLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SystemLabel::BaselineZeroShot => "baseline-zero-shot",
            SystemLabel::Apt => "apt",
            SystemLabel::Joint => "joint",
            SystemLabel::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub sdrs: Vec<f64>,
    pub median_sdr: f64,
    pub count: usize,
}

/// Per-class SDR lists plus the two aggregate views: the median over all
/// clips (the headline number) and the mean of per-class medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: SystemLabel,
    /// Enrollment shots behind the evaluated bank; 0 when not applicable.
    pub shots: usize,
    pub seed: u64,
    pub per_class: Vec<ClassReport>,
    pub overall_median_sdr: f64,
    pub mean_class_median_sdr: f64,
}

impl EvalReport {
    pub fn class(&self, class_id: usize) -> Option<&ClassReport> {
        self.per_class.iter().find(|c| c.class_id == class_id)
    }

    pub fn from_scored(
        scored: Vec<(usize, f64)>,
        label: SystemLabel,
        shots: usize,
        seed: u64,
    ) -> Result<EvalReport, EvalError> {
        let mut by_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut all = Vec::with_capacity(scored.len());
        for (class_id, v) in scored {
            by_class.entry(class_id).or_default().push(v);
            all.push(v);
        }
        let per_class = by_class
            .into_iter()
            .map(|(class_id, sdrs)| {
                let median_sdr = median(&sdrs)?;
                Ok(ClassReport { class_id, count: sdrs.len(), median_sdr, sdrs })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let overall_median_sdr = median(&all)?;
        let class_medians: Vec<f64> = per_class.iter().map(|c| c.median_sdr).collect();
        let mean_class_median_sdr =
            class_medians.iter().sum::<f64>() / class_medians.len() as f64;
        Ok(EvalReport { label, shots, seed, per_class, overall_median_sdr, mean_class_median_sdr })
    }
}

/// Separate every test mixture with its target class's prompt and score
/// against the stored clean target.
pub fn evaluate_system(
    uss: &UssModel,
    bank: &PromptBank,
    test_mixtures: &[MixtureExample],
    label: SystemLabel,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut sep = build_sep_graph(&uss.dims, SepMode::Waveform, TrainSet::NONE)?;
    let mut scored = Vec::with_capacity(test_mixtures.len());
    for ex in test_mixtures {
        let prompt = bank
            .row(ex.target_class)
            .map_err(|_| EvalError::MissingClass { class_id: ex.target_class })?;
        let input = prepare_sep_input(&ex.mixture, &uss.dims)?;
        let bindings = bind_sep(&sep, uss, &input, prompt, None)?;
        let out = sep.graph.evaluate(&bindings)?;
        let estimate = crate::dsp::Waveform::new(out.data().to_vec(), ex.mixture.sample_rate)?;
        scored.push((ex.target_class, sdr(&ex.target, &estimate)?));
    }
    EvalReport::from_scored(scored, label, bank.shots, seed)
}

/// Classes where `candidate`'s per-class median beats `baseline`'s.
pub fn improved_classes(candidate: &EvalReport, baseline: &EvalReport) -> (usize, usize) {
    let mut improved = 0;
    let mut total = 0;
    for c in &candidate.per_class {
        if let Some(b) = baseline.class(c.class_id) {
            total += 1;
            if c.median_sdr > b.median_sdr {
                improved += 1;
            }
        }
    }
    (improved, total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Write a report. CSV rows: class_id, n_test, median_sdr,
/// baseline_median_sdr, delta — with footer rows for both aggregates.
/// Without a baseline the baseline column repeats the median and delta
/// is zero. JSON mirrors the in-memory report exactly.
pub fn emit_report(
    report: &EvalReport,
    baseline: Option<&EvalReport>,
    path: &Path,
    format: ReportFormat,
) -> Result<(), EvalError> {
    match format {
        ReportFormat::Json => {
            std::fs::write(path, serde_json::to_string_pretty(report)?)?;
        }
        ReportFormat::Csv => {
            let mut out = String::from("class_id,n_test,median_sdr,baseline_median_sdr,delta\n");
            let base_of = |class_id: usize, fallback: f64| -> f64 {
                baseline.and_then(|b| b.class(class_id)).map(|c| c.median_sdr).unwrap_or(fallback)
            };
            let mut total = 0usize;
            for c in &report.per_class {
                let b = base_of(c.class_id, c.median_sdr);
                total += c.count;
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.class_id,
                    c.count,
                    c.median_sdr,
                    b,
                    c.median_sdr - b
                ));
            }
            let base_overall = baseline.map(|b| b.overall_median_sdr).unwrap_or(report.overall_median_sdr);
            let base_mean =
                baseline.map(|b| b.mean_class_median_sdr).unwrap_or(report.mean_class_median_sdr);
            out.push_str(&format!(
                "overall_median,{},{},{},{}\n",
                total,
                report.overall_median_sdr,
                base_overall,
                report.overall_median_sdr - base_overall
            ));
            out.push_str(&format!(
                "mean_class_median,{},{},{},{}\n",
                total,
                report.mean_class_median_sdr,
                base_mean,
                report.mean_class_median_sdr - base_mean
            ));
            std::fs::write(path, out)?;
        }
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport, EvalError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
