use std::path::Path;

use super::{div_e, l2_region, lip_max, lip_sync};
use crate::data::{MotionSequence, TemplateMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMetrics {
    pub name: String,
    pub lip_sync: f64,
    pub lip_max: f64,
    pub l2_lip: f64,
    pub l2_face: f64,
    /// Only defined when several samples were generated for the sequence.
    pub div_e: Option<f64>,
}

/// Score one or more predictions of the same sequence. Error metrics are
/// averaged over the predictions; diversity is computed when there are at
/// least two.
pub fn evaluate_pair(
    name: &str,
    preds: &[MotionSequence],
    gt: &MotionSequence,
    mesh: &TemplateMesh,
) -> Result<SequenceMetrics> {
    if preds.is_empty() {
        return Err(Error::Contract(format!("{name}: no predictions")));
    }
    let all = mesh.all_indices();
    let k = preds.len() as f64;
    let mut m = SequenceMetrics {
        name: name.to_string(),
        lip_sync: 0.0,
        lip_max: 0.0,
        l2_lip: 0.0,
        l2_face: 0.0,
        div_e: None,
    };
    for p in preds {
        m.lip_sync += lip_sync(p, gt, mesh)? / k;
        m.lip_max += lip_max(p, gt, mesh)? / k;
        m.l2_lip += l2_region(p, gt, mesh.lip_indices())? / k;
        m.l2_face += l2_region(p, gt, &all)? / k;
    }
    if preds.len() >= 2 {
        m.div_e = Some(div_e(preds)?);
    }
    Ok(m)
}

/// Per-sequence metrics plus their mean. Values are stored in mesh units;
/// `scale` only affects what is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<SequenceMetrics>,
    pub scale: f64,
}

impl MetricReport {
    pub fn new(rows: Vec<SequenceMetrics>) -> Self {
        Self { rows, scale: 1.0 }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn mean(&self) -> SequenceMetrics {
        let n = self.rows.len().max(1) as f64;
        let avg = |f: &dyn Fn(&SequenceMetrics) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        let divs: Vec<f64> = self.rows.iter().filter_map(|r| r.div_e).collect();
        SequenceMetrics {
            name: "mean".into(),
            lip_sync: avg(&|r| r.lip_sync),
            lip_max: avg(&|r| r.lip_max),
            l2_lip: avg(&|r| r.l2_lip),
            l2_face: avg(&|r| r.l2_face),
            div_e: (!divs.is_empty()).then(|| divs.iter().sum::<f64>() / divs.len() as f64),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["sequence", "lip_sync", "lip_max", "l2_lip", "l2_face", "div_e"])
            .map_err(io)?;
        let s = self.scale;
        for r in self.rows.iter().chain(std::iter::once(&self.mean())) {
            w.write_record([
                r.name.clone(),
                (r.lip_sync * s).to_string(),
                (r.lip_max * s).to_string(),
                (r.l2_lip * s).to_string(),
                (r.l2_face * s).to_string(),
                r.div_e.map(|d| (d * s).to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        crate::data::binio::write_file(path, &bytes)
    }
}
