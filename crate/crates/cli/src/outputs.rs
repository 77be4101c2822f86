//! Files written for a finished segmentation run.

use std::fs;
use std::path::{Path, PathBuf};

use base64::Engine;
use serde::{Deserialize, Serialize};

use starseg::constraint::StarReport;
use starseg::grid::ImageGrid;
use starseg::imageio::{contours_csv, mask_png_bytes, overlay_png_bytes, ContourSet};
use starseg::multilevel::{LandmarkReport, SegmentationResult};
use starseg::solver::TraceRow;
use starseg::Result;

pub const MASK_FILE: &str = "mask.png";
pub const OVERLAY_FILE: &str = "overlay.png";
pub const CONTOURS_FILE: &str = "contours.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const STAR_REPORT_FILE: &str = "star_report.json";
pub const LANDMARK_REPORT_FILE: &str = "landmark_report.json";

pub fn traces_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("level,iter,energy,residual_inf,sigma,newton_iters,landmark_err\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.level, r.iter, r.energy, r.residual_inf, r.sigma, r.newton_iters, r.landmark_err
        ));
    }
    s
}

/// Star-shape report file: one entry per constraint block plus solver status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StarReportFile {
    pub reports: Vec<StarReport>,
    pub stalled: bool,
    pub notes: Vec<String>,
}

/// Writes the six result files into `dir` (created if missing). The
/// selective model adds `mask_phase2.png` for the second object.
pub fn write_outputs(dir: &Path, image: &ImageGrid, res: &SegmentationResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put(MASK_FILE, &mask_png_bytes(&res.masks[0], res.n)?)?;
    for (i, m) in res.masks.iter().enumerate().skip(1) {
        put(&format!("mask_phase{}.png", i + 1), &mask_png_bytes(m, res.n)?)?;
    }
    put(OVERLAY_FILE, &overlay_png_bytes(image, &res.contours))?;
    put(CONTOURS_FILE, contours_csv(&res.contours).as_bytes())?;
    put(TRACES_FILE, traces_csv(&res.traces).as_bytes())?;
    let star = StarReportFile {
        reports: res.star_reports.clone(),
        stalled: res.stalled,
        notes: res.notes.clone(),
    };
    put(STAR_REPORT_FILE, serde_json::to_string_pretty(&star)?.as_bytes())?;
    put(
        LANDMARK_REPORT_FILE,
        serde_json::to_string_pretty(&res.landmark_errors)?.as_bytes(),
    )?;
    Ok(written)
}

/// Result payload served by the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub contours: Vec<ContourSet>,
    /// Base64-encoded PNG per phase.
    pub masks: Vec<String>,
    pub star_reports: Vec<StarReport>,
    pub landmark_errors: Vec<LandmarkReport>,
    pub traces: Vec<TraceRow>,
    pub stalled: bool,
}

impl ResultPayload {
    pub fn from_result(res: &SegmentationResult) -> Result<Self> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let masks = res
            .masks
            .iter()
            .map(|m| Ok(b64.encode(mask_png_bytes(m, res.n)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResultPayload {
            contours: res.contours.clone(),
            masks,
            star_reports: res.star_reports.clone(),
            landmark_errors: res.landmark_errors.clone(),
            traces: res.traces.clone(),
            stalled: res.stalled,
        })
    }
}
