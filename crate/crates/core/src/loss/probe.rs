//! Pixel-space gradient descent on a composite loss using central finite
//! differences. Each step costs two loss evaluations per pixel, so images are
//! capped at [`MAX_PROBE_SIDE`] pixels per side.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use super::{CompositeLoss, LossBreakdown};
use crate::error::{Error, Result};
use crate::image_io::{rmse, GrayImage};

pub const MAX_PROBE_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub steps: usize,
    pub step_size: f64,
    pub fd_epsilon: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            steps: 50,
            step_size: 10.0,
            fd_epsilon: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeStep {
    pub step: usize,
    pub total: f64,
    pub mse_term: f64,
    pub niqe_term: f64,
    pub ma_term: f64,
    pub rmse: f64,
}

impl ProbeStep {
    fn new(step: usize, b: LossBreakdown, rmse: f64) -> Self {
        Self {
            step,
            total: b.total,
            mse_term: b.mse,
            niqe_term: b.niqe,
            ma_term: b.ma,
            rmse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    /// Step 0 is the initial image.
    pub iterations: Vec<ProbeStep>,
    pub final_image: GrayImage,
}

pub const TRACE_COLUMNS: [&str; 6] = ["step", "total", "mse_term", "niqe_term", "ma_term", "rmse"];

impl ProbeTrace {
    pub fn to_csv(&self) -> String {
        let mut out = TRACE_COLUMNS.join(",");
        out.push('\n');
        for s in &self.iterations {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.step, s.total, s.mse_term, s.niqe_term, s.ma_term, s.rmse
            );
        }
        out
    }

    /// Parses [`ProbeTrace::to_csv`] output back into steps.
    pub fn steps_from_csv(text: &str) -> Result<Vec<ProbeStep>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TRACE_COLUMNS.join(",").as_str()) {
            return Err(Error::Csv("missing trace header".into()));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(Error::Csv(format!(
                        "trace row {}: {} fields",
                        i + 1,
                        f.len()
                    )));
                }
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Csv(format!("trace row {}: {e}", i + 1)))
                };
                Ok(ProbeStep {
                    step: f[0]
                        .parse()
                        .map_err(|e| Error::Csv(format!("trace row {}: {e}", i + 1)))?,
                    total: num(f[1])?,
                    mse_term: num(f[2])?,
                    niqe_term: num(f[3])?,
                    ma_term: num(f[4])?,
                    rmse: num(f[5])?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("probe aborted at step {step}: {reason}")]
    Aborted {
        step: usize,
        reason: Error,
        partial: Box<ProbeTrace>,
    },
}

/// Central-difference gradient of the loss total with respect to every pixel.
pub fn finite_difference_gradient(
    loss: &CompositeLoss<'_>,
    img: &GrayImage,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference epsilon must be > 0, got {epsilon}"
        )));
    }
    (0..img.data().len())
        .into_par_iter()
        .map_init(
            || img.clone(),
            |work, i| {
                let orig = work.data()[i];
                work.data_mut()[i] = orig + epsilon;
                let plus = loss.total(work);
                work.data_mut()[i] = orig - epsilon;
                let minus = loss.total(work);
                work.data_mut()[i] = orig;
                let g = (plus? - minus?) / (2.0 * epsilon);
                if g.is_finite() {
                    Ok(g)
                } else {
                    Err(Error::NonFinite(format!("gradient at pixel {i}")))
                }
            },
        )
        .collect()
}

/// Runs `img ← clamp(img − step_size · ĝ, 0, 255)` for `steps` iterations.
pub fn probe_descent(
    init: &GrayImage,
    hr: &GrayImage,
    loss: &CompositeLoss<'_>,
    opts: &ProbeOptions,
) -> std::result::Result<ProbeTrace, ProbeError> {
    init.check_same_size(hr)?;
    if init.width() > MAX_PROBE_SIDE || init.height() > MAX_PROBE_SIDE {
        return Err(Error::invalid(format!(
            "probe images are limited to {MAX_PROBE_SIDE}x{MAX_PROBE_SIDE}, got {}x{}",
            init.width(),
            init.height()
        ))
        .into());
    }
    if opts.steps == 0 || !(opts.step_size > 0.0) || !(opts.fd_epsilon > 0.0) {
        return Err(Error::invalid("steps must be >= 1 and step size, epsilon > 0").into());
    }

    let mut img = init.clone();
    let first = loss.evaluate(&img)?;
    let mut iterations = vec![ProbeStep::new(0, first, rmse(&img, hr)?)];

    for step in 1..=opts.steps {
        let outcome = finite_difference_gradient(loss, &img, opts.fd_epsilon).and_then(|grad| {
            let mut next = img.clone();
            for (v, g) in next.data_mut().iter_mut().zip(&grad) {
                *v = (*v - opts.step_size * g).clamp(0.0, 255.0);
            }
            let b = loss.evaluate(&next)?;
            Ok((next, b))
        });
        match outcome {
            Ok((next, b)) => {
                img = next;
                iterations.push(ProbeStep::new(step, b, rmse(&img, hr)?));
            }
            Err(reason) => {
                return Err(ProbeError::Aborted {
                    step,
                    reason,
                    partial: Box::new(ProbeTrace {
                        iterations,
                        final_image: img,
                    }),
                })
            }
        }
    }
    Ok(ProbeTrace {
        iterations,
        final_image: img,
    })
}
