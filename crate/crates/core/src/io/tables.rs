//! CSV reports. Each starts with a `# config_hash=` comment line.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::num;
use crate::evaluation::OperationalError;
use crate::sampler::PosteriorDraw;
use crate::validation::QqSummary;

fn header(hash: &str, columns: &str) -> Vec<u8> {
    format!("# config_hash={hash}\n{columns}\n").into_bytes()
}

/// One line of a score report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: String,
    pub dataset: String,
    pub pa: f64,
    pub half_width: f64,
    pub events: usize,
    /// Events raised to the grid density floor.
    pub floored: usize,
}

pub fn score_csv(hash: &str, rows: &[ScoreRow]) -> Vec<u8> {
    let mut out = header(hash, "method,dataset,pa,ci_half_width,events,floored_points");
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.method, r.dataset, num(r.pa), num(r.half_width), r.events, r.floored).unwrap();
    }
    out
}

pub fn coverage_csv(hash: &str, curves: &[(String, OperationalError)]) -> Vec<u8> {
    let mut out = header(hash, "method,r_seconds,error,ci_half_width,periods_used,periods_excluded");
    for (method, e) in curves {
        for k in 0..e.thresholds.len() {
            writeln!(
                out,
                "{method},{},{},{},{},{}",
                num(e.thresholds[k]),
                num(e.mean_abs_error[k]),
                num(e.half_width[k]),
                e.periods_used,
                e.periods_excluded
            )
            .unwrap();
        }
    }
    out
}

pub fn qq_csv(hash: &str, q: &QqSummary) -> Vec<u8> {
    let mut out = header(hash, "theoretical,mean,low,high");
    for i in 0..q.theoretical.len() {
        writeln!(out, "{},{},{},{}", num(q.theoretical[i]), num(q.mean[i]), num(q.low[i]), num(q.high[i])).unwrap();
    }
    out
}

/// Density values at grid points `(x, y, f)` for one period.
pub fn grid_csv(hash: &str, period: usize, cells: &[(f64, f64, f64)]) -> Vec<u8> {
    let mut out = header(hash, "period,x_km,y_km,density");
    for &(x, y, f) in cells {
        writeln!(out, "{period},{},{},{}", num(x), num(y), num(f)).unwrap();
    }
    out
}

/// Scalar parameters of every draw, one row per component; the CAR columns
/// are empty for the reference component.
pub fn draw_params_csv(hash: &str, draws: &[PosteriorDraw]) -> Vec<u8> {
    let mut out = header(
        hash,
        "iteration,k,component,mu_x,mu_y,sigma_xx,sigma_xy,sigma_yy,mean_weight,car_c,car_rho,car_nu2",
    );
    for d in draws {
        let m = &d.mixture;
        let rows = m.weights.rows() as f64;
        for (j, c) in m.components.iter().enumerate() {
            let w = (0..m.weights.rows()).map(|b| m.weights.get(b, j)).sum::<f64>() / rows;
            let car = if j < d.car.cols {
                format!("{},{},{}", num(d.car.c[j]), num(d.car.rho[j]), num(d.car.nu2[j]))
            } else {
                ",,".into()
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{car}",
                d.iteration,
                m.k(),
                j + 1,
                num(c.mu.x),
                num(c.mu.y),
                num(c.sigma.xx),
                num(c.sigma.xy),
                num(c.sigma.yy),
                num(w)
            )
            .unwrap();
        }
    }
    out
}
