//! `autozoom bench`: measure reasoning FLOPs over a (T, L) sweep and
//! verify the cost is exactly affine in both axes.

use std::path::PathBuf;
use std::time::Instant;

use autozoom::error::{Error, Result};
use autozoom::io::write_atomic;
use autozoom::reason::{model_flops, temporal_reason, AttentionModel, ReasonConfig, Variant};
use autozoom::rng::Lcg;
use autozoom::tensor::{FlopCounter, Tensor};
use clap::Args;

use crate::config::{self, CommonOpts};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated sequence lengths.
    #[arg(long, value_name = "T,T,...", default_value = "4,8,16")]
    pub t_sweep: String,
    /// Comma-separated self-attention depths.
    #[arg(long, value_name = "L,L,...", default_value = "1,2,3")]
    pub l_sweep: String,
    /// Write `t,l,flops` rows here.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonOpts,
}

fn parse_sweep(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad {what} value {tok:?}")))
        })
        .collect()
}

/// All points (x, f) lie on one line: cross-multiplied slopes agree
/// exactly in integer arithmetic.
fn affine(points: &[(usize, u64)]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let (x0, f0) = (points[0].0 as i128, points[0].1 as i128);
    let (x1, f1) = (points[1].0 as i128, points[1].1 as i128);
    points.iter().skip(2).all(|&(x, f)| {
        (f as i128 - f0) * (x1 - x0) == (f1 - f0) * (x as i128 - x0)
    })
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let run = config::resolve(&args.common)?;
    if run.variant != Variant::Attention {
        return Err(Error::invalid("bench applies to the attention variant"));
    }
    let ts = parse_sweep(&args.t_sweep, "--t-sweep")?;
    let ls = parse_sweep(&args.l_sweep, "--l-sweep")?;

    let mut rows: Vec<(usize, usize, u64, u128)> = Vec::new();
    for &t in &ts {
        for &l in &ls {
            let cfg = ReasonConfig::attention(t, 24, 4, 16, 16, l, 4, 256);
            let model = AttentionModel::init(&cfg, run.seed)?;
            let mut rng = Lcg::derive(run.seed, (t * 1000 + l) as u64);
            let emb = Tensor::from_vec(
                vec![t, 24],
                (0..t * 24).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            )?;
            let mut flops = FlopCounter::new();
            let started = Instant::now();
            temporal_reason(&emb, &cfg, &model.attn, &mut flops)?;
            let wall = started.elapsed().as_micros();
            let measured = flops.total();
            if measured != model_flops(&cfg)? {
                return Err(Error::invalid(format!(
                    "measured {measured} FLOPs differ from the closed form at T={t} L={l}"
                )));
            }
            rows.push((t, l, measured, wall));
        }
    }

    for &l in &ls {
        let points: Vec<(usize, u64)> = rows
            .iter()
            .filter(|r| r.1 == l)
            .map(|r| (r.0, r.2))
            .collect();
        if !affine(&points) {
            return Err(Error::invalid(format!("FLOPs are not affine in T at L={l}")));
        }
    }
    for &t in &ts {
        let points: Vec<(usize, u64)> = rows
            .iter()
            .filter(|r| r.0 == t)
            .map(|r| (r.1, r.2))
            .collect();
        if !affine(&points) {
            return Err(Error::invalid(format!("FLOPs are not affine in L at T={t}")));
        }
    }

    println!("{:>6} {:>4} {:>12} {:>10}", "T", "L", "FLOPs", "wall_us");
    for &(t, l, flops, wall) in &rows {
        println!("{t:>6} {l:>4} {flops:>12} {wall:>10}");
    }
    println!("affine in T and L: exact");

    if let Some(path) = &args.csv {
        let mut csv = String::from("t,l,flops\n");
        for &(t, l, flops, _) in &rows {
            csv.push_str(&format!("{t},{l},{flops}\n"));
        }
        write_atomic(path, csv.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_detects_lines_and_bends() {
        assert!(affine(&[(4, 10), (8, 20), (16, 40)]));
        assert!(affine(&[(1, 7), (2, 7), (5, 7)]));
        assert!(!affine(&[(4, 10), (8, 20), (16, 50)]));
        assert!(affine(&[(4, 10), (8, 20)]));
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("4, 8,16", "x").unwrap(), vec![4, 8, 16]);
        assert!(parse_sweep("4,none", "x").is_err());
        assert!(parse_sweep("", "x").is_err());
    }
}
