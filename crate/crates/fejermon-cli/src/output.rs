//! Result rows and CSV emission. Output files are written atomically
//! (temp file then rename) and all numbers use shortest round-trip decimal
//! so reruns are byte-identical.

use num_bigint::BigUint;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Vacuous,
    Resource,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Vacuous => "vacuous",
            Status::Resource => "resource",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub check: String,
    pub status: Status,
    pub witness: String,
    pub bound: String,
    pub slack: String,
}

impl ResultRow {
    pub fn pass(check: &str) -> Self {
        ResultRow {
            check: check.to_string(),
            status: Status::Pass,
            witness: String::new(),
            bound: String::new(),
            slack: String::new(),
        }
    }

    pub fn pass_with(check: &str, witness: String, bound: String) -> Self {
        ResultRow { check: check.to_string(), status: Status::Pass, witness, bound, slack: String::new() }
    }

    pub fn fail(check: &str, witness: String) -> Self {
        ResultRow {
            check: check.to_string(),
            status: Status::Fail,
            witness,
            bound: String::new(),
            slack: String::new(),
        }
    }

    pub fn vacuous(check: &str, witness: &str) -> Self {
        ResultRow {
            check: check.to_string(),
            status: Status::Vacuous,
            witness: witness.to_string(),
            bound: String::new(),
            slack: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub n: u64,
    pub coords: Vec<f64>,
    pub residual: f64,
    pub dist_to_sol: f64,
    pub phi_to_sol: f64,
}

/// Decimal rendering of a bound value. Past ten thousand digits the value
/// is summarized deterministically by approximate leading digits, the
/// approximate digit count, and the exact bit length (an exact conversion
/// at that size would cost quadratic time for no informational gain).
pub fn format_nat(n: &BigUint) -> String {
    let bits = n.bits();
    // 10^4 digits is about 33220 bits.
    if bits <= 33_220 {
        return n.to_string();
    }
    let top = (n >> (bits - 64)).to_u64_digits();
    let mantissa = top.first().copied().unwrap_or(0) as f64;
    let log10 = (bits - 64) as f64 * std::f64::consts::LOG10_2 + mantissa.log10();
    let digits = log10.floor() as u64 + 1;
    let lead = 10f64.powf(log10.fract());
    format!("~{lead:.9}e{} (~{digits} digits, {bits} bits)", digits - 1)
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Writes `<name>_trajectory.csv` and `<name>_results.csv` under `dir`.
pub fn emit_csv(
    dir: &Path,
    name: &str,
    trajectory: &[TrajectoryRow],
    rows: &[ResultRow],
) -> std::io::Result<(std::path::PathBuf, std::path::PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let dim = trajectory.first().map(|r| r.coords.len()).unwrap_or(0);
    let mut t = String::new();
    t.push('n');
    for i in 0..dim {
        t.push_str(&format!(",coord_{i}"));
    }
    t.push_str(",residual,dist_to_sol,phi_to_sol\n");
    for row in trajectory {
        t.push_str(&row.n.to_string());
        for c in &row.coords {
            t.push(',');
            t.push_str(&c.to_string());
        }
        t.push_str(&format!(",{},{},{}\n", row.residual, row.dist_to_sol, row.phi_to_sol));
    }
    let traj_path = dir.join(format!("{name}_trajectory.csv"));
    write_atomic(&traj_path, &t)?;

    let mut r = String::from("check,status,witness,bound,slack\n");
    for row in rows {
        r.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(&row.check),
            row.status,
            csv_field(&row.witness),
            csv_field(&row.bound),
            csv_field(&row.slack)
        ));
    }
    let res_path = dir.join(format!("{name}_results.csv"));
    write_atomic(&res_path, &r)?;
    Ok((traj_path, res_path))
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
