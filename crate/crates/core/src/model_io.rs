//! Line-oriented text format for models and optional optimizer state.
//!
//! ```text
//! SHFM-KIT-MODEL v1
//! kind <kind> task <task> c <c> d <d> k <k>
//! b <h> <bias>
//! beta <h> <k values>            factorized kinds
//! v <h> <row> <col> <value>      nonzero factor entries, rows 0..=d
//! w <h> <i> <value>              nonzero linear weights, i in 1..=d
//! z <h> <i> <f> <value>          optimizer state, when saved
//! n <h> <i> <f> <value>
//! ```
//!
//! Reals are written with 17 significant digits so a save/load/save cycle is
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::ftrl::FtrlState;
use crate::model::{FactorizedModel, ModelKind};

const MAGIC: &str = "SHFM-KIT-MODEL v1";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a model, appending optimizer accumulators when `state` is given.
pub fn write_model(model: &FactorizedModel, state: Option<&FtrlState>) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(
        out,
        "kind {} task {} c {} d {} k {}",
        model.kind(),
        model.task(),
        model.classes(),
        model.dim(),
        model.rank()
    )
    .unwrap();
    let width = model.width();
    for h in 0..model.classes() {
        writeln!(out, "b {h} {}", real(model.bias(h))).unwrap();
        if model.kind().is_factorized() {
            write!(out, "beta {h}").unwrap();
            for &b in model.beta(h) {
                write!(out, " {}", real(b)).unwrap();
            }
            out.push('\n');
            for (e, &v) in model.weights(h).iter().enumerate() {
                if v != 0.0 {
                    writeln!(out, "v {h} {} {} {}", e / width, e % width, real(v)).unwrap();
                }
            }
        } else {
            for (i, &v) in model.weights(h).iter().enumerate() {
                if v != 0.0 {
                    writeln!(out, "w {h} {i} {}", real(v)).unwrap();
                }
            }
        }
    }
    if let Some(state) = state {
        for h in 0..state.heads() {
            for i in 0..state.rows() {
                if !state.row_initialized(h, i) {
                    continue;
                }
                for f in 0..state.width() {
                    writeln!(out, "z {h} {i} {f} {}", real(state.z(h, i, f))).unwrap();
                    writeln!(out, "n {h} {i} {f} {}", real(state.n(h, i, f))).unwrap();
                }
            }
        }
    }
    out
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &FactorizedModel,
    state: Option<&FtrlState>,
) -> Result<()> {
    fs::write(path, write_model(model, state))?;
    Ok(())
}

/// Parses a model file. Returns the optimizer state if the file carries one.
pub fn read_model(text: &str) -> Result<(FactorizedModel, Option<FtrlState>)> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    let bad = |line: usize, msg: &str| Error::Model {
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(bad(1, "missing model header")),
    }
    let (hl, header) = lines.next().ok_or_else(|| bad(2, "missing model shape line"))?;
    let t: Vec<&str> = header.split_whitespace().collect();
    if t.len() != 10 || t[0] != "kind" || t[2] != "task" || t[4] != "c" || t[6] != "d" || t[8] != "k"
    {
        return Err(bad(hl, "malformed shape line"));
    }
    let kind: ModelKind = t[1].parse().map_err(|_| bad(hl, "unknown kind"))?;
    let task: Task = t[3].parse().map_err(|_| bad(hl, "unknown task"))?;
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(hl, "bad integer"));
    let (classes, dim, rank) = (num(t[5])?, num(t[7])?, num(t[9])?);
    let mut model = FactorizedModel::new(kind, task, classes, dim, rank).map_err(|e| Error::Model {
        line: hl,
        msg: e.to_string(),
    })?;
    let mut state: Option<FtrlState> = None;

    for (ln, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad integer"));
        let float = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(ln, "bad real"))
        };
        let head = |s: &str| {
            int(s).and_then(|h| {
                if h < classes {
                    Ok(h)
                } else {
                    Err(bad(ln, "head out of range"))
                }
            })
        };
        let wrap = |e: Error| Error::Model {
            line: ln,
            msg: e.to_string(),
        };
        match (t[0], t.len()) {
            ("b", 3) => model.set_bias(head(t[1])?, float(t[2])?).map_err(wrap)?,
            ("beta", n) if n == rank + 2 && kind.is_factorized() => {
                let h = head(t[1])?;
                for f in 0..rank {
                    let v = float(t[2 + f])?;
                    if kind.fits_beta() {
                        model.set_beta(h, f, v).map_err(wrap)?;
                    } else if v != 1.0 {
                        return Err(bad(ln, "beta must be one for this kind"));
                    }
                }
            }
            ("v", 5) if kind.is_factorized() => {
                let (h, i, f) = (head(t[1])?, int(t[2])?, int(t[3])?);
                if f >= rank {
                    return Err(bad(ln, "factor column out of range"));
                }
                model.set_factor(h, i, f, float(t[4])?).map_err(wrap)?;
            }
            ("w", 4) if !kind.is_factorized() => {
                let (h, i) = (head(t[1])?, int(t[2])?);
                if i == 0 {
                    return Err(bad(ln, "linear weights start at feature 1"));
                }
                model.set_factor(h, i, 0, float(t[3])?).map_err(wrap)?;
            }
            (key @ ("z" | "n"), 5) => {
                let st = state.get_or_insert_with(|| FtrlState::for_model(&model));
                let (h, i, f, v) = (head(t[1])?, int(t[2])?, int(t[3])?, float(t[4])?);
                if i >= st.rows() || f >= st.width() {
                    return Err(bad(ln, "state entry out of range"));
                }
                let (z, n) = if key == "z" {
                    (v, st.n(h, i, f))
                } else {
                    (st.z(h, i, f), v)
                };
                st.set_entry(h, i, f, z, n).map_err(wrap)?;
            }
            _ => return Err(bad(ln, &format!("unrecognized record '{}'", t[0]))),
        }
    }
    Ok((model, state))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(FactorizedModel, Option<FtrlState>)> {
    read_model(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> FactorizedModel {
        let mut m = FactorizedModel::new(ModelKind::Sha2, Task::Classification, 2, 3, 2).unwrap();
        m.set_bias(0, 0.1).unwrap();
        m.set_bias(1, -1.0 / 3.0).unwrap();
        m.set_beta(1, 1, 0.75).unwrap();
        m.set_factor(0, 0, 1, std::f64::consts::PI).unwrap();
        m.set_factor(1, 3, 0, -2.5e-7).unwrap();
        m
    }

    #[test]
    fn layout() {
        let text = write_model(&sample_model(), None);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "SHFM-KIT-MODEL v1");
        assert_eq!(lines[1], "kind sha2 task classification c 2 d 3 k 2");
        assert_eq!(lines[2], "b 0 1.0000000000000001e-1");
        assert!(lines.contains(&"v 0 0 1 3.1415926535897931e0"));
        assert!(lines.contains(&"beta 1 1.0000000000000000e0 7.5000000000000000e-1"));
        assert_eq!(lines.iter().filter(|l| l.starts_with("v ")).count(), 2);
    }

    #[test]
    fn round_trip_bytes() {
        let m = sample_model();
        let text = write_model(&m, None);
        let (back, state) = read_model(&text).unwrap();
        assert!(state.is_none());
        assert_eq!(back, m);
        assert_eq!(write_model(&back, None), text);
    }

    #[test]
    fn linear_round_trip() {
        let mut m = FactorizedModel::new(ModelKind::Linear, Task::Regression, 1, 4, 0).unwrap();
        m.set_factor(0, 2, 0, 0.5).unwrap();
        let text = write_model(&m, None);
        assert!(text.contains("w 0 2 5.0000000000000000e-1"));
        assert_eq!(read_model(&text).unwrap().0, m);
    }

    #[test]
    fn state_round_trip() {
        let m = sample_model();
        let mut st = FtrlState::for_model(&m);
        st.set_entry(1, 2, 1, -0.25, 4.0).unwrap();
        let text = write_model(&m, Some(&st));
        let (_, back) = read_model(&text).unwrap();
        let back = back.unwrap();
        assert_eq!(back.z(1, 2, 1), -0.25);
        assert_eq!(back.n(1, 2, 1), 4.0);
        assert!(back.row_initialized(1, 2));
        assert_eq!(write_model(&m, Some(&back)), text);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(read_model("nope"), Err(Error::Model { line: 1, .. })));
        let head = "SHFM-KIT-MODEL v1\nkind fm task regression c 1 d 2 k 1\n";
        assert!(read_model(&format!("{head}v 0 0 0 1.0\n")).is_err());
        assert!(read_model(&format!("{head}v 0 3 0 1.0\n")).is_err());
        assert!(read_model(&format!("{head}beta 0 2.0\n")).is_err());
        assert!(read_model(&format!("{head}q 1\n")).is_err());
        assert!(read_model(&format!("{head}b 0 NaN\n")).is_err());
        assert!(read_model(&format!("{head}b 0 1.5\nbeta 0 1.0\nv 0 2 0 -1.0\n")).is_ok());
    }
}
