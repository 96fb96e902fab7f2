//! Text checkpoints of the full trainer state.
//!
//! Layout: a version line, scalar lines, then named tensors each introduced
//! by `tensor NAME ROWS COLS` and followed by one line per row. Floats are
//! written with 17 significant digits so that save, load, save reproduces
//! the file byte for byte.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, Policy};
use crate::ppo::{LagrangeState, TrainerState};

pub const CHECKPOINT_VERSION: u32 = 1;
const TAG: &str = "lfrl-checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub config_hash: u64,
    pub state: TrainerState,
}

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_tensor<W: Write>(w: &mut W, name: &str, rows: usize, cols: usize, at: impl Fn(usize, usize) -> f64) -> Result<()> {
    writeln!(w, "tensor {name} {rows} {cols}")?;
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| f17(at(r, c))).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

fn write_mlp<W: Write>(w: &mut W, prefix: &str, net: &Mlp) -> Result<()> {
    for (l, (wm, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        write_tensor(w, &format!("{prefix}.w{l}"), wm.nrows(), wm.ncols(), |r, c| wm[(r, c)])?;
        write_tensor(w, &format!("{prefix}.b{l}"), b.len(), 1, |r, _| b[r])?;
    }
    Ok(())
}

fn write_adam<W: Write>(w: &mut W, prefix: &str, a: &Adam) -> Result<()> {
    writeln!(w, "adam {prefix} {} {} {} {}", a.step, f17(a.beta1), f17(a.beta2), f17(a.eps))?;
    for (k, (m, v)) in a.m.iter().zip(&a.v).enumerate() {
        write_tensor(w, &format!("{prefix}.m{k}"), 1, m.len(), |_, c| m[c])?;
        write_tensor(w, &format!("{prefix}.v{k}"), 1, v.len(), |_, c| v[c])?;
    }
    Ok(())
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.state;
        let p = &s.policy;
        writeln!(w, "{TAG} {CHECKPOINT_VERSION}")?;
        writeln!(w, "epoch {}", s.epoch)?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "config_hash {:016x}", self.config_hash)?;
        writeln!(w, "lambda {} {}", f17(s.lagrange.lambda[0]), f17(s.lagrange.lambda[1]))?;
        writeln!(
            w,
            "policy_bounds {} {} {} {}",
            f17(p.a_min),
            f17(p.a_max),
            f17(p.log_std_min),
            f17(p.log_std_max)
        )?;
        writeln!(w, "policy_sizes {}", join_usize(&p.net.sizes))?;
        writeln!(w, "value_sizes {}", join_usize(&s.value.sizes))?;
        write_mlp(&mut w, "policy", &p.net)?;
        write_mlp(&mut w, "value", &s.value)?;
        write_adam(&mut w, "policy_adam", &s.policy_adam)?;
        write_adam(&mut w, "value_adam", &s.value_adam)?;
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("checkpoint text is ASCII")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn read<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let mut rd = Reader {
            lines: r.lines(),
            line_no: 0,
            path,
        };
        let head = rd.next_line()?;
        let ver = head
            .strip_prefix(TAG)
            .map(str::trim)
            .ok_or_else(|| rd.err("not a checkpoint file"))?;
        if ver != CHECKPOINT_VERSION.to_string() {
            return Err(rd.err(&format!("unsupported checkpoint version {ver}")));
        }
        let epoch = rd.scalar::<usize>("epoch")?;
        let seed = rd.scalar::<u64>("seed")?;
        let hash_text = rd.keyed("config_hash")?;
        let config_hash = u64::from_str_radix(&hash_text, 16).map_err(|e| rd.err(&e.to_string()))?;
        let lam = rd.floats("lambda", 2)?;
        let pb = rd.floats("policy_bounds", 4)?;
        let p_sizes = rd.usizes("policy_sizes")?;
        let v_sizes = rd.usizes("value_sizes")?;
        let pnet = rd.mlp("policy", &p_sizes)?;
        let value = rd.mlp("value", &v_sizes)?;
        let policy = Policy::new(pnet, pb[0], pb[1], pb[2], pb[3])?;
        let policy_adam = rd.adam("policy_adam", &policy.net)?;
        let value_adam = rd.adam("value_adam", &value)?;
        if rd.next_line()? != "end" {
            return Err(rd.err("expected end marker"));
        }
        Ok(Checkpoint {
            seed,
            config_hash,
            state: TrainerState {
                epoch,
                policy,
                value,
                policy_adam,
                value_adam,
                lagrange: LagrangeState { lambda: [lam[0], lam[1]] },
            },
        })
    }
}

struct Reader<'a, L> {
    lines: L,
    line_no: usize,
    path: &'a str,
}

impl<L: Iterator<Item = std::io::Result<String>>> Reader<'_, L> {
    fn err(&self, msg: &str) -> Error {
        Error::parse(self.path, self.line_no, msg)
    }

    fn next_line(&mut self) -> Result<String> {
        self.line_no += 1;
        match self.lines.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file (truncated checkpoint)")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next_line()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.trim().to_string()),
            _ => Err(self.err(&format!("expected `{key}`"))),
        }
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.keyed(key)?;
        v.parse().map_err(|e: T::Err| self.err(&format!("{key}: {e}")))
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let v = self.keyed(key)?;
        let out: Vec<f64> = v
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(&format!("{key}: {e}")))?;
        if out.len() != n {
            return Err(self.err(&format!("{key}: expected {n} values")));
        }
        Ok(out)
    }

    fn usizes(&mut self, key: &str) -> Result<Vec<usize>> {
        let v = self.keyed(key)?;
        v.split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(&format!("{key}: {e}")))
    }

    /// Row-major values of the tensor `name` with the given shape.
    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let head = self.next_line()?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
            return Err(self.err(&format!("expected header of tensor {name}")));
        }
        let shape = (parts[2].parse::<usize>(), parts[3].parse::<usize>());
        if shape != (Ok(rows), Ok(cols)) {
            return Err(self.err(&format!(
                "tensor {name}: shape {}x{} does not match expected {rows}x{cols}",
                parts[2], parts[3]
            )));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next_line()?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| self.err(&format!("tensor {name}: {e}")))?;
            if row.len() != cols {
                return Err(self.err(&format!("tensor {name}: expected {cols} values, found {}", row.len())));
            }
            out.extend(row);
        }
        Ok(out)
    }

    fn mlp(&mut self, prefix: &str, sizes: &[usize]) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes).map_err(|e| self.err(&format!("{prefix}: {e}")))?;
        for l in 0..sizes.len() - 1 {
            let (o, i) = (sizes[l + 1], sizes[l]);
            let w = self.tensor(&format!("{prefix}.w{l}"), o, i)?;
            net.weights[l] = DMatrix::from_row_slice(o, i, &w);
            let b = self.tensor(&format!("{prefix}.b{l}"), o, 1)?;
            net.biases[l] = DVector::from_vec(b);
        }
        Ok(net)
    }

    fn adam(&mut self, prefix: &str, net: &Mlp) -> Result<Adam> {
        let l = self.next_line()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "adam" || parts[1] != prefix {
            return Err(self.err(&format!("expected optimizer header {prefix}")));
        }
        let bad = |e: String| Error::parse(self.path, self.line_no, format!("{prefix}: {e}"));
        let step = parts[2].parse::<u64>().map_err(|e| bad(e.to_string()))?;
        let fl = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        let mut a = Adam::for_mlp(net);
        a.step = step;
        a.beta1 = fl(parts[3])?;
        a.beta2 = fl(parts[4])?;
        a.eps = fl(parts[5])?;
        for k in 0..a.m.len() {
            let n = a.m[k].len();
            a.m[k] = self.tensor(&format!("{prefix}.m{k}"), 1, n)?;
            a.v[k] = self.tensor(&format!("{prefix}.v{k}"), 1, n)?;
        }
        Ok(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::TrainConfig;

    fn sample() -> Checkpoint {
        let cfg = TrainConfig {
            hidden: vec![4, 3],
            ..Default::default()
        };
        let mut state = TrainerState::init(&cfg, 5).unwrap();
        state.epoch = 7;
        state.lagrange.lambda = [0.1 + 0.2, 1.0 / 3.0];
        state.policy_adam.step = 3;
        state.policy_adam.m[0][1] = -1.0e-300;
        state.value_adam.v[2][0] = std::f64::consts::PI;
        Checkpoint {
            seed: 42,
            config_hash: 0xdead_beef_0123_4567,
            state,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let text = c.to_text();
        let back = Checkpoint::read(text.as_bytes(), "c").unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn corrupt_tensor_is_named() {
        let text = sample().to_text();
        let lines: Vec<&str> = text.lines().collect();
        let at = lines.iter().position(|l| l.starts_with("tensor value.w1")).unwrap();
        let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        broken[at + 1] = broken[at + 1].replacen('e', "x", 1);
        let err = Checkpoint::read(broken.join("\n").as_bytes(), "c").unwrap_err();
        assert!(err.to_string().contains("value.w1"), "{err}");
    }

    #[test]
    fn truncation_and_version_rejected() {
        let text = sample().to_text();
        let half = &text[..text.len() / 2];
        assert!(Checkpoint::read(half.as_bytes(), "c").is_err());
        let other = text.replacen("lfrl-checkpoint 1", "lfrl-checkpoint 9", 1);
        assert!(Checkpoint::read(other.as_bytes(), "c").unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let text = sample().to_text().replacen("tensor policy.w0 4 5", "tensor policy.w0 5 5", 1);
        assert!(Checkpoint::read(text.as_bytes(), "c").unwrap_err().to_string().contains("shape"));
    }
}
