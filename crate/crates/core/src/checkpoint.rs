//! Line-oriented text checkpoints.
//!
//! ```text
//! sic-checkpoint 1
//! episode 500
//! config 3
//! <three verbatim lines of the config snapshot>
//! rng env <64 hex seed digits> <stream> <word position>
//! net team0/policy0 4
//! tensor 8 1
//! <8 values>
//! ...
//! adam <step> <beta1> <beta2> <epsilon>
//! <m values>
//! <v values>
//! end
//! ```
//!
//! Floats are written with 17 significant digits, which parse back to the
//! same bits, so save → load → save is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::algo::{NetMut, TeamLearner};
use crate::autodiff::{AdamState, Tensor};
use crate::error::{Error, Result};
use crate::rng::RngState;

const MAGIC: &str = "sic-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBlock {
    pub name: String,
    pub params: Vec<Tensor>,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Config snapshot in its own text form.
    pub config: String,
    pub episode: u64,
    pub rng: Vec<(String, RngState)>,
    pub networks: Vec<NetworkBlock>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_values(out: &mut String, values: &[f64]) {
    let line: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

impl Checkpoint {
    /// Snapshot of every network of `learners`.
    pub fn capture(config: String, episode: u64, rng: Vec<(String, RngState)>, learners: &[Box<dyn TeamLearner>]) -> Self {
        let networks = learners
            .iter()
            .flat_map(|l| l.networks())
            .map(|n| NetworkBlock {
                name: n.name,
                params: n
                    .net
                    .params()
                    .iter()
                    .map(|t| Tensor::from_values(&t.shape, t.values.clone()).expect("consistent tensor"))
                    .collect(),
                adam: n.adam.cloned(),
            })
            .collect();
        Self {
            config,
            episode,
            rng,
            networks,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let _ = writeln!(out, "episode {}", self.episode);
        let lines: Vec<&str> = self.config.lines().collect();
        let _ = writeln!(out, "config {}", lines.len());
        for l in lines {
            out.push_str(l);
            out.push('\n');
        }
        for (label, s) in &self.rng {
            let seed: String = s.seed.iter().map(|b| format!("{b:02x}")).collect();
            let _ = writeln!(out, "rng {label} {seed} {} {}", s.stream, s.word_pos);
        }
        for net in &self.networks {
            let _ = writeln!(out, "net {} {}", net.name, net.params.len());
            for t in &net.params {
                let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "tensor {}", dims.join(" "));
                push_values(&mut out, &t.values);
            }
            if let Some(a) = &net.adam {
                let _ = writeln!(
                    out,
                    "adam {} {} {} {}",
                    a.step_count,
                    fmt_f64(a.beta1),
                    fmt_f64(a.beta2),
                    fmt_f64(a.epsilon)
                );
                push_values(&mut out, &a.m);
                push_values(&mut out, &a.v);
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("truncated before {what}")))
        };
        if next("header")? != MAGIC {
            return Err(Error::Checkpoint("missing header".into()));
        }
        let episode = field(next("episode")?, "episode")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad episode counter".into()))?;
        let n_config: usize = parse_num(field(next("config")?, "config")?)?;
        let mut config_lines = Vec::with_capacity(n_config);
        for _ in 0..n_config {
            config_lines.push(next("config body")?);
        }
        let mut config = config_lines.join("\n");
        if n_config > 0 {
            config.push('\n');
        }

        let mut rng = Vec::new();
        let mut networks: Vec<NetworkBlock> = Vec::new();
        loop {
            let line = next("end marker")?;
            let mut parts = line.split(' ');
            match parts.next() {
                Some("end") => break,
                Some("rng") => {
                    let p: Vec<&str> = parts.collect();
                    if p.len() != 4 || p[1].len() != 64 {
                        return Err(Error::Checkpoint(format!("bad rng line '{line}'")));
                    }
                    let mut seed = [0u8; 32];
                    for (i, b) in seed.iter_mut().enumerate() {
                        *b = u8::from_str_radix(&p[1][2 * i..2 * i + 2], 16)
                            .map_err(|_| Error::Checkpoint("bad rng seed".into()))?;
                    }
                    rng.push((
                        p[0].to_string(),
                        RngState {
                            seed,
                            stream: parse_num(p[2])?,
                            word_pos: parse_num(p[3])?,
                        },
                    ));
                }
                Some("net") => {
                    let p: Vec<&str> = parts.collect();
                    if p.len() != 2 {
                        return Err(Error::Checkpoint(format!("bad net line '{line}'")));
                    }
                    let n: usize = parse_num(p[1])?;
                    let mut params = Vec::with_capacity(n);
                    for _ in 0..n {
                        let header = next("tensor")?;
                        let dims = field(header, "tensor")?
                            .split(' ')
                            .map(parse_num)
                            .collect::<Result<Vec<usize>>>()?;
                        let values = parse_values(next("tensor values")?)?;
                        params.push(Tensor::from_values(&dims, values).map_err(|e| Error::Checkpoint(e.to_string()))?);
                    }
                    networks.push(NetworkBlock {
                        name: p[0].to_string(),
                        params,
                        adam: None,
                    });
                }
                Some("adam") => {
                    let p: Vec<&str> = parts.collect();
                    let net = networks
                        .last_mut()
                        .ok_or_else(|| Error::Checkpoint("optimizer state before any network".into()))?;
                    if p.len() != 4 {
                        return Err(Error::Checkpoint(format!("bad adam line '{line}'")));
                    }
                    let n: usize = net.params.iter().map(Tensor::len).sum();
                    let m = parse_values(next("adam m")?)?;
                    let v = parse_values(next("adam v")?)?;
                    if m.len() != n || v.len() != n {
                        return Err(Error::Checkpoint(format!("optimizer state of {} has the wrong size", net.name)));
                    }
                    net.adam = Some(AdamState {
                        m,
                        v,
                        step_count: parse_num(p[0])?,
                        beta1: parse_num(p[1])?,
                        beta2: parse_num(p[2])?,
                        epsilon: parse_num(p[3])?,
                    });
                }
                _ => return Err(Error::Checkpoint(format!("unexpected line '{line}'"))),
            }
        }
        Ok(Self {
            config,
            episode,
            rng,
            networks,
        })
    }

    /// Writes through a temporary file so an interrupted save never replaces
    /// a good checkpoint with a partial one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_text())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn network(&self, name: &str) -> Option<&NetworkBlock> {
        self.networks.iter().find(|n| n.name == name)
    }

    /// Copies parameters and optimizer states into `learners`. Every shape is
    /// checked before anything is written.
    pub fn apply(&self, learners: &mut [Box<dyn TeamLearner>]) -> Result<()> {
        let mut targets: Vec<NetMut<'_>> = learners.iter_mut().flat_map(|l| l.networks_mut()).collect();
        apply_blocks(&self.networks, &mut targets)
    }

    /// Copies only the networks of one learner.
    pub fn apply_to(&self, learner: &mut dyn TeamLearner) -> Result<()> {
        let mut targets = learner.networks_mut();
        apply_blocks(&self.networks, &mut targets)
    }
}

fn apply_blocks(blocks: &[NetworkBlock], targets: &mut [NetMut<'_>]) -> Result<()> {
    let mut plan = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let block = blocks
            .iter()
            .find(|b| b.name == t.name)
            .ok_or_else(|| Error::Checkpoint(format!("network {} missing", t.name)))?;
        let ours = t.net.params();
        if ours.len() != block.params.len() || ours.iter().zip(&block.params).any(|(a, b)| a.shape != b.shape) {
            return Err(Error::Checkpoint(format!("network {} has mismatched shapes", t.name)));
        }
        if t.adam.is_some() != block.adam.is_some() {
            return Err(Error::Checkpoint(format!("network {} optimizer state mismatch", t.name)));
        }
        plan.push((i, block));
    }
    for (i, block) in plan {
        let t = &mut targets[i];
        for (dst, src) in t.net.params_mut().iter_mut().zip(&block.params) {
            dst.values.copy_from_slice(&src.values);
            dst.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        if let (Some(dst), Some(src)) = (t.adam.as_deref_mut(), &block.adam) {
            *dst = src.clone();
        }
    }
    Ok(())
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Checkpoint(format!("expected '{key}', got '{line}'")))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("cannot parse number '{s}'")))
}

fn parse_values(line: &str) -> Result<Vec<f64>> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split(' ').map(parse_num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::{build_learner, Algorithm, TeamSpec, TrainConfig};
    use crate::rng::RunStreams;

    fn learners(seed: u64) -> Vec<Box<dyn TeamLearner>> {
        let spec = |team, agents| TeamSpec {
            team,
            agents,
            obs_dims: vec![4; 4],
            n_actions: 2,
        };
        vec![
            build_learner(Algorithm::SicRe, spec(0, 0..2), &TrainConfig::matrix_defaults(Algorithm::SicRe), seed).unwrap(),
            build_learner(Algorithm::IndRe, spec(1, 2..4), &TrainConfig::matrix_defaults(Algorithm::IndRe), seed).unwrap(),
        ]
    }

    fn sample() -> Checkpoint {
        let mut rng = RunStreams::new(9, 2);
        let _: u64 = rand::Rng::random(&mut rng.env);
        Checkpoint::capture("seed = 9\nepisodes = 10\n".into(), 7, rng.states(), &learners(1))
    }

    #[test]
    fn text_roundtrip_is_byte_identical() {
        let ck = sample();
        let text = ck.to_text();
        let back = Checkpoint::parse(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn awkward_floats_survive() {
        let mut ck = sample();
        ck.networks[0].params[0].values[0] = 0.1 + 0.2;
        ck.networks[0].params[0].values[1] = -1.0e-300;
        ck.networks[0].params[0].values[2] = f64::MIN_POSITIVE / 3.0;
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn truncation_is_rejected_without_mutation() {
        let text = sample().to_text();
        let cut = &text[..text.len() / 2];
        let err = Checkpoint::parse(cut);
        assert!(matches!(err, Err(Error::Checkpoint(_))));
    }

    #[test]
    fn apply_restores_parameters() {
        let ck = sample();
        let mut other = learners(2);
        assert_ne!(Checkpoint::capture(String::new(), 0, vec![], &other).networks, ck.networks);
        ck.apply(&mut other).unwrap();
        assert_eq!(Checkpoint::capture(String::new(), 0, vec![], &other).networks, ck.networks);
    }

    #[test]
    fn shape_mismatch_leaves_learners_untouched() {
        let mut ck = sample();
        let last = ck.networks.len() - 1;
        ck.networks[last].params[0] = Tensor::zeros(&[3, 3]);
        let mut target = learners(2);
        let before = Checkpoint::capture(String::new(), 0, vec![], &target);
        assert!(matches!(ck.apply(&mut target), Err(Error::Checkpoint(_))));
        assert_eq!(Checkpoint::capture(String::new(), 0, vec![], &target), before);
    }
}
