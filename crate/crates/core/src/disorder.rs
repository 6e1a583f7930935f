//! Coupler disorder: Gaussian native bonds, bimodal small-world bonds.
//!
//! Every coupling is a pure function of `(instance_seed, edge_index)`: the
//! generator is ChaCha8 seeded with `instance_seed`, positioned at word
//! `4 * edge_index`, from which two `u64` words `a`, `b` are read.
//!
//! * native edge: Box-Muller, `u1 = ((a >> 11) + 1) * 2^-53` in `(0, 1]`,
//!   `u2 = (b >> 11) * 2^-53` in `[0, 1)`,
//!   `J = sqrt(-2 ln u1) * cos(2 pi u2)`;
//! * small-world edge: `J = +1` if the top bit of `a` is clear, else `-1`.
//!
//! Instance seeds are derived from a master seed and an instance index with
//! [`instance_seed`], so any instance can be rebuilt on its own.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{fmt_exact, parse_real, Real};
use crate::topology::{EdgeKind, HardwareGraph};

const HEADER: &str = "# swglass-instance v1";

#[derive(Debug, Clone, PartialEq)]
pub struct DisorderInstance<R> {
    pub graph_hash: String,
    pub instance_seed: u64,
    /// One value per graph edge, in the graph's edge order.
    pub couplings: Vec<R>,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of instance `index` under `master`.
pub fn instance_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn edge_words(seed: u64, edge: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(4 * edge as u128);
    (rng.next_u64(), rng.next_u64())
}

/// Standard normal draw for native edge `edge` of instance `seed`.
pub fn gaussian_coupling(seed: u64, edge: usize) -> f64 {
    let (a, b) = edge_words(seed, edge);
    let scale = 1.0 / (1u64 << 53) as f64;
    let u1 = ((a >> 11) + 1) as f64 * scale;
    let u2 = (b >> 11) as f64 * scale;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `+1` or `-1` with equal probability for small-world edge `edge`.
pub fn bimodal_coupling(seed: u64, edge: usize) -> f64 {
    let (a, _) = edge_words(seed, edge);
    if a >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Draws couplings for every edge of `g` (small-world placement included).
pub fn sample_instance<R: Real>(g: &HardwareGraph, instance_seed: u64) -> DisorderInstance<R> {
    let couplings = g
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            R::of(match e.kind {
                EdgeKind::SmallWorld => bimodal_coupling(instance_seed, i),
                _ => gaussian_coupling(instance_seed, i),
            })
        })
        .collect();
    DisorderInstance {
        graph_hash: g.content_hash(),
        instance_seed,
        couplings,
    }
}

impl<R: Real> DisorderInstance<R> {
    /// Builds an instance from explicit values, checked against `g`.
    pub fn from_couplings(g: &HardwareGraph, instance_seed: u64, couplings: Vec<R>) -> Result<Self> {
        if couplings.len() != g.edges().len() {
            return Err(Error::SizeMismatch {
                expected: g.edges().len(),
                found: couplings.len(),
            });
        }
        let inst = DisorderInstance {
            graph_hash: g.content_hash(),
            instance_seed,
            couplings,
        };
        inst.check_against(g)?;
        Ok(inst)
    }

    pub fn len(&self) -> usize {
        self.couplings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.couplings.is_empty()
    }

    pub fn coupling(&self, edge: usize) -> R {
        self.couplings[edge]
    }

    /// Fails unless the instance was drawn for `g` and respects its bond
    /// classes.
    pub fn check_against(&self, g: &HardwareGraph) -> Result<()> {
        if self.graph_hash != g.content_hash() {
            return Err(Error::Mismatch(format!(
                "instance belongs to graph {}, not {}",
                self.graph_hash,
                g.content_hash()
            )));
        }
        if self.couplings.len() != g.edges().len() {
            return Err(Error::SizeMismatch {
                expected: g.edges().len(),
                found: self.couplings.len(),
            });
        }
        for (i, (e, &j)) in g.edges().iter().zip(&self.couplings).enumerate() {
            if !j.is_finite() {
                return Err(Error::malformed("instance", format!("edge {i} has coupling {j}")));
            }
            if e.kind == EdgeKind::SmallWorld && j.abs() != R::one() {
                return Err(Error::malformed(
                    "instance",
                    format!("small-world edge {i} has coupling {j}, expected +-1"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_text(&self, g: &HardwareGraph) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "graph_hash {}", self.graph_hash);
        let _ = writeln!(out, "instance_seed {}", self.instance_seed);
        let _ = writeln!(out, "edges {}", self.couplings.len());
        for (i, (e, &j)) in g.edges().iter().zip(&self.couplings).enumerate() {
            let _ = writeln!(out, "{i} {} {} {}", e.a, e.b, fmt_exact(j));
        }
        out.push_str("end\n");
        out
    }

    /// Parses `text` and checks it against `g`. Nothing is returned unless
    /// the whole file, including its `end` marker, is valid.
    pub fn from_text(text: &str, g: &HardwareGraph) -> Result<Self> {
        let bad = |reason: String| Error::malformed("instance file", reason);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(HEADER) {
            return Err(bad("missing header line".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(format!("expected {key}, got {line:?}")))
        };
        let graph_hash = field("graph_hash")?;
        let instance_seed = field("instance_seed")?
            .parse::<u64>()
            .map_err(|e| bad(format!("instance_seed: {e}")))?;
        let count = field("edges")?
            .parse::<usize>()
            .map_err(|e| bad(format!("edge count: {e}")))?;
        if graph_hash != g.content_hash() {
            return Err(Error::Mismatch(format!(
                "instance file references graph {graph_hash}, loaded graph is {}",
                g.content_hash()
            )));
        }
        if count != g.edges().len() {
            return Err(Error::SizeMismatch {
                expected: g.edges().len(),
                found: count,
            });
        }
        let mut couplings = vec![None; count];
        let mut ended = false;
        for line in lines.by_ref() {
            if line == "end" {
                ended = true;
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [idx, a, b, j] = parts[..] else {
                return Err(bad(format!("bad edge line {line:?}")));
            };
            let idx: usize = idx.parse().map_err(|_| bad(format!("bad edge index in {line:?}")))?;
            let edge = g
                .edges()
                .get(idx)
                .ok_or_else(|| Error::Mismatch(format!("edge {idx} does not exist in the graph")))?;
            if a != edge.a.to_string() || b != edge.b.to_string() {
                return Err(Error::Mismatch(format!(
                    "edge {idx} is {}-{} in the graph, {a}-{b} in the file",
                    edge.a, edge.b
                )));
            }
            let j: R = parse_real(j).ok_or_else(|| bad(format!("bad coupling in {line:?}")))?;
            if couplings[idx].replace(j).is_some() {
                return Err(bad(format!("edge {idx} listed twice")));
            }
        }
        if !ended {
            return Err(bad("truncated: no end marker".into()));
        }
        if lines.next().is_some() {
            return Err(bad("content after end marker".into()));
        }
        let couplings = couplings
            .into_iter()
            .enumerate()
            .map(|(i, j)| j.ok_or_else(|| bad(format!("edge {i} missing"))))
            .collect::<Result<Vec<R>>>()?;
        let inst = DisorderInstance {
            graph_hash,
            instance_seed,
            couplings,
        };
        inst.check_against(g)?;
        Ok(inst)
    }

    /// SHA-256 of the serialized instance.
    pub fn content_hash(&self, g: &HardwareGraph) -> String {
        hex::encode(Sha256::digest(self.to_text(g).as_bytes()))
    }

    pub fn write(&self, g: &HardwareGraph, path: &Path) -> Result<()> {
        fs::write(path, self.to_text(g)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, g: &HardwareGraph) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, g)
    }
}
