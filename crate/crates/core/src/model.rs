//! Versioned text model format.
//!
//! ```text
//! TRIPLETNET v1 dim=<d> alpha=<margin> zscore=<0|1>
//! config epochs=.. triplets_per_epoch=.. batch_size=.. learning_rate=.. momentum=.. seed=.. strategy=.. allow_fallback=.. standardize=.. completed=..   (optional)
//! mean\t<d values>                                   (when zscore=1)
//! std\t<d values>                                    (when zscore=1)
//! W1
//! <d rows of d tab-separated values>
//! b1
//! <1 row>
//! W2
//! <d rows>
//! b2
//! <1 row>
//! ```
//!
//! Floats are written in shortest round-trip scientific notation, so
//! load → save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::trainer::TrainConfig;
use crate::transform::ZScoreStats;

pub const MODEL_MAGIC: &str = "TRIPLETNET";
pub const MODEL_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: NetworkParams,
    pub margin: f64,
    pub zscore: Option<ZScoreStats>,
    pub config: Option<TrainConfig>,
    pub epochs_completed: Option<usize>,
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        write!(out, "{v:e}").unwrap();
    }
    out.push('\n');
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))
    }

    fn peek_starts_with(&mut self, prefix: &str) -> bool {
        self.inner.peek().is_some_and(|(_, l)| l.starts_with(prefix))
    }

    fn row(&mut self, what: &str, expected: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next(what)?;
        let values = line
            .split('\t')
            .map(|c| c.parse::<f64>().map_err(|_| fmt_err(n, format!("bad number '{c}' in {what}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != expected {
            return Err(fmt_err(n, format!("{what} has {} values, expected {expected}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(fmt_err(n, format!("non-finite value in {what}")));
        }
        Ok(values)
    }

    fn label(&mut self, label: &str) -> Result<()> {
        let (n, line) = self.next(label)?;
        if line != label {
            return Err(fmt_err(n, format!("expected section '{label}', found '{line}'")));
        }
        Ok(())
    }

    fn matrix(&mut self, label: &str, d: usize) -> Result<Vec<f64>> {
        self.label(label)?;
        let mut m = Vec::with_capacity(d * d);
        for _ in 0..d {
            m.extend(self.row(label, d)?);
        }
        Ok(m)
    }
}

fn key_values(line: &str, n: usize) -> Result<Vec<(&str, &str)>> {
    line.split_whitespace()
        .map(|kv| kv.split_once('=').ok_or_else(|| fmt_err(n, format!("expected key=value, found '{kv}'"))))
        .collect()
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, n: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| fmt_err(n, format!("invalid value '{value}' for {key}")))
}

fn parse_flag(key: &str, value: &str, n: usize) -> Result<bool> {
    match value {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(fmt_err(n, format!("{key} must be 0 or 1, found '{value}'"))),
    }
}

impl ModelFile {
    pub fn new(params: NetworkParams, margin: f64) -> Self {
        ModelFile {
            params,
            margin,
            zscore: None,
            config: None,
            epochs_completed: None,
        }
    }

    pub fn to_text(&self) -> String {
        let d = self.params.dim;
        let mut out = String::new();
        writeln!(
            out,
            "{MODEL_MAGIC} {MODEL_VERSION} dim={d} alpha={} zscore={}",
            self.margin,
            u8::from(self.zscore.is_some())
        )
        .unwrap();
        if let Some(c) = &self.config {
            write!(
                out,
                "config epochs={} triplets_per_epoch={} batch_size={} learning_rate={} momentum={} seed={} strategy={} allow_fallback={} standardize={}",
                c.epochs,
                c.triplets_per_epoch,
                c.batch_size,
                c.learning_rate,
                c.momentum,
                c.seed,
                c.strategy.as_str(),
                u8::from(c.allow_fallback),
                u8::from(c.standardize),
            )
            .unwrap();
            if let Some(done) = self.epochs_completed {
                write!(out, " completed={done}").unwrap();
            }
            out.push('\n');
        }
        if let Some(z) = &self.zscore {
            out.push_str("mean\t");
            push_row(&mut out, &z.mean);
            out.push_str("std\t");
            push_row(&mut out, &z.std);
        }
        for (name, tensor, rows) in [
            ("W1", &self.params.w1, d),
            ("b1", &self.params.b1, 1),
            ("W2", &self.params.w2, d),
            ("b2", &self.params.b2, 1),
        ] {
            out.push_str(name);
            out.push('\n');
            for r in 0..rows {
                push_row(&mut out, &tensor[r * d..(r + 1) * d]);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate().peekable(),
        };
        let (n, header) = lines.next("header")?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some(MODEL_MAGIC) {
            return Err(fmt_err(n, format!("not a {MODEL_MAGIC} model file")));
        }
        match tokens.next() {
            Some(MODEL_VERSION) => {}
            Some(v) => return Err(fmt_err(n, format!("unsupported model version '{v}', expected {MODEL_VERSION}"))),
            None => return Err(fmt_err(n, "missing version")),
        }
        let rest: Vec<&str> = tokens.collect();
        let (mut dim, mut margin, mut zscore) = (None, None, None);
        for (k, v) in key_values(&rest.join(" "), n)? {
            match k {
                "dim" => dim = Some(parse_value::<usize>(k, v, n)?),
                "alpha" => margin = Some(parse_value::<f64>(k, v, n)?),
                "zscore" => zscore = Some(parse_flag(k, v, n)?),
                other => return Err(fmt_err(n, format!("unknown header field '{other}'"))),
            }
        }
        let d = dim.filter(|&d| d > 0).ok_or_else(|| fmt_err(n, "missing or zero dim"))?;
        let margin = margin.ok_or_else(|| fmt_err(n, "missing alpha"))?;
        let has_zscore = zscore.ok_or_else(|| fmt_err(n, "missing zscore flag"))?;

        let mut config = None;
        let mut epochs_completed = None;
        if lines.peek_starts_with("config ") {
            let (n, line) = lines.next("config")?;
            let mut c = TrainConfig::default();
            let mut seen = 0;
            for (k, v) in key_values(&line["config ".len()..], n)? {
                seen += 1;
                match k {
                    "epochs" => c.epochs = parse_value(k, v, n)?,
                    "triplets_per_epoch" => c.triplets_per_epoch = parse_value(k, v, n)?,
                    "batch_size" => c.batch_size = parse_value(k, v, n)?,
                    "learning_rate" => c.learning_rate = parse_value(k, v, n)?,
                    "momentum" => c.momentum = parse_value(k, v, n)?,
                    "seed" => c.seed = parse_value(k, v, n)?,
                    "strategy" => c.strategy = v.parse().map_err(|_| fmt_err(n, format!("bad strategy '{v}'")))?,
                    "allow_fallback" => c.allow_fallback = parse_flag(k, v, n)?,
                    "standardize" => c.standardize = parse_flag(k, v, n)?,
                    "completed" => {
                        seen -= 1;
                        epochs_completed = Some(parse_value(k, v, n)?);
                    }
                    other => return Err(fmt_err(n, format!("unknown config field '{other}'"))),
                }
            }
            if seen != 9 {
                return Err(fmt_err(n, "incomplete config line"));
            }
            c.margin = margin;
            config = Some(c);
        }

        let zscore = if has_zscore {
            let mut stat_row = |label: &str| -> Result<Vec<f64>> {
                let (n, line) = lines.next(label)?;
                let body = line
                    .strip_prefix(label)
                    .and_then(|s| s.strip_prefix('\t'))
                    .ok_or_else(|| fmt_err(n, format!("expected '{label}' row")))?;
                let values = body
                    .split('\t')
                    .map(|c| c.parse::<f64>().map_err(|_| fmt_err(n, format!("bad number '{c}'"))))
                    .collect::<Result<Vec<_>>>()?;
                if values.len() != d || values.iter().any(|v| !v.is_finite()) {
                    return Err(fmt_err(n, format!("{label} row must hold {d} finite values")));
                }
                Ok(values)
            };
            let mean = stat_row("mean")?;
            let std = stat_row("std")?;
            if std.iter().any(|&s| s < 0.0) {
                return Err(Error::Format("negative standard deviation".into()));
            }
            Some(ZScoreStats { mean, std })
        } else {
            None
        };

        let w1 = lines.matrix("W1", d)?;
        lines.label("b1")?;
        let b1 = lines.row("b1", d)?;
        let w2 = lines.matrix("W2", d)?;
        lines.label("b2")?;
        let b2 = lines.row("b2", d)?;
        if let Some((n, _)) = lines.inner.next() {
            return Err(fmt_err(n + 1, "trailing content after b2"));
        }
        Ok(ModelFile {
            params: NetworkParams { dim: d, w1, b1, w2, b2 },
            margin,
            zscore,
            config,
            epochs_completed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Embeds a raw feature vector: optional z-score, then the network.
    pub fn embed(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match &self.zscore {
            Some(z) => self.params.forward(&z.apply(raw)?),
            None => self.params.forward(raw),
        }
    }
}
