//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic          4 bytes  "PCSC"
//! version        u32      currently 1
//! n_points       u32      cloud size N
//! latent_dim     u32      D
//! n_classes      u32      C
//! lambda_cls     f32      classification weight the model was trained with
//! task           u8       0 = object classification, 1 = clamp detection
//! fps_start      u8       0 = farthest-from-centroid start, 1 = index zero
//! reserved       u16      0
//! sa_layers      u32 count, then per layer:
//!                  u32 n_centroids (0 = global), u32 k_neighbors,
//!                  u32 width count, u32 widths...
//! head_widths    u32 count, u32 widths...   (hidden widths then D)
//! rec_hidden     u32 count, u32 widths...
//! cls_hidden     u32 count, u32 widths...
//! arrays         u32 count, then per array:
//!                  u32 name length, name bytes (utf-8),
//!                  u32 rows, u32 cols, f32 data (rows*cols)
//! ```
//!
//! Arrays appear in declaration order: every trainable parameter, then every
//! running-statistics buffer, then the transmit-power state
//! (`power_norm.running_mean`, `power_norm.running_var`). Names make the
//! file self-describing; loaders verify name, order, and shape.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use pcsc_core::channel::PowerNormState;
use pcsc_core::geometry::FpsStartRule;
use pcsc_core::model::{EncoderConfig, Model, ModelConfig, SaLayerSpec};
use pcsc_core::training::Task;

const MAGIC: &[u8; 4] = b"PCSC";
const VERSION: u32 = 1;

/// Header fields that are not part of the architecture itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub task: Task,
    pub lambda_cls: f64,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn widths(&mut self, ws: &[usize]) {
        self.u32(ws.len() as u32);
        for &w in ws {
            self.u32(w as u32);
        }
    }
    fn array(&mut self, name: &str, rows: usize, cols: usize, data: &[f32]) {
        debug_assert_eq!(rows * cols, data.len());
        self.u32(name.len() as u32);
        self.buf.extend_from_slice(name.as_bytes());
        self.u32(rows as u32);
        self.u32(cols as u32);
        for &v in data {
            self.f32(v);
        }
    }
}

/// Serializes a trained model plus channel state.
pub fn save_checkpoint(
    path: &Path,
    model: &mut Model<f32>,
    power_norm: &PowerNormState<f32>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let cfg = model.cfg.clone();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(cfg.n_points() as u32);
    w.u32(cfg.latent_dim() as u32);
    w.u32(cfg.n_classes as u32);
    w.f32(meta.lambda_cls as f32);
    w.buf.push(match meta.task {
        Task::Object => 0,
        Task::ClampDetection => 1,
    });
    w.buf.push(match cfg.encoder.fps_start {
        FpsStartRule::MaxCentroidDist => 0,
        FpsStartRule::IndexZero => 1,
    });
    w.buf.extend_from_slice(&0u16.to_le_bytes());

    w.u32(cfg.encoder.sa_layers.len() as u32);
    for spec in &cfg.encoder.sa_layers {
        w.u32(spec.n_centroids as u32);
        w.u32(spec.k_neighbors as u32);
        w.widths(&spec.mlp_widths);
    }
    w.widths(&cfg.encoder.head_widths);
    w.widths(&cfg.rec_hidden);
    w.widths(&cfg.cls_hidden);

    // Count then emit the arrays in declaration order.
    let mut n_arrays = 2u32; // power-norm state
    model.for_each_param(&mut |_| n_arrays += 1);
    model.for_each_buffer(&mut |_| n_arrays += 1);
    w.u32(n_arrays);
    model.for_each_param(&mut |p| w.array(&p.name, p.rows, p.cols, &p.value));
    model.for_each_buffer(&mut |b| w.array(&b.name, 1, b.value.len(), &b.value));
    w.array(
        "power_norm.running_mean",
        1,
        power_norm.running_mean.len(),
        &power_norm.running_mean,
    );
    w.array(
        "power_norm.running_var",
        1,
        power_norm.running_var.len(),
        &power_norm.running_var,
    );

    let tmp = path.with_extension("bin.tmp");
    fs::write(&tmp, &w.buf).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            bail!("{}: truncated checkpoint", self.path.display());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn widths(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n > 1024 {
            bail!("{}: implausible width count {n}", self.path.display());
        }
        (0..n).map(|_| Ok(self.u32()? as usize)).collect()
    }
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, PowerNormState<f32>, CheckpointMeta)> {
    let buf = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        bail!("{}: not a checkpoint (bad magic)", path.display());
    }
    let version = r.u32()?;
    if version != VERSION {
        bail!(
            "{}: unsupported checkpoint version {version} (expected {VERSION})",
            path.display()
        );
    }
    let n_points = r.u32()? as usize;
    let latent_dim = r.u32()? as usize;
    let n_classes = r.u32()? as usize;
    let lambda_cls = r.f32()? as f64;
    let task = match r.u8()? {
        0 => Task::Object,
        1 => Task::ClampDetection,
        t => bail!("{}: unknown task tag {t}", path.display()),
    };
    let fps_start = match r.u8()? {
        0 => FpsStartRule::MaxCentroidDist,
        1 => FpsStartRule::IndexZero,
        t => bail!("{}: unknown fps start tag {t}", path.display()),
    };
    r.take(2)?; // reserved

    let n_sa = r.u32()? as usize;
    let mut sa_layers = Vec::with_capacity(n_sa);
    for _ in 0..n_sa {
        let n_centroids = r.u32()? as usize;
        let k_neighbors = r.u32()? as usize;
        let mlp_widths = r.widths()?;
        sa_layers.push(SaLayerSpec {
            n_centroids,
            k_neighbors,
            mlp_widths,
        });
    }
    let head_widths = r.widths()?;
    let rec_hidden = r.widths()?;
    let cls_hidden = r.widths()?;

    let cfg = ModelConfig {
        encoder: EncoderConfig {
            n_points,
            sa_layers,
            head_widths,
            fps_start,
        },
        rec_hidden,
        cls_hidden,
        n_classes,
    };
    if cfg.latent_dim() != latent_dim {
        bail!("{}: header D disagrees with head widths", path.display());
    }
    let mut model = Model::new(cfg, 0).context("rebuilding model from header")?;
    let mut power_norm = PowerNormState::new(latent_dim);

    let n_arrays = r.u32()? as usize;
    let mut expected = 0usize;
    model.for_each_param(&mut |_| expected += 1);
    model.for_each_buffer(&mut |_| expected += 1);
    if n_arrays != expected + 2 {
        bail!(
            "{}: expected {} arrays, found {n_arrays}",
            path.display(),
            expected + 2
        );
    }

    let read_array = |r: &mut Reader, name: &str, len: usize, out: &mut [f32]| -> Result<()> {
        let n = r.u32()? as usize;
        let got = std::str::from_utf8(r.take(n)?)
            .with_context(|| format!("{}: non-utf8 array name", path.display()))?
            .to_string();
        if got != name {
            bail!("{}: expected array '{name}', found '{got}'", path.display());
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if rows * cols != len {
            bail!(
                "{}: array '{name}' has shape {rows}x{cols}, expected {len} values",
                path.display()
            );
        }
        for v in out.iter_mut() {
            *v = r.f32()?;
        }
        Ok(())
    };

    // Ordered name/size manifest first, then fill in a second pass (the
    // visitors borrow the model mutably).
    let mut names: Vec<(String, usize)> = Vec::new();
    model.for_each_param(&mut |p| names.push((p.name.clone(), p.len())));
    model.for_each_buffer(&mut |b| names.push((b.name.clone(), b.value.len())));

    let mut values: Vec<Vec<f32>> = Vec::with_capacity(names.len());
    for (name, len) in &names {
        let mut out = vec![0f32; *len];
        read_array(&mut r, name, *len, &mut out)?;
        values.push(out);
    }
    let mut idx = 0;
    model.for_each_param(&mut |p| {
        p.value.copy_from_slice(&values[idx]);
        idx += 1;
    });
    model.for_each_buffer(&mut |b| {
        b.value.copy_from_slice(&values[idx]);
        idx += 1;
    });

    read_array(
        &mut r,
        "power_norm.running_mean",
        latent_dim,
        &mut power_norm.running_mean,
    )?;
    read_array(
        &mut r,
        "power_norm.running_var",
        latent_dim,
        &mut power_norm.running_var,
    )?;
    if r.pos != buf.len() {
        bail!("{}: trailing bytes after arrays", path.display());
    }

    Ok((model, power_norm, CheckpointMeta { task, lambda_cls }))
}
