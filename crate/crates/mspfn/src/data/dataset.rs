//! Dataset manifests, clean/rain pair generation, and seeded patch sampling.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{crop, load_image, save_image};
use super::rain::{synth_rain, RainParams};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One clean/rain pair. Paths are stored relative to the manifest file and
/// resolved against its directory on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clean: PathBuf,
    pub rain: PathBuf,
    pub split: Split,
}

/// The on-disk format is a bare JSON array of `{clean, rain, split}` objects.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec_pretty(&self.entries).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let entries = serde_json::from_slice(&bytes).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Ok(DatasetManifest { entries })
    }

    /// Copy with relative entry paths joined onto the manifest's directory.
    pub fn resolved(&self, manifest_path: impl AsRef<Path>) -> Self {
        let base = manifest_path
            .as_ref()
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let join = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .map(|e| ManifestEntry {
                    clean: join(&e.clean),
                    rain: join(&e.rain),
                    split: e.split,
                })
                .collect(),
        }
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Entries of one split, or all of them, in manifest order.
    pub fn select(&self, split: Option<Split>) -> Vec<ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .cloned()
            .collect()
    }
}

/// Uniform sampling ranges for per-pair rain parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ParamRanges {
    pub angle_deg: (f64, f64),
    pub streak_length_px: (usize, usize),
    pub density: (f64, f64),
    pub intensity: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            angle_deg: (-30.0, 30.0),
            streak_length_px: (7, 15),
            density: (0.01, 0.03),
            intensity: (0.4, 0.8),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        let lo = RainParams {
            angle_deg: self.angle_deg.0,
            streak_length_px: self.streak_length_px.0,
            density: self.density.0,
            intensity: self.intensity.0,
            seed: 0,
        };
        let hi = RainParams {
            angle_deg: self.angle_deg.1,
            streak_length_px: self.streak_length_px.1,
            density: self.density.1,
            intensity: self.intensity.1,
            seed: 0,
        };
        lo.validate()?;
        hi.validate()?;
        if self.angle_deg.0 > self.angle_deg.1
            || self.streak_length_px.0 > self.streak_length_px.1
            || self.density.0 > self.density.1
            || self.intensity.0 > self.intensity.1
        {
            return Err(Error::invalid("param_ranges", "each range needs lo <= hi"));
        }
        Ok(())
    }

    /// Draw one parameter set. Consumes exactly five RNG values in a fixed
    /// order so dataset generation is reproducible.
    pub fn sample(&self, rng: &mut Rng) -> RainParams {
        let angle_deg = rng.uniform(self.angle_deg.0, self.angle_deg.1);
        let (llo, lhi) = self.streak_length_px;
        let streak_length_px = llo + rng.below(lhi - llo + 1);
        let density = rng.uniform(self.density.0, self.density.1);
        let intensity = rng.uniform(self.intensity.0, self.intensity.1);
        let seed = rng.next_u64();
        RainParams {
            angle_deg,
            streak_length_px,
            density,
            intensity,
            seed,
        }
    }
}

/// List the loadable images (.ppm/.png) in a directory, sorted by file name.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("ppm") | Some("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Generate `count` clean/rain pairs into `out_dir` (PNG), cycling through
/// the clean images found in `clean_dir`, and write `manifest.json` beside
/// them. When `test_every > 0`, every `test_every`-th pair is tagged as the
/// test split. Returns the manifest with paths resolved against `out_dir`.
pub fn make_dataset(
    clean_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    count: usize,
    ranges: &ParamRanges,
    seed: u64,
    test_every: usize,
) -> Result<DatasetManifest> {
    let (clean_dir, out_dir) = (clean_dir.as_ref(), out_dir.as_ref());
    ranges.validate()?;
    if count == 0 {
        return Err(Error::invalid("make_dataset", "count must be >= 1"));
    }
    let sources = list_images(clean_dir)?;
    if sources.is_empty() {
        return Err(Error::invalid(
            "make_dataset",
            format!("no .ppm or .png images found in {}", clean_dir.display()),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // Sample every pair's parameters from one sequential stream first, then
    // let the per-pair synthesis (internally deterministic) run in parallel.
    let mut rng = Rng::seed_from_u64(seed);
    let jobs: Vec<(usize, PathBuf, RainParams, Split)> = (0..count)
        .map(|i| {
            let split = if test_every > 0 && (i + 1) % test_every == 0 {
                Split::Test
            } else {
                Split::Train
            };
            (i, sources[i % sources.len()].clone(), ranges.sample(&mut rng), split)
        })
        .collect();

    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|(i, source, params, split)| {
            let clean = load_image(source)?;
            let rain = synth_rain(&clean, params)?;
            let clean_name = PathBuf::from(format!("clean_{i:04}.png"));
            let rain_name = PathBuf::from(format!("rain_{i:04}.png"));
            save_image(&clean, out_dir.join(&clean_name))?;
            save_image(&rain, out_dir.join(&rain_name))?;
            Ok(ManifestEntry {
                clean: clean_name,
                rain: rain_name,
                split: *split,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest { entries };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest.resolved(out_dir.join("manifest.json")))
}

/// Load manifest entries as `(rain, clean)` tensor pairs, checking that each
/// pair's dimensions match.
pub fn load_pair_tensors<E: Element>(
    entries: &[ManifestEntry],
) -> Result<Vec<(Tensor<E>, Tensor<E>)>> {
    entries
        .iter()
        .map(|e| {
            let clean = load_image(&e.clean)?;
            let rain = load_image(&e.rain)?;
            if clean.height() != rain.height() || clean.width() != rain.width() {
                return Err(Error::invalid(
                    "load_pair_tensors",
                    format!(
                        "pair dimensions differ: {} is {}x{}, {} is {}x{}",
                        e.clean.display(),
                        clean.height(),
                        clean.width(),
                        e.rain.display(),
                        rain.height(),
                        rain.width()
                    ),
                ));
            }
            Ok((rain.to_tensor(), clean.to_tensor()))
        })
        .collect()
}

/// Draw one `[batch, 3, patch, patch]` pair of (rain, clean) tensors with
/// identical aligned crops. Per sample the stream consumes: pair index, then
/// row offset, then column offset — keep that order stable, checkpoints rely
/// on replaying it.
pub fn sample_batch<E: Element>(
    pairs: &[(Tensor<E>, Tensor<E>)],
    patch: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<(Tensor<E>, Tensor<E>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("sample_batch", "no pairs to sample from"));
    }
    if patch == 0 || batch == 0 {
        return Err(Error::invalid("sample_batch", "patch and batch must be >= 1"));
    }
    for (rain, clean) in pairs {
        let [n, c, h, w] = rain.shape();
        if n != 1 || c != 3 || rain.shape() != clean.shape() {
            return Err(Error::invalid(
                "sample_batch",
                format!(
                    "pairs must be matching [1, 3, H, W] tensors, got {:?} and {:?}",
                    rain.shape(),
                    clean.shape()
                ),
            ));
        }
        if h < patch || w < patch {
            return Err(Error::invalid(
                "sample_batch",
                format!("patch {patch} exceeds image {h}x{w}"),
            ));
        }
    }
    let plane = patch * patch;
    let mut rain_out = vec![E::zero(); batch * 3 * plane];
    let mut clean_out = vec![E::zero(); batch * 3 * plane];
    for b in 0..batch {
        let idx = rng.below(pairs.len());
        let (rain, clean) = &pairs[idx];
        let [_, _, h, w] = rain.shape();
        let y0 = rng.below(h - patch + 1);
        let x0 = rng.below(w - patch + 1);
        let rain_patch = crop(rain, y0, x0, patch, patch)?;
        let clean_patch = crop(clean, y0, x0, patch, patch)?;
        rain_out[b * 3 * plane..(b + 1) * 3 * plane].copy_from_slice(rain_patch.data());
        clean_out[b * 3 * plane..(b + 1) * 3 * plane].copy_from_slice(clean_patch.data());
    }
    Ok((
        Tensor::from_vec([batch, 3, patch, patch], rain_out)?,
        Tensor::from_vec([batch, 3, patch, patch], clean_out)?,
    ))
}

/// Owning iterator over seeded aligned-crop batches.
pub struct PatchSampler<E: Element> {
    pairs: Vec<(Tensor<E>, Tensor<E>)>,
    patch: usize,
    batch: usize,
    rng: Rng,
}

impl<E: Element> PatchSampler<E> {
    pub fn new(
        pairs: Vec<(Tensor<E>, Tensor<E>)>,
        patch: usize,
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut probe = Rng::seed_from_u64(seed);
        // Validate eagerly so construction fails fast, not mid-training.
        sample_batch(&pairs, patch, batch, &mut probe)?;
        Ok(PatchSampler {
            pairs,
            patch,
            batch,
            rng: Rng::seed_from_u64(seed),
        })
    }

    pub fn next_batch(&mut self) -> Result<(Tensor<E>, Tensor<E>)> {
        sample_batch(&self.pairs, self.patch, self.batch, &mut self.rng)
    }
}
