//! MVTec-style dataset layout:
//!
//! ```text
//! root/<category>/train/good/*.png
//! root/<category>/test/<defect>/*.png          ("good" holds normal images)
//! root/<category>/ground_truth/<defect>/<stem>_mask.png
//! ```
//!
//! Any image may have a `<stem>.vtok` token file beside it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::imageops::FilterType;
use varad_core::tokenizer::{load_token_file, Image, TokenFile, TokenizerConfig, TokenizerMode};

use crate::config::TokenSource;

pub const GOOD: &str = "good";

/// One sample, known by its stem, with whichever files exist for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Item {
    pub stem: String,
    pub image: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
}

impl Item {
    pub fn display(&self) -> String {
        self.image
            .as_ref()
            .or(self.tokens.as_ref())
            .map_or_else(|| self.stem.clone(), |p| p.display().to_string())
    }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Items of one folder sorted by stem; images are `.png`, tokens `.vtok`.
pub fn list_items(dir: &Path) -> Result<Vec<Item>> {
    if !dir.is_dir() {
        bail!("directory not found: {}", dir.display());
    }
    let mut items: Vec<Item> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    for path in entries {
        let (is_image, is_tokens) = (has_ext(&path, "png"), has_ext(&path, "vtok"));
        if !is_image && !is_tokens {
            continue;
        }
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let idx = match items.iter().position(|i| i.stem == stem) {
            Some(i) => i,
            None => {
                items.push(Item {
                    stem,
                    image: None,
                    tokens: None,
                });
                items.len() - 1
            }
        };
        if is_image {
            items[idx].image = Some(path);
        } else {
            items[idx].tokens = Some(path);
        }
    }
    items.sort_by(|a, b| a.stem.cmp(&b.stem));
    Ok(items)
}

pub fn category_dir(root: &Path, category: &str) -> Result<PathBuf> {
    let dir = root.join(category);
    if !dir.is_dir() {
        bail!("category directory not found: {}", dir.display());
    }
    Ok(dir)
}

pub fn train_items(root: &Path, category: &str) -> Result<Vec<Item>> {
    let dir = category_dir(root, category)?.join("train").join(GOOD);
    let items = list_items(&dir)?;
    if items.is_empty() {
        bail!("no training images in {}", dir.display());
    }
    Ok(items)
}

/// A test item with its defect type and mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestItem {
    pub item: Item,
    pub defect: String,
    /// `None` for good images.
    pub mask: Option<PathBuf>,
}

impl TestItem {
    pub fn anomalous(&self) -> bool {
        self.defect != GOOD
    }
}

/// Every test item; defect images without a mask are an error.
pub fn test_items(root: &Path, category: &str) -> Result<Vec<TestItem>> {
    let base = category_dir(root, category)?;
    let test = base.join("test");
    if !test.is_dir() {
        bail!("test directory not found: {}", test.display());
    }
    let mut defects: Vec<String> = std::fs::read_dir(&test)
        .with_context(|| format!("listing {}", test.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    defects.sort();
    let mut out = Vec::new();
    for defect in defects {
        for item in list_items(&test.join(&defect))? {
            let mask = if defect == GOOD {
                None
            } else {
                let path = base
                    .join("ground_truth")
                    .join(&defect)
                    .join(format!("{}_mask.png", item.stem));
                if !path.is_file() {
                    bail!("mask missing for {}: expected {}", item.display(), path.display());
                }
                Some(path)
            };
            out.push(TestItem {
                item,
                defect: defect.clone(),
                mask,
            });
        }
    }
    Ok(out)
}

/// Resolves `auto` by looking for token files among the items.
pub fn resolve_mode(source: TokenSource, items: &[Item]) -> TokenizerMode {
    match source {
        TokenSource::Builtin => TokenizerMode::Builtin,
        TokenSource::Imported => TokenizerMode::Imported,
        TokenSource::Auto if items.iter().any(|i| i.tokens.is_some()) => TokenizerMode::Imported,
        TokenSource::Auto => TokenizerMode::Builtin,
    }
}

/// RGB image resized to the configured size (when it differs) and normalized.
pub fn load_image(path: &Path, cfg: &TokenizerConfig) -> Result<Image> {
    let img = image::open(path)
        .with_context(|| format!("reading image {}", path.display()))?
        .to_rgb8();
    let [h, w] = cfg.image_size;
    let img = if (img.height() as usize, img.width() as usize) == (h, w) {
        img
    } else {
        image::imageops::resize(&img, w as u32, h as u32, FilterType::Triangle)
    };
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c * h + y as usize) * w + x as usize] = px[c] as f32 / 255.0;
        }
    }
    let mut image = Image::new(h, w, data)?;
    image.normalize(&cfg.mean, &cfg.std);
    Ok(image)
}

/// Binary mask (`> 127`), nearest-neighbour resized to `(h, w)`.
pub fn load_mask(path: &Path, (h, w): (usize, usize)) -> Result<Vec<bool>> {
    let img = image::open(path)
        .with_context(|| format!("reading mask {}", path.display()))?
        .to_luma8();
    let img = if (img.height() as usize, img.width() as usize) == (h, w) {
        img
    } else {
        image::imageops::resize(&img, w as u32, h as u32, FilterType::Nearest)
    };
    Ok(img.pixels().map(|p| p[0] > 127).collect())
}

pub enum Loaded {
    Image(Image),
    Tokens(TokenFile),
}

pub fn load_item(item: &Item, mode: TokenizerMode, cfg: &TokenizerConfig) -> Result<Loaded> {
    match mode {
        TokenizerMode::Builtin => {
            let path = item
                .image
                .as_ref()
                .with_context(|| format!("no image file for {}", item.display()))?;
            Ok(Loaded::Image(load_image(path, cfg)?))
        }
        TokenizerMode::Imported => {
            let path = item
                .tokens
                .as_ref()
                .with_context(|| format!("no token file for {}", item.display()))?;
            let file = load_token_file(path).with_context(|| format!("reading tokens {}", path.display()))?;
            Ok(Loaded::Tokens(file))
        }
    }
}

/// An input path given on the command line, as an item.
pub fn item_for_path(path: &Path) -> Item {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let sibling = |ext: &str| {
        let p = path.with_extension(ext);
        p.is_file().then_some(p)
    };
    if has_ext(path, "vtok") {
        Item {
            stem,
            image: sibling("png"),
            tokens: Some(path.to_path_buf()),
        }
    } else {
        Item {
            stem,
            image: Some(path.to_path_buf()),
            tokens: sibling("vtok"),
        }
    }
}
