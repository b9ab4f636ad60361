//! Unsupervised symbol segmentation of page images.
//!
//! The pipeline binarizes with Sauvola's local threshold, finds text lines
//! as peaks of the horizontal projection profile, labels 8-connected
//! components inside each line, and finally merges components whose
//! bounding boxes nearly touch (dots, accents and other detached parts).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("image must be at least 1x1".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Input(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| 255 - p).collect(),
        }
    }

    /// Loads any format the `image` crate decodes (PNG, PGM, ...) as luma.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }
}

/// Foreground mask; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::Input(format!(
                "{} mask values for a {width}x{height} image",
                mask.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.mask[y * self.width + x] = v;
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count_foreground(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Black ink on white background.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.mask.iter().map(|&m| if m { 0 } else { 255 }).collect(),
        }
    }
}

/// Which intensity extreme carries the ink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    DarkOnLight,
    LightOnDark,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SauvolaParams {
    pub window: usize,
    pub k: f64,
    pub r: f64,
    pub polarity: Polarity,
}

impl Default for SauvolaParams {
    fn default() -> Self {
        Self {
            window: 31,
            k: 0.2,
            r: 128.0,
            polarity: Polarity::DarkOnLight,
        }
    }
}

/// Sauvola thresholding: a pixel is ink iff its intensity is strictly below
/// `m * (1 + k * (s / r - 1))`, with `m` and `s` the mean and standard
/// deviation over the window clipped to the image.
pub fn sauvola_binarize(img: &GrayImage, params: &SauvolaParams) -> Result<BinaryImage> {
    if params.window < 3 || params.window.is_multiple_of(2) {
        return Err(Error::Param(format!(
            "window must be odd and >= 3, got {}",
            params.window
        )));
    }
    if !(params.r > 0.0) || !params.k.is_finite() {
        return Err(Error::Param(
            "Sauvola R must be positive and k finite".into(),
        ));
    }
    let source;
    let img = match params.polarity {
        Polarity::DarkOnLight => img,
        Polarity::LightOnDark => {
            source = img.inverted();
            &source
        }
    };
    let (w, h) = (img.width, img.height);
    // Summed-area tables with a zero row/column; exact in u64.
    let stride = w + 1;
    let mut sum = vec![0u64; stride * (h + 1)];
    let mut sq = vec![0u64; stride * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        let mut row_sq = 0u64;
        for x in 0..w {
            let v = img.get(x, y) as u64;
            row_sum += v;
            row_sq += v * v;
            sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row_sum;
            sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
        }
    }
    let rect = |t: &[u64], x0: usize, y0: usize, x1: usize, y1: usize| {
        t[y1 * stride + x1] + t[y0 * stride + x0] - t[y0 * stride + x1] - t[y1 * stride + x0]
    };
    let half = params.window / 2;
    let mut mask = vec![false; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(half);
        let y1 = (y + half + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(half);
            let x1 = (x + half + 1).min(w);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let s1 = rect(&sum, x0, y0, x1, y1) as f64;
            let s2 = rect(&sq, x0, y0, x1, y1) as f64;
            let mean = s1 / n;
            let var = (s2 / n - mean * mean).max(0.0);
            let threshold = mean * (1.0 + params.k * (var.sqrt() / params.r - 1.0));
            mask[y * w + x] = (img.get(x, y) as f64) < threshold;
        }
    }
    Ok(BinaryImage {
        width: w,
        height: h,
        mask,
    })
}

/// Text line as a half-open row range `[y_top, y_bottom)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineBand {
    pub y_top: usize,
    pub y_bottom: usize,
}

impl LineBand {
    pub fn height(&self) -> usize {
        self.y_bottom - self.y_top
    }
}

/// Foreground pixels per row.
pub fn horizontal_profile(bin: &BinaryImage) -> Vec<usize> {
    bin.mask
        .chunks_exact(bin.width.max(1))
        .map(|row| row.iter().filter(|&&m| m).count())
        .collect()
}

/// Half the median length of the non-blank row runs, at least 1.
pub fn default_min_dist(profile: &[usize]) -> usize {
    let mut runs = Vec::new();
    let mut run = 0usize;
    for &v in profile {
        if v > 0 {
            run += 1;
        } else if run > 0 {
            runs.push(run);
            run = 0;
        }
    }
    if run > 0 {
        runs.push(run);
    }
    if runs.is_empty() {
        return 1;
    }
    runs.sort_unstable();
    ((runs[runs.len() / 2] as f64 * 0.5).round() as usize).max(1)
}

/// Rows whose profile value is a plateau maximum, thresholded and thinned
/// so that kept peaks are at least `min_dist` rows apart (higher peaks win).
pub fn profile_peaks(profile: &[usize], min_dist: usize, rel_threshold: f64) -> Vec<usize> {
    let max = profile.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Vec::new();
    }
    let threshold = rel_threshold * max as f64;
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < profile.len() {
        let mut j = i;
        while j + 1 < profile.len() && profile[j + 1] == profile[i] {
            j += 1;
        }
        let v = profile[i];
        let rises = i == 0 || profile[i - 1] < v;
        let falls = j + 1 == profile.len() || profile[j + 1] < v;
        if v > 0 && rises && falls && v as f64 >= threshold {
            candidates.push((i + j) / 2);
        }
        i = j + 1;
    }
    candidates.sort_by(|&a, &b| profile[b].cmp(&profile[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= min_dist) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

/// A dip between two peaks separates lines only if it falls to this
/// fraction of the lower peak or below.
pub const VALLEY_RATIO: f64 = 0.5;

/// Drops the lower of two neighbouring peaks when the profile between them
/// never falls to a valley (see [`VALLEY_RATIO`]).
fn merge_shallow_peaks(profile: &[usize], peaks: &[usize]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::with_capacity(peaks.len());
    for &p in peaks {
        if let Some(&last) = kept.last() {
            let floor = (last + 1..p).map(|y| profile[y]).min().unwrap_or(0);
            let lower = profile[last].min(profile[p]);
            if floor as f64 > VALLEY_RATIO * lower as f64 {
                if profile[p] > profile[last] {
                    *kept.last_mut().expect("non-empty") = p;
                }
                continue;
            }
        }
        kept.push(p);
    }
    kept
}

/// Finds text lines from the horizontal projection profile.
///
/// Each kept peak grows into a band limited by blank rows, or by the
/// lowest profile row separating it from its neighbouring peak. Peaks
/// without a real valley between them are treated as one line. Bands are
/// disjoint and sorted top to bottom.
pub fn detect_lines(
    bin: &BinaryImage,
    min_dist: Option<usize>,
    rel_threshold: f64,
) -> Result<Vec<LineBand>> {
    if !(0.0..=1.0).contains(&rel_threshold) {
        return Err(Error::Param(format!(
            "rel_threshold must lie in [0, 1], got {rel_threshold}"
        )));
    }
    let profile = horizontal_profile(bin);
    let min_dist = min_dist
        .unwrap_or_else(|| default_min_dist(&profile))
        .max(1);
    let peaks = merge_shallow_peaks(&profile, &profile_peaks(&profile, min_dist, rel_threshold));
    let h = profile.len();
    let mut bands = Vec::with_capacity(peaks.len());
    for (n, &p) in peaks.iter().enumerate() {
        let top = match n.checked_sub(1).map(|m| peaks[m]) {
            Some(prev) => split_row(&profile, prev, p),
            None => {
                let mut t = p;
                while t > 0 && profile[t - 1] > 0 {
                    t -= 1;
                }
                t
            }
        };
        let bottom = match peaks.get(n + 1) {
            Some(&next) => split_row(&profile, p, next),
            None => {
                let mut b = p + 1;
                while b < h && profile[b] > 0 {
                    b += 1;
                }
                b
            }
        };
        // Between two peaks, blank rows belong to neither band.
        let top = match n.checked_sub(1).map(|m| peaks[m]) {
            Some(prev) => blank_edge_below(&profile, prev, p).unwrap_or(top),
            None => top,
        };
        let bottom = match peaks.get(n + 1) {
            Some(&next) => blank_edge_above(&profile, p, next).unwrap_or(bottom),
            None => bottom,
        };
        bands.push(LineBand {
            y_top: top,
            y_bottom: bottom,
        });
    }
    Ok(bands)
}

/// First row of the lower band when no blank row separates two peaks: the
/// valley (lowest row, topmost on ties) stays with the upper band.
fn split_row(profile: &[usize], upper: usize, lower: usize) -> usize {
    let valley = (upper + 1..lower)
        .min_by_key(|&y| (profile[y], y))
        .unwrap_or(upper);
    valley + 1
}

/// Bottom (exclusive) of the upper band when a blank row exists between peaks.
fn blank_edge_above(profile: &[usize], upper: usize, lower: usize) -> Option<usize> {
    (upper + 1..lower).find(|&y| profile[y] == 0)
}

/// Top of the lower band when a blank row exists between peaks.
fn blank_edge_below(profile: &[usize], upper: usize, lower: usize) -> Option<usize> {
    (upper + 1..lower)
        .rev()
        .find(|&y| profile[y] == 0)
        .map(|y| y + 1)
}

/// Axis-aligned box in page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    fn right(&self) -> usize {
        self.x + self.w
    }

    fn bottom(&self) -> usize {
        self.y + self.h
    }

    fn union(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    /// Whether the boxes, each grown by `gap / 2` on every side, intersect.
    pub fn near(&self, other: &BBox, gap: usize) -> bool {
        let g = gap as i64;
        let dx = (other.x as i64 - self.right() as i64).max(self.x as i64 - other.right() as i64);
        let dy = (other.y as i64 - self.bottom() as i64).max(self.y as i64 - other.bottom() as i64);
        dx < g && dy < g || (dx < 0 && dy < 0)
    }
}

/// A set of foreground pixels with its bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// `(x, y)` page coordinates in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BBox,
}

impl Component {
    fn from_pixels(mut pixels: Vec<(usize, usize)>) -> Self {
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Component {
            pixels,
            bbox: BBox {
                x: x0,
                y: y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
            },
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// 8-connected components, ordered by their first pixel in raster order.
pub fn connected_components(bin: &BinaryImage) -> Vec<Component> {
    let (w, h) = (bin.width, bin.height);
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            if !bin.get(x, y) {
                continue;
            }
            let here = y * w + x;
            // Already-visited neighbours: W, NW, N, NE.
            if x > 0 && bin.get(x - 1, y) {
                union(&mut parent, here, here - 1);
            }
            if y > 0 {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if bin.get(nx, y - 1) {
                        union(&mut parent, here, (y - 1) * w + nx);
                    }
                }
            }
        }
    }
    let mut slot = vec![usize::MAX; w * h];
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !bin.get(x, y) {
                continue;
            }
            let root = find(&mut parent, y * w + x);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push((x, y));
        }
    }
    groups.into_iter().map(Component::from_pixels).collect()
}

/// Transitively merges components whose boxes come within `gap` pixels of
/// each other, repeating until no box is near another. Output is sorted by
/// box x (then y).
pub fn merge_close(components: &[Component], gap: usize) -> Vec<Component> {
    let mut current: Vec<Component> = components.to_vec();
    loop {
        let n = current.len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in i + 1..n {
                if current[i].bbox.near(&current[j].bbox, gap) {
                    union(&mut parent, i, j);
                }
            }
        }
        let mut merged: Vec<Option<Component>> = vec![None; n];
        for (i, comp) in current.iter().enumerate() {
            let root = find(&mut parent, i);
            match &mut merged[root] {
                Some(acc) => {
                    acc.pixels.extend_from_slice(&comp.pixels);
                    acc.bbox = acc.bbox.union(&comp.bbox);
                }
                slot @ None => *slot = Some(comp.clone()),
            }
        }
        let next: Vec<Component> = merged
            .into_iter()
            .flatten()
            .map(|c| Component::from_pixels(c.pixels))
            .collect();
        let done = next.len() == n;
        current = next;
        if done {
            break;
        }
    }
    current.sort_by_key(|c| (c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h));
    current
}

/// One segmented glyph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolImage {
    /// Mask restricted to `bbox`.
    pub crop: BinaryImage,
    pub bbox: BBox,
    pub line_index: usize,
}

impl SymbolImage {
    pub fn from_component(c: &Component, line_index: usize) -> Self {
        let mut crop = BinaryImage::blank(c.bbox.w, c.bbox.h);
        for &(x, y) in &c.pixels {
            crop.set(x - c.bbox.x, y - c.bbox.y, true);
        }
        SymbolImage {
            crop,
            bbox: c.bbox,
            line_index,
        }
    }

    pub fn to_component(&self) -> Component {
        let mut pixels = Vec::new();
        for y in 0..self.crop.height {
            for x in 0..self.crop.width {
                if self.crop.get(x, y) {
                    pixels.push((self.bbox.x + x, self.bbox.y + y));
                }
            }
        }
        Component::from_pixels(pixels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub sauvola: SauvolaParams,
    /// Minimum distance between line peaks; `None` derives it from the page.
    pub min_dist: Option<usize>,
    pub rel_threshold: f64,
    /// Merge gap in pixels; `None` uses 15% of each band's height.
    pub merge_gap: Option<usize>,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            sauvola: SauvolaParams::default(),
            min_dist: None,
            rel_threshold: 0.2,
            merge_gap: None,
        }
    }
}

pub const DEFAULT_MERGE_FRACTION: f64 = 0.15;

fn band_components(bin: &BinaryImage, band: &LineBand) -> Vec<Component> {
    let rows = band.height();
    let sub = BinaryImage {
        width: bin.width,
        height: rows,
        mask: bin.mask[band.y_top * bin.width..band.y_bottom * bin.width].to_vec(),
    };
    connected_components(&sub)
        .into_iter()
        .map(|c| {
            let pixels = c
                .pixels
                .into_iter()
                .map(|(x, y)| (x, y + band.y_top))
                .collect();
            Component::from_pixels(pixels)
        })
        .collect()
}

/// Segments a binary page that has already been thresholded.
pub fn segment_binary(bin: &BinaryImage, params: &SegmentParams) -> Result<Vec<SymbolImage>> {
    let bands = detect_lines(bin, params.min_dist, params.rel_threshold)?;
    let mut symbols = Vec::new();
    for (line_index, band) in bands.iter().enumerate() {
        let gap = params
            .merge_gap
            .unwrap_or_else(|| (band.height() as f64 * DEFAULT_MERGE_FRACTION).round() as usize);
        let merged = merge_close(&band_components(bin, band), gap);
        symbols.extend(
            merged
                .iter()
                .map(|c| SymbolImage::from_component(c, line_index)),
        );
    }
    Ok(symbols)
}

/// Full pipeline: binarize, find lines, label components, merge close parts.
pub fn segment_page(img: &GrayImage, params: &SegmentParams) -> Result<Vec<SymbolImage>> {
    let bin = sauvola_binarize(img, &params.sauvola)?;
    segment_binary(&bin, params)
}

/// Entry of the crop index written next to symbol crops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropIndexEntry {
    pub page: String,
    pub line: usize,
    pub bbox: [usize; 4],
    pub file: String,
}

/// Writes one PNG per symbol into `out_dir`, returning the index entries.
pub fn write_crops(
    symbols: &[SymbolImage],
    page: &str,
    out_dir: &Path,
) -> Result<Vec<CropIndexEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(symbols.len());
    for (i, sym) in symbols.iter().enumerate() {
        let file = format!("{page}_{:03}_{:05}.png", sym.line_index, i);
        sym.crop.to_gray().save_png(out_dir.join(&file))?;
        entries.push(CropIndexEntry {
            page: page.to_string(),
            line: sym.line_index,
            bbox: [sym.bbox.x, sym.bbox.y, sym.bbox.w, sym.bbox.h],
            file,
        });
    }
    Ok(entries)
}

pub const CROP_INDEX_FILE: &str = "index.json";

pub fn write_crop_index(entries: &[CropIndexEntry], out_dir: &Path) -> Result<()> {
    let path = out_dir.join(CROP_INDEX_FILE);
    let text = serde_json::to_string_pretty(entries)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_crop_index(dir: &Path) -> Result<Vec<CropIndexEntry>> {
    let path = dir.join(CROP_INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a crop written by [`write_crops`]; dark pixels are ink.
pub fn load_crop(path: &Path) -> Result<BinaryImage> {
    let gray = GrayImage::load(path)?;
    let mask = gray.pixels.iter().map(|&p| p < 128).collect();
    BinaryImage::new(gray.width, gray.height, mask)
}
