//! Synthetic document pairs with a known amount of shared alphabet.
//!
//! Feature mode draws well-separated prototype vectors and scatters each
//! document's samples around the prototypes of its alphabet. Rendered mode
//! draws random polyline glyphs and typesets them onto page images so that
//! segmentation and descriptors can be exercised end to end.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSet, FeatureSource, RowMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::segment::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub alphabet_size_a: usize,
    pub alphabet_size_b: usize,
    pub shared: usize,
    pub dim: usize,
    pub spread: f64,
    pub separation: f64,
    pub samples_per_symbol: usize,
    pub seed: u64,
    /// Side of the cube prototypes are drawn from; derived from the
    /// prototype count and separation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet_size_a == 0 || self.alphabet_size_b == 0 {
            return Err(Error::Param("alphabet sizes must be >= 1".into()));
        }
        if self.shared > self.alphabet_size_a.min(self.alphabet_size_b) {
            return Err(Error::Param(format!(
                "shared {} exceeds the smaller alphabet",
                self.shared
            )));
        }
        if self.dim == 0 || self.samples_per_symbol == 0 {
            return Err(Error::Param(
                "dim and samples_per_symbol must be >= 1".into(),
            ));
        }
        if !(self.spread > 0.0) || !(self.separation > 0.0) {
            return Err(Error::Param(
                "spread and separation must be positive".into(),
            ));
        }
        if self.extent.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Param("extent must be positive".into()));
        }
        Ok(())
    }

    pub fn overlap(&self) -> f64 {
        self.shared as f64 / ((self.alphabet_size_a + self.alphabet_size_b) as f64 / 2.0)
    }

    fn prototype_count(&self) -> usize {
        self.alphabet_size_a + self.alphabet_size_b - self.shared
    }

    /// Prototype ids of document A: the shared ones first, then its own.
    pub fn alphabet_a(&self) -> Vec<usize> {
        (0..self.alphabet_size_a).collect()
    }

    /// Prototype ids of document B: the shared ones, then ids after A's.
    pub fn alphabet_b(&self) -> Vec<usize> {
        (0..self.shared)
            .chain(self.alphabet_size_a..self.prototype_count())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub a: FeatureSet,
    pub b: FeatureSet,
    pub overlap: f64,
    pub shared_ids: Vec<usize>,
    pub prototypes: RowMatrix,
    /// Prototype id of every row of `a`.
    pub truth_a: Vec<usize>,
    pub truth_b: Vec<usize>,
}

/// Ground-truth record written next to synthetic feature files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub overlap: f64,
    pub shared_ids: Vec<usize>,
}

impl SynthCorpus {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            overlap: self.overlap,
            shared_ids: self.shared_ids.clone(),
        }
    }
}

const MAX_ATTEMPTS: usize = 10_000;

/// Rejection-samples `count` points in a cube, pairwise at least `separation` apart.
fn draw_prototypes(
    count: usize,
    dim: usize,
    separation: f64,
    extent: Option<f64>,
    rng: &mut impl Rng,
) -> Result<RowMatrix> {
    let per_axis = (count as f64).powf(1.0 / dim as f64).ceil().max(1.0);
    let side = extent.unwrap_or(2.0 * separation * per_axis);
    let mut data: Vec<f64> = Vec::with_capacity(count * dim);
    let min_sq = separation * separation;
    for p in 0..count {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let cand: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * side).collect();
            let clear = data.chunks_exact(dim).all(|q| {
                q.iter()
                    .zip(&cand)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    >= min_sq
            });
            if clear {
                data.extend(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Feasibility(format!(
                "could not place prototype {p} of {count} at separation {separation} in {dim} dims"
            )));
        }
    }
    RowMatrix::new(count, dim, data)
}

fn scatter(
    id: &str,
    alphabet: &[usize],
    prototypes: &RowMatrix,
    spec: &SynthSpec,
    seed: u64,
) -> Result<(FeatureSet, Vec<usize>)> {
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, spec.spread).map_err(|e| Error::Param(e.to_string()))?;
    let mut data = Vec::with_capacity(alphabet.len() * spec.samples_per_symbol * spec.dim);
    let mut truth = Vec::with_capacity(alphabet.len() * spec.samples_per_symbol);
    for &p in alphabet {
        for _ in 0..spec.samples_per_symbol {
            data.extend(prototypes.row(p).iter().map(|c| c + noise.sample(&mut rng)));
            truth.push(p);
        }
    }
    let fs = FeatureSet::new(
        id,
        FeatureSource::External,
        RowMatrix::new(truth.len(), spec.dim, data)?,
    )?;
    Ok((fs, truth))
}

/// Generates documents `a` and `b` (ids `<prefix>a`, `<prefix>b`).
pub fn make_corpus_named(spec: &SynthSpec, prefix: &str) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = seeded(derive_seed(spec.seed, 0));
    let prototypes = draw_prototypes(
        spec.prototype_count(),
        spec.dim,
        spec.separation,
        spec.extent,
        &mut rng,
    )?;
    let (a, truth_a) = scatter(
        &format!("{prefix}a"),
        &spec.alphabet_a(),
        &prototypes,
        spec,
        derive_seed(spec.seed, 1),
    )?;
    let (b, truth_b) = scatter(
        &format!("{prefix}b"),
        &spec.alphabet_b(),
        &prototypes,
        spec,
        derive_seed(spec.seed, 2),
    )?;
    Ok(SynthCorpus {
        a,
        b,
        overlap: spec.overlap(),
        shared_ids: (0..spec.shared).collect(),
        prototypes,
        truth_a,
        truth_b,
    })
}

pub fn make_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    make_corpus_named(spec, "synth_")
}

/// A glyph as a polyline in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Glyph {
    pub points: Vec<(f64, f64)>,
}

/// Random connected polylines with 3 to 5 vertices.
pub fn random_glyphs(count: usize, seed: u64) -> Vec<Glyph> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let vertices = rng.random_range(3..=5);
            Glyph {
                points: (0..vertices)
                    .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)))
                    .collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    pub glyph_size: usize,
    /// Blank columns between neighbouring glyph cells.
    pub spacing: usize,
    /// Blank rows between lines.
    pub line_gap: usize,
    pub margin: usize,
    pub stroke: f64,
    /// Vertex jitter as a fraction of the glyph size.
    pub jitter: f64,
}

impl Default for PageLayout {
    fn default() -> Self {
        Self {
            glyph_size: 24,
            spacing: 14,
            line_gap: 18,
            margin: 12,
            stroke: 2.5,
            jitter: 0.03,
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Typesets `lines` of glyph ids (dark ink on white) with per-instance jitter.
pub fn render_page(
    glyphs: &[Glyph],
    lines: &[Vec<usize>],
    layout: &PageLayout,
    seed: u64,
) -> Result<GrayImage> {
    let cols = lines.iter().map(Vec::len).max().unwrap_or(0);
    let cell = layout.glyph_size + layout.spacing;
    let width = 2 * layout.margin + cols * cell;
    let height = 2 * layout.margin + lines.len() * (layout.glyph_size + layout.line_gap);
    let mut page = GrayImage::filled(width.max(1), height.max(1), 255)?;
    let mut rng = seeded(seed);
    let size = layout.glyph_size as f64;
    for (li, line) in lines.iter().enumerate() {
        let oy = layout.margin + li * (layout.glyph_size + layout.line_gap);
        for (ci, &g) in line.iter().enumerate() {
            let glyph = glyphs
                .get(g)
                .ok_or_else(|| Error::Input(format!("unknown glyph {g}")))?;
            let ox = layout.margin + ci * cell;
            let pts: Vec<(f64, f64)> = glyph
                .points
                .iter()
                .map(|&(x, y)| {
                    let jx = rng.random_range(-layout.jitter..=layout.jitter);
                    let jy = rng.random_range(-layout.jitter..=layout.jitter);
                    (
                        ox as f64 + ((x + jx).clamp(0.0, 1.0)) * (size - 1.0) + 0.5,
                        oy as f64 + ((y + jy).clamp(0.0, 1.0)) * (size - 1.0) + 0.5,
                    )
                })
                .collect();
            let half = layout.stroke / 2.0;
            for py in oy..oy + layout.glyph_size {
                for px in ox..ox + layout.glyph_size {
                    let c = (px as f64 + 0.5, py as f64 + 0.5);
                    let d = pts
                        .windows(2)
                        .map(|s| segment_distance(c, s[0], s[1]))
                        .fold(f64::INFINITY, f64::min);
                    if d <= half {
                        page.set(px, py, 0);
                    }
                }
            }
        }
    }
    Ok(page)
}

/// Page geometry for rendered synthetic documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub pages: usize,
    pub lines_per_page: usize,
    pub glyphs_per_line: usize,
    #[serde(default)]
    pub layout: PageLayout,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            pages: 1,
            lines_per_page: 3,
            glyphs_per_line: 10,
            layout: PageLayout::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedDocument {
    pub id: String,
    pub pages: Vec<GrayImage>,
    /// Glyph ids per page, per line.
    pub truth: Vec<Vec<Vec<usize>>>,
}

/// Renders documents `a` and `b` with glyphs drawn uniformly from their
/// alphabets; glyph `i` is the same shape in both documents.
pub fn render_corpus(
    spec: &SynthSpec,
    render: &RenderSpec,
    prefix: &str,
) -> Result<(RenderedDocument, RenderedDocument)> {
    spec.validate()?;
    if render.pages == 0 || render.lines_per_page == 0 || render.glyphs_per_line == 0 {
        return Err(Error::Param(
            "page, line and glyph counts must be >= 1".into(),
        ));
    }
    let glyphs = random_glyphs(spec.prototype_count(), derive_seed(spec.seed, 3));
    let mut docs = Vec::with_capacity(2);
    for (d, (suffix, alphabet)) in [("a", spec.alphabet_a()), ("b", spec.alphabet_b())]
        .into_iter()
        .enumerate()
    {
        let mut rng = seeded(derive_seed(spec.seed, 4 + d as u64));
        let mut pages = Vec::with_capacity(render.pages);
        let mut truth = Vec::with_capacity(render.pages);
        for p in 0..render.pages {
            let lines: Vec<Vec<usize>> = (0..render.lines_per_page)
                .map(|_| {
                    (0..render.glyphs_per_line)
                        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                        .collect()
                })
                .collect();
            let page_seed = derive_seed(spec.seed, ((d as u64 + 1) << 32) | p as u64);
            pages.push(render_page(&glyphs, &lines, &render.layout, page_seed)?);
            truth.push(lines);
        }
        docs.push(RenderedDocument {
            id: format!("{prefix}{suffix}"),
            pages,
            truth,
        });
    }
    let b = docs.pop().expect("two documents");
    let a = docs.pop().expect("two documents");
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shared: usize) -> SynthSpec {
        SynthSpec {
            alphabet_size_a: 34,
            alphabet_size_b: 34,
            shared,
            dim: 8,
            spread: 0.1,
            separation: 1.0,
            samples_per_symbol: 15,
            seed: 5,
            extent: None,
        }
    }

    #[test]
    fn overlap_extremes() {
        assert_eq!(make_corpus(&spec(0)).unwrap().overlap, 0.0);
        assert_eq!(make_corpus(&spec(34)).unwrap().overlap, 1.0);
        assert_eq!(spec(17).overlap(), 0.5);
        let uneven = SynthSpec {
            alphabet_size_a: 10,
            alphabet_size_b: 30,
            shared: 5,
            ..spec(0)
        };
        assert_eq!(uneven.overlap(), 5.0 / 20.0);
    }

    #[test]
    fn alphabets_share_prefix() {
        let s = SynthSpec {
            alphabet_size_a: 4,
            alphabet_size_b: 3,
            shared: 2,
            ..spec(0)
        };
        assert_eq!(s.alphabet_a(), vec![0, 1, 2, 3]);
        assert_eq!(s.alphabet_b(), vec![0, 1, 4]);
    }

    #[test]
    fn prototypes_are_separated() {
        let c = make_corpus(&spec(10)).unwrap();
        let p = &c.prototypes;
        assert_eq!(p.rows(), 58);
        for i in 0..p.rows() {
            for j in i + 1..p.rows() {
                let d: f64 = p
                    .row(i)
                    .iter()
                    .zip(p.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert!(d.sqrt() >= 1.0);
            }
        }
        assert_eq!(c.a.len(), 34 * 15);
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(
            make_corpus(&spec(7)).unwrap(),
            make_corpus(&spec(7)).unwrap()
        );
        let other = SynthSpec { seed: 6, ..spec(7) };
        assert_ne!(
            make_corpus(&spec(7)).unwrap().a,
            make_corpus(&other).unwrap().a
        );
    }

    #[test]
    fn infeasible_and_invalid_specs() {
        // Five unit-separated points cannot fit on a segment of length 1.
        let tight = SynthSpec {
            dim: 1,
            alphabet_size_a: 3,
            alphabet_size_b: 2,
            shared: 0,
            extent: Some(1.0),
            ..spec(0)
        };
        assert!(matches!(make_corpus(&tight), Err(Error::Feasibility(_))));
        assert!(make_corpus(&SynthSpec {
            shared: 40,
            ..spec(0)
        })
        .is_err());
        assert!(make_corpus(&SynthSpec {
            spread: 0.0,
            ..spec(0)
        })
        .is_err());
    }

    #[test]
    fn rendered_glyphs_are_connected_blobs() {
        let glyphs = random_glyphs(5, 1);
        let page = render_page(
            &glyphs,
            &[vec![0, 1, 2], vec![3, 4]],
            &PageLayout::default(),
            3,
        )
        .unwrap();
        assert!(page.pixels().contains(&0));
        let ink = crate::segment::BinaryImage::new(
            page.width(),
            page.height(),
            page.pixels().iter().map(|&p| p < 128).collect(),
        )
        .unwrap();
        assert_eq!(crate::segment::connected_components(&ink).len(), 5);
    }

    #[test]
    fn rendered_corpus_uses_alphabets() {
        let s = SynthSpec {
            alphabet_size_a: 4,
            alphabet_size_b: 3,
            shared: 2,
            ..spec(0)
        };
        let (a, b) = render_corpus(&s, &RenderSpec::default(), "r_").unwrap();
        assert_eq!((a.id.as_str(), b.id.as_str()), ("r_a", "r_b"));
        assert!(a.truth[0].iter().flatten().all(|g| *g < 4));
        assert!(b.truth[0].iter().flatten().all(|g| [0, 1, 4].contains(g)));
        assert_eq!(a.truth[0].len(), 3);
        assert_eq!(
            render_corpus(&s, &RenderSpec::default(), "r_").unwrap().0,
            a
        );
    }
}
