//! Patch grids, windowed similar-patch search, group extraction and
//! aggregation back into an image.
//!
//! Patches are vectorized column-major: entry `c * side + r` of a column is
//! pixel `(row + r, col + c)`.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{GsrcError, Result};
use crate::image::Image;

/// Top-left corner of a square patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchIndex {
    pub row: usize,
    pub col: usize,
}

impl PatchIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    fn check(&self, width: usize, height: usize, side: usize) -> Result<()> {
        if self.row + side > height || self.col + side > width {
            Err(GsrcError::OutOfBounds {
                row: self.row,
                col: self.col,
                side,
            })
        } else {
            Ok(())
        }
    }
}

/// `k` similar patches stacked as the columns of a `side² × k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub members: Vec<PatchIndex>,
    pub matrix: DMatrix<f64>,
}

impl PatchGroup {
    pub fn exemplar(&self) -> PatchIndex {
        self.members[0]
    }
}

fn check_side(width: usize, height: usize, side: usize) -> Result<()> {
    if side == 0 || side > width.min(height) {
        return Err(GsrcError::TooSmall {
            width,
            height,
            side,
            what: "patch",
        });
    }
    Ok(())
}

/// Positions `0, stride, 2*stride, ...` along one axis, with the last one
/// pulled back to `extent - side` so the border is always covered.
fn axis_positions(extent: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = extent - side;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

/// Exemplar top-left positions in row-major order.
pub fn exemplar_grid(
    width: usize,
    height: usize,
    side: usize,
    stride: usize,
) -> Result<Vec<PatchIndex>> {
    check_side(width, height, side)?;
    if stride == 0 {
        return Err(GsrcError::InvalidParameter("stride must be >= 1".into()));
    }
    let rows = axis_positions(height, side, stride);
    let cols = axis_positions(width, side, stride);
    Ok(rows
        .iter()
        .flat_map(|&row| cols.iter().map(move |&col| PatchIndex { row, col }))
        .collect())
}

/// Inclusive range of top-left coordinates within a search window centred on
/// `pos`: offsets `-window/2 ..= window - window/2 - 1`, clipped to `[0, last]`.
pub fn window_range(pos: usize, window: usize, last: usize) -> (usize, usize) {
    let half = window / 2;
    let lo = pos.saturating_sub(half);
    let hi = (pos + window - half - 1).min(last);
    (lo, hi)
}

#[inline]
fn patch_distance(data: &[f64], width: usize, a: PatchIndex, b: PatchIndex, side: usize) -> f64 {
    let mut sum = 0.0;
    for r in 0..side {
        let ra = (a.row + r) * width + a.col;
        let rb = (b.row + r) * width + b.col;
        for (x, y) in data[ra..ra + side].iter().zip(&data[rb..rb + side]) {
            let d = x - y;
            sum += d * d;
        }
    }
    sum
}

#[inline]
fn candidate_order(a: &(f64, PatchIndex), b: &(f64, PatchIndex)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// The `k` patches of `target` closest to `exemplar` in squared Euclidean distance.
///
/// The exemplar always comes first; the rest are ordered by distance, then by
/// `(row, col)`. When the window holds fewer than `k` positions the sorted list
/// is repeated cyclically.
pub fn knn_search(
    target: &Image,
    exemplar: PatchIndex,
    k: usize,
    side: usize,
    window: usize,
) -> Result<Vec<PatchIndex>> {
    let (w, h) = (target.width(), target.height());
    check_side(w, h, side)?;
    exemplar.check(w, h, side)?;
    if k == 0 {
        return Err(GsrcError::InvalidParameter("k must be >= 1".into()));
    }
    if window < side {
        return Err(GsrcError::InvalidParameter(format!(
            "search window {window} smaller than patch side {side}"
        )));
    }
    if k == 1 {
        return Ok(vec![exemplar]);
    }

    let data = target.data();
    let (r_lo, r_hi) = window_range(exemplar.row, window, h - side);
    let (c_lo, c_hi) = window_range(exemplar.col, window, w - side);
    let mut candidates = Vec::with_capacity((r_hi - r_lo + 1) * (c_hi - c_lo + 1));
    for row in r_lo..=r_hi {
        for col in c_lo..=c_hi {
            let p = PatchIndex { row, col };
            if p != exemplar {
                candidates.push((patch_distance(data, w, exemplar, p, side), p));
            }
        }
    }

    let wanted = k - 1;
    if candidates.len() > wanted {
        candidates.select_nth_unstable_by(wanted - 1, candidate_order);
        candidates.truncate(wanted);
    }
    candidates.sort_unstable_by(candidate_order);

    let mut sorted = Vec::with_capacity(candidates.len() + 1);
    sorted.push(exemplar);
    sorted.extend(candidates.into_iter().map(|(_, p)| p));
    Ok((0..k).map(|j| sorted[j % sorted.len()]).collect())
}

/// Stacks the patches of `source` at `members` as matrix columns.
pub fn extract_group(source: &Image, members: &[PatchIndex], side: usize) -> Result<PatchGroup> {
    let (w, h) = (source.width(), source.height());
    check_side(w, h, side)?;
    let b = side * side;
    let mut matrix = DMatrix::zeros(b, members.len());
    let data = source.data();
    for (j, m) in members.iter().enumerate() {
        m.check(w, h, side)?;
        let mut column = matrix.column_mut(j);
        for c in 0..side {
            for r in 0..side {
                column[c * side + r] = data[(m.row + r) * w + m.col + c];
            }
        }
    }
    Ok(PatchGroup {
        members: members.to_vec(),
        matrix,
    })
}

/// Accumulates patch contributions and averages them per pixel.
///
/// Contributions are summed in the order they are added, so feeding groups in
/// exemplar order gives the same bits regardless of how they were computed.
#[derive(Debug, Clone)]
pub struct Aggregator {
    width: usize,
    height: usize,
    side: usize,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl Aggregator {
    pub fn new(width: usize, height: usize, side: usize) -> Result<Self> {
        check_side(width, height, side)?;
        Ok(Self {
            width,
            height,
            side,
            sum: vec![0.0; width * height],
            count: vec![0; width * height],
        })
    }

    pub fn add(&mut self, members: &[PatchIndex], processed: &DMatrix<f64>) -> Result<()> {
        let side = self.side;
        if processed.nrows() != side * side || processed.ncols() != members.len() {
            return Err(GsrcError::ShapeMismatch(format!(
                "processed matrix is {}x{}, expected {}x{}",
                processed.nrows(),
                processed.ncols(),
                side * side,
                members.len()
            )));
        }
        for (j, m) in members.iter().enumerate() {
            m.check(self.width, self.height, side)?;
            let column = processed.column(j);
            for c in 0..side {
                for r in 0..side {
                    let idx = (m.row + r) * self.width + m.col + c;
                    self.sum[idx] += column[c * side + r];
                    self.count[idx] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Image> {
        let mut data = self.sum;
        for (idx, (v, &n)) in data.iter_mut().zip(&self.count).enumerate() {
            if n == 0 {
                return Err(GsrcError::UncoveredPixel {
                    row: idx / self.width,
                    col: idx % self.width,
                });
            }
            *v /= f64::from(n);
        }
        Image::new(self.width, self.height, data)
    }
}

/// Scatters every processed group back to its member positions and averages.
pub fn aggregate<'a, I>(groups: I, width: usize, height: usize, side: usize) -> Result<Image>
where
    I: IntoIterator<Item = (&'a [PatchIndex], &'a DMatrix<f64>)>,
{
    let mut acc = Aggregator::new(width, height, side)?;
    for (members, processed) in groups {
        acc.add(members, processed)?;
    }
    acc.finish()
}
