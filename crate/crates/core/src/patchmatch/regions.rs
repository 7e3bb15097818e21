//! Candidate sampling regions for checkerboard propagation.
//!
//! Every region is described by a template of `(lateral, along)` offsets
//! where `along > 0` points away from the center pixel. Templates are
//! rotated into the four axis directions, pushed outward past the
//! non-local radius, and grown by appending translated copies of
//! themselves.

/// Strip template: an axis-aligned ray of odd-distance samples.
pub const STRIP_TEMPLATE: [(i32, i32); 5] = [(0, 1), (0, 3), (0, 5), (0, 7), (0, 9)];

/// Polyline template: a V opening away from the center.
pub const POLYLINE_TEMPLATE: [(i32, i32); 8] = [
    (0, 1),
    (-1, 2),
    (1, 2),
    (-2, 3),
    (2, 3),
    (-3, 4),
    (3, 4),
    (0, 3),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];

    fn rotate(self, lateral: i32, along: i32) -> (i32, i32) {
        match self {
            Self::Up => (lateral, -along),
            Self::Down => (lateral, along),
            Self::Left => (-along, lateral),
            Self::Right => (along, lateral),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionShape {
    Strip,
    Polyline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub shape: RegionShape,
    pub direction: Direction,
    base_len: usize,
    /// Samples in append order; level `t` uses the first `base_len << t`.
    offsets: Vec<(i32, i32)>,
}

impl Region {
    fn build(shape: RegionShape, direction: Direction, radius: f64, max_level: usize) -> Self {
        let template: &[(i32, i32)] = match shape {
            RegionShape::Strip => &STRIP_TEMPLATE,
            RegionShape::Polyline => &POLYLINE_TEMPLATE,
        };
        let shift = outward_shift(template, radius);
        let mut local: Vec<(i32, i32)> = template.iter().map(|&(l, a)| (l, a + shift)).collect();
        for _ in 0..max_level {
            let (lo, hi) = local
                .iter()
                .fold((i32::MAX, i32::MIN), |(lo, hi), &(_, a)| (lo.min(a), hi.max(a)));
            let extent = even_ceil(hi - lo + 1);
            let copy: Vec<_> = local.iter().map(|&(l, a)| (l, a + extent)).collect();
            local.extend(copy);
        }
        Self {
            shape,
            direction,
            base_len: template.len(),
            offsets: local
                .into_iter()
                .map(|(l, a)| direction.rotate(l, a))
                .collect(),
        }
    }

    pub fn count(&self, level: usize) -> usize {
        self.base_len << level
    }

    /// All samples of the region at extension `level`.
    pub fn samples(&self, level: usize) -> &[(i32, i32)] {
        &self.offsets[..self.count(level)]
    }

    /// Samples added when growing from `level - 1` to `level`.
    pub fn added(&self, level: usize) -> &[(i32, i32)] {
        if level == 0 {
            self.samples(0)
        } else {
            &self.offsets[self.count(level - 1)..self.count(level)]
        }
    }
}

fn even_ceil(v: i32) -> i32 {
    v + (v & 1)
}

/// Smallest even outward shift putting every template sample beyond `radius`.
fn outward_shift(template: &[(i32, i32)], radius: f64) -> i32 {
    let r2 = radius * radius;
    let mut shift = 0;
    while template.iter().any(|&(l, a)| {
        let a = (a + shift) as f64;
        (l as f64).powi(2) + a * a <= r2
    }) {
        shift += 2;
    }
    shift
}

/// The eight sampling regions: four strips then four polylines.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRegions {
    regions: Vec<Region>,
    max_level: usize,
}

impl SamplingRegions {
    pub fn new(radius: f64, max_level: usize) -> Self {
        let mut regions = Vec::with_capacity(8);
        for shape in [RegionShape::Strip, RegionShape::Polyline] {
            for dir in Direction::ALL {
                regions.push(Region::build(shape, dir, radius, max_level));
            }
        }
        Self { regions, max_level }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }
}
