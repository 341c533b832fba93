//! Site layout, sector wedges and channel addressing on a toroidal plane.

use serde::{Deserialize, Serialize};

use super::link::LinkModel;
use crate::error::{Error, Result};

pub const SECTORS_PER_BS: usize = 3;
pub const CARRIERS_PER_SECTOR: usize = 4;
pub const CHANNELS_PER_BS: usize = SECTORS_PER_BS * CARRIERS_PER_SECTOR;

/// Width of one sector wedge in degrees.
pub const SECTOR_WIDTH_DEG: f64 = 360.0 / SECTORS_PER_BS as f64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle centred on the origin whose opposite edges are
/// identified, so coordinates live in `[-w/2, w/2) x [-h/2, h/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldExtent {
    pub width: f64,
    pub height: f64,
}

fn wrap_coord(v: f64, span: f64) -> f64 {
    let half = span / 2.0;
    let w = (v + half).rem_euclid(span) - half;
    // rem_euclid can round up to exactly `span` for tiny negative inputs
    if w >= half {
        w - span
    } else {
        w
    }
}

fn min_image(d: f64, span: f64) -> f64 {
    d - span * (d / span).round()
}

impl WorldExtent {
    pub fn wrap(&self, p: Point) -> Point {
        Point::new(wrap_coord(p.x, self.width), wrap_coord(p.y, self.height))
    }

    pub fn contains(&self, p: Point) -> bool {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        (-hw..hw).contains(&p.x) && (-hh..hh).contains(&p.y)
    }

    /// Shortest displacement from `from` to `to` under wrap-around.
    pub fn displacement(&self, from: Point, to: Point) -> (f64, f64) {
        (
            min_image(to.x - from.x, self.width),
            min_image(to.y - from.y, self.height),
        )
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let (dx, dy) = self.displacement(a, b);
        dx.hypot(dy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub position: Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Carrier {
    pub bandwidth_mhz: f64,
}

/// Default carrier set: the four LTE channel bandwidths 1.4, 3, 5 and 10 MHz.
pub const DEFAULT_CARRIERS: [Carrier; CARRIERS_PER_SECTOR] = [
    Carrier { bandwidth_mhz: 1.4 },
    Carrier { bandwidth_mhz: 3.0 },
    Carrier { bandwidth_mhz: 5.0 },
    Carrier { bandwidth_mhz: 10.0 },
];

/// A channel is one (BS, sector, carrier) triple, numbered
/// `bs * 12 + sector * 4 + carrier`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelId(pub usize);

impl ChannelId {
    pub fn new(bs: usize, sector: usize, carrier: usize) -> Self {
        debug_assert!(sector < SECTORS_PER_BS && carrier < CARRIERS_PER_SECTOR);
        ChannelId(bs * CHANNELS_PER_BS + sector * CARRIERS_PER_SECTOR + carrier)
    }

    pub fn bs(self) -> usize {
        self.0 / CHANNELS_PER_BS
    }

    pub fn sector(self) -> usize {
        (self.0 % CHANNELS_PER_BS) / CARRIERS_PER_SECTOR
    }

    pub fn carrier(self) -> usize {
        self.0 % CARRIERS_PER_SECTOR
    }

    /// Network-wide sector index `bs * 3 + sector`.
    pub fn sector_index(self) -> SectorId {
        SectorId(self.0 / CARRIERS_PER_SECTOR)
    }
}

/// Network-wide sector index `bs * 3 + sector`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorId(pub usize);

impl SectorId {
    pub fn bs(self) -> usize {
        self.0 / SECTORS_PER_BS
    }

    pub fn channel(self, carrier: usize) -> ChannelId {
        ChannelId(self.0 * CARRIERS_PER_SECTOR + carrier)
    }

    pub fn channels(self) -> impl Iterator<Item = ChannelId> {
        (0..CARRIERS_PER_SECTOR).map(move |c| self.channel(c))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub base_stations: Vec<BaseStation>,
    pub carriers: [Carrier; CARRIERS_PER_SECTOR],
    pub extent: WorldExtent,
    pub inter_site_distance: f64,
    pub link: LinkModel,
}

impl NetworkTopology {
    /// Lays out `n_bs` sites: one site, an equilateral triangle, or a
    /// central site with six neighbours on a hexagonal ring. The layout is
    /// fully determined by its arguments.
    pub fn build(n_bs: usize, inter_site_distance: f64) -> Result<Self> {
        if !(inter_site_distance.is_finite() && inter_site_distance > 0.0) {
            return Err(Error::config(format!(
                "inter-site distance must be positive, got {inter_site_distance}"
            )));
        }
        let d = inter_site_distance;
        let raw: Vec<Point> = match n_bs {
            1 => vec![Point::new(0.0, 0.0)],
            3 => vec![
                Point::new(0.0, 0.0),
                Point::new(d, 0.0),
                Point::new(d / 2.0, d * 3f64.sqrt() / 2.0),
            ],
            7 => std::iter::once(Point::new(0.0, 0.0))
                .chain((0..6).map(|k| {
                    let a = (k as f64 * 60.0).to_radians();
                    Point::new(d * a.cos(), d * a.sin())
                }))
                .collect(),
            other => {
                return Err(Error::config(format!(
                    "unsupported number of base stations {other}; expected 1, 3 or 7"
                )))
            }
        };

        let (min_x, max_x) = min_max(raw.iter().map(|p| p.x));
        let (min_y, max_y) = min_max(raw.iter().map(|p| p.y));
        let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
        let extent = WorldExtent {
            width: max_x - min_x + d,
            height: max_y - min_y + d,
        };
        let base_stations = raw
            .into_iter()
            .enumerate()
            .map(|(id, p)| BaseStation {
                id,
                position: Point::new(p.x - cx, p.y - cy),
            })
            .collect();

        Ok(Self {
            base_stations,
            carriers: DEFAULT_CARRIERS,
            extent,
            inter_site_distance,
            link: LinkModel::default(),
        })
    }

    pub fn n_bs(&self) -> usize {
        self.base_stations.len()
    }

    pub fn n_sectors(&self) -> usize {
        self.n_bs() * SECTORS_PER_BS
    }

    pub fn n_channels(&self) -> usize {
        self.n_bs() * CHANNELS_PER_BS
    }

    pub fn channels(&self) -> impl Iterator<Item = ChannelId> {
        (0..self.n_channels()).map(ChannelId)
    }

    pub fn bs_channels(&self, bs: usize) -> impl Iterator<Item = ChannelId> {
        (bs * CHANNELS_PER_BS..(bs + 1) * CHANNELS_PER_BS).map(ChannelId)
    }

    pub fn distance_to_bs(&self, bs: usize, p: Point) -> f64 {
        self.extent.distance(self.base_stations[bs].position, p)
    }

    /// Sector of `bs` whose wedge contains `p`. Wedge `s` spans azimuths
    /// `[120 s, 120 (s + 1))` degrees measured counter-clockwise from +x.
    pub fn sector_towards(&self, bs: usize, p: Point) -> SectorId {
        let (dx, dy) = self.extent.displacement(self.base_stations[bs].position, p);
        let az = dy.atan2(dx).to_degrees().rem_euclid(360.0);
        let s = ((az / SECTOR_WIDTH_DEG) as usize).min(SECTORS_PER_BS - 1);
        SectorId(bs * SECTORS_PER_BS + s)
    }

    /// Base stations sorted by distance to `p`, ties by id.
    pub fn bs_by_distance(&self, p: Point) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = (0..self.n_bs())
            .map(|b| (b, self.distance_to_bs(b, p)))
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v
    }

    /// The sector that geometrically serves `p`: the wedge of the nearest site.
    pub fn home_sector(&self, p: Point) -> SectorId {
        let nearest = self.bs_by_distance(p)[0].0;
        self.sector_towards(nearest, p)
    }

    /// Sectors a UE at `p` may be served by: its home sector and, when the
    /// second-nearest site is within `range_factor` times the nearest
    /// distance, that site's wedge facing `p`.
    pub fn candidate_sectors(&self, p: Point, range_factor: f64) -> Vec<SectorId> {
        let ranked = self.bs_by_distance(p);
        let mut out = vec![self.sector_towards(ranked[0].0, p)];
        if let Some(&(second, d2)) = ranked.get(1) {
            if d2 <= range_factor * ranked[0].1.max(1.0) {
                out.push(self.sector_towards(second, p));
            }
        }
        out
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}
