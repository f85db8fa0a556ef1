//! Intersection geometry: lane-level routes across the conflict area, the
//! conflict points where routes cross, and the longitudinal buffer that two
//! crossing vehicles must keep around a conflict point.
//!
//! Routes are arc-length parameterized polylines of straight segments and
//! circular arcs. A conflict point is a strictly interior, transversal
//! crossing of two distinct routes; contacts at route endpoints are lane
//! merges or diverges and are excluded.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

/// Lane width, metres.
pub const LANE_W: f64 = 3.0;
/// Vehicle length, metres.
pub const VEH_LEN: f64 = 4.0;
/// Vehicle width, metres.
pub const VEH_W: f64 = 1.8;

/// Contacts closer than this to a route end are merges, not crossings.
const END_EPS: f64 = 1e-4;
/// Two hits on the same route pair closer than this are one crossing.
const DEDUP_EPS: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
    fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
    fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
    fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
    fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// One piece of a route: a straight segment or a counterclockwise arc.
#[derive(Clone, Debug)]
enum Piece {
    Seg { a: Vec2, b: Vec2 },
    /// Counterclockwise from angle `a0` to `a1`, `a0 < a1`.
    Arc { c: Vec2, r: f64, a0: f64, a1: f64 },
}

impl Piece {
    fn len(&self) -> f64 {
        match self {
            Piece::Seg { a, b } => b.sub(*a).norm(),
            Piece::Arc { r, a0, a1, .. } => r * (a1 - a0),
        }
    }

    /// Point at arc length `s` from the piece start.
    fn point_at(&self, s: f64) -> Vec2 {
        match self {
            Piece::Seg { a, b } => {
                let d = b.sub(*a);
                a.add(d.scale(s / d.norm()))
            }
            Piece::Arc { c, r, a0, .. } => {
                let phi = a0 + s / r;
                c.add(Vec2::new(r * phi.cos(), r * phi.sin()))
            }
        }
    }

    /// Unit tangent (direction of travel) at arc length `s`.
    fn heading_at(&self, s: f64) -> Vec2 {
        match self {
            Piece::Seg { a, b } => {
                let d = b.sub(*a);
                d.scale(1.0 / d.norm())
            }
            Piece::Arc { r, a0, .. } => {
                let phi = a0 + s / r;
                Vec2::new(-phi.sin(), phi.cos())
            }
        }
    }

    /// Crossings with another piece as pairs of arc lengths along each.
    fn intersections(&self, other: &Piece) -> Vec<(f64, f64)> {
        match (self, other) {
            (Piece::Seg { a: p, b: q }, Piece::Seg { a: r2, b: s2 }) => {
                seg_seg(*p, *q, *r2, *s2).into_iter().collect()
            }
            (Piece::Seg { a, b }, Piece::Arc { .. }) => seg_arc(*a, *b, other),
            (Piece::Arc { .. }, Piece::Seg { a, b }) => seg_arc(*a, *b, self)
                .into_iter()
                .map(|(ts, ta)| (ta, ts))
                .collect(),
            (Piece::Arc { .. }, Piece::Arc { .. }) => arc_arc(self, other),
        }
    }
}

fn seg_seg(p: Vec2, q: Vec2, r: Vec2, s: Vec2) -> Option<(f64, f64)> {
    let d1 = q.sub(p);
    let d2 = s.sub(r);
    let denom = d1.cross(d2);
    if denom.abs() < 1e-12 {
        return None; // parallel or collinear: overlap is a merge, not a crossing
    }
    let t = r.sub(p).cross(d2) / denom;
    let u = r.sub(p).cross(d1) / denom;
    let tol = 1e-9;
    if t < -tol || t > 1.0 + tol || u < -tol || u > 1.0 + tol {
        return None;
    }
    Some((t.clamp(0.0, 1.0) * d1.norm(), u.clamp(0.0, 1.0) * d2.norm()))
}

fn seg_arc(a: Vec2, b: Vec2, arc: &Piece) -> Vec<(f64, f64)> {
    let (c, r, a0, a1) = match arc {
        Piece::Arc { c, r, a0, a1 } => (*c, *r, *a0, *a1),
        _ => unreachable!(),
    };
    let d = b.sub(a);
    let f = a.sub(c);
    let qa = d.dot(d);
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let mut out = Vec::new();
    for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
        let tol = 1e-9;
        if !(-tol..=1.0 + tol).contains(&t) {
            continue;
        }
        let p = a.add(d.scale(t.clamp(0.0, 1.0)));
        if let Some(sa) = arc_param(p, c, r, a0, a1) {
            out.push((t.clamp(0.0, 1.0) * d.norm(), sa));
        }
    }
    out
}

/// Arc length along the arc if `p` lies within its angular range.
fn arc_param(p: Vec2, c: Vec2, r: f64, a0: f64, a1: f64) -> Option<f64> {
    let mut phi = (p.y - c.y).atan2(p.x - c.x);
    // normalize into [a0, a0 + 2*pi)
    while phi < a0 - 1e-9 {
        phi += 2.0 * PI;
    }
    while phi >= a0 + 2.0 * PI - 1e-9 {
        phi -= 2.0 * PI;
    }
    if phi <= a1 + 1e-9 {
        Some(((phi - a0).max(0.0)).min(a1 - a0) * r)
    } else {
        None
    }
}

fn arc_arc(a: &Piece, b: &Piece) -> Vec<(f64, f64)> {
    let (c1, r1, a0, a1) = match a {
        Piece::Arc { c, r, a0, a1 } => (*c, *r, *a0, *a1),
        _ => unreachable!(),
    };
    let (c2, r2, b0, b1) = match b {
        Piece::Arc { c, r, a0, a1 } => (*c, *r, *a0, *a1),
        _ => unreachable!(),
    };
    let d = c2.sub(c1);
    let dist = d.norm();
    if dist < 1e-12 || dist > r1 + r2 || dist < (r1 - r2).abs() {
        return Vec::new();
    }
    let l = (dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist);
    let h2 = r1 * r1 - l * l;
    if h2 < -1e-9 {
        return Vec::new();
    }
    let h = h2.max(0.0).sqrt();
    let base = c1.add(d.scale(l / dist));
    let perp = Vec2::new(-d.y / dist, d.x / dist);
    let mut out = Vec::new();
    for p in [base.add(perp.scale(h)), base.add(perp.scale(-h))] {
        if let (Some(sa), Some(sb)) = (arc_param(p, c1, r1, a0, a1), arc_param(p, c2, r2, b0, b1)) {
            out.push((sa, sb));
        }
        if h < 1e-12 {
            break; // tangent circles: single point
        }
    }
    out
}

/// A vehicle path across the conflict area, arc-length parameterized.
#[derive(Clone, Debug)]
pub struct Path {
    pieces: Vec<Piece>,
    cum: Vec<f64>,
    total: f64,
}

impl Path {
    fn new(pieces: Vec<Piece>) -> Self {
        let mut cum = vec![0.0];
        for p in &pieces {
            cum.push(cum.last().unwrap() + p.len());
        }
        let total = *cum.last().unwrap();
        Path { pieces, cum, total }
    }

    pub fn len(&self) -> f64 {
        self.total
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, local) = self.locate(s);
        self.pieces[i].point_at(local)
    }

    pub fn heading_at(&self, s: f64) -> Vec2 {
        let (i, local) = self.locate(s);
        self.pieces[i].heading_at(local)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total);
        for i in 0..self.pieces.len() {
            if s <= self.cum[i + 1] || i == self.pieces.len() - 1 {
                return (i, (s - self.cum[i]).clamp(0.0, self.pieces[i].len()));
            }
        }
        unreachable!()
    }

    /// All crossings with `other` as (s_self, s_other), deduplicated.
    fn intersections(&self, other: &Path) -> Vec<(f64, f64)> {
        let mut hits: Vec<(f64, f64)> = Vec::new();
        for (i, pa) in self.pieces.iter().enumerate() {
            for (j, pb) in other.pieces.iter().enumerate() {
                for (sa, sb) in pa.intersections(pb) {
                    let cand = (self.cum[i] + sa, other.cum[j] + sb);
                    let dup = hits
                        .iter()
                        .any(|h| (h.0 - cand.0).abs() < DEDUP_EPS && (h.1 - cand.1).abs() < DEDUP_EPS);
                    if !dup {
                        hits.push(cand);
                    }
                }
            }
        }
        hits
    }
}

/// Movement type of a route; sets its crossing speed limit.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Movement {
    Through,
    Left,
}

impl Movement {
    pub fn crossing_speed(self) -> f64 {
        match self {
            Movement::Through => crate::V_THROUGH,
            Movement::Left => crate::V_LEFT,
        }
    }
}

/// One lane-level route: entry lane, exit lane, and its path.
#[derive(Clone, Debug)]
pub struct Route {
    pub entry_lane: u32,
    pub exit_lane: u32,
    pub movement: Movement,
    pub path: Path,
}

/// A crossing of two routes. Positions are arc lengths along each route.
#[derive(Clone, Copy, Debug)]
pub struct ConflictPoint {
    pub a: usize,
    pub b: usize,
    pub pos_a: f64,
    pub pos_b: f64,
    /// Crossing angle between headings, folded into (0, pi).
    pub angle: f64,
}

/// An intersection layout: routes, conflict points, and the signal phase plan.
pub struct Layout {
    pub name: &'static str,
    pub routes: Vec<Route>,
    pub points: Vec<ConflictPoint>,
    /// Route indices per signal phase; movements within a phase never conflict.
    pub phases: Vec<Vec<usize>>,
    /// Cycle length search range (min, max) in seconds, stepped by 2.
    pub cycle_range: (f64, f64),
    /// Conflict area bounding box (half-width x, half-width y), for the tile grid.
    pub half_extent: (f64, f64),
}

impl Layout {
    fn build(
        name: &'static str,
        routes: Vec<Route>,
        phases: Vec<Vec<usize>>,
        cycle_range: (f64, f64),
        half_extent: (f64, f64),
    ) -> Self {
        let points = enumerate_conflicts(&routes);
        let layout = Layout {
            name,
            routes,
            points,
            phases,
            cycle_range,
            half_extent,
        };
        layout.assert_phases_compatible();
        layout
    }

    fn assert_phases_compatible(&self) {
        let conflicting: BTreeSet<(usize, usize)> =
            self.points.iter().map(|p| (p.a, p.b)).collect();
        for (k, phase) in self.phases.iter().enumerate() {
            for (i, &a) in phase.iter().enumerate() {
                for &b in &phase[i + 1..] {
                    let key = (a.min(b), a.max(b));
                    assert!(
                        !conflicting.contains(&key),
                        "{}: phase {} contains conflicting routes {} and {}",
                        self.name,
                        k,
                        a,
                        b
                    );
                }
            }
        }
        // every route appears in exactly one phase
        let mut seen = BTreeSet::new();
        for phase in &self.phases {
            for &r in phase {
                assert!(seen.insert(r), "{}: route {} in two phases", self.name, r);
            }
        }
        assert_eq!(seen.len(), self.routes.len(), "{}: unphased route", self.name);
    }

    /// Route index by entry lane.
    pub fn route_by_lane(&self, lane: u32) -> Option<usize> {
        self.routes.iter().position(|r| r.entry_lane == lane)
    }

    /// Entry lanes that generate traffic, ascending.
    pub fn entry_lanes(&self) -> Vec<u32> {
        let mut lanes: Vec<u32> = self.routes.iter().map(|r| r.entry_lane).collect();
        lanes.sort_unstable();
        lanes
    }

    /// Conflict points on `route`, as (point index, position, angle), by position.
    pub fn points_on_route(&self, route: usize) -> Vec<(usize, f64, f64)> {
        let mut out: Vec<(usize, f64, f64)> = self
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                if p.a == route {
                    Some((i, p.pos_a, p.angle))
                } else if p.b == route {
                    Some((i, p.pos_b, p.angle))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
        out
    }

    /// Largest buffer over the route's conflict points; s/2 if it has none.
    pub fn worst_buffer(&self, route: usize, gap: f64) -> f64 {
        self.points_on_route(route)
            .iter()
            .map(|&(_, _, angle)| buffer_size(gap, angle, VEH_W))
            .fold(gap / 2.0, f64::max)
    }

    /// Phase index of a route.
    pub fn phase_of(&self, route: usize) -> usize {
        self.phases
            .iter()
            .position(|p| p.contains(&route))
            .expect("route not in any phase")
    }

    /// Do two routes share at least one conflict point?
    pub fn routes_conflict(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.points.iter().any(|p| (p.a, p.b) == key)
    }
}

fn enumerate_conflicts(routes: &[Route]) -> Vec<ConflictPoint> {
    let mut points = Vec::new();
    for a in 0..routes.len() {
        for b in a + 1..routes.len() {
            let pa = &routes[a].path;
            let pb = &routes[b].path;
            for (sa, sb) in pa.intersections(pb) {
                if sa < END_EPS || sa > pa.len() - END_EPS {
                    continue;
                }
                if sb < END_EPS || sb > pb.len() - END_EPS {
                    continue;
                }
                let ha = pa.heading_at(sa);
                let hb = pb.heading_at(sb);
                if ha.cross(hb).abs() < 1e-6 {
                    continue; // tangential contact, not a crossing
                }
                let angle = ha.dot(hb).clamp(-1.0, 1.0).acos();
                points.push(ConflictPoint {
                    a,
                    b,
                    pos_a: sa,
                    pos_b: sb,
                    angle,
                });
            }
        }
    }
    points
}

/// Longitudinal buffer ahead of and behind a vehicle at a conflict point,
/// from the minimum gap `gap`, crossing angle `theta`, and vehicle width `w0`.
/// Derived from the closest-approach of two crossing rectangles; theta = 0
/// reduces to gap/2 and the buffer grows monotonically toward theta = pi.
pub fn buffer_size(gap: f64, theta: f64, w0: f64) -> f64 {
    assert!(
        (0.0..PI).contains(&theta),
        "crossing angle must be in [0, pi), got {theta}"
    );
    assert!(gap >= 0.0 && w0 >= 0.0);
    (gap / 2.0) / (theta / 2.0).cos() + (w0 / 2.0) * (theta / 2.0).tan()
}

/// Number of vehicle pairs that share a conflict point, for `counts[i]`
/// vehicles on route `i`.
pub fn conflicting_pairs(layout: &Layout, counts: &[usize]) -> usize {
    assert_eq!(counts.len(), layout.routes.len());
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for p in &layout.points {
        pairs.insert((p.a, p.b));
    }
    pairs.iter().map(|&(a, b)| counts[a] * counts[b]).sum()
}

fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Piece {
    Piece::Seg {
        a: Vec2::new(ax, ay),
        b: Vec2::new(bx, by),
    }
}

fn arc(cx: f64, cy: f64, r: f64, a0: f64, a1: f64) -> Piece {
    assert!(a0 < a1);
    Piece::Arc {
        c: Vec2::new(cx, cy),
        r,
        a0,
        a1,
    }
}

fn route(entry: u32, exit: u32, movement: Movement, pieces: Vec<Piece>) -> Route {
    let path = Path::new(pieces);
    // pieces must join continuously
    for i in 1..path.pieces.len() {
        let end = path.pieces[i - 1].point_at(path.pieces[i - 1].len());
        let start = path.pieces[i].point_at(0.0);
        assert!(end.sub(start).norm() < 1e-9, "route {entry}: disjoint pieces");
    }
    Route {
        entry_lane: entry,
        exit_lane: exit,
        movement,
        path,
    }
}

/// Four-leg intersection of two identical 8-lane roads: per leg 4 approach
/// lanes (right-turn bay unused, two throughs, one left) and 2 departure
/// lanes. Approach lanes are numbered outermost-first N 1-4, E 5-8, S 9-12,
/// W 13-16; departures N 17-18, E 19-20, S 21-22, W 23-24.
pub fn four_leg_main() -> Layout {
    let t = Movement::Through;
    let l = Movement::Left;
    let routes = vec![
        // southbound from N
        route(2, 21, t, vec![seg(-7.5, 12.0, -4.5, -12.0)]),
        route(3, 22, t, vec![seg(-4.5, 12.0, -1.5, -12.0)]),
        route(4, 19, l, vec![
            seg(-1.5, 12.0, -1.5, 9.0),
            arc(12.0, 9.0, 13.5, PI, 1.5 * PI),
        ]),
        // westbound from E
        route(6, 23, t, vec![seg(12.0, 7.5, -12.0, 4.5)]),
        route(7, 24, t, vec![seg(12.0, 4.5, -12.0, 1.5)]),
        route(8, 21, l, vec![
            seg(12.0, 1.5, 9.0, 1.5),
            arc(9.0, -12.0, 13.5, FRAC_PI_2, PI),
        ]),
        // northbound from S
        route(10, 17, t, vec![seg(7.5, -12.0, 4.5, 12.0)]),
        route(11, 18, t, vec![seg(4.5, -12.0, 1.5, 12.0)]),
        route(12, 23, l, vec![
            seg(1.5, -12.0, 1.5, -9.0),
            arc(-12.0, -9.0, 13.5, 0.0, FRAC_PI_2),
        ]),
        // eastbound from W
        route(14, 19, t, vec![seg(-12.0, -7.5, 12.0, -4.5)]),
        route(15, 20, t, vec![seg(-12.0, -4.5, 12.0, -1.5)]),
        route(16, 17, l, vec![
            seg(-12.0, -1.5, -9.0, -1.5),
            arc(-9.0, 12.0, 13.5, 1.5 * PI, 2.0 * PI),
        ]),
    ];
    let phases = vec![
        vec![0, 1, 6, 7],  // N+S through
        vec![2, 8],        // N+S left
        vec![3, 4, 9, 10], // E+W through
        vec![5, 11],       // E+W left
    ];
    Layout::build("four_leg_main", routes, phases, (16.0, 120.0), (12.0, 12.0))
}

/// Four-leg intersection of an 8-lane main road (E-W) and a 4-lane secondary
/// road (N-S). Secondary legs carry one through and one left each; secondary
/// throughs exit the inner departure lane. Lanes: N 1-2, E 3-6, S 7-8,
/// W 9-12 (outermost-first); departures N 13-14, E 15-16, S 17-18, W 19-20.
pub fn four_leg_secondary() -> Layout {
    let t = Movement::Through;
    let l = Movement::Left;
    let routes = vec![
        // southbound from N
        route(1, 18, t, vec![seg(-4.5, 12.0, -1.5, -12.0)]),
        route(2, 15, l, vec![
            seg(-1.5, 12.0, -1.5, 3.0),
            arc(6.0, 3.0, 7.5, PI, 1.5 * PI),
        ]),
        // westbound from E
        route(4, 19, t, vec![seg(6.0, 7.5, -6.0, 4.5)]),
        route(5, 20, t, vec![seg(6.0, 4.5, -6.0, 1.5)]),
        route(6, 17, l, vec![
            arc(6.0, -9.0, 10.5, FRAC_PI_2, PI),
            seg(-4.5, -9.0, -4.5, -12.0),
        ]),
        // northbound from S
        route(7, 14, t, vec![seg(4.5, -12.0, 1.5, 12.0)]),
        route(8, 19, l, vec![
            seg(1.5, -12.0, 1.5, -3.0),
            arc(-6.0, -3.0, 7.5, 0.0, FRAC_PI_2),
        ]),
        // eastbound from W
        route(10, 15, t, vec![seg(-6.0, -7.5, 6.0, -4.5)]),
        route(11, 16, t, vec![seg(-6.0, -4.5, 6.0, -1.5)]),
        route(12, 13, l, vec![
            arc(-6.0, 9.0, 10.5, 1.5 * PI, 2.0 * PI),
            seg(4.5, 9.0, 4.5, 12.0),
        ]),
    ];
    // opposing secondary lefts cross each other twice, so each secondary leg
    // gets its own phase
    let phases = vec![
        vec![0, 1],       // N through + left
        vec![5, 6],       // S through + left
        vec![2, 3, 7, 8], // E+W through
        vec![4, 9],       // E+W left
    ];
    Layout::build(
        "four_leg_secondary",
        routes,
        phases,
        (16.0, 120.0),
        (6.0, 12.0),
    )
}

/// T-junction of an E-W main road (4 approach + 3 departure lanes per leg)
/// and a southern secondary leg (2 + 2). Movements: three eastbound throughs,
/// three westbound throughs, one westbound-to-south left, one south-to-west
/// left. Lanes: W 1-4, E 5-8, S 9-10; departures 11-18.
pub fn tee() -> Layout {
    let t = Movement::Through;
    let l = Movement::Left;
    let routes = vec![
        // eastbound from W (aligned horizontals)
        route(2, 11, t, vec![seg(-6.0, -7.5, 6.0, -7.5)]),
        route(3, 12, t, vec![seg(-6.0, -4.5, 6.0, -4.5)]),
        route(4, 13, t, vec![seg(-6.0, -1.5, 6.0, -1.5)]),
        // westbound from E
        route(5, 14, t, vec![seg(6.0, 10.5, -6.0, 7.5)]),
        route(6, 15, t, vec![seg(6.0, 7.5, -6.0, 4.5)]),
        route(7, 16, t, vec![seg(6.0, 4.5, -6.0, 1.5)]),
        route(8, 17, l, vec![
            arc(6.0, -9.0, 10.5, FRAC_PI_2, PI),
            seg(-4.5, -9.0, -4.5, -12.0),
        ]),
        // northbound from S
        route(10, 14, l, vec![
            seg(1.5, -12.0, 1.5, 0.0),
            arc(-6.0, 0.0, 7.5, 0.0, FRAC_PI_2),
        ]),
    ];
    let phases = vec![
        vec![0, 1, 2, 3, 4, 5], // E+W through
        vec![6],                // westbound left
        vec![7],                // southern left
    ];
    Layout::build("tee", routes, phases, (12.0, 90.0), (6.0, 12.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_leg_main_has_40_conflict_points() {
        let layout = four_leg_main();
        assert_eq!(layout.points.len(), 40);
        // each conflicting route pair crosses exactly once here
        let pairs: BTreeSet<(usize, usize)> =
            layout.points.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(pairs.len(), 40);
        // composition: 16 through x through, 20 left x through, 4 left x left
        let mut tt = 0;
        let mut lt = 0;
        let mut ll = 0;
        for p in &layout.points {
            let ma = layout.routes[p.a].movement;
            let mb = layout.routes[p.b].movement;
            match (ma, mb) {
                (Movement::Through, Movement::Through) => tt += 1,
                (Movement::Left, Movement::Left) => ll += 1,
                _ => lt += 1,
            }
        }
        assert_eq!((tt, lt, ll), (16, 20, 4));
    }

    #[test]
    fn tee_has_9_conflict_points() {
        let layout = tee();
        assert_eq!(layout.points.len(), 9);
        let pairs: BTreeSet<(usize, usize)> =
            layout.points.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(pairs.len(), 9);
    }

    #[test]
    fn conflict_points_are_interior_and_transversal() {
        for layout in [four_leg_main(), four_leg_secondary(), tee()] {
            assert!(!layout.points.is_empty());
            for p in &layout.points {
                let la = layout.routes[p.a].path.len();
                let lb = layout.routes[p.b].path.len();
                assert!(p.pos_a > END_EPS && p.pos_a < la - END_EPS);
                assert!(p.pos_b > END_EPS && p.pos_b < lb - END_EPS);
                assert!(p.angle > 0.01 && p.angle < PI - 0.01);
                // the two routes really are at the same place
                let pa = layout.routes[p.a].path.point_at(p.pos_a);
                let pb = layout.routes[p.b].path.point_at(p.pos_b);
                assert!(pa.sub(pb).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn twelve_vehicle_pair_counts() {
        // one vehicle on every route of the symmetric four-leg
        let layout = four_leg_main();
        let counts = vec![1; layout.routes.len()];
        assert_eq!(conflicting_pairs(&layout, &counts), 40);

        // twelve vehicles on the tee, spread per its demand ratios
        let layout = tee();
        let counts = vec![2, 2, 2, 1, 1, 1, 1, 2];
        assert_eq!(counts.iter().sum::<usize>(), 12);
        assert_eq!(conflicting_pairs(&layout, &counts), 24);
    }

    #[test]
    fn buffer_size_examples() {
        assert_eq!(buffer_size(1.0, 0.0, 1.8), 0.5);
        let b = buffer_size(0.0, FRAC_PI_2, 1.8);
        assert!((b - 0.9).abs() < 1e-12);
        let b = buffer_size(1.0, FRAC_PI_2, 1.8);
        assert!((b - (0.5 * 2.0_f64.sqrt() + 0.9)).abs() < 1e-12);
    }

    #[test]
    fn buffer_size_monotone_in_angle() {
        let mut prev = -1.0;
        let mut theta = 0.0;
        while theta < 3.1 {
            let b = buffer_size(1.0, theta, 1.8);
            assert!(b > prev);
            prev = b;
            theta += 0.01;
        }
    }

    #[test]
    #[should_panic]
    fn buffer_size_rejects_head_on() {
        buffer_size(1.0, PI, 1.8);
    }

    /// Minimal distance between two oriented rectangles via their edges.
    fn rect_distance(ca: Vec2, ha: Vec2, cb: Vec2, hb: Vec2, len: f64, wid: f64) -> f64 {
        let corners = |c: Vec2, h: Vec2| -> Vec<Vec2> {
            let n = Vec2::new(-h.y, h.x);
            let f = c;
            let r = c.sub(h.scale(len));
            vec![
                f.add(n.scale(wid / 2.0)),
                f.sub(n.scale(wid / 2.0)),
                r.sub(n.scale(wid / 2.0)),
                r.add(n.scale(wid / 2.0)),
            ]
        };
        let ra = corners(ca, ha);
        let rb = corners(cb, hb);
        let seg_dist = |p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2| -> f64 {
            let mut best = f64::INFINITY;
            let point_seg = |p: Vec2, a: Vec2, b: Vec2| -> f64 {
                let d = b.sub(a);
                let t = (p.sub(a).dot(d) / d.dot(d)).clamp(0.0, 1.0);
                p.sub(a.add(d.scale(t))).norm()
            };
            for t in 0..=20 {
                let p = p1.add(p2.sub(p1).scale(t as f64 / 20.0));
                best = best.min(point_seg(p, q1, q2));
                let q = q1.add(q2.sub(q1).scale(t as f64 / 20.0));
                best = best.min(point_seg(q, p1, p2));
            }
            best
        };
        let mut best = f64::INFINITY;
        for i in 0..4 {
            for j in 0..4 {
                best = best.min(seg_dist(ra[i], ra[(i + 1) % 4], rb[j], rb[(j + 1) % 4]));
            }
        }
        best
    }

    /// Independent construction: two vehicles approach a right-angle crossing
    /// symmetrically; find the front-bumper stop-back distance where their
    /// clearance equals the gap.
    #[test]
    fn buffer_matches_planar_oracle_at_right_angle() {
        let gap = 1.0;
        let clearance = |x: f64| -> f64 {
            let a_front = Vec2::new(-x, 0.0);
            let b_front = Vec2::new(0.0, -x);
            rect_distance(a_front, Vec2::new(1.0, 0.0), b_front, Vec2::new(0.0, 1.0), VEH_LEN, VEH_W)
        };
        let mut lo = VEH_W / 2.0;
        let mut hi = VEH_W / 2.0 + gap + 10.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if clearance(mid) < gap {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let formula = buffer_size(gap, FRAC_PI_2, VEH_W);
        assert!(
            (oracle - formula).abs() < 1e-9,
            "oracle {oracle} vs formula {formula}"
        );
    }

    #[test]
    fn worst_buffer_covers_straight_route() {
        let layout = four_leg_main();
        for r in 0..layout.routes.len() {
            let w = layout.worst_buffer(r, 1.0);
            assert!(w >= 0.5);
            assert!(w < 5.0); // obtuse left-vs-opposing-through crossings reach ~3.7
        }
    }

    #[test]
    fn paths_report_consistent_lengths() {
        let layout = four_leg_main();
        for r in &layout.routes {
            match r.movement {
                Movement::Through => {
                    assert!((r.path.len() - 585.0_f64.sqrt()).abs() < 1e-9)
                }
                Movement::Left => {
                    assert!((r.path.len() - (3.0 + 13.5 * FRAC_PI_2)).abs() < 1e-9)
                }
            }
        }
    }

    #[test]
    fn left_turn_conflicts_against_exit_side_inner_through_only() {
        // the outer through on the exit side shares only the boundary merge
        let layout = four_leg_main();
        // northbound left (lane 12) exits west; westbound-side routes are
        // lane 6 (outer through, merge partner) and lane 7 (inner through)
        let left = layout.route_by_lane(12).unwrap();
        let outer = layout.route_by_lane(6).unwrap();
        let inner = layout.route_by_lane(7).unwrap();
        assert!(!layout.routes_conflict(left, outer));
        assert!(layout.routes_conflict(left, inner));
    }

    #[test]
    fn secondary_layout_phase_split_is_forced() {
        // opposing secondary lefts cross twice; they must sit in different phases
        let layout = four_leg_secondary();
        let nl = layout.route_by_lane(2).unwrap();
        let sl = layout.route_by_lane(8).unwrap();
        let shared: Vec<_> = layout
            .points
            .iter()
            .filter(|p| (p.a, p.b) == (nl.min(sl), nl.max(sl)))
            .collect();
        assert_eq!(shared.len(), 2);
        assert_ne!(layout.phase_of(nl), layout.phase_of(sl));
    }
}
