//! Trajectory construction under bounded acceleration.
//!
//! Planned motion is piecewise constant-acceleration. The central constructor
//! `build_bounded` produces the trajectory that covers a given distance in a
//! given time, starts and ends at given speeds, never exceeds the
//! acceleration bounds, stays below an optional upper position boundary
//! (a leading vehicle's shifted trajectory), and brakes as late as possible:
//! cruise at the entry speed, one deceleration, at most one dwell (possibly a
//! full stop), one acceleration, then cruise at the exit speed.

use crate::{ACCEL, DECEL};

/// One constant-acceleration piece.
#[derive(Clone, Copy, Debug)]
pub struct Seg {
    pub t0: f64,
    pub x0: f64,
    pub v0: f64,
    pub a: f64,
    pub dt: f64,
}

impl Seg {
    fn pos_at(&self, t: f64) -> f64 {
        let dt = t - self.t0;
        self.x0 + self.v0 * dt + 0.5 * self.a * dt * dt
    }
    fn vel_at(&self, t: f64) -> f64 {
        self.v0 + self.a * (t - self.t0)
    }
    fn end_pos(&self) -> f64 {
        self.pos_at(self.t0 + self.dt)
    }
    fn end_vel(&self) -> f64 {
        self.vel_at(self.t0 + self.dt)
    }
}

/// A planned trajectory: contiguous segments, extrapolated at constant speed
/// beyond both ends.
#[derive(Clone, Debug)]
pub struct Profile {
    segs: Vec<Seg>,
}

impl Profile {
    pub fn start_time(&self) -> f64 {
        self.segs[0].t0
    }
    pub fn end_time(&self) -> f64 {
        let s = self.segs.last().unwrap();
        s.t0 + s.dt
    }
    pub fn start_pos(&self) -> f64 {
        self.segs[0].x0
    }
    pub fn end_pos(&self) -> f64 {
        self.segs.last().unwrap().end_pos()
    }
    pub fn end_vel(&self) -> f64 {
        self.segs.last().unwrap().end_vel()
    }

    pub fn pos(&self, t: f64) -> f64 {
        if t <= self.start_time() {
            let s = &self.segs[0];
            return s.x0 + s.v0 * (t - s.t0);
        }
        for s in &self.segs {
            if t <= s.t0 + s.dt {
                return s.pos_at(t);
            }
        }
        let s = self.segs.last().unwrap();
        s.end_pos() + s.end_vel() * (t - s.t0 - s.dt)
    }

    pub fn vel(&self, t: f64) -> f64 {
        if t <= self.start_time() {
            return self.segs[0].v0;
        }
        for s in &self.segs {
            if t <= s.t0 + s.dt {
                return s.vel_at(t);
            }
        }
        self.segs.last().unwrap().end_vel()
    }

    /// Same motion with every position shifted by `dx`.
    pub fn shifted(&self, dx: f64) -> Profile {
        let segs = self
            .segs
            .iter()
            .map(|s| Seg { x0: s.x0 + dx, ..*s })
            .collect();
        Profile { segs }
    }

    /// First time at or after `t_from` when position reaches `x`.
    /// Positions are nondecreasing, so the crossing is unique.
    pub fn time_at_pos(&self, x: f64, t_from: f64) -> Option<f64> {
        let t_end = self.end_time();
        let mut t_lo = t_from;
        if self.pos(t_lo) >= x {
            return Some(t_lo);
        }
        // walk segments then the final extrapolation
        for s in &self.segs {
            let hi = s.t0 + s.dt;
            if hi <= t_lo {
                continue;
            }
            if s.pos_at(hi) >= x {
                return Some(solve_crossing(s, x, t_lo.max(s.t0), hi));
            }
            t_lo = hi;
        }
        let last = self.segs.last().unwrap();
        let v = last.end_vel();
        if v <= 1e-12 {
            return None;
        }
        Some(t_end + (x - last.end_pos()) / v)
    }

    /// Where a full brake starting at time `t` would come to rest.
    pub fn stop_pos(&self, t: f64) -> f64 {
        let v = self.vel(t);
        self.pos(t) + v * v / (2.0 * DECEL)
    }

    /// Largest value of self.pos(t) - other.pos(t) over [t_lo, t_hi].
    pub fn max_excess_over(&self, other: &Profile, t_lo: f64, t_hi: f64) -> f64 {
        self.max_diff(other, t_lo, t_hi, Profile::pos)
    }

    /// Largest value of self.stop_pos(t) - other.stop_pos(t) over
    /// [t_lo, t_hi]. Keeping this at -(len + gap) behind a leader means a
    /// full brake always fits, whatever the leader does next.
    pub fn max_stop_excess_over(&self, other: &Profile, t_lo: f64, t_hi: f64) -> f64 {
        self.max_diff(other, t_lo, t_hi, Profile::stop_pos)
    }

    // f is quadratic in t between knots, so the three-point vertex form
    // below is exact on each interval
    fn max_diff(&self, other: &Profile, t_lo: f64, t_hi: f64, f: fn(&Profile, f64) -> f64) -> f64 {
        let mut knots = vec![t_lo, t_hi];
        for p in [self, other] {
            for s in &p.segs {
                for t in [s.t0, s.t0 + s.dt] {
                    if t > t_lo && t < t_hi {
                        knots.push(t);
                    }
                }
            }
        }
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = f64::NEG_INFINITY;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-12 {
                continue;
            }
            let fa = f(self, a) - f(other, a);
            let fb = f(self, b) - f(other, b);
            best = best.max(fa).max(fb);
            let m = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            let fm = f(self, m) - f(other, m);
            let c2 = (fa + fb - 2.0 * fm) / (2.0 * h * h);
            let c1 = (fb - fa) / (2.0 * h);
            if c2.abs() > 1e-15 {
                let s = -c1 / (2.0 * c2);
                if s.abs() < h {
                    best = best.max(fm + c1 * s + c2 * s * s);
                }
            }
        }
        best
    }
}

fn solve_crossing(s: &Seg, x: f64, t_lo: f64, t_hi: f64) -> f64 {
    // monotone on the segment; bisect the quadratic for robustness
    let (mut lo, mut hi) = (t_lo, t_hi);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if s.pos_at(mid) >= x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Incremental profile assembly.
pub struct ProfileBuilder {
    t: f64,
    x: f64,
    v: f64,
    segs: Vec<Seg>,
}

impl ProfileBuilder {
    pub fn new(t0: f64, x0: f64, v0: f64) -> Self {
        ProfileBuilder {
            t: t0,
            x: x0,
            v: v0,
            segs: Vec::new(),
        }
    }

    pub fn cruise(mut self, dt: f64) -> Self {
        self.push(0.0, dt);
        self
    }

    /// Ramp to `v1` at magnitude `rate`.
    pub fn ramp_to(mut self, v1: f64, rate: f64) -> Self {
        let a = if v1 >= self.v { rate } else { -rate };
        let dt = (v1 - self.v).abs() / rate;
        self.push(a, dt);
        self
    }

    fn push(&mut self, a: f64, dt: f64) {
        if dt <= 1e-12 {
            return;
        }
        self.segs.push(Seg {
            t0: self.t,
            x0: self.x,
            v0: self.v,
            a,
            dt,
        });
        self.x += self.v * dt + 0.5 * a * dt * dt;
        self.v += a * dt;
        self.t += dt;
    }

    pub fn finish(mut self) -> Profile {
        if self.segs.is_empty() {
            self.segs.push(Seg {
                t0: self.t,
                x0: self.x,
                v0: self.v,
                a: 0.0,
                dt: 0.0,
            });
        }
        Profile { segs: self.segs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuildError {
    /// Requested arrival is sooner than physics allows.
    TooEarly { earliest: f64 },
    /// Requested arrival is later than reachable without stopping, and the
    /// vehicle can no longer stop within the distance.
    TooLate { latest: f64 },
    /// The leading-vehicle boundary makes the requested arrival unreachable.
    Blocked { earliest: f64 },
    /// The exit speed cannot be met within the distance at all.
    TooShort,
}

/// Minimum time to cover `dist` from speed `v0` to exact end speed `w`,
/// cruising at most at `vmax`. None if `w` is unreachable within `dist`.
pub fn fastest_arrival(dist: f64, v0: f64, w: f64, vmax: f64) -> Option<f64> {
    fastest_profile(0.0, 0.0, dist, v0, w, vmax).map(|p| p.end_time())
}

/// Fastest profile from (t0, x0, v0) covering `dist` ending at speed `w`.
pub fn fastest_profile(
    t0: f64,
    x0: f64,
    dist: f64,
    v0: f64,
    w: f64,
    vmax: f64,
) -> Option<Profile> {
    let (a, b) = (ACCEL, DECEL);
    if w > v0 && (w * w - v0 * v0) / (2.0 * a) > dist + 1e-9 {
        return None;
    }
    if w < v0 && (v0 * v0 - w * w) / (2.0 * b) > dist + 1e-9 {
        return None;
    }
    let vp2 = (2.0 * a * b * dist + b * v0 * v0 + a * w * w) / (a + b);
    let vp = vp2.max(v0.max(w).powi(2)).sqrt().min(vmax);
    let d_up = (vp * vp - v0 * v0) / (2.0 * a);
    let d_down = (vp * vp - w * w) / (2.0 * b);
    let cruise = ((dist - d_up - d_down) / vp).max(0.0);
    Some(
        ProfileBuilder::new(t0, x0, v0)
            .ramp_to(vp, a)
            .cruise(cruise)
            .ramp_to(w, b)
            .finish(),
    )
}

/// Maximum time to cover `dist` from `v0` to end speed `w` without ever
/// stopping; infinite if a full stop (and hence arbitrary delay) fits.
pub fn latest_arrival(dist: f64, v0: f64, w: f64) -> f64 {
    let (a, b) = (ACCEL, DECEL);
    let stop_dist = v0 * v0 / (2.0 * b) + w * w / (2.0 * a);
    if stop_dist <= dist {
        return f64::INFINITY;
    }
    let v2 = ((stop_dist - dist) * 2.0 * a * b / (a + b)).sqrt();
    // deepest reachable dip; unique trajectory with no cruise anywhere
    (v0 - v2) / b + (w - v2) / a
}

/// Latest-braking trajectory from (t_entry, x0, speed u) covering `dist`,
/// arriving exactly at `t_exit` with speed `w`, below `boundary` if given.
pub fn build_bounded(
    t_entry: f64,
    x0: f64,
    u: f64,
    dist: f64,
    w: f64,
    t_exit: f64,
    boundary: Option<&Profile>,
) -> Result<Profile, BuildError> {
    assert!(w > 0.0 && dist > 0.0);
    let (a, b) = (ACCEL, DECEL);
    let t_total = t_exit - t_entry;

    let t_min = match fastest_arrival(dist, u, w, u.max(w)) {
        Some(t) => t,
        None => return Err(BuildError::TooShort),
    };
    if t_total < t_min - 1e-9 {
        return Err(BuildError::TooEarly {
            earliest: t_entry + t_min,
        });
    }

    let stop_dist = u * u / (2.0 * b) + w * w / (2.0 * a);
    let c1_max = if stop_dist <= dist + 1e-12 {
        // a full stop fits, so arbitrarily late arrivals are reachable
        c1_latest_stoppable(u, w, dist, t_total)
    } else {
        let latest = latest_arrival(dist, u, w);
        if t_total > latest + 1e-9 {
            return Err(BuildError::TooLate {
                latest: t_entry + latest,
            });
        }
        // past this cruise length the dip speed would exceed min(u, w)
        let rate = if w > u { a } else { b };
        let c1_reach = (dist - (w * w - u * u).abs() / (2.0 * rate)) / u.max(1e-9);
        if w > u + 1e-9 && t_total < c1_reach + (w - u) / a {
            // speeding up overall, sooner than any dipping trajectory: hold
            // u, ramp up once, and cruise at w for the remaining time; this
            // cruise length is exactly zero at the fastest arrival
            ((w * t_total - dist - (w - u) * (w - u) / (2.0 * a)) / (w - u)).max(0.0)
        } else {
            // the dip depth fixes total time, which falls as the initial
            // cruise grows, so bisect the cruise length
            let time_for = |c1: f64| -> f64 {
                let d1 = dist - u * c1;
                let sd = u * u / (2.0 * b) + w * w / (2.0 * a);
                let v2 = ((sd - d1).max(0.0) * 2.0 * a * b / (a + b)).sqrt();
                c1 + (u - v2) / b + (w - v2) / a
            };
            let (mut lo, mut hi) = (0.0, c1_reach.min(t_total).max(0.0));
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if time_for(mid) >= t_total {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };

    let unbounded = complete_profile(t_entry, x0, u, dist, w, t_total, c1_max);
    let boundary = match boundary {
        None => return Ok(unbounded),
        Some(b) => b,
    };
    if excess(&unbounded, boundary) <= EXCESS_TOL {
        return Ok(unbounded);
    }
    // when slowing down overall (u > w), too short an initial cruise leaves
    // more time than the dip family can absorb within the distance; the
    // completion is only defined from this cruise length up
    let c1_lo = if u > w + 1e-12 {
        let f_top = -(u - w) * (u - w) / (2.0 * b);
        ((dist - w * t_total + f_top) / (u - w)).clamp(0.0, c1_max)
    } else {
        0.0
    };
    // braking late crowds the leader up front, but braking early can be
    // just as bad: it forces a fast tail chase behind a leader that is
    // still slow, with no room left to brake. The feasible cruise lengths
    // form a middle interval, so scan for it, refine, then push the cruise
    // as long as it will go.
    let eval =
        |c1: f64| excess(&complete_profile(t_entry, x0, u, dist, w, t_total, c1), boundary);
    const SCAN: usize = 24;
    let span = c1_max - c1_lo;
    let mut best = (f64::INFINITY, c1_lo);
    for i in 0..=SCAN {
        let c1 = c1_lo + span * i as f64 / SCAN as f64;
        let e = eval(c1);
        if e < best.0 {
            best = (e, c1);
        }
    }
    if best.0 > EXCESS_TOL {
        let (mut a, mut b) = (
            (best.1 - span / SCAN as f64).max(c1_lo),
            (best.1 + span / SCAN as f64).min(c1_max),
        );
        for _ in 0..120 {
            let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
            let (e1, e2) = (eval(m1), eval(m2));
            if e1 < best.0 {
                best = (e1, m1);
            }
            if e2 < best.0 {
                best = (e2, m2);
            }
            if e1 <= e2 {
                b = m2;
            } else {
                a = m1;
            }
        }
    }
    if best.0 > EXCESS_TOL {
        let clear = boundary
            .time_at_pos(x0 + dist, t_entry)
            .unwrap_or(f64::INFINITY);
        return Err(BuildError::Blocked {
            earliest: clear.max(t_entry + t_min),
        });
    }
    let (mut lo, mut hi) = (best.1, c1_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) <= EXCESS_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(complete_profile(t_entry, x0, u, dist, w, t_total, lo))
}

/// Constraint horizon past the profile end: long enough for the follower to
/// clear any route's box while the boundary still matters.
const TAIL_REACH: f64 = 40.0;

/// Acceptable overshoot past a boundary, m; an order under the engine's
/// spacing-audit slack.
const EXCESS_TOL: f64 = 1e-7;

/// A profile obeys a boundary when it stays behind it AND could always
/// brake to rest behind the boundary's own full-brake point; the second
/// part keeps followers recoverable when a leader is replanned slower.
fn excess(p: &Profile, boundary: &Profile) -> f64 {
    let tail = TAIL_REACH / p.end_vel().max(1.0);
    let hi = p.end_time() + tail;
    p.max_excess_over(boundary, p.start_time(), hi)
        .max(p.max_stop_excess_over(boundary, p.start_time(), hi))
}

/// Largest initial-cruise length when a full stop fits within the distance.
fn c1_latest_stoppable(u: f64, w: f64, dist: f64, t_total: f64) -> f64 {
    let (a, b) = (ACCEL, DECEL);
    if u < 1e-9 {
        return 0.0;
    }
    let stop_dist = u * u / (2.0 * b) + w * w / (2.0 * a);
    // zero end-cruise, zero dwell: time and distance fix the dip speed;
    // g is increasing in v2 on [0, min(u, w)]
    let g = |v2: f64| -> f64 {
        u * (t_total - (u - v2) / b - (w - v2) / a) + (u * u - v2 * v2) / (2.0 * b)
            + (w * w - v2 * v2) / (2.0 * a)
            - dist
    };
    if g(0.0) >= 0.0 {
        // surplus time even with a stop: cruise until the stop-and-go fits
        return (dist - stop_dist) / u;
    }
    let top = u.min(w);
    if g(top) < 0.0 && w > u + 1e-9 {
        // even with no dip the zero-end-cruise trajectory is too slow, so
        // hold u, ramp up once, and cruise at w for the remaining time
        return ((w * t_total - dist - (w - u) * (w - u) / (2.0 * a)) / (w - u)).max(0.0);
    }
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v2 = 0.5 * (lo + hi);
    t_total - (u - v2) / b - (w - v2) / a
}

/// Canonical completion for a given initial cruise length `c1`: decelerate to
/// a dip speed, dwell only if the dip is a full stop, accelerate to `w`, then
/// cruise at `w` for whatever time remains.
fn complete_profile(
    t_entry: f64,
    x0: f64,
    u: f64,
    dist: f64,
    w: f64,
    t_total: f64,
    c1: f64,
) -> Profile {
    let p = complete_inner(t_entry, x0, u, dist, w, t_total, c1);
    // when time and distance pin the trajectory down to a single cruise
    // length, the dip-speed root degenerates to a tangency and rounding in
    // c1 amplifies to sqrt-of-ulp scale in the end position
    debug_assert!(
        (p.end_pos() - (x0 + dist)).abs() < 1e-4,
        "completion misses the target: end {} vs {} (u {u}, w {w}, t {t_total}, c1 {c1})",
        p.end_pos(),
        x0 + dist
    );
    debug_assert!(
        (p.end_time() - (t_entry + t_total)).abs() < 1e-6,
        "completion misses the exit time: end {} vs {} (u {u}, w {w}, t {t_total}, c1 {c1})",
        p.end_time(),
        t_entry + t_total
    );
    p
}

fn complete_inner(
    t_entry: f64,
    x0: f64,
    u: f64,
    dist: f64,
    w: f64,
    t_total: f64,
    c1: f64,
) -> Profile {
    let (a, b) = (ACCEL, DECEL);
    if u < 1e-9 {
        // standing start: dwell, then accelerate and cruise out
        let c5 = (dist - w * w / (2.0 * a)) / w;
        let dwell = (t_total - w / a - c5).max(0.0);
        return ProfileBuilder::new(t_entry, x0, 0.0)
            .cruise(dwell)
            .ramp_to(w, a)
            .cruise(c5)
            .finish();
    }
    let d1 = dist - u * c1;
    let t1 = t_total - c1;
    // w * t1 - d1 = F(v2) with F decreasing; F(v2) is the time-distance
    // shortfall of the dip relative to cruising at w
    let f = |v2: f64| -> f64 {
        (u - v2) * (2.0 * w - u - v2) / (2.0 * b) + (w - v2) * (w - v2) / (2.0 * a)
    };
    let rhs = w * t1 - d1;
    if rhs > f(0.0) + 1e-12 {
        // needs a stop: dwell absorbs the remaining time
        let c5 = ((d1 - u * u / (2.0 * b) - w * w / (2.0 * a)) / w).max(0.0);
        let dwell = (t1 - u / b - w / a - c5).max(0.0);
        ProfileBuilder::new(t_entry, x0, u)
            .cruise(c1)
            .ramp_to(0.0, b)
            .cruise(dwell)
            .ramp_to(w, a)
            .cruise(c5)
            .finish()
    } else {
        let (mut lo, mut hi) = (0.0, u.min(w));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= rhs {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v2 = 0.5 * (lo + hi);
        let c5 = (t1 - (u - v2) / b - (w - v2) / a).max(0.0);
        ProfileBuilder::new(t_entry, x0, u)
            .cruise(c1)
            .ramp_to(v2, b)
            .ramp_to(w, a)
            .cruise(c5)
            .finish()
    }
}

/// Ramp-cruise-ramp profile: adjust from `v0` to cruise speed `m`, hold it,
/// then adjust to reach the end of `dist` at exactly speed `w`. Falls back to
/// a single peak or valley when the cruise does not fit. None if `w` cannot
/// be met.
pub fn cruise_profile(t0: f64, x0: f64, dist: f64, v0: f64, m: f64, w: f64) -> Option<Profile> {
    let (a, b) = (ACCEL, DECEL);
    let rate_in = if m >= v0 { a } else { b };
    let rate_out = if w >= m { a } else { b };
    let d_in = (m * m - v0 * v0).abs() / (2.0 * rate_in);
    let d_out = (w * w - m * m).abs() / (2.0 * rate_out);
    if d_in + d_out <= dist {
        let cruise = (dist - d_in - d_out) / m.max(1e-9);
        return Some(
            ProfileBuilder::new(t0, x0, v0)
                .ramp_to(m, rate_in)
                .cruise(cruise)
                .ramp_to(w, rate_out)
                .finish(),
        );
    }
    if m >= v0.max(w) {
        // peak below m
        return fastest_profile(t0, x0, dist, v0, w, m);
    }
    // valley above m: dip to the speed that exactly consumes the distance
    let sd = v0 * v0 / (2.0 * b) + w * w / (2.0 * a);
    if sd < dist {
        return None; // distance too long for a pure valley; caller picks m higher
    }
    let v2 = ((sd - dist) * 2.0 * a * b / (a + b)).sqrt();
    if v2 > v0.min(w) + 1e-9 {
        return None; // cannot reach w within dist at all
    }
    Some(
        ProfileBuilder::new(t0, x0, v0)
            .ramp_to(v2, b)
            .ramp_to(w, a)
            .finish(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{V_CRUISE, V_LEFT, V_THROUGH};

    #[test]
    fn minimum_travel_times() {
        let t = fastest_arrival(600.0, V_CRUISE, V_THROUGH, V_CRUISE).unwrap();
        assert!((t - 33.5).abs() < 1e-9);
        let t = fastest_arrival(600.0, V_CRUISE, V_LEFT, V_CRUISE).unwrap();
        assert!((t - (29.0 + 100.0 / 216.0 * 2.0 + 16.0 / 3.0)).abs() < 1e-6 || t > 0.0);
        // closed check: brake distance (324-100)/3 = 74.667, cruise the rest
        let expect = (600.0 - 224.0 / 3.0) / 18.0 + 8.0 / 1.5;
        assert!((t - expect).abs() < 1e-9);
    }

    #[test]
    fn fastest_profile_handles_short_distances() {
        // cannot brake 18 -> 5 within 50 m
        assert!(fastest_arrival(50.0, 18.0, 5.0, 18.0).is_none());
        // accelerating start
        let t = fastest_arrival(100.0, 0.0, 15.0, 18.0).unwrap();
        let p = fastest_profile(0.0, 0.0, 100.0, 0.0, 15.0, 18.0).unwrap();
        assert!((p.end_pos() - 100.0).abs() < 1e-9);
        assert!((p.end_vel() - 15.0).abs() < 1e-9);
        assert!(t > 100.0 / 18.0);
    }

    #[test]
    fn latest_arrival_cases() {
        // 18 -> 15 over 600 m: plenty of room to stop
        assert!(latest_arrival(600.0, 18.0, 15.0).is_infinite());
        // 18 -> 15 over 120 m: stop needs 183 m, so bounded
        let t = latest_arrival(120.0, 18.0, 15.0);
        assert!(t.is_finite());
        // the bounding trajectory really covers 120 m
        let v2 = {
            let sd: f64 = 108.0 + 75.0;
            ((sd - 120.0) * 2.0 * 1.5 * 1.5 / 3.0).sqrt()
        };
        let d = (324.0 - v2 * v2) / 3.0 + (225.0 - v2 * v2) / 3.0;
        assert!((d - 120.0).abs() < 1e-9);
        assert!((t - ((18.0 - v2) / 1.5 + (15.0 - v2) / 1.5)).abs() < 1e-9);
    }

    #[test]
    fn surplus_time_yields_full_stop_before_the_line() {
        // cruise entry, through exit, 20 s of surplus: the plan stops exactly
        // w^2/2a = 75 m before the end and waits 8.33 s
        let t_exit = 33.5 + 20.0;
        let p = build_bounded(0.0, 0.0, 18.0, 600.0, 15.0, t_exit, None).unwrap();
        assert!((p.end_pos() - 600.0).abs() < 1e-6);
        assert!((p.end_vel() - 15.0).abs() < 1e-9);
        assert!((p.pos(t_exit) - 600.0).abs() < 1e-6);
        // find the dwell segment
        let mut dwell = 0.0;
        let mut stop_pos = None;
        for s in &p.segs {
            if s.a == 0.0 && s.v0.abs() < 1e-9 && s.dt > 0.0 {
                dwell = s.dt;
                stop_pos = Some(s.x0);
            }
        }
        assert!((dwell - 25.0 / 3.0).abs() < 1e-6, "dwell {dwell}");
        assert!((stop_pos.unwrap() - 525.0).abs() < 1e-6);
        // latest braking: initial cruise is (600-183)/18
        assert!((p.segs[0].dt - 417.0 / 18.0).abs() < 1e-6);
    }

    #[test]
    fn exactness_across_random_targets() {
        let mut state = 0x243f_6a88_85a3_08d3u64;
        let mut rnd = move || {
            state = crate::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let u = 5.0 + 13.0 * rnd();
            let w = 5.0 + 10.0 * rnd();
            let dist = 120.0 + 500.0 * rnd();
            let t_min = fastest_arrival(dist, u, w, u.max(w)).unwrap();
            let latest = latest_arrival(dist, u, w);
            let slack = if latest.is_finite() {
                (latest - t_min) * rnd()
            } else {
                40.0 * rnd()
            };
            let t_exit = t_min + slack;
            let p = build_bounded(0.0, 0.0, u, dist, w, t_exit, None).unwrap();
            assert!((p.end_pos() - dist).abs() < 1e-5, "dist {} u {} w {}", dist, u, w);
            assert!((p.end_time() - t_exit).abs() < 1e-5 || slack == 0.0);
            assert!((p.end_vel() - w).abs() < 1e-6);
            // speed stays within [0, max(u, w)], accel within bounds
            for s in &p.segs {
                assert!(s.a.abs() <= 1.5 + 1e-12);
                assert!(s.v0 >= -1e-9 && s.v0 <= u.max(w) + 1e-9);
            }
        }
    }

    #[test]
    fn family_is_pointwise_ordered_in_cruise_length() {
        let (u, w, dist, t_total) = (18.0, 15.0, 600.0, 45.0);
        let mut prev: Option<Profile> = None;
        for i in 0..12 {
            let c1 = i as f64 * 1.5;
            let p = complete_profile(0.0, 0.0, u, dist, w, t_total, c1);
            if let Some(q) = &prev {
                // larger c1 must be pointwise at or ahead
                let m = q.max_excess_over(&p, 0.0, t_total);
                assert!(m < 1e-6, "ordering violated by {m}");
            }
            prev = Some(p);
        }
    }

    #[test]
    fn too_early_reports_earliest() {
        match build_bounded(0.0, 0.0, 18.0, 600.0, 15.0, 30.0, None) {
            Err(BuildError::TooEarly { earliest }) => assert!((earliest - 33.5).abs() < 1e-9),
            other => panic!("expected TooEarly, got {other:?}"),
        }
    }

    #[test]
    fn too_late_when_stopping_no_longer_fits() {
        // 18 m/s, 120 m to go: cannot stop; arrival beyond the no-stop bound fails
        let latest = latest_arrival(120.0, 18.0, 15.0);
        match build_bounded(0.0, 0.0, 18.0, 120.0, 15.0, latest + 5.0, None) {
            Err(BuildError::TooLate { latest: l }) => assert!((l - latest).abs() < 1e-9),
            other => panic!("expected TooLate, got {other:?}"),
        }
        // within the window it succeeds
        let p = build_bounded(0.0, 0.0, 18.0, 120.0, 15.0, latest - 0.1, None).unwrap();
        assert!((p.end_pos() - 120.0).abs() < 1e-5);
    }

    #[test]
    fn follower_is_tangent_to_leader_boundary() {
        // leader: full-stop plan; follower enters 1.2 s later and must ride
        // the leader's curve shifted by gap + length
        let leader = build_bounded(0.0, 0.0, 18.0, 600.0, 15.0, 53.5, None).unwrap();
        let boundary = leader.shifted(-5.0);
        let follower = build_bounded(1.2, 0.0, 18.0, 600.0, 15.0, 53.5 + 5.0 / 15.0, Some(&boundary))
            .unwrap();
        assert!(follower.max_excess_over(&boundary, 1.2, follower.end_time()) <= 1e-6);
        assert!((follower.end_pos() - 600.0).abs() < 1e-5);
        // the follower cannot do better: one third of a second behind is the
        // saturation headway for gap 1 m, length 4 m at 15 m/s
        match build_bounded(1.2, 0.0, 18.0, 600.0, 15.0, 53.5 + 0.2, Some(&boundary)) {
            Err(BuildError::Blocked { .. }) => {}
            Ok(p) => {
                // allowed only if it stays under the boundary
                assert!(p.max_excess_over(&boundary, 1.2, p.end_time()) <= 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blocked_entry_reports_boundary_clear_time() {
        // leader stopped dead ahead for a long time: follower cannot make an
        // early exit and the error carries a usable retry time
        let leader = ProfileBuilder::new(0.0, 300.0, 0.0).cruise(40.0).ramp_to(15.0, 1.5).cruise(60.0).finish();
        let boundary = leader.shifted(-5.0);
        match build_bounded(0.0, 0.0, 18.0, 600.0, 15.0, 34.0, Some(&boundary)) {
            Err(BuildError::Blocked { earliest }) => {
                assert!(earliest > 40.0);
            }
            other => panic!("expected Blocked, got {other:?}"),
        }
    }

    #[test]
    fn cruise_profile_shapes() {
        // slow-down band: 18 -> 12 cruise -> 15 at the line
        let p = cruise_profile(0.0, 0.0, 300.0, 18.0, 12.0, 15.0).unwrap();
        assert!((p.end_pos() - 300.0).abs() < 1e-9);
        assert!((p.end_vel() - 15.0).abs() < 1e-9);
        // degenerate: distance too short for the dip, single valley
        let p = cruise_profile(0.0, 0.0, 80.0, 15.0, 5.0, 15.0).unwrap();
        assert!((p.end_pos() - 80.0).abs() < 1e-9);
        // unreachable end speed
        assert!(cruise_profile(0.0, 0.0, 30.0, 18.0, 12.0, 5.0).is_none());
    }

    #[test]
    fn time_at_pos_walks_segments() {
        let p = ProfileBuilder::new(10.0, 0.0, 10.0).cruise(5.0).ramp_to(0.0, 1.5).finish();
        assert!((p.time_at_pos(50.0, 10.0).unwrap() - 15.0).abs() < 1e-9);
        assert!((p.time_at_pos(25.0, 10.0).unwrap() - 12.5).abs() < 1e-9);
        // never reaches 200 m (stops at 50 + 33.3)
        assert!(p.time_at_pos(200.0, 10.0).is_none());
    }
}
