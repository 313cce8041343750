use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point of the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn polar(r: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Point { x: r * c, y: r * s }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Point {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// A point together with its offset from one of the bubble centers.
///
/// Bubble cores can be far narrower than the spacing of doubles near the
/// center coordinates, so any evaluation that resolves a core must use the
/// stored offset instead of `x - center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loc {
    pub x: Point,
    pub anchor: Option<Anchor>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    /// Center index: 0 is the singular point, `i >= 1` is the i-th bubble center.
    pub center: usize,
    pub offset: Point,
}

impl Loc {
    pub fn free(x: Point) -> Self {
        Loc { x, anchor: None }
    }

    pub fn anchored(center_index: usize, center: Point, offset: Point) -> Self {
        Loc {
            x: center + offset,
            anchor: Some(Anchor {
                center: center_index,
                offset,
            }),
        }
    }

    /// Squared distance to center `index` located at `center`.
    pub fn dist_sq_to(&self, index: usize, center: Point) -> f64 {
        match self.anchor {
            Some(a) if a.center == index => a.offset.norm_sq(),
            _ => (self.x - center).norm_sq(),
        }
    }

    /// Displacement from center `index` located at `center`.
    pub fn offset_from(&self, index: usize, center: Point) -> Point {
        match self.anchor {
            Some(a) if a.center == index => a.offset,
            _ => self.x - center,
        }
    }
}

impl From<Point> for Loc {
    fn from(x: Point) -> Self {
        Loc::free(x)
    }
}

/// `log(e^a + e^b)` without overflow; either argument may be `-inf`.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
