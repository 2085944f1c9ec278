use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Image-plane point in pixel units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    /// Rotate about the origin by `theta` radians.
    pub fn rotate(self, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Unsigned angle between two vectors in degrees, in `[0, 180]`.
    pub fn angle_deg(self, other: Self) -> T {
        self.cross(other).atan2(self.dot(other)).abs().to_degrees()
    }

    pub fn cast<U: Real>(self) -> Point<U> {
        Point::new(
            U::from(self.x).expect("castable"),
            U::from(self.y).expect("castable"),
        )
    }
}

impl<T: Real> Add for Point<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Real> Sub for Point<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Real> Mul<T> for Point<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

/// Arithmetic mean of a point set, `None` when empty.
pub fn centroid<T: Real>(points: impl IntoIterator<Item = Point<T>>) -> Option<Point<T>> {
    let mut n = 0usize;
    let mut acc = Point::new(T::zero(), T::zero());
    for p in points {
        acc = acc + p;
        n += 1;
    }
    (n > 0).then(|| acc * (T::one() / T::from_usize(n).unwrap()))
}
