use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// An element of the square's symmetry group: an optional horizontal flip
/// followed by `quarter_turns` counter-clockwise rotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Transform {
    pub flip: bool,
    pub quarter_turns: u8,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        flip: false,
        quarter_turns: 0,
    };
    pub const ROT90: Transform = Transform {
        flip: false,
        quarter_turns: 1,
    };
    pub const ROT180: Transform = Transform {
        flip: false,
        quarter_turns: 2,
    };
    pub const ROT270: Transform = Transform {
        flip: false,
        quarter_turns: 3,
    };
    pub const FLIP_H: Transform = Transform {
        flip: true,
        quarter_turns: 0,
    };

    /// All eight rotations and reflections.
    pub fn all() -> [Transform; 8] {
        let mut out = [Transform::IDENTITY; 8];
        for (i, t) in out.iter_mut().enumerate() {
            *t = Transform {
                flip: i >= 4,
                quarter_turns: (i % 4) as u8,
            };
        }
        out
    }

    /// `self` followed by `next`.
    pub fn then(self, next: Transform) -> Transform {
        // A flip conjugates rotations to their inverses: F·R = R⁻¹·F.
        let turns = if next.flip {
            (next.quarter_turns + 4 - self.quarter_turns) % 4
        } else {
            (next.quarter_turns + self.quarter_turns) % 4
        };
        Transform {
            flip: self.flip ^ next.flip,
            quarter_turns: turns,
        }
    }
}

fn flip_h<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    Tensor::from_fn(d, |n, c, i, j| x.at(n, c, i, d.w - 1 - j))
}

fn rot90<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let d = x.dims();
    Tensor::from_fn(Dims::new(d.n, d.c, d.w, d.h), |n, c, i, j| {
        x.at(n, c, j, d.w - 1 - i)
    })
}

/// Applies a rotation/flip as an exact pixel permutation. Rotating a
/// non-square image swaps its height and width.
pub fn augment<T: Scalar>(image: &Tensor<T>, t: Transform) -> Tensor<T> {
    let mut out = if t.flip { flip_h(image) } else { image.clone() };
    for _ in 0..t.quarter_turns % 4 {
        out = rot90(&out);
    }
    out
}
