use super::HpoError;

/// Joe-Kuo direction numbers for dimensions 2 and up: degree `s`,
/// polynomial coefficients `a` and initial values `m`.
const DIRECTIONS: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

pub const MAX_SOBOL_DIM: usize = DIRECTIONS.len() + 1;
const BITS: usize = 32;

/// Direction integers `v[k]` (bit `31 - k` aligned) for one dimension.
pub fn direction_integers(dim_index: usize) -> Vec<u32> {
    let mut v = vec![0u32; BITS];
    if dim_index == 0 {
        for (k, x) in v.iter_mut().enumerate() {
            *x = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim_index - 1];
    let s = s as usize;
    for k in 0..BITS {
        if k < s {
            v[k] = m[k] << (BITS - 1 - k);
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for i in 1..s {
                if (a >> (s - 1 - i)) & 1 == 1 {
                    x ^= v[k - i];
                }
            }
            v[k] = x;
        }
    }
    v
}

/// Gray-code Sobol generator. The all-zero first point is skipped.
#[derive(Debug, Clone)]
pub struct Sobol {
    v: Vec<Vec<u32>>,
    x: Vec<u32>,
    index: u32,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self, HpoError> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(HpoError::Dimension {
                dim,
                max: MAX_SOBOL_DIM,
            });
        }
        Ok(Self {
            v: (0..dim).map(direction_integers).collect(),
            x: vec![0; dim],
            index: 0,
        })
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let c = self.index.trailing_ones() as usize;
        self.index += 1;
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            *x ^= v[c];
        }
        self.x
            .iter()
            .map(|&x| x as f64 / (1u64 << BITS) as f64)
            .collect()
    }
}

/// The first `count` nonzero points of the `dim`-dimensional sequence.
pub fn sobol_points(dim: usize, count: usize) -> Result<Vec<Vec<f64>>, HpoError> {
    let mut s = Sobol::new(dim)?;
    Ok((0..count).map(|_| s.next_point()).collect())
}
