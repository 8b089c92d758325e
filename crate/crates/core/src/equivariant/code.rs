//! Tabulated sliding block codes on `Z` and `Z^d`.

use crate::error::{validation, Error, Result};
use crate::model::{check_cap, state_count, Alphabet, Point, DEFAULT_ENUMERATION_CAP};

/// Equivariant map whose output at a site is a tabulated function of the
/// input symbols at `site + offset` for a fixed list of offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingBlockCode {
    alphabet: Alphabet,
    offsets: Vec<Vec<i64>>,
    output_dim: usize,
    /// `table[config * output_dim ..]`, configurations in lexicographic order
    /// of symbol ids with the first offset most significant.
    table: Vec<f64>,
}

impl SlidingBlockCode {
    /// One-dimensional code reading the window `x_{-r}, ..., x_r`.
    pub fn from_fn<F>(alphabet: &Alphabet, radius: usize, f: F) -> Result<Self>
    where
        F: FnMut(&[&[f64]]) -> Result<Point>,
    {
        let offsets = (-(radius as i64)..=radius as i64).map(|k| vec![k]).collect();
        Self::lattice_from_fn(alphabet, offsets, f)
    }

    /// Code on `Z^d` reading the listed offsets in order.
    pub fn lattice_from_fn<F>(alphabet: &Alphabet, offsets: Vec<Vec<i64>>, mut f: F) -> Result<Self>
    where
        F: FnMut(&[&[f64]]) -> Result<Point>,
    {
        Self::from_ids_fn(alphabet, offsets, |ids| {
            let syms: Vec<&[f64]> = ids.iter().map(|&i| alphabet.symbol(i)).collect();
            f(&syms)
        })
    }

    /// Code built from a function of the symbol ids read at the offsets.
    pub fn from_ids_fn<F>(alphabet: &Alphabet, offsets: Vec<Vec<i64>>, mut f: F) -> Result<Self>
    where
        F: FnMut(&[usize]) -> Result<Point>,
    {
        let d = offsets.first().map(Vec::len).ok_or_else(|| validation("code needs at least one offset"))?;
        if d == 0 || offsets.iter().any(|o| o.len() != d) {
            return Err(Error::DimensionMismatch("code offsets must share a positive dimension".into()));
        }
        if offsets.iter().enumerate().any(|(i, o)| offsets[..i].contains(o)) {
            return Err(validation("code offsets must be distinct"));
        }
        let k = alphabet.len();
        let len = offsets.len();
        check_cap(state_count(k, len), DEFAULT_ENUMERATION_CAP)?;
        let configs = k.pow(len as u32);
        let mut ids = vec![0usize; len];
        let mut table = Vec::new();
        let mut output_dim = None;
        for _ in 0..configs {
            let out = f(&ids)?;
            match output_dim {
                None => {
                    if out.is_empty() {
                        return Err(validation("code outputs must be nonempty"));
                    }
                    output_dim = Some(out.len());
                }
                Some(m) if m != out.len() => {
                    return Err(Error::DimensionMismatch("code outputs differ in dimension".into()));
                }
                _ => {}
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("code output not finite at window {ids:?}")));
            }
            table.extend(out);
            for slot in ids.iter_mut().rev() {
                *slot += 1;
                if *slot < k {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self {
            alphabet: alphabet.clone(),
            offsets,
            output_dim: output_dim.unwrap_or(alphabet.dim()),
            table,
        })
    }

    /// One-dimensional code over the contiguous window `-radius..=radius`.
    pub fn contiguous_from_ids_fn<F>(alphabet: &Alphabet, radius: usize, f: F) -> Result<Self>
    where
        F: FnMut(&[usize]) -> Result<Point>,
    {
        let offsets = (-(radius as i64)..=radius as i64).map(|k| vec![k]).collect();
        Self::from_ids_fn(alphabet, offsets, f)
    }

    pub fn identity(alphabet: &Alphabet) -> Result<Self> {
        Self::from_fn(alphabet, 0, |w| Ok(w[0].to_vec()))
    }

    pub fn constant(alphabet: &Alphabet, value: Point) -> Result<Self> {
        Self::from_fn(alphabet, 0, |_| Ok(value.clone()))
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn lattice_dim(&self) -> usize {
        self.offsets[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Largest absolute offset coordinate.
    pub fn radius(&self) -> usize {
        self.offsets
            .iter()
            .flatten()
            .map(|v| v.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Whether the offsets are exactly `-r..=r` on `Z`, so windows are contiguous.
    pub fn is_contiguous_1d(&self) -> bool {
        let r = self.radius() as i64;
        self.lattice_dim() == 1
            && self.offsets.len() == (2 * r + 1) as usize
            && self.offsets.iter().zip(-r..=r).all(|(o, k)| o[0] == k)
    }

    pub fn check_alphabet(&self, alphabet: &Alphabet) -> Result<()> {
        if *alphabet != self.alphabet {
            return Err(validation("code was built for a different alphabet"));
        }
        if !self.is_contiguous_1d() {
            return Err(validation("operation needs a one-dimensional contiguous code"));
        }
        Ok(())
    }

    fn index(&self, ids: &[usize]) -> usize {
        let k = self.alphabet.len();
        ids.iter().fold(0, |acc, &i| acc * k + i)
    }

    /// Output for the symbol ids read at the offsets, in offset order.
    pub fn output(&self, ids: &[usize]) -> &[f64] {
        debug_assert_eq!(ids.len(), self.offsets.len());
        let i = self.index(ids) * self.output_dim;
        &self.table[i..i + self.output_dim]
    }

    /// Number of tabulated configurations.
    pub fn table_len(&self) -> usize {
        self.table.len() / self.output_dim
    }

    /// Iterates over `(symbol ids, output)` for every configuration.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, &[f64])> + '_ {
        let k = self.alphabet.len();
        let len = self.offsets.len();
        self.table.chunks(self.output_dim).enumerate().map(move |(mut c, out)| {
            let mut ids = vec![0; len];
            for slot in ids.iter_mut().rev() {
                *slot = c % k;
                c /= k;
            }
            (ids, out)
        })
    }
}

/// Applies a one-dimensional code to a path; returns the `len - 2r` interior outputs.
pub fn apply_code(code: &SlidingBlockCode, path: &[usize]) -> Result<Vec<Point>> {
    if !code.is_contiguous_1d() {
        return Err(validation("apply_code needs a one-dimensional contiguous code"));
    }
    let span = 2 * code.radius() + 1;
    if path.len() < span {
        return Err(Error::PathTooShort { len: path.len(), needed: span });
    }
    if let Some(&bad) = path.iter().find(|&&s| s >= code.alphabet.len()) {
        return Err(validation(format!("symbol id {bad} outside alphabet")));
    }
    Ok(path.windows(span).map(|w| code.output(w).to_vec()).collect())
}

/// Finite box configuration of symbol ids on `Z^d`, row-major with the last
/// coordinate fastest; site `(i_1, ..., i_d)` has `0 <= i_q < shape[q]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeConfig {
    pub shape: Vec<usize>,
    pub ids: Vec<usize>,
}

impl LatticeConfig {
    pub fn new(shape: Vec<usize>, ids: Vec<usize>) -> Result<Self> {
        if shape.is_empty() || shape.iter().product::<usize>() != ids.len() {
            return Err(Error::DimensionMismatch("lattice shape does not match the data".into()));
        }
        Ok(Self { shape, ids })
    }

    fn flat(&self, site: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (s, n) in site.iter().zip(&self.shape) {
            if *s < 0 || *s as usize >= *n {
                return None;
            }
            idx = idx * n + *s as usize;
        }
        Some(idx)
    }

    pub fn get(&self, site: &[i64]) -> Option<usize> {
        self.flat(site).map(|i| self.ids[i])
    }

    /// Configuration with new site `s` holding old site `s + h` for `h >= 0`,
    /// cropped to the sites where that is defined.
    pub fn shifted(&self, h: &[i64]) -> Result<Self> {
        if h.len() != self.shape.len() {
            return Err(Error::DimensionMismatch("shift dimension differs from lattice".into()));
        }
        if h.iter().any(|s| *s < 0) {
            return Err(validation("box shifts must be nonnegative"));
        }
        let shape: Vec<usize> = self
            .shape
            .iter()
            .zip(h)
            .map(|(n, s)| n.saturating_sub(s.unsigned_abs() as usize))
            .collect();
        let mut ids = Vec::with_capacity(shape.iter().product());
        for site in box_sites(&shape) {
            let src: Vec<i64> = site.iter().zip(h).map(|(a, s)| a + s).collect();
            ids.push(self.get(&src).expect("shifted site inside the box"));
        }
        Self::new(shape, ids)
    }
}

/// All sites of a box of the given shape in row-major order.
pub(crate) fn box_sites(shape: &[usize]) -> Vec<Vec<i64>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0i64; shape.len()];
    for _ in 0..total {
        out.push(cur.clone());
        for q in (0..shape.len()).rev() {
            cur[q] += 1;
            if (cur[q] as usize) < shape[q] {
                break;
            }
            cur[q] = 0;
        }
    }
    out
}

/// Applies a lattice code to a box configuration; returns the interior shape
/// and the outputs at sites whose whole neighbourhood lies in the box.
pub fn apply_field_code(code: &SlidingBlockCode, config: &LatticeConfig) -> Result<(Vec<usize>, Vec<Point>)> {
    let d = code.lattice_dim();
    if config.shape.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "code acts on Z^{d}, configuration is {}-dimensional",
            config.shape.len()
        )));
    }
    let lo: Vec<i64> = (0..d).map(|q| code.offsets.iter().map(|o| o[q]).min().unwrap_or(0)).collect();
    let hi: Vec<i64> = (0..d).map(|q| code.offsets.iter().map(|o| o[q]).max().unwrap_or(0)).collect();
    let mut interior = Vec::with_capacity(d);
    for q in 0..d {
        let needed = (hi[q] - lo[q] + 1) as usize;
        if config.shape[q] < needed {
            return Err(Error::PathTooShort { len: config.shape[q], needed });
        }
        interior.push(config.shape[q] + 1 - needed);
    }
    let mut outputs = Vec::with_capacity(interior.iter().product());
    let mut ids = vec![0; code.offsets.len()];
    for site in box_sites(&interior) {
        for (slot, o) in ids.iter_mut().zip(&code.offsets) {
            let src: Vec<i64> = (0..d).map(|q| site[q] - lo[q] + o[q]).collect();
            *slot = config
                .get(&src)
                .ok_or_else(|| validation("neighbourhood left the box"))?;
        }
        if let Some(&bad) = ids.iter().find(|&&s| s >= code.alphabet.len()) {
            return Err(validation(format!("symbol id {bad} outside alphabet")));
        }
        outputs.push(code.output(&ids).to_vec());
    }
    Ok((interior, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> Alphabet {
        Alphabet::scalar(&[-1.0, 1.0]).unwrap()
    }

    fn eps_code(eps: f64) -> SlidingBlockCode {
        SlidingBlockCode::from_fn(&coin(), 1, |w| Ok(vec![w[1][0] + eps * (w[0][0] + w[2][0])])).unwrap()
    }

    #[test]
    fn apply_examples() {
        let path = [1usize, 1, 0, 1, 1];
        let id = SlidingBlockCode::identity(&coin()).unwrap();
        assert_eq!(apply_code(&id, &path).unwrap(), vec![vec![1.0], vec![1.0], vec![-1.0], vec![1.0], vec![1.0]]);
        assert_eq!(
            apply_code(&eps_code(0.25), &path).unwrap(),
            vec![vec![1.0], vec![-0.5], vec![1.0]]
        );
        let zero = SlidingBlockCode::constant(&coin(), vec![0.0]).unwrap();
        assert!(apply_code(&zero, &path).unwrap().iter().all(|v| v == &vec![0.0]));
        assert!(matches!(
            apply_code(&eps_code(0.25), &[0, 1]),
            Err(Error::PathTooShort { len: 2, needed: 3 })
        ));
    }

    #[test]
    fn entries_roundtrip() {
        let code = eps_code(0.1);
        assert_eq!(code.table_len(), 8);
        for (ids, out) in code.entries() {
            assert_eq!(code.output(&ids), out);
        }
        assert_eq!(code.radius(), 1);
        assert!(code.is_contiguous_1d());
    }

    #[test]
    fn lattice_shift() {
        let cfg = LatticeConfig::new(vec![2, 3], vec![0, 1, 2, 3, 4, 5]).unwrap();
        let s = cfg.shifted(&[0, 1]).unwrap();
        assert_eq!(s.shape, vec![2, 2]);
        assert_eq!(s.ids, vec![1, 2, 4, 5]);
        let s = cfg.shifted(&[1, 0]).unwrap();
        assert_eq!(s.shape, vec![1, 3]);
        assert_eq!(s.ids, vec![3, 4, 5]);
        assert!(cfg.shifted(&[1, -1]).is_err());
    }

    #[test]
    fn field_code_on_box() {
        let a = coin();
        let offsets = vec![vec![-1, 0], vec![0, 0], vec![1, 0]];
        let code = SlidingBlockCode::lattice_from_fn(&a, offsets, |w| Ok(vec![w[0][0] + w[1][0] + w[2][0]])).unwrap();
        let cfg = LatticeConfig::new(vec![3, 2], vec![1, 0, 1, 1, 0, 1]).unwrap();
        let (shape, out) = apply_field_code(&code, &cfg).unwrap();
        assert_eq!(shape, vec![1, 2]);
        assert_eq!(out, vec![vec![1.0], vec![1.0]]);
    }
}
