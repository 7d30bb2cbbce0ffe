//! Hadamard sampling patterns.
//!
//! The displayed mask is a Sylvester Hadamard matrix whose columns may be
//! reordered ("scrambled") to break up long constant runs within rows.
//! Column 0 of the displayed pattern is always the all-ones column, so every
//! capture carries a plain white reference alongside the coded columns.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::digest::digest_bytes;
use crate::error::{Error, Result};

/// Largest supported matrix order.
pub const MAX_ORDER: usize = 4096;

/// Default display scale (device mirrors per pattern pixel).
pub const DEFAULT_SCALE: u32 = 4;

const FILE_MAGIC: &str = "pushframe-pattern 1";

/// Candidate budget for the scramble search before reporting infeasibility.
const SCRAMBLE_BUDGET: usize = 10_000;

// ---------------------------------------------------------------------------
// Base matrix
// ---------------------------------------------------------------------------

/// Square ±1 matrix of power-of-two order with mutually orthogonal rows,
/// in Sylvester (natural) ordering: `entry(j, i) = (-1)^popcount(j & i)`.
#[derive(Clone, PartialEq, Eq)]
pub struct HadamardMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl HadamardMatrix {
    /// Builds the Sylvester matrix of the given order.
    pub fn sylvester(order: usize) -> Result<Self> {
        if order == 0 || !order.is_power_of_two() || order > MAX_ORDER {
            return Err(Error::InvalidOrder(order));
        }
        let mut entries = vec![0i8; order * order];
        for j in 0..order {
            for i in 0..order {
                entries[j * order + i] = if (j & i).count_ones() % 2 == 0 { 1 } else { -1 };
            }
        }
        Ok(Self { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Entry in `{-1, +1}` at (row, col).
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.order + col]
    }

    /// One full row as a slice.
    #[inline]
    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.order..(row + 1) * self.order]
    }
}

impl fmt::Debug for HadamardMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HadamardMatrix(order={})", self.order)
    }
}

// ---------------------------------------------------------------------------
// Displayed pattern
// ---------------------------------------------------------------------------

/// A Hadamard matrix together with the column order in which it is displayed.
///
/// Display column `i` carries base column `permutation[i]`; the permutation
/// always maps position 0 to the all-ones base column 0.
#[derive(Clone, Debug)]
pub struct PatternSpec {
    base: HadamardMatrix,
    permutation: Vec<usize>,
    seed: Option<u64>,
    max_run_limit: Option<usize>,
    scale: u32,
}

impl PatternSpec {
    /// The unscrambled pattern: columns displayed in natural order.
    pub fn identity(base: HadamardMatrix) -> Self {
        let n = base.order();
        Self {
            base,
            permutation: (0..n).collect(),
            seed: None,
            max_run_limit: None,
            scale: DEFAULT_SCALE,
        }
    }

    /// Searches for a column order whose rows contain no constant run longer
    /// than `max_run_limit` (the all-ones row is exempt; it cannot be broken
    /// up by reordering). The search is deterministic in `(base, seed,
    /// max_run_limit)` and fails with the smallest achieved run if the budget
    /// is exhausted.
    pub fn scramble(base: HadamardMatrix, seed: u64, max_run_limit: usize) -> Result<Self> {
        if max_run_limit < 2 {
            return Err(Error::param(
                "max_run_limit",
                format!("must be at least 2, got {max_run_limit}"),
            ));
        }
        let permutation = search_permutation(&base, seed, max_run_limit)?;
        Ok(Self {
            base,
            permutation,
            seed: Some(seed),
            max_run_limit: Some(max_run_limit),
            scale: DEFAULT_SCALE,
        })
    }

    /// Default run limit for scrambling at the given order: `order / 16`,
    /// floored at the smallest searchable limit (`log2(order) + 1`, and
    /// never below 2).
    pub fn default_run_limit(order: usize) -> usize {
        let bits = order.trailing_zeros() as usize;
        (order / 16).max(bits + 1).max(2)
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn base(&self) -> &HadamardMatrix {
        &self.base
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn max_run_limit(&self) -> Option<usize> {
        self.max_run_limit
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn with_scale(mut self, scale: u32) -> Self {
        self.scale = scale;
        self
    }

    /// Entry of the displayed matrix in `{-1, +1}`.
    #[inline]
    pub fn displayed(&self, row: usize, col: usize) -> i8 {
        self.base.entry(row, self.permutation[col])
    }

    /// Display position holding the all-ones base column.
    pub fn white_column(&self) -> usize {
        self.permutation
            .iter()
            .position(|&c| c == 0)
            .expect("permutation is a bijection containing 0")
    }

    /// Longest constant run over all rows of the displayed matrix, excluding
    /// the all-ones row 0. Returns 0 when no other rows exist (order 1).
    pub fn max_row_run(&self) -> usize {
        let n = self.order();
        let mut longest = 0;
        for j in 1..n {
            let mut run = 1usize;
            longest = longest.max(run);
            for i in 1..n {
                if self.displayed(j, i) == self.displayed(j, i - 1) {
                    run += 1;
                } else {
                    run = 1;
                }
                longest = longest.max(run);
            }
        }
        longest
    }

    /// The displayed pattern as a 0/1 mask: +1 maps to 1 (mirror on), -1 to 0.
    pub fn to_binary_mask(&self) -> ndarray::Array2<u8> {
        let n = self.order();
        ndarray::Array2::from_shape_fn((n, n), |(j, i)| u8::from(self.displayed(j, i) > 0))
    }

    /// Digest of the canonical serialization; stamped into streams and
    /// reconstructions derived from this pattern.
    pub fn digest(&self) -> String {
        digest_bytes(&self.canonical_bytes())
    }

    // -- file format --------------------------------------------------------

    /// Canonical text serialization: header key/value lines followed by the
    /// displayed matrix, one row per line, `+` for +1 and `-` for -1.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let n = self.order();
        let mut s = String::with_capacity(n * (n + 1) + 256);
        s.push_str(FILE_MAGIC);
        s.push('\n');
        s.push_str(&format!("order = {n}\n"));
        s.push_str(&format!("scale = {}\n", self.scale));
        match self.seed {
            Some(v) => s.push_str(&format!("seed = {v}\n")),
            None => s.push_str("seed = none\n"),
        }
        match self.max_run_limit {
            Some(v) => s.push_str(&format!("max_run_limit = {v}\n")),
            None => s.push_str("max_run_limit = none\n"),
        }
        s.push_str("permutation = ");
        for (i, p) in self.permutation.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&p.to_string());
        }
        s.push('\n');
        for j in 0..n {
            for i in 0..n {
                s.push(if self.displayed(j, i) > 0 { '+' } else { '-' });
            }
            s.push('\n');
        }
        s.into_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.canonical_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// Parses the canonical serialization, validating that the stored rows
    /// match the Sylvester matrix under the stored permutation.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor::new(bytes);
        let magic = cursor.line()?;
        if magic != FILE_MAGIC {
            return Err(Error::format(0, format!("expected `{FILE_MAGIC}` header")));
        }
        let order: usize = cursor.keyed("order")?.parse_required("order")?;
        let scale: u32 = cursor.keyed("scale")?.parse_required("scale")?;
        let seed = cursor.keyed("seed")?.parse_optional("seed")?;
        let max_run_limit = cursor.keyed("max_run_limit")?.parse_optional("max_run_limit")?;

        let base = HadamardMatrix::sylvester(order)
            .map_err(|_| cursor.error(format!("unsupported order {order}")))?;

        let perm_line = cursor.keyed("permutation")?;
        let mut permutation = Vec::with_capacity(order);
        for tok in perm_line.value.split(',') {
            let p: usize = tok
                .trim()
                .parse()
                .map_err(|_| cursor.error(format!("bad permutation entry `{tok}`")))?;
            permutation.push(p);
        }
        if permutation.len() != order {
            return Err(cursor.error(format!(
                "permutation has {} entries, expected {order}",
                permutation.len()
            )));
        }
        let mut seen = vec![false; order];
        for &p in &permutation {
            if p >= order || seen[p] {
                return Err(cursor.error("permutation is not a bijection"));
            }
            seen[p] = true;
        }

        for j in 0..order {
            let at = cursor.offset;
            let row = cursor.line()?;
            if row.len() != order {
                return Err(Error::format(
                    at,
                    format!("row {j} has {} characters, expected {order}", row.len()),
                ));
            }
            for (i, ch) in row.chars().enumerate() {
                let expect = base.entry(j, permutation[i]);
                let got = match ch {
                    '+' => 1i8,
                    '-' => -1i8,
                    other => {
                        return Err(Error::format(at + i, format!("bad matrix character `{other}`")))
                    }
                };
                if got != expect {
                    return Err(Error::format(
                        at + i,
                        format!("row {j} column {i} disagrees with the stored permutation"),
                    ));
                }
            }
        }
        if cursor.offset != bytes.len() {
            return Err(Error::format(cursor.offset, "trailing data after matrix rows"));
        }

        Ok(Self {
            base,
            permutation,
            seed,
            max_run_limit,
            scale,
        })
    }
}

impl PartialEq for PatternSpec {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
            && self.permutation == other.permutation
            && self.seed == other.seed
            && self.max_run_limit == other.max_run_limit
            && self.scale == other.scale
    }
}

// ---------------------------------------------------------------------------
// Header parsing support
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

struct Keyed<'a> {
    value: &'a str,
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn error(&self, reason: impl Into<String>) -> Error {
        Error::format(self.offset, reason)
    }

    /// Next `\n`-terminated line as UTF-8, advancing the offset past it.
    fn line(&mut self) -> Result<&'a str> {
        if self.offset >= self.bytes.len() {
            return Err(Error::format(self.offset, "unexpected end of file"));
        }
        let rest = &self.bytes[self.offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(self.bytes.len(), "missing final newline"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|e| Error::format(self.offset + e.valid_up_to(), "invalid UTF-8"))?;
        self.offset += end + 1;
        Ok(line)
    }

    /// Reads a `key = value` line and checks the key.
    fn keyed(&mut self, key: &str) -> Result<Keyed<'a>> {
        let at = self.offset;
        let line = self.line()?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(at, format!("expected `{key} = ...`")))?;
        if k.trim() != key {
            return Err(Error::format(
                at,
                format!("expected key `{key}`, found `{}`", k.trim()),
            ));
        }
        Ok(Keyed {
            value: v.trim(),
            offset: at,
        })
    }
}

impl Keyed<'_> {
    fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| Error::format(self.offset, format!("bad value for `{key}`: `{}`", self.value)))
    }

    fn parse_optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.value == "none" {
            Ok(None)
        } else {
            self.parse_required(key).map(Some)
        }
    }
}

// ---------------------------------------------------------------------------
// Scramble search
// ---------------------------------------------------------------------------
//
// A run of length `limit + 1` in row `j` means `j` is GF(2)-orthogonal to
// `limit` consecutive XOR deltas `d_q = perm[q] ^ perm[q + 1]`: consecutive
// display columns `a, b` agree in row `j` exactly when `popcount(j & (a^b))`
// is even. So the limit holds for every row iff every window of `limit`
// consecutive deltas spans all `log2(n)` bits. That makes candidate moves
// cheap to evaluate: a swap touches four deltas, hence at most `4 * limit`
// windows.

struct RunSearch {
    bits: u32,
    limit: usize,
    perm: Vec<usize>,
    deltas: Vec<usize>,
    violated: Vec<bool>,
    violations: usize,
}

impl RunSearch {
    fn new(perm: Vec<usize>, limit: usize, bits: u32) -> Self {
        let n = perm.len();
        let mut s = Self {
            bits,
            limit,
            perm,
            deltas: vec![0; n.saturating_sub(1)],
            violated: vec![false; (n.saturating_sub(1)).saturating_sub(limit - 1)],
            violations: 0,
        };
        for q in 0..s.deltas.len() {
            s.deltas[q] = s.perm[q] ^ s.perm[q + 1];
        }
        for w in 0..s.violated.len() {
            let v = !s.window_full_rank(w);
            s.violated[w] = v;
            s.violations += usize::from(v);
        }
        s
    }

    fn window_count(&self) -> usize {
        self.violated.len()
    }

    fn window_full_rank(&self, w: usize) -> bool {
        let mut basis = [0usize; 16];
        let mut rank = 0u32;
        for &d in &self.deltas[w..w + self.limit] {
            let mut v = d;
            while v != 0 {
                let lead = usize::BITS as usize - 1 - v.leading_zeros() as usize;
                if basis[lead] == 0 {
                    basis[lead] = v;
                    rank += 1;
                    break;
                }
                v ^= basis[lead];
            }
            if rank == self.bits {
                return true;
            }
        }
        rank == self.bits
    }

    /// Windows whose delta set includes position `q`.
    fn windows_touching_delta(&self, q: usize) -> std::ops::Range<usize> {
        let lo = q.saturating_sub(self.limit - 1);
        let hi = (q + 1).min(self.window_count());
        lo..hi
    }

    /// Swaps display positions `a` and `b`, updating deltas and window
    /// states incrementally. Returns the change in violation count.
    fn swap(&mut self, a: usize, b: usize) -> isize {
        let mut affected: Vec<usize> = Vec::with_capacity(4 * self.limit);
        for pos in [a, b] {
            if pos > 0 {
                affected.extend(self.windows_touching_delta(pos - 1));
            }
            if pos < self.deltas.len() {
                affected.extend(self.windows_touching_delta(pos));
            }
        }
        affected.sort_unstable();
        affected.dedup();

        let before: isize = affected.iter().filter(|&&w| self.violated[w]).count() as isize;
        self.perm.swap(a, b);
        for pos in [a, b] {
            if pos > 0 {
                self.deltas[pos - 1] = self.perm[pos - 1] ^ self.perm[pos];
            }
            if pos < self.deltas.len() {
                self.deltas[pos] = self.perm[pos] ^ self.perm[pos + 1];
            }
        }
        let mut after: isize = 0;
        for &w in &affected {
            let v = !self.window_full_rank(w);
            self.violated[w] = v;
            after += isize::from(v);
        }
        self.violations = (self.violations as isize - before + after) as usize;
        after - before
    }

    /// A uniformly random violating window, if any.
    fn pick_violated(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        if self.violations == 0 {
            return None;
        }
        let k = rng.random_range(0..self.violations);
        self.violated
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .nth(k)
            .map(|(w, _)| w)
    }
}

fn direct_max_run(base: &HadamardMatrix, perm: &[usize]) -> usize {
    let probe = PatternSpec {
        base: base.clone(),
        permutation: perm.to_vec(),
        seed: None,
        max_run_limit: None,
        scale: DEFAULT_SCALE,
    };
    probe.max_row_run()
}

/// Randomized search for a run-limited column order: random restarts plus
/// local repair moves that swap a column out of a violating window.
fn search_permutation(base: &HadamardMatrix, seed: u64, limit: usize) -> Result<Vec<usize>> {
    let n = base.order();
    let bits = n.trailing_zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Orders too small to have windows are trivially satisfied by any
    // bijection; return a shuffled one for seed-dependence.
    let mut candidates = 0usize;
    let mut best_achieved = usize::MAX;

    while candidates < SCRAMBLE_BUDGET {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in (2..n).rev() {
            let j = rng.random_range(1..=k);
            perm.swap(k, j);
        }
        candidates += 1;

        if n < 2 || limit >= n - 1 {
            return Ok(perm);
        }

        let mut search = RunSearch::new(perm, limit, bits);
        let step_cap = 60 * n;
        let mut steps = 0usize;
        while search.violations > 0 && steps < step_cap && candidates < SCRAMBLE_BUDGET {
            steps += 1;
            let w = search.pick_violated(&mut rng).expect("violations > 0");
            // Swap a random column inside the violating span with a random
            // outside column; keep the move unless it makes things worse.
            let inside = (w + rng.random_range(0..=limit)).max(1);
            let mut outside = rng.random_range(1..n);
            if outside == inside {
                outside = 1 + (outside % (n - 1));
                if outside == inside {
                    continue;
                }
            }
            candidates += 1;
            let delta = search.swap(inside, outside);
            if delta > 0 {
                search.swap(inside, outside);
            }
        }

        if search.violations == 0 {
            let achieved = direct_max_run(base, &search.perm);
            debug_assert!(achieved <= limit);
            if achieved <= limit {
                return Ok(search.perm);
            }
            best_achieved = best_achieved.min(achieved);
        } else {
            best_achieved = best_achieved.min(direct_max_run(base, &search.perm));
        }
    }

    Err(Error::RunLimitInfeasible {
        limit,
        achieved: best_achieved,
        attempts: candidates,
    })
}

// ---------------------------------------------------------------------------
