//! Deterministic front-end math for duration-informed synthesis: prosodic
//! symbol parsing, skip filtering, duration-driven state expansion with a
//! relative-position feature, style-code scaling, and the dual L1 loss.
//!
//! The encoder and duration networks themselves are trained models and out of
//! scope; everything here is the exact bookkeeping around them. All
//! operations are pure functions over immutable values.

use crate::error::{Error, Result};
use crate::mat::Matrix;
use crate::scalar::Scalar;

/// Hierarchical prosodic break levels, from syllable boundary up to
/// intonational phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryLevel {
    /// `#S`
    Syllable,
    /// `#1`
    ProsodicWord,
    /// `#2`
    ProsodicPhrase,
    /// `#3`
    IntonationalPhrase,
}

impl BoundaryLevel {
    pub fn token(self) -> &'static str {
        match self {
            BoundaryLevel::Syllable => "#S",
            BoundaryLevel::ProsodicWord => "#1",
            BoundaryLevel::ProsodicPhrase => "#2",
            BoundaryLevel::IntonationalPhrase => "#3",
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        match token {
            "#S" => Some(BoundaryLevel::Syllable),
            "#1" => Some(BoundaryLevel::ProsodicWord),
            "#2" => Some(BoundaryLevel::ProsodicPhrase),
            "#3" => Some(BoundaryLevel::IntonationalPhrase),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Symbol {
    Phoneme(String),
    Boundary(BoundaryLevel),
}

impl Symbol {
    pub fn is_phoneme(&self) -> bool {
        matches!(self, Symbol::Phoneme(_))
    }
}

/// Phonemes with interleaved prosodic boundary markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    symbols: Vec<Symbol>,
}

impl SymbolSequence {
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// N: total symbols including boundaries.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// N': phonemes only.
    pub fn phoneme_count(&self) -> usize {
        self.symbols.iter().filter(|s| s.is_phoneme()).count()
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().filter_map(|s| match s {
            Symbol::Phoneme(p) => Some(p.as_str()),
            Symbol::Boundary(_) => None,
        })
    }
}

/// Classifies whitespace-split tokens into phonemes and boundary markers.
///
/// Boundary tokens are exactly `#S`, `#1`, `#2`, `#3`; any other token
/// starting with `#` is an error carrying its position, as are two adjacent
/// boundaries of the same level.
pub fn parse_symbols<S: AsRef<str>>(tokens: &[S]) -> Result<SymbolSequence> {
    if tokens.is_empty() {
        return Err(Error::invalid("empty symbol sequence"));
    }
    let mut symbols = Vec::with_capacity(tokens.len());
    let mut prev_boundary: Option<BoundaryLevel> = None;
    for (position, token) in tokens.iter().enumerate() {
        let token = token.as_ref();
        if let Some(level) = BoundaryLevel::from_token(token) {
            if prev_boundary == Some(level) {
                return Err(Error::Parse {
                    position,
                    message: format!("adjacent {} boundaries", level.token()),
                });
            }
            prev_boundary = Some(level);
            symbols.push(Symbol::Boundary(level));
        } else if token.starts_with('#') {
            return Err(Error::Parse {
                position,
                message: format!("unknown boundary token '{token}' (expected #S, #1, #2 or #3)"),
            });
        } else if token.is_empty() {
            return Err(Error::Parse {
                position,
                message: "empty token".into(),
            });
        } else {
            prev_boundary = None;
            symbols.push(Symbol::Phoneme(token.to_string()));
        }
    }
    Ok(SymbolSequence { symbols })
}

/// Encoder-state sequence: one vector per symbol (length N) or per phoneme
/// (length N'), uniform dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates<T> {
    vectors: Vec<Vec<T>>,
    dim: usize,
}

impl<T: Scalar> HiddenStates<T> {
    pub fn new(vectors: Vec<Vec<T>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.len());
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::dims("hidden state dimensions differ"));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hidden states"));
        }
        Ok(HiddenStates { vectors, dim })
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Frames per phoneme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationSequence {
    durations: Vec<u64>,
}

impl DurationSequence {
    /// Validates non-negative integer durations.
    pub fn new(durations: &[i64]) -> Result<Self> {
        if let Some(position) = durations.iter().position(|&d| d < 0) {
            return Err(Error::invalid(format!(
                "negative duration {} at index {position}",
                durations[position]
            )));
        }
        Ok(DurationSequence {
            durations: durations.iter().map(|&d| d as u64).collect(),
        })
    }

    pub fn durations(&self) -> &[u64] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    /// T: total frame count.
    pub fn total_frames(&self) -> u64 {
        self.durations.iter().sum()
    }
}

/// Frame-aligned states: each vector is a hidden state with the relative
/// position in (0, 1] appended.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedStates<T> {
    vectors: Vec<Vec<T>>,
    dim: usize,
}

impl<T: Scalar> ExpandedStates<T> {
    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Hidden dimension plus one for the position feature.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The appended position of frame `t`.
    pub fn position(&self, t: usize) -> T {
        *self.vectors[t].last().expect("expanded vectors are non-empty")
    }
}

/// Drops the hidden states sitting at boundary positions, keeping the
/// phoneme states in order, so the output length is N'.
pub fn skip_filter<T: Scalar>(
    states: &HiddenStates<T>,
    seq: &SymbolSequence,
) -> Result<HiddenStates<T>> {
    if states.len() != seq.len() {
        return Err(Error::dims(format!(
            "{} states for {} symbols",
            states.len(),
            seq.len()
        )));
    }
    let vectors: Vec<Vec<T>> = states
        .vectors()
        .iter()
        .zip(seq.symbols())
        .filter(|(_, s)| s.is_phoneme())
        .map(|(v, _)| v.clone())
        .collect();
    HiddenStates::new(vectors)
}

/// Replicates each phoneme state for its duration and appends the relative
/// position `j / d_i` (1-based) of every frame inside its phone, so the last
/// frame of each phone carries exactly 1.0. Zero-duration phonemes contribute
/// no frames.
pub fn state_expand<T: Scalar>(
    states: &HiddenStates<T>,
    durations: &DurationSequence,
) -> Result<ExpandedStates<T>> {
    if states.len() != durations.len() {
        return Err(Error::dims(format!(
            "{} states for {} durations",
            states.len(),
            durations.len()
        )));
    }
    let total = durations.total_frames();
    if total == 0 {
        return Err(Error::invalid("durations sum to zero frames"));
    }
    let mut vectors = Vec::with_capacity(total as usize);
    for (state, &d) in states.vectors().iter().zip(durations.durations()) {
        for j in 1..=d {
            let mut v = Vec::with_capacity(state.len() + 1);
            v.extend_from_slice(state);
            v.push(T::cast_from(j as f64 / d as f64));
            vectors.push(v);
        }
    }
    Ok(ExpandedStates {
        dim: states.dim() + 1,
        vectors,
    })
}

/// A style embedding scaled by a non-negative intensity; the direction
/// carries the style, the magnitude its strength.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleCode<T> {
    embedding: Vec<T>,
    scale: T,
    code: Vec<T>,
}

impl<T: Scalar> StyleCode<T> {
    pub fn embedding(&self) -> &[T] {
        &self.embedding
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn code(&self) -> &[T] {
        &self.code
    }
}

/// Builds the style code `scale * embedding`. Training-time convention is
/// scale 1.0; any non-negative scale is valid at synthesis time.
pub fn style_code<T: Scalar>(embedding: &[T], scale: T) -> Result<StyleCode<T>> {
    if !scale.is_finite() || scale < T::zero() {
        return Err(Error::invalid(format!("style scale must be >= 0, got {scale}")));
    }
    if embedding.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("style embedding"));
    }
    Ok(StyleCode {
        embedding: embedding.to_vec(),
        scale,
        code: embedding.iter().map(|&v| v * scale).collect(),
    })
}

/// Dual L1 reconstruction loss over frame matrices:
/// `sum |y - y_pre| + sum |y - (y_pre + residual)|`, i.e. the decoder output
/// is penalized both before and after the residual correction.
pub fn durian_loss<T: Scalar>(
    y: &Matrix<T>,
    y_pre: &Matrix<T>,
    residual: &Matrix<T>,
) -> Result<T> {
    let shape = (y.rows(), y.cols());
    if (y_pre.rows(), y_pre.cols()) != shape || (residual.rows(), residual.cols()) != shape {
        return Err(Error::dims(format!(
            "loss needs identical shapes, got {}x{}, {}x{}, {}x{}",
            y.rows(),
            y.cols(),
            y_pre.rows(),
            y_pre.cols(),
            residual.rows(),
            residual.cols()
        )));
    }
    let mut pre = T::zero();
    let mut post = T::zero();
    for ((a, b), r) in y.data().iter().zip(y_pre.data()).zip(residual.data()) {
        pre += (*a - *b).abs();
        post += (*a - (*b + *r)).abs();
    }
    Ok(pre + post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn states_from(rows: &[&[f64]]) -> HiddenStates<f64> {
        HiddenStates::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn parse_counts_phonemes_and_boundaries() {
        let seq = parse_symbols(&["j", "in", "#S", "t", "ian", "#1"]).unwrap();
        assert_eq!(seq.len(), 6);
        assert_eq!(seq.phoneme_count(), 4);
        assert_eq!(seq.phonemes().collect::<Vec<_>>(), ["j", "in", "t", "ian"]);
    }

    #[test]
    fn parse_single_phoneme() {
        let seq = parse_symbols(&["a"]).unwrap();
        assert_eq!((seq.len(), seq.phoneme_count()), (1, 1));
    }

    #[test]
    fn parse_rejects_adjacent_same_level() {
        let err = parse_symbols(&["#S", "#S"]).unwrap_err();
        assert!(matches!(err, Error::Parse { position: 1, .. }));
        // Different levels may be adjacent.
        assert!(parse_symbols(&["a", "#S", "#1", "b"]).is_ok());
    }

    #[test]
    fn parse_rejects_unknown_hash_token() {
        let err = parse_symbols(&["a", "#4"]).unwrap_err();
        assert!(matches!(err, Error::Parse { position: 1, .. }));
    }

    #[test]
    fn skip_filter_keeps_phoneme_positions() {
        let seq = parse_symbols(&["a", "b", "#S", "c", "#1"]).unwrap();
        let states = states_from(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0]]);
        let out = skip_filter(&states, &seq).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.vectors(), &[vec![0.0], vec![1.0], vec![3.0]]);
    }

    #[test]
    fn skip_filter_without_boundaries_is_identity() {
        let seq = parse_symbols(&["a", "b", "c"]).unwrap();
        let states = states_from(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let out = skip_filter(&states, &seq).unwrap();
        assert_eq!(out.vectors(), states.vectors());
    }

    #[test]
    fn skip_filter_all_boundaries_yields_empty_then_expand_errors() {
        let seq = parse_symbols(&["#S", "#1", "#S"]).unwrap();
        let states = states_from(&[&[1.0], &[2.0], &[3.0]]);
        let out = skip_filter(&states, &seq).unwrap();
        assert!(out.is_empty());
        let durations = DurationSequence::new(&[]).unwrap();
        assert!(state_expand(&out, &durations).is_err());
    }

    #[test]
    fn skip_filter_length_mismatch() {
        let seq = parse_symbols(&["a", "b"]).unwrap();
        let states = states_from(&[&[1.0]]);
        assert!(skip_filter(&states, &seq).is_err());
    }

    #[test]
    fn expand_appends_positions() {
        let states = states_from(&[&[10.0], &[20.0]]);
        let durations = DurationSequence::new(&[2, 1]).unwrap();
        let out = state_expand(&states, &durations).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.dim(), 2);
        assert_eq!(out.vectors()[0], vec![10.0, 0.5]);
        assert_eq!(out.vectors()[1], vec![10.0, 1.0]);
        assert_eq!(out.vectors()[2], vec![20.0, 1.0]);
    }

    #[test]
    fn expand_unit_durations() {
        let states = states_from(&[&[1.0], &[2.0], &[3.0]]);
        let durations = DurationSequence::new(&[1, 1, 1]).unwrap();
        let out = state_expand(&states, &durations).unwrap();
        assert_eq!(out.len(), 3);
        for t in 0..3 {
            assert_eq!(out.position(t), 1.0);
        }
    }

    #[test]
    fn expand_zero_duration_skips_phoneme() {
        let states = states_from(&[&[1.0], &[2.0], &[3.0]]);
        let durations = DurationSequence::new(&[2, 0, 1]).unwrap();
        let out = state_expand(&states, &durations).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.vectors()[2], vec![3.0, 1.0]);
        assert!(out.vectors().iter().all(|v| v[0] != 2.0));
    }

    #[test]
    fn expand_roundtrip_recovers_durations() {
        let mut rng = Rng::new(17);
        for _ in 0..50 {
            let n = 1 + rng.below(8) as usize;
            let states = HiddenStates::new(
                (0..n)
                    .map(|_| vec![rng.gaussian(), rng.gaussian()])
                    .collect(),
            )
            .unwrap();
            let durations: Vec<i64> = (0..n).map(|_| 1 + rng.below(5) as i64).collect();
            let ds = DurationSequence::new(&durations).unwrap();
            let out = state_expand(&states, &ds).unwrap();
            assert_eq!(out.len() as u64, ds.total_frames());
            // Run-length encode on the base vector columns.
            let mut recovered = Vec::new();
            let mut run = 0usize;
            let mut prev: Option<&[f64]> = None;
            for v in out.vectors() {
                let base = &v[..v.len() - 1];
                match prev {
                    Some(p) if p == base => run += 1,
                    Some(_) => {
                        recovered.push(run as i64);
                        run = 1;
                    }
                    None => run = 1,
                }
                prev = Some(base);
            }
            recovered.push(run as i64);
            assert_eq!(recovered, durations);
        }
    }

    #[test]
    fn expand_positions_increase_and_end_at_one() {
        let states = states_from(&[&[5.0], &[6.0]]);
        let durations = DurationSequence::new(&[4, 3]).unwrap();
        let out = state_expand(&states, &durations).unwrap();
        let mut t = 0;
        for &d in durations.durations() {
            let mut last = 0.0;
            for _ in 0..d as usize {
                let p = out.position(t);
                assert!(p > last && p <= 1.0);
                last = p;
                t += 1;
            }
            assert_eq!(last, 1.0);
        }
    }

    #[test]
    fn expand_rejects_bad_input() {
        let states = states_from(&[&[1.0]]);
        assert!(state_expand(&states, &DurationSequence::new(&[0]).unwrap()).is_err());
        assert!(state_expand(&states, &DurationSequence::new(&[1, 1]).unwrap()).is_err());
        assert!(DurationSequence::new(&[3, -1]).is_err());
    }

    #[test]
    fn style_code_identity_zero_and_direction() {
        let e = vec![0.5, -1.5, 2.0];
        let at_one = style_code(&e, 1.0).unwrap();
        assert_eq!(at_one.code(), e.as_slice());

        let at_zero = style_code(&e, 0.0).unwrap();
        assert!(at_zero.code().iter().all(|&v| v == 0.0));

        let scaled = style_code(&e, 2.75).unwrap();
        let dot: f64 = scaled.code().iter().zip(&e).map(|(a, b)| a * b).sum();
        let na: f64 = scaled.code().iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((dot / (na * nb) - 1.0).abs() < 1e-12);

        assert!(style_code(&e, -0.1).is_err());
    }

    #[test]
    fn style_scaling_composes() {
        let e: Vec<f64> = vec![1.0, -2.0, 0.25];
        let (a, b) = (1.7f64, 0.3f64);
        let once = style_code(&e, a * b).unwrap();
        let twice = style_code(style_code(&e, a).unwrap().code(), b).unwrap();
        for (x, y) in once.code().iter().zip(twice.code()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_zero_when_exact() {
        let y = Matrix::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = Matrix::zeros(2, 3);
        assert_eq!(durian_loss(&y, &y, &r).unwrap(), 0.0);
    }

    #[test]
    fn loss_doubles_without_residual() {
        let mut rng = Rng::new(23);
        let y = Matrix::from_fn(3, 4, |_, _| rng.gaussian());
        let y_pre = Matrix::from_fn(3, 4, |_, _| rng.gaussian());
        let zero = Matrix::zeros(3, 4);
        let l = durian_loss(&y, &y_pre, &zero).unwrap();
        let single: f64 = y
            .data()
            .iter()
            .zip(y_pre.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert_eq!(l, 2.0 * single);
    }

    #[test]
    fn loss_matches_scalar_reference() {
        let mut rng = Rng::new(29);
        let y = Matrix::from_fn(3, 4, |_, _| rng.gaussian());
        let y_pre = Matrix::from_fn(3, 4, |_, _| rng.gaussian());
        let residual = Matrix::from_fn(3, 4, |_, _| rng.gaussian());
        let l = durian_loss(&y, &y_pre, &residual).unwrap();
        let mut want = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                want += (y.get(i, j) - y_pre.get(i, j)).abs();
                want += (y.get(i, j) - (y_pre.get(i, j) + residual.get(i, j))).abs();
            }
        }
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_shape_mismatch() {
        let y = Matrix::<f64>::zeros(2, 3);
        let other = Matrix::<f64>::zeros(3, 2);
        assert!(durian_loss(&y, &other, &y).is_err());
    }
}
