//! The closed chart DSL: a 102-token vocabulary, token programs, and a
//! recursive-descent parser that lowers programs to canonical [`Scene`]s.
//!
//! Grammar:
//!
//! ```text
//! program  := FIGURE type stmt+ END
//! stmt     := SERIES LPAREN args RPAREN
//! args(bar|line)    := NUM COMMA CAT COMMA COL
//! args(scatter)     := NUM COMMA NUM COMMA COL
//! args(pie)         := NUM COMMA COL
//! args(complex)     := (BAR|LINE) COMMA NUM COMMA CAT COMMA COL
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chartlab::spec::ChartType;

/// Token-id layout of the vocabulary. Ids are stable: checkpoints, datasets
/// and the decoder's output head all depend on this ordering.
pub struct Vocab;

impl Vocab {
    pub const PAD: u16 = 0;
    pub const BOS: u16 = 1;
    pub const EOS: u16 = 2;
    pub const FIGURE: u16 = 3;
    pub const END: u16 = 4;
    pub const SERIES: u16 = 5;
    pub const BAR: u16 = 6;
    pub const LINE: u16 = 7;
    pub const SCATTER: u16 = 8;
    pub const PIE: u16 = 9;
    pub const COMPLEX: u16 = 10;
    pub const LPAREN: u16 = 11;
    pub const RPAREN: u16 = 12;
    pub const COMMA: u16 = 13;
    pub const NUM_BASE: u16 = 14;
    pub const NUM_COUNT: u16 = 64;
    pub const CAT_BASE: u16 = Self::NUM_BASE + Self::NUM_COUNT; // 78
    pub const CAT_COUNT: u16 = 16;
    pub const COL_BASE: u16 = Self::CAT_BASE + Self::CAT_COUNT; // 94
    pub const COL_COUNT: u16 = 8;
    pub const SIZE: usize = (Self::COL_BASE + Self::COL_COUNT) as usize; // 102

    pub fn num(bin: u8) -> u16 {
        assert!((bin as u16) < Self::NUM_COUNT, "num bin {bin} out of range");
        Self::NUM_BASE + bin as u16
    }

    pub fn cat(c: u8) -> u16 {
        assert!((c as u16) < Self::CAT_COUNT, "cat {c} out of range");
        Self::CAT_BASE + c as u16
    }

    pub fn col(c: u8) -> u16 {
        assert!((c as u16) < Self::COL_COUNT, "col {c} out of range");
        Self::COL_BASE + c as u16
    }

    pub fn type_kw(t: ChartType) -> u16 {
        match t {
            ChartType::Bar => Self::BAR,
            ChartType::Line => Self::LINE,
            ChartType::Scatter => Self::SCATTER,
            ChartType::Pie => Self::PIE,
            ChartType::Complex => Self::COMPLEX,
        }
    }

    pub fn kw_type(tok: u16) -> Option<ChartType> {
        match tok {
            Self::BAR => Some(ChartType::Bar),
            Self::LINE => Some(ChartType::Line),
            Self::SCATTER => Some(ChartType::Scatter),
            Self::PIE => Some(ChartType::Pie),
            Self::COMPLEX => Some(ChartType::Complex),
            _ => None,
        }
    }

    /// Human-readable surface form of one token.
    pub fn text(tok: u16) -> String {
        match tok {
            Self::PAD => "<pad>".into(),
            Self::BOS => "<bos>".into(),
            Self::EOS => "<eos>".into(),
            Self::FIGURE => "figure".into(),
            Self::END => "end".into(),
            Self::SERIES => "series".into(),
            Self::BAR => "bar".into(),
            Self::LINE => "line".into(),
            Self::SCATTER => "scatter".into(),
            Self::PIE => "pie".into(),
            Self::COMPLEX => "complex".into(),
            Self::LPAREN => "(".into(),
            Self::RPAREN => ")".into(),
            Self::COMMA => ",".into(),
            t if t >= Self::NUM_BASE && t < Self::CAT_BASE => format!("{}", t - Self::NUM_BASE),
            t if t >= Self::CAT_BASE && t < Self::COL_BASE => format!("c{}", t - Self::CAT_BASE),
            t if (t as usize) < Self::SIZE => format!("#{}", t - Self::COL_BASE),
            t => format!("<invalid:{t}>"),
        }
    }

    /// Inverse of [`Vocab::text`] for a single token.
    pub fn from_text(word: &str) -> Option<u16> {
        match word {
            "<pad>" => Some(Self::PAD),
            "<bos>" => Some(Self::BOS),
            "<eos>" => Some(Self::EOS),
            "figure" => Some(Self::FIGURE),
            "end" => Some(Self::END),
            "series" => Some(Self::SERIES),
            "bar" => Some(Self::BAR),
            "line" => Some(Self::LINE),
            "scatter" => Some(Self::SCATTER),
            "pie" => Some(Self::PIE),
            "complex" => Some(Self::COMPLEX),
            "(" => Some(Self::LPAREN),
            ")" => Some(Self::RPAREN),
            "," => Some(Self::COMMA),
            w => {
                if let Some(rest) = w.strip_prefix('c') {
                    let v: u16 = rest.parse().ok()?;
                    (v < Self::CAT_COUNT).then(|| Self::CAT_BASE + v)
                } else if let Some(rest) = w.strip_prefix('#') {
                    let v: u16 = rest.parse().ok()?;
                    (v < Self::COL_COUNT).then(|| Self::COL_BASE + v)
                } else {
                    let v: u16 = w.parse().ok()?;
                    (v < Self::NUM_COUNT).then(|| Self::NUM_BASE + v)
                }
            }
        }
    }
}

/// A token sequence in the chart DSL (without BOS/EOS framing).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DSLProgram {
    pub tokens: Vec<u16>,
}

impl DSLProgram {
    /// Space-separated surface form.
    pub fn to_text(&self) -> String {
        self.tokens
            .iter()
            .map(|&t| Vocab::text(t))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_text(text: &str) -> Result<Self, DslError> {
        let tokens = text
            .split_whitespace()
            .map(|w| Vocab::from_text(w).ok_or_else(|| DslError::UnknownWord(w.to_string())))
            .collect::<Result<Vec<u16>, _>>()?;
        Ok(DSLProgram { tokens })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("unknown word {0:?}")]
    UnknownWord(String),
    #[error("unexpected end of program (expected {expected})")]
    UnexpectedEnd { expected: &'static str },
    #[error("unexpected token {got:?} at position {pos} (expected {expected})")]
    UnexpectedToken {
        got: String,
        pos: usize,
        expected: &'static str,
    },
    #[error("trailing tokens after `end` at position {0}")]
    TrailingTokens(usize),
    #[error("program has no series statements")]
    EmptyFigure,
    #[error("invalid token id {0}")]
    InvalidToken(u16),
}

/// One renderable primitive of a scene. `kind` is always a leaf type
/// (never `Complex`). Ordering is the canonical statement order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SceneItem {
    pub kind: ChartType,
    pub color: u8,
    pub category: u8,
    pub value_bins: Vec<u8>,
}

/// Semantic form of a parsed program: the chart type plus its primitives in
/// canonical order. Two programs that differ only in statement order parse to
/// the same scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub chart_type: ChartType,
    pub items: Vec<SceneItem>,
}

struct Parser<'a> {
    tokens: &'a [u16],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u16> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self, expected: &'static str) -> Result<u16, DslError> {
        let tok = self
            .peek()
            .ok_or(DslError::UnexpectedEnd { expected })?;
        if tok as usize >= Vocab::SIZE {
            return Err(DslError::InvalidToken(tok));
        }
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: u16, expected: &'static str) -> Result<(), DslError> {
        let pos = self.pos;
        let tok = self.next(expected)?;
        if tok != want {
            return Err(DslError::UnexpectedToken {
                got: Vocab::text(tok),
                pos,
                expected,
            });
        }
        Ok(())
    }

    fn num(&mut self) -> Result<u8, DslError> {
        let pos = self.pos;
        let tok = self.next("numeric literal")?;
        if tok >= Vocab::NUM_BASE && tok < Vocab::NUM_BASE + Vocab::NUM_COUNT {
            Ok((tok - Vocab::NUM_BASE) as u8)
        } else {
            Err(DslError::UnexpectedToken {
                got: Vocab::text(tok),
                pos,
                expected: "numeric literal",
            })
        }
    }

    fn cat(&mut self) -> Result<u8, DslError> {
        let pos = self.pos;
        let tok = self.next("category literal")?;
        if tok >= Vocab::CAT_BASE && tok < Vocab::CAT_BASE + Vocab::CAT_COUNT {
            Ok((tok - Vocab::CAT_BASE) as u8)
        } else {
            Err(DslError::UnexpectedToken {
                got: Vocab::text(tok),
                pos,
                expected: "category literal",
            })
        }
    }

    fn col(&mut self) -> Result<u8, DslError> {
        let pos = self.pos;
        let tok = self.next("color literal")?;
        if tok >= Vocab::COL_BASE && tok < Vocab::COL_BASE + Vocab::COL_COUNT {
            Ok((tok - Vocab::COL_BASE) as u8)
        } else {
            Err(DslError::UnexpectedToken {
                got: Vocab::text(tok),
                pos,
                expected: "color literal",
            })
        }
    }

    fn comma(&mut self) -> Result<(), DslError> {
        self.expect(Vocab::COMMA, "`,`")
    }

    fn series(&mut self, chart_type: ChartType) -> Result<SceneItem, DslError> {
        self.expect(Vocab::SERIES, "`series`")?;
        self.expect(Vocab::LPAREN, "`(`")?;
        let item = match chart_type {
            ChartType::Bar | ChartType::Line => {
                let v = self.num()?;
                self.comma()?;
                let category = self.cat()?;
                self.comma()?;
                let color = self.col()?;
                SceneItem {
                    kind: chart_type,
                    color,
                    category,
                    value_bins: vec![v],
                }
            }
            ChartType::Scatter => {
                let x = self.num()?;
                self.comma()?;
                let y = self.num()?;
                self.comma()?;
                let color = self.col()?;
                SceneItem {
                    kind: ChartType::Scatter,
                    color,
                    category: 0,
                    value_bins: vec![x, y],
                }
            }
            ChartType::Pie => {
                let v = self.num()?;
                self.comma()?;
                let color = self.col()?;
                SceneItem {
                    kind: ChartType::Pie,
                    color,
                    category: 0,
                    value_bins: vec![v],
                }
            }
            ChartType::Complex => {
                let pos = self.pos;
                let kw = self.next("`bar` or `line`")?;
                let kind = match Vocab::kw_type(kw) {
                    Some(ChartType::Bar) => ChartType::Bar,
                    Some(ChartType::Line) => ChartType::Line,
                    _ => {
                        return Err(DslError::UnexpectedToken {
                            got: Vocab::text(kw),
                            pos,
                            expected: "`bar` or `line`",
                        })
                    }
                };
                self.comma()?;
                let v = self.num()?;
                self.comma()?;
                let category = self.cat()?;
                self.comma()?;
                let color = self.col()?;
                SceneItem {
                    kind,
                    color,
                    category,
                    value_bins: vec![v],
                }
            }
        };
        self.expect(Vocab::RPAREN, "`)`")?;
        Ok(item)
    }
}

/// Parse a program into its canonical scene. Statement order is normalized by
/// sorting items, so `parse` also acts as the semantic equivalence relation:
/// `parse(emit(parse(p))) == parse(p)` for every valid `p`.
pub fn parse(program: &DSLProgram) -> Result<Scene, DslError> {
    let mut p = Parser {
        tokens: &program.tokens,
        pos: 0,
    };
    p.expect(Vocab::FIGURE, "`figure`")?;
    let pos = p.pos;
    let kw = p.next("chart type keyword")?;
    let chart_type = Vocab::kw_type(kw).ok_or_else(|| DslError::UnexpectedToken {
        got: Vocab::text(kw),
        pos,
        expected: "chart type keyword",
    })?;
    let mut items = Vec::new();
    while p.peek() == Some(Vocab::SERIES) {
        items.push(p.series(chart_type)?);
    }
    p.expect(Vocab::END, "`series` or `end`")?;
    if p.pos != program.tokens.len() {
        return Err(DslError::TrailingTokens(p.pos));
    }
    if items.is_empty() {
        return Err(DslError::EmptyFigure);
    }
    items.sort();
    Ok(Scene { chart_type, items })
}
