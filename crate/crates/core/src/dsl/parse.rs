use std::str::FromStr;

use serde::Serialize;

use super::{Command, ReportKind, Side};
use crate::route::PinRef;
use crate::tech::Orient;

/// `position` is the 1-based character column of the offending token.
#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
#[error("column {position}: {hint}")]
pub struct SyntaxError {
    pub position: usize,
    pub hint: String,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
#[error("line {line}: {error}")]
pub struct ScriptError {
    pub line: usize,
    pub error: SyntaxError,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Int(i64),
    Sym(char),
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '!' | '$' | '/' | '<' | '>')
}

fn tokenize(line: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push((col, Tok::Word(chars[start..i].iter().collect())));
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse().map_err(|_| SyntaxError {
                position: col,
                hint: "integer out of range".into(),
            })?;
            out.push((col, Tok::Int(value)));
        } else if "(),.[]".contains(c) {
            out.push((col, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(SyntaxError {
                position: col,
                hint: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn fail<T>(&self, hint: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.col(),
            hint: hint.into(),
        })
    }

    fn peek_word(&self) -> Option<&str> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Word(w))) => Some(w),
            _ => None,
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek_word().is_some_and(|w| w.eq_ignore_ascii_case(kw))
    }

    fn kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.at_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected \"{kw}\""))
        }
    }

    /// Consumes one of `kws` and returns its index.
    fn one_of(&mut self, kws: &[&str]) -> Result<usize, SyntaxError> {
        match kws.iter().position(|k| self.at_kw(k)) {
            Some(i) => {
                self.pos += 1;
                Ok(i)
            }
            None => {
                let list: Vec<String> = kws.iter().map(|k| format!("\"{k}\"")).collect();
                self.fail(format!("expected one of {}", list.join(", ")))
            }
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek_word() {
            Some(w) => {
                let w = w.to_string();
                self.pos += 1;
                Ok(w)
            }
            None => self.fail("expected identifier"),
        }
    }

    fn int(&mut self) -> Result<i64, SyntaxError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Int(v))) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.fail("expected integer"),
        }
    }

    fn at_sym(&self, c: char) -> bool {
        matches!(self.toks.get(self.pos), Some((_, Tok::Sym(s))) if *s == c)
    }

    fn sym(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.at_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected \"{c}\""))
        }
    }

    fn point(&mut self) -> Result<(i64, i64), SyntaxError> {
        self.sym('(')?;
        let x = self.int()?;
        self.sym(',')?;
        let y = self.int()?;
        self.sym(')')?;
        Ok((x, y))
    }

    fn orient(&mut self) -> Result<Orient, SyntaxError> {
        match self.peek_word().and_then(|w| Orient::from_str(&w.to_ascii_uppercase()).ok()) {
            Some(o) => {
                self.pos += 1;
                Ok(o)
            }
            None => self.fail("expected one of \"R0\", \"MX\", \"MY\", \"R180\""),
        }
    }

    fn pin(&mut self) -> Result<PinRef, SyntaxError> {
        let instance = self.ident()?;
        self.sym('.')?;
        let pin = self.ident()?;
        let access = if self.at_sym('[') {
            self.pos += 1;
            let k = self.int()?;
            if k < 0 {
                return self.fail("expected non-negative access index");
            }
            self.sym(']')?;
            Some(k as usize)
        } else {
            None
        };
        Ok(PinRef { instance, pin, access })
    }

    fn end(&self) -> Result<(), SyntaxError> {
        if self.pos < self.toks.len() {
            self.fail("expected end of line")
        } else {
            Ok(())
        }
    }

    fn command(&mut self) -> Result<Command, SyntaxError> {
        const KEYWORDS: [&str; 12] = [
            "place",
            "place_rows",
            "place_row",
            "optimize_order",
            "move",
            "swap",
            "route",
            "unroute",
            "label",
            "report",
            "undo",
            "checkpoint",
        ];
        let cmd = match self.one_of(&KEYWORDS)? {
            0 => {
                let inst = self.ident()?;
                let template = if self.at_kw("template") {
                    self.pos += 1;
                    Some(self.ident()?)
                } else {
                    None
                };
                self.kw("at")?;
                let at = self.point()?;
                let orient = if self.at_kw("orient") {
                    self.pos += 1;
                    Some(self.orient()?)
                } else {
                    None
                };
                Command::Place {
                    inst,
                    template,
                    at,
                    orient,
                }
            }
            1 => Command::PlaceRows,
            2 => {
                let order = if self.pos < self.toks.len() {
                    self.kw("order")?;
                    let mut names = vec![self.ident()?];
                    while self.at_sym(',') {
                        self.pos += 1;
                        names.push(self.ident()?);
                    }
                    Some(names)
                } else {
                    None
                };
                Command::PlaceRow { order }
            }
            3 => {
                let mut fixes = Vec::new();
                while self.pos < self.toks.len() {
                    self.kw("fix")?;
                    let name = self.ident()?;
                    let side = [Side::Left, Side::Right][self.one_of(&["left", "right"])?];
                    fixes.push((name, side));
                }
                Command::OptimizeOrder { fixes }
            }
            4 => {
                let inst = self.ident()?;
                self.kw("to")?;
                Command::Move {
                    inst,
                    to: self.point()?,
                }
            }
            5 => Command::Swap {
                a: self.ident()?,
                b: self.ident()?,
            },
            6 => {
                if self.one_of(&["net", "pins"])? == 0 {
                    let net = self.ident()?;
                    let trunk = if self.one_of(&["auto", "trunk"])? == 0 {
                        None
                    } else {
                        let layer = self.ident()?;
                        self.kw("track")?;
                        Some((layer, self.int()?))
                    };
                    Command::RouteNet { net, trunk }
                } else {
                    let mut pins = vec![self.pin()?];
                    self.sym(',')?;
                    pins.push(self.pin()?);
                    while self.at_sym(',') {
                        self.pos += 1;
                        pins.push(self.pin()?);
                    }
                    self.kw("trunk")?;
                    let trunk_layer = self.ident()?;
                    self.kw("track")?;
                    Command::RoutePins {
                        pins,
                        trunk_layer,
                        track: self.int()?,
                    }
                }
            }
            7 => {
                self.kw("net")?;
                Command::UnrouteNet { net: self.ident()? }
            }
            8 => {
                let net = self.ident()?;
                self.kw("at")?;
                let at = self.point()?;
                self.kw("layer")?;
                Command::Label {
                    net,
                    at,
                    layer: self.ident()?,
                }
            }
            9 => {
                let kind = [ReportKind::Wirelength, ReportKind::Drc, ReportKind::Lvs]
                    [self.one_of(&["wirelength", "drc", "lvs"])?];
                Command::Report { kind }
            }
            10 => Command::Undo,
            _ => Command::Checkpoint { name: self.ident()? },
        };
        self.end()?;
        Ok(cmd)
    }
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(code, _)| code)
}

/// Parses one command. A trailing `#` comment is ignored.
pub fn parse_command(line: &str) -> Result<Command, SyntaxError> {
    let code = strip_comment(line);
    let toks = tokenize(code)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: code.chars().count() + 1,
    };
    p.command()
}

/// Parses a script, skipping blank and comment-only lines. Each command is
/// paired with its 1-based line number.
pub fn parse_script(text: &str) -> Result<Vec<(usize, Command)>, ScriptError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if strip_comment(line).trim().is_empty() {
            continue;
        }
        let cmd = parse_command(line).map_err(|error| ScriptError { line: i + 1, error })?;
        out.push((i + 1, cmd));
    }
    Ok(out)
}
