use std::collections::HashMap;

use super::{
    element_param, source_param, CircuitError, CircuitSpec, Connection, DetectorDecl, ElementDecl,
    ElementType, ParamClass, Params, PortRef, Result, ScanVar, SourceDecl, Value, DETECTOR_MODELS,
};
use crate::optics::PhaseScope;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Number(&'a str),
    Colon,
    LBrace,
    RBrace,
    Comma,
    Equals,
    Dot,
    Arrow,
}

#[derive(Clone, Copy, Debug)]
struct Token<'a> {
    tok: Tok<'a>,
    column: usize,
}

fn describe(tok: Option<&Token<'_>>) -> String {
    match tok.map(|t| t.tok) {
        None => "end of line".to_string(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Number(s)) => format!("number `{s}`"),
        Some(Tok::Colon) => "`:`".to_string(),
        Some(Tok::LBrace) => "`{`".to_string(),
        Some(Tok::RBrace) => "`}`".to_string(),
        Some(Tok::Comma) => "`,`".to_string(),
        Some(Tok::Equals) => "`=`".to_string(),
        Some(Tok::Dot) => "`.`".to_string(),
        Some(Tok::Arrow) => "`->`".to_string(),
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

fn lex(line: &str, line_no: usize) -> Result<Vec<Token<'_>>> {
    let bytes = line.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let column = i + 1;
        if c == b'#' {
            break;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            b':' => Some(Tok::Colon),
            b'{' => Some(Tok::LBrace),
            b'}' => Some(Tok::RBrace),
            b',' => Some(Tok::Comma),
            b'=' => Some(Tok::Equals),
            b'.' => Some(Tok::Dot),
            _ => None,
        };
        if let Some(tok) = single {
            tokens.push(Token { tok, column });
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'>') {
            tokens.push(Token {
                tok: Tok::Arrow,
                column,
            });
            i += 2;
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            tokens.push(Token {
                tok: Tok::Ident(&line[start..i]),
                column,
            });
            continue;
        }
        let signed = (c == b'-' || c == b'+') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit);
        if c.is_ascii_digit() || signed {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len()
                && bytes[i] == b'.'
                && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)
            {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            tokens.push(Token {
                tok: Tok::Number(&line[start..i]),
                column,
            });
            continue;
        }
        let ch = line[i..].chars().next().unwrap_or('?');
        return Err(CircuitError::Syntax {
            line: line_no,
            column,
            message: format!("unexpected character `{ch}`"),
        });
    }
    Ok(tokens)
}

struct Cursor<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    line: usize,
    end_column: usize,
}

impl<'t, 'a> Cursor<'t, 'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn column(&self) -> usize {
        self.peek().map_or(self.end_column, |t| t.column)
    }

    fn error(&self, message: impl Into<String>) -> CircuitError {
        CircuitError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(&'a str, usize)> {
        match self.peek().copied() {
            Some(Token {
                tok: Tok::Ident(s),
                column,
            }) => {
                self.pos += 1;
                Ok((s, column))
            }
            other => Err(self.error(format!(
                "expected {what}, found {}",
                describe(other.as_ref())
            ))),
        }
    }

    fn expect(&mut self, tok: Tok<'_>, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                self.pos += 1;
                Ok(())
            }
            other => Err(self.error(format!("expected {what}, found {}", describe(other)))),
        }
    }

    fn eat(&mut self, tok: Tok<'_>) -> bool {
        if self.peek().is_some_and(|t| t.tok == tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            other => Err(self.error(format!("unexpected {} after statement", describe(other)))),
        }
    }
}

/// A raw `key = value` entry before unit resolution.
struct RawParam<'a> {
    key: &'a str,
    key_column: usize,
    value: RawValue<'a>,
}

enum RawValue<'a> {
    Number {
        text: &'a str,
        unit: Option<&'a str>,
        column: usize,
    },
    Symbol {
        text: &'a str,
        column: usize,
    },
}

fn parse_block<'a>(cur: &mut Cursor<'_, 'a>) -> Result<Vec<RawParam<'a>>> {
    let mut out = Vec::new();
    if !cur.eat(Tok::LBrace) {
        return Ok(out);
    }
    loop {
        if cur.eat(Tok::RBrace) {
            break;
        }
        let (key, key_column) = cur.ident("parameter name or `}`")?;
        cur.expect(Tok::Equals, "`=`")?;
        let value = match cur.peek().copied() {
            Some(Token {
                tok: Tok::Number(text),
                column,
            }) => {
                cur.pos += 1;
                let unit = match cur.peek().map(|t| t.tok) {
                    Some(Tok::Ident(u)) => {
                        cur.pos += 1;
                        Some(u)
                    }
                    _ => None,
                };
                RawValue::Number { text, unit, column }
            }
            Some(Token {
                tok: Tok::Ident(text),
                column,
            }) => {
                cur.pos += 1;
                RawValue::Symbol { text, column }
            }
            other => {
                return Err(cur.error(format!(
                    "expected a value, found {}",
                    describe(other.as_ref())
                )))
            }
        };
        out.push(RawParam {
            key,
            key_column,
            value,
        });
        if cur.eat(Tok::Comma) {
            continue;
        }
        cur.expect(Tok::RBrace, "`,` or `}`")?;
        break;
    }
    Ok(out)
}

fn resolve_value(raw: &RawParam<'_>, class: ParamClass, line: usize) -> Result<Value> {
    let invalid = |column: usize, message: String| CircuitError::InvalidValue {
        line,
        column,
        key: raw.key.to_string(),
        message,
    };
    match (&raw.value, class) {
        (RawValue::Symbol { text, column }, ParamClass::ScanAngle) => ScanVar::from_symbol(text)
            .map(Value::Scan)
            .ok_or_else(|| invalid(*column, format!("`{text}` is not a scan variable"))),
        (RawValue::Symbol { text, column }, ParamClass::Scope) => PhaseScope::from_symbol(text)
            .map(|s| Value::Symbol(s.symbol().to_string()))
            .ok_or_else(|| invalid(*column, format!("`{text}` is not one of both, H, V"))),
        (RawValue::Symbol { text, column }, _) => {
            let message = if ScanVar::from_symbol(text).is_some() {
                format!("scan variable `{text}` may only bind a PHASE element's phase")
            } else {
                format!("expected a number, found `{text}`")
            };
            Err(invalid(*column, message))
        }
        (RawValue::Number { column, .. }, ParamClass::Scope) => {
            Err(invalid(*column, "expected one of both, H, V".to_string()))
        }
        (RawValue::Number { text, unit, column }, class) => {
            let x: f64 = text
                .parse()
                .map_err(|_| invalid(*column, format!("malformed number `{text}`")))?;
            if !x.is_finite() {
                return Err(invalid(*column, format!("`{text}` is not finite")));
            }
            let value = match (class, *unit) {
                (ParamClass::Angle | ParamClass::ScanAngle, None) => x,
                (ParamClass::Angle | ParamClass::ScanAngle, Some("deg")) => x.to_radians(),
                (ParamClass::Length, None | Some("nm")) => x,
                (ParamClass::Scalar, None) => x,
                (_, Some(u)) => {
                    return Err(invalid(*column, format!("unit `{u}` not allowed here")))
                }
                (ParamClass::Scope, None) => unreachable!(),
            };
            if matches!(class, ParamClass::Scalar | ParamClass::Length) && value < 0.0 {
                return Err(invalid(*column, "must be non-negative".to_string()));
            }
            Ok(Value::Number(value))
        }
    }
}

fn resolve_params(
    raw: Vec<RawParam<'_>>,
    owner: &str,
    line: usize,
    lookup: impl Fn(&str) -> Option<ParamClass>,
) -> Result<Params> {
    let mut params = Params::new();
    for p in raw {
        let class = lookup(p.key).ok_or_else(|| CircuitError::UnknownParameter {
            line,
            column: p.key_column,
            owner: owner.to_string(),
            key: p.key.to_string(),
        })?;
        let value = resolve_value(&p, class, line)?;
        if params.insert(p.key.to_string(), value).is_some() {
            return Err(CircuitError::InvalidValue {
                line,
                column: p.key_column,
                key: p.key.to_string(),
                message: "parameter given twice".to_string(),
            });
        }
    }
    Ok(params)
}

fn port_ref(cur: &mut Cursor<'_, '_>) -> Result<PortRef> {
    let (element, _) = cur.ident("element name")?;
    cur.expect(Tok::Dot, "`.`")?;
    let (port, _) = cur.ident("port name")?;
    Ok(PortRef::new(element, port))
}

/// Parse netlist text into a [`CircuitSpec`].
///
/// Only lexical and declaration-level checks happen here (syntax, kinds,
/// parameters, duplicate names, at least one source). Wiring problems are
/// reported by [`super::validate`].
pub fn parse(text: &str) -> Result<CircuitSpec> {
    let mut spec = CircuitSpec::default();
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut last_line = 1;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let tokens = lex(line, line_no)?;
        if tokens.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            tokens: &tokens,
            pos: 0,
            line: line_no,
            end_column: line.trim_end().len() + 1,
        };
        let (keyword, _) = cur.ident("statement keyword")?;
        let mut declare = |name: &str, column: usize| -> Result<()> {
            if names.insert(name.to_string(), line_no).is_some() {
                return Err(CircuitError::DuplicateName {
                    line: line_no,
                    column,
                    name: name.to_string(),
                });
            }
            Ok(())
        };
        match keyword {
            "source" => {
                let (name, column) = cur.ident("source name")?;
                let raw = parse_block(&mut cur)?;
                cur.finish()?;
                declare(name, column)?;
                let params = resolve_params(raw, name, line_no, source_param)?;
                spec.sources.push(SourceDecl {
                    name: name.to_string(),
                    params,
                });
            }
            "element" => {
                let (name, column) = cur.ident("element name")?;
                cur.expect(Tok::Colon, "`:`")?;
                let (kind_text, kind_column) = cur.ident("element kind")?;
                let kind = ElementType::from_keyword(kind_text).ok_or_else(|| {
                    CircuitError::UnknownKind {
                        line: line_no,
                        column: kind_column,
                        kind: kind_text.to_string(),
                    }
                })?;
                let raw = parse_block(&mut cur)?;
                cur.finish()?;
                declare(name, column)?;
                let params = resolve_params(raw, name, line_no, |k| element_param(kind, k))?;
                spec.elements.push(ElementDecl {
                    name: name.to_string(),
                    kind,
                    params,
                });
            }
            "detector" => {
                let (name, column) = cur.ident("detector name")?;
                cur.expect(Tok::Colon, "`:`")?;
                let (model, model_column) = cur.ident("detector model")?;
                if !DETECTOR_MODELS.contains(&model) {
                    return Err(CircuitError::UnknownKind {
                        line: line_no,
                        column: model_column,
                        kind: model.to_string(),
                    });
                }
                let raw = parse_block(&mut cur)?;
                cur.finish()?;
                declare(name, column)?;
                resolve_params(raw, name, line_no, |_| None)?;
                spec.detectors.push(DetectorDecl {
                    name: name.to_string(),
                    model: model.to_string(),
                });
            }
            "connect" => {
                let from = port_ref(&mut cur)?;
                cur.expect(Tok::Arrow, "`->`")?;
                let to = port_ref(&mut cur)?;
                cur.finish()?;
                spec.connections.push(Connection { from, to });
            }
            other => {
                return Err(CircuitError::Syntax {
                    line: line_no,
                    column: tokens[0].column,
                    message: format!("unknown statement `{other}`"),
                })
            }
        }
    }

    if spec.sources.is_empty() {
        return Err(CircuitError::Syntax {
            line: last_line,
            column: 1,
            message: "no source declared".to_string(),
        });
    }
    Ok(spec)
}
