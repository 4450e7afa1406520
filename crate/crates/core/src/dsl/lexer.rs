use super::{DiagKind, Diagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Exact decimal literal as written.
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Eq,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Prime,
    Arrow,
    DotDot,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Eof => "end of input".into(),
            t => format!("`{}`", t.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Eq => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::Prime => "'",
            Tok::Arrow => "->",
            Tok::DotDot => "..",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }
}

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut c = Cursor { src, pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        while let Some(ch) = c.peek() {
            if ch == '#' {
                while let Some(ch) = c.peek() {
                    if ch == '\n' {
                        break;
                    }
                    c.bump();
                }
            } else if ch.is_whitespace() {
                c.bump();
            } else {
                break;
            }
        }
        let (begin, line, col) = (c.pos, c.line, c.col);
        let span = |c: &Cursor| SourceSpan { begin, end: c.pos, line, col };
        let Some(ch) = c.bump() else {
            out.push(Token { tok: Tok::Eof, span: span(&c) });
            return Ok(out);
        };
        let tok = match ch {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            ':' => Tok::Colon,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '\'' => Tok::Prime,
            '-' if c.peek() == Some('>') => {
                c.bump();
                Tok::Arrow
            }
            '-' => Tok::Minus,
            '.' if c.peek() == Some('.') => {
                c.bump();
                Tok::DotDot
            }
            d if d.is_ascii_digit() || (d == '.' && c.peek().is_some_and(|n| n.is_ascii_digit())) => {
                let mut s = d.to_string();
                let mut seen_dot = d == '.';
                let mut seen_exp = false;
                while let Some(n) = c.peek() {
                    if n.is_ascii_digit() {
                        s.push(n);
                        c.bump();
                    } else if n == '.' && !seen_dot && !seen_exp && c.peek2() != Some('.') {
                        seen_dot = true;
                        s.push(n);
                        c.bump();
                    } else if (n == 'e' || n == 'E') && !seen_exp && c.peek2().is_some_and(|m| m.is_ascii_digit() || m == '-' || m == '+') {
                        seen_exp = true;
                        s.push(n);
                        c.bump();
                        if let Some(sign @ ('-' | '+')) = c.peek() {
                            s.push(sign);
                            c.bump();
                        }
                    } else {
                        break;
                    }
                }
                Tok::Number(s)
            }
            a if a.is_alphabetic() || a == '_' => {
                let mut s = a.to_string();
                while let Some(n) = c.peek() {
                    if n.is_alphanumeric() || n == '_' {
                        s.push(n);
                        c.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            other => {
                return Err(Diagnostic {
                    kind: DiagKind::Lexical,
                    message: format!("unexpected character `{other}`"),
                    span: span(&c),
                })
            }
        };
        out.push(Token { tok, span: span(&c) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_spans() {
        let t = lex("u_x ->1.5e-3 # note\n  ..;").unwrap();
        let toks: Vec<&Tok> = t.iter().map(|t| &t.tok).collect();
        assert_eq!(toks, [&Tok::Ident("u_x".into()), &Tok::Arrow, &Tok::Number("1.5e-3".into()), &Tok::DotDot, &Tok::Semi, &Tok::Eof]);
        assert_eq!((t[3].span.line, t[3].span.col), (2, 3));
    }

    #[test]
    fn ranges_are_not_decimals() {
        let t = lex("0..10").unwrap();
        assert_eq!(t[0].tok, Tok::Number("0".into()));
        assert_eq!(t[1].tok, Tok::DotDot);
    }

    #[test]
    fn stray_character() {
        let e = lex("x @ y").unwrap_err();
        assert_eq!(e.span.begin, 2);
    }
}
