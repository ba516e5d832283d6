use super::diagnostics::{Diagnostic, DiagnosticKind, Pos};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(String),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

const SYMBOLS: [&str; 17] = ["->", "+", "-", "*", "/", "^", "(", ")", "[", "]", ",", ";", ":", "=", ">", "<", "\\"];

pub fn lex(text: &str) -> Result<Vec<Token>, Vec<Diagnostic>> {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos { line: li + 1, col: i + 1 };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    pos,
                });
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                out.push(Token {
                    tok: Tok::Number(chars[start..i].iter().collect()),
                    pos,
                });
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(*s)) {
                Some(s) => {
                    out.push(Token { tok: Tok::Sym(s), pos });
                    i += s.chars().count();
                }
                None => {
                    errors.push(Diagnostic::new(DiagnosticKind::Syntax, pos, format!("unexpected character `{c}`")));
                    i += 1;
                }
            }
        }
        // a trailing backslash joins the next line
        if matches!(out.last(), Some(Token { tok: Tok::Sym("\\"), .. })) {
            out.pop();
        } else {
            out.push(Token {
                tok: Tok::Newline,
                pos: Pos {
                    line: li + 1,
                    col: chars.len() + 1,
                },
            });
        }
    }
    let end = Pos {
        line: text.lines().count() + 1,
        col: 1,
    };
    out.push(Token { tok: Tok::Eof, pos: end });
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = lex("form w = 3/2*x^2 - dx # note\nmap s: x -> -x").unwrap();
        let kinds: Vec<Tok> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(kinds[0], Tok::Ident("form".into()));
        assert_eq!(kinds[3], Tok::Number("3".into()));
        assert!(kinds.contains(&Tok::Sym("->")));
        assert_eq!(toks[3].pos, Pos { line: 1, col: 10 });
        let n = toks.iter().filter(|t| t.tok == Tok::Newline).count();
        assert_eq!(n, 2);
    }

    #[test]
    fn exponent_literals() {
        let toks = lex("1e-9 2.5E3 7e").unwrap();
        assert_eq!(toks[0].tok, Tok::Number("1e-9".into()));
        assert_eq!(toks[1].tok, Tok::Number("2.5E3".into()));
        assert_eq!(toks[2].tok, Tok::Number("7".into()));
        assert_eq!(toks[3].tok, Tok::Ident("e".into()));
    }

    #[test]
    fn bad_characters_are_located() {
        let errs = lex("x = 1\ny = $").unwrap_err();
        assert_eq!(errs[0].pos, Pos { line: 2, col: 5 });
    }

    #[test]
    fn continuation_joins_lines() {
        let toks = lex("a = 1 + \\\n 2").unwrap();
        assert_eq!(toks.iter().filter(|t| t.tok == Tok::Newline).count(), 1);
    }
}
