//! Thompson construction.

use super::regex::Ast;
use super::Alphabet;

#[derive(Clone, Debug, Default)]
pub(crate) struct NfaState {
    pub eps: Vec<usize>,
    /// Character set (already resolved against the alphabet) and target.
    pub edge: Option<(u128, usize)>,
}

#[derive(Clone, Debug)]
pub(crate) struct Nfa {
    pub states: Vec<NfaState>,
    pub start: usize,
    pub accept: usize,
}

#[derive(Clone, Copy)]
struct Frag {
    start: usize,
    end: usize,
}

struct Builder {
    states: Vec<NfaState>,
    alphabet: u128,
}

impl Builder {
    fn state(&mut self) -> usize {
        self.states.push(NfaState::default());
        self.states.len() - 1
    }

    fn eps(&mut self, from: usize, to: usize) {
        self.states[from].eps.push(to);
    }

    fn build(&mut self, ast: &Ast) -> Frag {
        match ast {
            Ast::Empty => {
                let s = self.state();
                Frag { start: s, end: s }
            }
            Ast::Class { set, negated } => {
                let resolved = if *negated {
                    self.alphabet & !set
                } else {
                    self.alphabet & set
                };
                let start = self.state();
                let end = self.state();
                self.states[start].edge = Some((resolved, end));
                Frag { start, end }
            }
            Ast::Concat(items) => {
                let mut frags = items
                    .iter()
                    .map(|item| self.build(item))
                    .collect::<Vec<_>>()
                    .into_iter();
                let first = frags.next().expect("concat has items");
                let mut end = first.end;
                for f in frags {
                    self.eps(end, f.start);
                    end = f.end;
                }
                Frag {
                    start: first.start,
                    end,
                }
            }
            Ast::Alternation(branches) => {
                let start = self.state();
                let end = self.state();
                for b in branches {
                    let f = self.build(b);
                    self.eps(start, f.start);
                    self.eps(f.end, end);
                }
                Frag { start, end }
            }
            Ast::Repeat { inner, min, max } => self.repeat(inner, *min, *max),
        }
    }

    fn repeat(&mut self, inner: &Ast, min: u32, max: Option<u32>) -> Frag {
        let start = self.state();
        let mut end = start;
        for _ in 0..min {
            let f = self.build(inner);
            self.eps(end, f.start);
            end = f.end;
        }
        match max {
            None => {
                // Kleene star on a fresh copy.
                let hub = self.state();
                self.eps(end, hub);
                let f = self.build(inner);
                self.eps(hub, f.start);
                self.eps(f.end, hub);
                Frag { start, end: hub }
            }
            Some(max) => {
                // Chain of optional copies: x(x(x)?)?, linear in the count.
                let optional = max - min;
                if optional == 0 {
                    return Frag { start, end };
                }
                let exit = self.state();
                for _ in 0..optional {
                    let f = self.build(inner);
                    self.eps(end, f.start);
                    self.eps(end, exit);
                    end = f.end;
                }
                self.eps(end, exit);
                Frag { start, end: exit }
            }
        }
    }
}

impl Nfa {
    pub fn from_ast(ast: &Ast, alphabet: &Alphabet) -> Self {
        let mut b = Builder {
            states: Vec::new(),
            alphabet: alphabet.mask(),
        };
        let frag = b.build(ast);
        Nfa {
            states: b.states,
            start: frag.start,
            accept: frag.end,
        }
    }

    /// Epsilon closure of `seeds`, written into `out` as a sorted set.
    pub fn closure(&self, seeds: &[usize], out: &mut Vec<usize>, seen: &mut [bool]) {
        out.clear();
        let mut stack: Vec<usize> = Vec::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
        while let Some(s) = stack.pop() {
            out.push(s);
            for &t in &self.states[s].eps {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        for &s in out.iter() {
            seen[s] = false;
        }
        out.sort_unstable();
    }
}
