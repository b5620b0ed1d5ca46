use num_traits::Zero;

use crate::abc::Rational;

/// Clock value when the free duration is unknown: no meter, or text the clock
/// cannot follow until the next barline.
pub const UNKNOWN: u16 = u16::MAX;
/// The bar is already overfull.
pub const OVERFULL: u16 = u16::MAX - 1;
/// Free duration not on the 1/`TICKS` quarter grid.
pub const OFF_GRID: u16 = u16::MAX - 2;
/// Still reading header lines.
pub const HEADER: u16 = u16::MAX - 3;
const TICKS: i64 = 192;
const MAX_LENGTH: i64 = 1024;

#[derive(Debug, Clone, Copy, Default)]
struct Pending {
    letter: bool,
    num: Option<i64>,
    slashes: u32,
    den: Option<i64>,
}

impl Pending {
    fn length(&self) -> Option<Rational> {
        let num = self.num.unwrap_or(1);
        let den = match (self.slashes, self.den) {
            (0, None) => 1,
            (0, Some(_)) => return None,
            (_, Some(d)) => d,
            (s, None) if s < 10 => 1 << s,
            _ => return None,
        };
        (num > 0 && den > 0 && (den & (den - 1)) == 0).then(|| Rational::new(num, den))
    }

    fn has_length(&self) -> bool {
        self.num.is_some() || self.slashes > 0
    }
}

/// Follows a tune's model text (header lines, then body) one character at a
/// time and reports how much of the current bar is still free.
#[derive(Debug, Clone)]
pub struct BarClock {
    line: String,
    in_body: bool,
    unit: Rational,
    measure: Option<Rational>,
    elapsed: Rational,
    pending: Option<Pending>,
    lost: bool,
}

impl Default for BarClock {
    fn default() -> BarClock {
        BarClock {
            line: String::new(),
            in_body: false,
            unit: Rational::new(1, 2),
            measure: None,
            elapsed: Rational::zero(),
            pending: None,
            lost: false,
        }
    }
}

fn fraction(s: &str) -> Option<Rational> {
    let (n, d) = s.trim().split_once('/')?;
    let (n, d): (i64, i64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
    (n > 0 && d > 0 && n <= MAX_LENGTH && d <= MAX_LENGTH).then(|| Rational::new(n, d))
}

fn push_digit(v: Option<i64>, d: u32) -> Option<i64> {
    let v = v.unwrap_or(0) * 10 + d as i64;
    (v <= MAX_LENGTH).then_some(v)
}

impl BarClock {
    pub fn new() -> BarClock {
        BarClock::default()
    }

    /// Free duration of the current bar in 1/192 quarters, or one of the
    /// sentinels. A note still being written counts with its length so far.
    pub fn value(&self) -> u16 {
        if !self.in_body {
            return HEADER;
        }
        let Some(measure) = self.measure.filter(|_| !self.lost) else {
            return UNKNOWN;
        };
        let mut free = measure - self.elapsed;
        if let Some(p) = self.pending.filter(|p| p.letter) {
            match p.length() {
                Some(len) => free -= len * self.unit,
                None if p.slashes > 0 && p.den.is_none() => {}
                None => return UNKNOWN,
            }
        }
        if free < Rational::zero() {
            return OVERFULL;
        }
        let ticks = free * TICKS;
        match ticks.is_integer().then(|| *ticks.numer()) {
            Some(t) if t < HEADER as i64 => t as u16,
            _ => OFF_GRID,
        }
    }

    fn header_line(&mut self) {
        let line = std::mem::take(&mut self.line);
        if let Some(v) = line.strip_prefix("L:") {
            if let Some(u) = fraction(v) {
                self.unit = u * 4;
            }
        } else if let Some(v) = line.strip_prefix("M:") {
            self.measure = match v.trim() {
                "C" | "C|" => Some(Rational::from_integer(4)),
                other => fraction(other).map(|m| m * 4),
            };
        } else if line.starts_with("K:") {
            self.in_body = true;
        }
    }

    fn finish(&mut self) {
        let Some(p) = self.pending.take() else { return };
        if !p.letter {
            self.lost = true;
            return;
        }
        match p.length() {
            // past a full bar the exact amount no longer matters
            Some(len) if self.elapsed <= self.measure.unwrap_or(Rational::zero()) => {
                self.elapsed += len * self.unit
            }
            Some(_) => {}
            None => self.lost = true,
        }
    }

    pub fn push(&mut self, c: char) {
        if !self.in_body {
            if c == '\n' {
                self.header_line();
            } else {
                self.line.push(c);
            }
            return;
        }
        if matches!(c, '|' | ':' | ']' | '\n') {
            self.finish();
            self.elapsed = Rational::zero();
            self.lost = false;
            return;
        }
        if self.lost {
            return;
        }
        let p = self.pending;
        match c {
            '^' | '_' | '=' => {
                if p.is_some_and(|p| p.letter) {
                    self.finish();
                }
                self.pending.get_or_insert_with(Pending::default);
            }
            'A'..='G' | 'a'..='g' | 'z' | 'x' => {
                if p.is_some_and(|p| p.letter) {
                    self.finish();
                }
                self.pending.get_or_insert_with(Pending::default).letter = true;
            }
            '\'' | ',' => match &mut self.pending {
                Some(p) if p.letter && !p.has_length() => {}
                _ => self.lost = true,
            },
            '0'..='9' => {
                let d = c.to_digit(10).unwrap();
                let ok = match &mut self.pending {
                    Some(p) if p.letter => {
                        let slot = if p.slashes == 0 { &mut p.num } else { &mut p.den };
                        push_digit(*slot, d).map(|v| *slot = Some(v)).is_some()
                    }
                    _ => false,
                };
                if !ok {
                    self.lost = true;
                }
            }
            '/' => match &mut self.pending {
                Some(p) if p.letter && p.den.is_none() => p.slashes += 1,
                _ => self.lost = true,
            },
            '-' | ' ' => {
                if p.is_some() {
                    self.finish();
                } else if c == '-' {
                    self.lost = true;
                }
            }
            _ => self.lost = true,
        }
    }
}

/// Clock value before each character of `text` and before the end symbol.
pub fn clock_values(text: &str) -> Vec<u16> {
    let mut clock = BarClock::new();
    let mut out = Vec::with_capacity(text.len() + 1);
    for c in text.chars() {
        out.push(clock.value());
        clock.push(c);
    }
    out.push(clock.value());
    out
}
