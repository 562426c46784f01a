//! CSV emission with a versioned header.

use std::fmt::Write;

use r1lab::tower::Tower;
use r1lab::{Enclosure, ExactScalar};

pub const HEADER: &str = "# r1lab v1";

pub struct Csv {
    body: String,
    leb: String,
    depth: usize,
    decimals: Option<usize>,
}

impl Csv {
    pub fn new(tower: &Tower, what: &str, decimals: Option<usize>) -> Self {
        let mut body = format!("{HEADER}\n# {what}\n");
        if let Some(d) = decimals {
            let _ = writeln!(
                body,
                "# decimals: {d} digits, lo rounded down, hi rounded up"
            );
        }
        body.push_str("parameter,lo,hi,width,leb_CN,depth");
        if decimals.is_some() {
            body.push_str(",lo_decimal,hi_decimal");
        }
        body.push('\n');
        Csv {
            body,
            leb: tower.leb_top().to_string(),
            depth: tower.depth(),
            decimals,
        }
    }

    pub fn row(&mut self, parameter: impl std::fmt::Display, e: &Enclosure) {
        let _ = write!(
            self.body,
            "{parameter},{},{},{},{},{}",
            e.lo(),
            e.hi(),
            e.width(),
            self.leb,
            self.depth
        );
        if let Some(d) = self.decimals {
            let _ = write!(
                self.body,
                ",{},{}",
                e.lo().to_decimal_floor(d),
                e.hi().to_decimal_ceil(d)
            );
        }
        self.body.push('\n');
    }

    pub fn point_row(&mut self, parameter: impl std::fmt::Display, x: &ExactScalar) {
        self.row(parameter, &Enclosure::point(x.clone()));
    }

    pub fn finish(self) -> String {
        self.body
    }
}
