/// Indenting line writer producing 4-space, newline-terminated source.
#[derive(Default)]
pub(crate) struct Src {
    buf: String,
    depth: usize,
}

impl Src {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        let s = s.as_ref();
        if !s.is_empty() {
            for _ in 0..self.depth {
                self.buf.push_str("    ");
            }
            self.buf.push_str(s);
        }
        self.buf.push('\n');
    }

    pub fn open(&mut self, s: impl AsRef<str>) {
        self.line(s);
        self.depth += 1;
    }

    pub fn close(&mut self) {
        self.close_with("}");
    }

    pub fn close_with(&mut self, s: &str) {
        self.depth -= 1;
        self.line(s);
    }

    /// Close a block and open its continuation, as in `} else {`.
    pub fn reopen(&mut self, s: &str) {
        self.depth -= 1;
        self.open(s);
    }

    /// `label: for (int var = 0; var < bound; ++var) {` plus its unroll directive.
    pub fn for_loop(&mut self, label: &str, var: &str, bound: usize, unroll: usize) {
        self.open(format!("{label}: for (int {var} = 0; {var} < {bound}; ++{var}) {{"));
        if let Some(p) = unroll_pragma(unroll, bound) {
            self.line(p);
        }
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Unroll directive for a loop of constant `bound`, if any.
///
/// Factor 1 emits nothing; a factor covering the whole loop unrolls it fully.
pub(crate) fn unroll_pragma(factor: usize, bound: usize) -> Option<String> {
    if factor <= 1 {
        None
    } else if factor >= bound {
        Some("#pragma HLS unroll".to_string())
    } else {
        Some(format!("#pragma HLS unroll factor={factor}"))
    }
}

/// A C++ double literal that parses back to exactly `x`.
pub(crate) fn lit(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}
