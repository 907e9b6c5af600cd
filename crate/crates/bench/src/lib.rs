//! Synthetic inputs shared by the benchmarks.

use reviser_core::Violation;

/// A Python module with `classes` classes of `methods` methods each, every
/// method holding one `print(` call.
pub fn synthetic_python(classes: usize, methods: usize) -> String {
    let mut src = String::from("import logging\n\n");
    for c in 0..classes {
        src.push_str(&format!("\nclass Service{c}:\n"));
        for m in 0..methods {
            src.push_str(&format!(
                "    def handle_{m}(self, value):\n        total = value * {m}\n        print(total)\n        return total\n\n"
            ));
        }
    }
    src
}

/// One violation per line containing `needle`.
pub fn violations_for(source: &str, file: &str, needle: &str) -> Vec<Violation> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| l.contains(needle))
        .map(|(i, _)| Violation::new(file, i + 1, i + 1, "no-print", "print call"))
        .collect()
}
