// mdbook cannot compile listings against a local crate, so every chapter of
// the guide is included here as module docs and `cargo test --doc` runs them.
// One module per chapter keeps failures traceable to a file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/hierarchies.md")]
pub mod hierarchies {}
#[doc = include_str!("../../../book/src/discretization.md")]
pub mod discretization {}
#[doc = include_str!("../../../book/src/transfer.md")]
pub mod transfer {}
#[doc = include_str!("../../../book/src/smoothers.md")]
pub mod smoothers {}
#[doc = include_str!("../../../book/src/multigrid.md")]
pub mod multigrid {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[cfg(test)]
mod tests {
    const LIB: &str = include_str!("lib.rs");
    const SUMMARY: &str = include_str!("../../../book/src/SUMMARY.md");

    fn chapters() -> Vec<&'static str> {
        SUMMARY.split("](").skip(1).map(|s| &s[..s.find(')').unwrap()]).collect()
    }

    #[test]
    fn every_chapter_is_compiled() {
        let chapters = chapters();
        assert!(!chapters.is_empty());
        for c in &chapters {
            assert!(LIB.contains(&format!("book/src/{c}\")")), "{c} is not included");
        }
        // the summary itself is the one non-chapter include
        let included = LIB.matches("include_str!(\"../../../book/src/").count() - 1;
        assert_eq!(included, chapters.len(), "lib.rs includes a chapter missing from SUMMARY.md");
    }
}
