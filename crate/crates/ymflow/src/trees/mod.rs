//! Decorated trees of the regularity-structure expansion: enumeration under a rule, symmetry
//! factors, the coefficient maps Υ and the resulting counterterms.

mod counterterm;
mod enumerate;
mod jet;
mod labels;
mod tree;
mod upsilon;

pub use counterterm::{
    bphz_vanishing_filter, check_operator, counterterm, counterterm_gauge_system, counterterm_sym, gauge_jet, negative_trees,
    Character, Contribution, Counterterm, GaugeCounterterm, SymCounterterm, VanishingReason,
};
pub use enumerate::{complete_rule, enumerate_trees, Completion, EnumeratedTree, Enumeration, EnumerationOptions, PolyPlacement};
pub use jet::{JetEnv, JetTerm, Value, Word};
pub use labels::{scaled, Degree, EdgeType, KappaInterval, Label, LabelId, LabelKind, LabelSet, NodeType, Rule, Target, Q};
pub use tree::{form_histogram, normalize_form, DecoratedTree, FlatTree};
pub use upsilon::{coherence_check, upsilon, upsilon_bar, CoherenceReport, GaugeSystem, Nonlinearity, UpsilonTerm};
