//! Readers and writers for every on-disk format.

mod data;
mod model;
mod reports;

pub use data::{load_aliases, load_analogies, load_approvals, load_corpus, load_trials, write_corpus, CorpusLoad};
pub use model::{
    load_checkpoint, load_json, load_model_dir, load_vocab, save_checkpoint, save_json, save_model_dir, save_vocab,
    vocab_from_json, vocab_to_json, CONFIG_FILE, PARAMS_FILE, VOCAB_FILE,
};
pub use reports::{
    analogy_csv, fc_plot_csv, kshot_csv, loss_csv, ranked_csv, ranked_json, write_fc_dir, write_file,
};
