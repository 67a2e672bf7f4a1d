#include "rewriter/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rewriter/decode.hpp"
#include "rewriter/eval.hpp"
#include "rewriter/kernels.hpp"
#include "rewriter/train.hpp"

#ifndef REWRITER_DATA_DIR
#define REWRITER_DATA_DIR "data"
#endif

namespace rewriter::cli {

namespace {

struct LexiconPaths {
  std::string question = std::string(REWRITER_DATA_DIR) + "/question_words.txt";
  std::string prps = std::string(REWRITER_DATA_DIR) + "/possessive_pronouns.txt";
  std::string psbl = std::string(REWRITER_DATA_DIR) + "/psbl_top1000.txt";

  Lexicons load() const { return Lexicons::load(question, prps, psbl); }
};

void add_lexicon_flags(CLI::App* cmd, LexiconPaths& paths) {
  cmd->add_option("--question-words", paths.question, "question-word list, one per line");
  cmd->add_option("--possessive-pronouns", paths.prps, "possessive-pronoun list");
  cmd->add_option("--psbl-lexicon", paths.psbl, "possessible-noun (PSBL) lexicon");
}

void add_pgn_flags(CLI::App* cmd, PgnConfig& cfg) {
  cmd->add_option("--embed-dim", cfg.embed_dim, "shared word-embedding size");
  cmd->add_option("--hidden-dim", cfg.hidden_dim, "LSTM state size");
  cmd->add_option("--encoder-layers", cfg.encoder_layers, "bidirectional encoder layers");
  cmd->add_option("--attn-dim", cfg.attn_dim, "attention hidden size");
  cmd->add_option("--copy-head-dim", cfg.copy_head_dim, "copy-head hidden size");
  cmd->add_option("--speaker-dim", cfg.speaker_dim, "speaker feature embedding size");
  cmd->add_option("--slot-dim", cfg.slot_dim, "slot-key feature embedding size");
  cmd->add_option("--flags-dim", cfg.flags_dim, "syntax-flag feature embedding size");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open output file: " + path);
  return os;
}

void write_corpus_slice(const Corpus& corpus, std::size_t first, std::size_t count,
                        const std::string& path) {
  Corpus slice;
  for (std::size_t i = first; i < first + count; ++i) slice.dialogues.push_back(corpus.dialogues[i]);
  for (const auto& rec : corpus.records)
    if (slice.find_dialogue(rec.dialogue_id)) slice.records.push_back(rec);
  save_corpus(path, slice);
}

int run_or_throw(std::vector<std::string> args) {
  CLI::App app{"contextual query rewriter"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; sections per subcommand");
  app.allow_config_extras(false);

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = library default)");

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a deterministic synthetic corpus");
  std::uint64_t synth_seed = 1;
  int n = 0, n_train = 0, n_dev = 0, n_test = 0;
  std::string out, out_dir;
  SynthSpec sspec;
  synth->add_option("--seed", synth_seed, "corpus seed");
  synth->add_option("--n", n, "number of dialogues (single-file mode)");
  synth->add_option("--out", out, "output corpus (single-file mode)");
  synth->add_option("--n-train", n_train, "training dialogues (split mode)");
  synth->add_option("--n-dev", n_dev, "dev dialogues (split mode)");
  synth->add_option("--n-test", n_test, "test dialogues (split mode)");
  synth->add_option("--out-dir", out_dir, "directory for train/dev/test.jsonl (split mode)");
  synth->add_option("--min-user-turns", sspec.min_user_turns, "minimum user turns per dialogue");
  synth->add_option("--max-user-turns", sspec.max_user_turns, "maximum user turns per dialogue");
  synth->add_option("--max-references", sspec.max_references, "maximum gold rewrites per turn");

  // ---- preprocess ----
  auto* prep = app.add_subcommand("preprocess", "dump serialized contexts for every record");
  std::string prep_corpus, prep_out;
  int prep_window = kFullWindow;
  LexiconPaths prep_lex;
  prep->add_option("--corpus", prep_corpus, "corpus file")->required();
  prep->add_option("--out", prep_out, "dump file (default: stdout)");
  prep->add_option("--window", prep_window, "user turns of context (0 = all)");
  add_lexicon_flags(prep, prep_lex);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train the rewriter");
  std::string train_path, dev_path, ckpt_out, log_path;
  PgnConfig pgn_cfg;
  TrainConfig train_cfg;
  LexiconPaths train_lex;
  train_cmd->add_option("--train", train_path, "training corpus")->required();
  train_cmd->add_option("--dev", dev_path, "validation corpus")->required();
  train_cmd->add_option("--checkpoint", ckpt_out, "checkpoint output path")->required();
  train_cmd->add_option("--log", log_path, "epoch log file (default: stdout)");
  train_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
  train_cmd->add_option("--learning-rate", train_cfg.learning_rate, "Adagrad learning rate");
  train_cmd->add_option("--lambda", train_cfg.lambda, "weight of the entity-copy objective");
  train_cmd->add_option("--patience", train_cfg.patience, "early-stop patience (epochs)");
  train_cmd->add_option("--batch-size", train_cfg.batch_size, "examples per optimizer step");
  train_cmd->add_option("--seed", train_cfg.seed, "master seed");
  train_cmd->add_option("--clip-norm", train_cfg.clip_norm, "global gradient-norm clip");
  train_cmd->add_option("--window", train_cfg.window, "user turns of context (0 = all)");
  add_pgn_flags(train_cmd, pgn_cfg);
  add_lexicon_flags(train_cmd, train_lex);

  // ---- rewrite ----
  auto* rew = app.add_subcommand("rewrite", "rewrite corpus records with a trained model");
  std::string rew_ckpt, rew_input, rew_out, rew_delex;
  std::string rew_mode = "greedy";
  DecodeOptions dopts;
  LexiconPaths rew_lex;
  rew->add_option("--checkpoint", rew_ckpt, "model checkpoint")->required();
  rew->add_option("--input", rew_input, "corpus file to rewrite")->required();
  rew->add_option("--output", rew_out, "surface rewrites, one per line (default: stdout)");
  rew->add_option("--delex-output", rew_delex,
                  "delexicalized sidecar (default: <output>.delex)");
  rew->add_option("--mode", rew_mode, "greedy or beam")
      ->check(CLI::IsMember({"greedy", "beam"}));
  rew->add_option("--width", dopts.width, "beam width");
  rew->add_option("--max-len", dopts.max_len, "maximum decode length");
  rew->add_option("--window", dopts.window, "user turns of context (0 = all)");
  rew->add_flag("--restrict-entities", dopts.restrict_to_source,
                "only emit entity placeholders present in the source");
  add_lexicon_flags(rew, rew_lex);

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "score delexicalized rewrites against gold");
  std::string ev_corpus, ev_hyp, ev_report;
  int ev_window = kFullWindow;
  LexiconPaths ev_lex;
  ev->add_option("--corpus", ev_corpus, "corpus with gold rewrite records")->required();
  ev->add_option("--hyp", ev_hyp, "delexicalized hypotheses, one per line")->required();
  ev->add_option("--report", ev_report, "also write the report to this file");
  ev->add_option("--window", ev_window, "user turns of context (0 = all)");
  add_lexicon_flags(ev, ev_lex);

  std::vector<char*> argv;
  std::string prog = "rewriter";
  argv.push_back(prog.data());
  for (auto& a : args) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (threads > 0) kernels::set_threads(threads);

  if (synth->parsed()) {
    bool split_mode = n_train > 0 || n_dev > 0 || n_test > 0;
    if (split_mode) {
      if (out_dir.empty())
        throw UsageError("synth: --out-dir is required with --n-train/--n-dev/--n-test");
      Corpus corpus = generate_synthetic(synth_seed, n_train + n_dev + n_test, sspec);
      write_corpus_slice(corpus, 0, static_cast<std::size_t>(n_train), out_dir + "/train.jsonl");
      write_corpus_slice(corpus, static_cast<std::size_t>(n_train),
                         static_cast<std::size_t>(n_dev), out_dir + "/dev.jsonl");
      write_corpus_slice(corpus, static_cast<std::size_t>(n_train + n_dev),
                         static_cast<std::size_t>(n_test), out_dir + "/test.jsonl");
    } else {
      if (n < 1 || out.empty()) throw UsageError("synth: need --n and --out (or the split flags)");
      save_corpus(out, generate_synthetic(synth_seed, n, sspec));
    }
    return 0;
  }

  if (prep->parsed()) {
    Corpus corpus = load_corpus(prep_corpus);
    Lexicons lex = prep_lex.load();
    std::ostringstream os;
    for (const auto& rec : corpus.records) {
      const Dialogue* d = corpus.find_dialogue(rec.dialogue_id);
      SerializedContext ctx = build_context(*d, rec.turn_index, prep_window, lex);
      derive_copy_labels(ctx, rec);
      os << "# dialogue=" << rec.dialogue_id << " turn=" << rec.turn_index << '\n'
         << dump_context(ctx) << '\n';
    }
    if (prep_out.empty())
      std::cout << os.str();
    else
      open_out(prep_out) << os.str();
    return 0;
  }

  if (train_cmd->parsed()) {
    Corpus train_corpus = load_corpus(train_path);
    Corpus dev_corpus = load_corpus(dev_path);
    Lexicons lex = train_lex.load();
    pgn_cfg.lambda = train_cfg.lambda;
    TrainReport report;
    AdagradState opt;
    std::ofstream log_file;
    std::ostream* progress = &std::cout;
    if (!log_path.empty()) {
      log_file = open_out(log_path);
      progress = &log_file;
    }
    PgnModel model =
        run_training(train_corpus, dev_corpus, lex, pgn_cfg, train_cfg, &report, &opt, progress);
    model.save(ckpt_out, &opt);
    std::cerr << "best epoch " << report.best_epoch << ", val_nll "
              << report.epochs[static_cast<std::size_t>(report.best_epoch)].val_nll
              << (report.stopped_early ? " (stopped early)" : "") << '\n';
    return 0;
  }

  if (rew->parsed()) {
    Corpus corpus = load_corpus(rew_input);
    Lexicons lex = rew_lex.load();
    PgnModel model = PgnModel::load(rew_ckpt);
    dopts.beam = rew_mode == "beam";
    BatchRewriteResult res = batch_rewrite(corpus, model, lex, dopts);
    std::ostringstream surface, delex;
    for (const auto& line : res.surface) surface << line << '\n';
    for (const auto& toks : res.delex) {
      for (std::size_t i = 0; i < toks.size(); ++i) delex << (i ? " " : "") << toks[i];
      delex << '\n';
    }
    if (rew_out.empty()) {
      std::cout << surface.str();
    } else {
      open_out(rew_out) << surface.str();
      if (rew_delex.empty()) rew_delex = rew_out + ".delex";
    }
    if (!rew_delex.empty()) open_out(rew_delex) << delex.str();
    if (res.unresolvable > 0)
      std::cerr << res.unresolvable << " of " << res.total
                << " rewrites contain unresolvable entity tokens\n";
    return 0;
  }

  if (ev->parsed()) {
    Corpus corpus = load_corpus(ev_corpus);
    Lexicons lex = ev_lex.load();
    std::ifstream hyp_file(ev_hyp);
    if (!hyp_file) throw DataError("cannot open hypothesis file: " + ev_hyp);
    std::vector<std::vector<std::string>> hyps;
    std::string line;
    while (std::getline(hyp_file, line)) {
      std::istringstream ss(line);
      std::vector<std::string> toks;
      std::string tok;
      while (ss >> tok) toks.push_back(tok);
      hyps.push_back(std::move(toks));
    }
    EvalReport report = evaluate_rewrites(corpus, hyps, lex, ev_window);
    std::string text = render_table(report) + render_line(report) + '\n';
    std::cout << text;
    if (!ev_report.empty()) open_out(ev_report) << text;
    return 0;
  }

  return 0;
}

}  // namespace

int run(std::vector<std::string> args) {
  try {
    return run_or_throw(std::move(args));
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace rewriter::cli
