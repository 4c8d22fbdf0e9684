#include "deskmt/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace deskmt::cli {

namespace fs = std::filesystem;

namespace {

struct RunDir {
  fs::path root;
  explicit RunDir(const std::string& out_dir) : root(out_dir) {
    fs::create_directories(root / "checkpoints");
    fs::create_directories(root / "decodes");
    fs::create_directories(root / "reports");
    fs::create_directories(root / "logs");
  }
  std::string p(const std::string& rel) const { return (root / rel).string(); }
};

void write_resolved(const RunDir& rd, const std::string& command, const ConfigMap& cfg) {
  std::ostringstream os;
  os << "command=" << command << "\n" << cfg.resolved_text();
  text::write_file_atomic(rd.p("config.resolved"), os.str());
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

struct TextPipeline {
  text::MergeTable merges;
  text::Vocabulary vocab;
};

// Loads vocab/merges when given explicitly, otherwise learns BPE over the
// fallback data and writes the artifacts into the run directory.
TextPipeline resolve_text_pipeline(const ConfigMap& cfg, const RunDir& rd,
                                   const std::vector<std::string>& fallback_data) {
  TextPipeline tp;
  if (cfg.has("vocab") != cfg.has("merges")) {
    throw ConfigError("vocab and merges must be given together");
  }
  if (cfg.has("vocab")) {
    tp.vocab = text::Vocabulary::load(cfg.get_str("vocab"));
    tp.merges = text::MergeTable::load(cfg.get_str("merges"));
    return tp;
  }
  std::vector<std::string> sources =
      cfg.has("vocab_data") ? split_commas(cfg.get_str("vocab_data")) : fallback_data;
  text::MonoCorpus all;
  for (const std::string& path : sources) {
    text::MonoCorpus c = text::load_mono(path);
    all.sentences.insert(all.sentences.end(), c.sentences.begin(), c.sentences.end());
  }
  tp.merges = text::learn_bpe(all, cfg.get_int("bpe_merges", 500));
  tp.vocab = text::build_vocab(all, tp.merges);
  tp.vocab.save(rd.p("vocab.txt"));
  tp.merges.save(rd.p("merges.txt"));
  return tp;
}

nn::TrainConfig train_config(const ConfigMap& cfg, int default_epochs) {
  nn::TrainConfig tc;
  tc.epochs = cfg.get_int("epochs", default_epochs);
  tc.batch_size = cfg.get_int("batch_size", 32);
  tc.seed = cfg.get_u64("seed", 1);
  tc.dropout = cfg.get_double("dropout", 0.0);
  std::string algo = cfg.get_str("optimizer", "adam");
  double lr = cfg.get_double("lr", algo == "adam" ? 1e-3 : 0.1);
  double clip = cfg.get_double("clip_norm", 5.0);
  if (algo == "adam") {
    tc.opt = ag::OptimizerState::adam_state(lr, clip);
  } else if (algo == "sgd") {
    tc.opt = ag::OptimizerState::sgd_state(lr, clip);
  } else {
    throw ConfigError("unknown optimizer '" + algo + "'");
  }
  return tc;
}

void write_loss_curve(const RunDir& rd, const nn::TrainReport& report) {
  std::ostringstream os;
  os.precision(10);
  for (size_t e = 0; e < report.epoch_losses.size(); ++e) {
    os << e << "\t" << report.epoch_losses[e] << "\n";
  }
  text::write_file_atomic(rd.p("reports/loss_curve.txt"), os.str());
}

void check_vocab_hash(uint64_t model_hash, const text::Vocabulary& vocab, const std::string& who) {
  if (model_hash != vocab.hash()) {
    throw DataError(who + ": vocabulary does not match the checkpoint's vocabulary");
  }
}

// ---------------------------------------------------------------------------
// decoding helpers shared by translate / sweep-beta / back-translation

struct LoadedModels {
  std::optional<nmt::Model> base_nmt;
  std::optional<lm::Model> lm_in, lm_out;
  std::optional<fusion::Model> deep;

  decode::Models view() const {
    decode::Models m;
    if (base_nmt) m.nmt = &*base_nmt;
    if (lm_in) m.lm_in = &*lm_in;
    if (lm_out) m.lm_out = &*lm_out;
    if (deep) m.deep = &*deep;
    return m;
  }
};

LoadedModels load_decode_models(const ConfigMap& cfg, decode::FusionMode mode,
                                const text::Vocabulary& vocab) {
  LoadedModels lm;
  if (mode == decode::FusionMode::deep) {
    lm.deep = load_fusion(cfg.get_str("fusion_ckpt"), split_commas(cfg.get_str("lms")));
    check_vocab_hash(lm.deep->nmt.vocab_hash, vocab, "translate");
    return lm;
  }
  lm.base_nmt = load_nmt(cfg.get_str("model"));
  check_vocab_hash(lm.base_nmt->vocab_hash, vocab, "translate");
  if (mode == decode::FusionMode::lm_shallow || mode == decode::FusionMode::dda_shallow) {
    lm.lm_in = load_lm(cfg.get_str("lm_in"));
    check_vocab_hash(lm.lm_in->vocab_hash, vocab, "translate");
  }
  if (mode == decode::FusionMode::dda_shallow) {
    lm.lm_out = load_lm(cfg.get_str("lm_out"));
    check_vocab_hash(lm.lm_out->vocab_hash, vocab, "translate");
  }
  return lm;
}

decode::Config decode_config(const ConfigMap& cfg, decode::FusionMode mode) {
  decode::Config dc;
  dc.fusion = mode;
  dc.beam_size = cfg.get_int("beam", 4);
  dc.max_len = cfg.get_int("max_len", 64);
  dc.beta = cfg.get_double("beta", 0.4);
  dc.coverage_beta = cfg.get_double("coverage_beta", 0.0);
  dc.length_norm = cfg.get_bool("length_norm", false);
  return dc;
}

std::string attention_dump(const decode::Hypothesis& h) {
  std::ostringstream os;
  os.precision(6);
  for (size_t t = 0; t < h.attention.size(); ++t) {
    if (t) os << ";";
    for (int j = 0; j < h.attention[t].size(); ++j) {
      if (j) os << ",";
      os << h.attention[t](j);
    }
  }
  return os.str();
}

// One output line per input line; empty inputs stay empty.
std::vector<std::string> decode_corpus(const decode::Models& models, const decode::Config& dc,
                                       const std::vector<std::string>& input_lines,
                                       const text::MergeTable& merges,
                                       const text::Vocabulary& vocab,
                                       std::vector<std::string>* dump) {
  std::vector<std::string> out;
  for (size_t i = 0; i < input_lines.size(); ++i) {
    if (input_lines[i].empty()) {
      out.push_back("");
      if (dump) dump->push_back("sent=" + std::to_string(i) + "\tempty=1");
      continue;
    }
    std::vector<int> src = text::encode(input_lines[i], merges, vocab);
    decode::Hypothesis best;
    std::vector<int> ids = decode::translate_sentence(models, src, dc, &best);
    out.push_back(text::decode_ids(ids, vocab));
    if (dump) {
      std::ostringstream os;
      os.precision(10);
      os << "sent=" << i << "\tscore=" << best.log_prob
         << "\twarn_max_len=" << (best.reached_max_len ? 1 : 0) << "\tattn=" << attention_dump(best);
      dump->push_back(os.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// commands

const std::set<std::string> kCommon = {"out_dir", "seed"};

std::set<std::string> with_common(std::set<std::string> keys) {
  keys.insert(kCommon.begin(), kCommon.end());
  return keys;
}

int cmd_train_lm(const ConfigMap& cfg) {
  cfg.require_known(with_common({"data", "vocab", "merges", "vocab_data", "bpe_merges", "max_len",
                                 "embed_dim", "hidden_dim", "layers", "dropout", "epochs",
                                 "batch_size", "lr", "optimizer", "clip_norm"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "train-lm", cfg);
  text::MonoCorpus mono = text::load_mono(cfg.get_str("data"));
  TextPipeline tp = resolve_text_pipeline(cfg, rd, {cfg.get_str("data")});

  int filtered = 0;
  auto encoded = text::encode_corpus(mono, tp.merges, tp.vocab, cfg.get_int("max_len", 64), &filtered);

  lm::Config mc;
  mc.embed_dim = cfg.get_int("embed_dim", 64);
  mc.hidden_dim = cfg.get_int("hidden_dim", 64);
  mc.layers = cfg.get_int("layers", 2);
  Rng rng(cfg.get_u64("seed", 1));
  lm::Model model;
  model.init(tp.vocab.size(), tp.vocab.hash(), mc, rng);

  std::ofstream log(rd.p("logs/train.log"));
  log << "filtered_sentences=" << filtered << "\n";
  nn::TrainReport report = lm::train_lm(model, encoded, train_config(cfg, 10), &log);
  write_loss_curve(rd, report);
  save_lm(rd.p("checkpoints/lm.ckpt"), model);
  std::cout << "trained lm: final loss " << report.final_loss() << ", checkpoint "
            << rd.p("checkpoints/lm.ckpt") << "\n";
  return 0;
}

int cmd_train_nmt(const ConfigMap& cfg) {
  cfg.require_known(with_common({"src", "tgt", "vocab", "merges", "vocab_data", "bpe_merges",
                                 "max_len", "embed_dim", "hidden_dim", "layers", "bidirectional",
                                 "input_feeding", "epochs", "batch_size", "lr", "optimizer",
                                 "clip_norm"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "train-nmt", cfg);
  text::ParallelCorpus corpus = text::load_parallel(cfg.get_str("src"), cfg.get_str("tgt"));
  TextPipeline tp = resolve_text_pipeline(cfg, rd, {cfg.get_str("src"), cfg.get_str("tgt")});

  int filtered = 0;
  auto pairs = text::encode_parallel(corpus, tp.merges, tp.vocab, cfg.get_int("max_len", 64), &filtered);

  nmt::Config mc;
  mc.embed_dim = cfg.get_int("embed_dim", 64);
  mc.hidden_dim = cfg.get_int("hidden_dim", 64);
  mc.layers = cfg.get_int("layers", 2);
  mc.bidirectional = cfg.get_bool("bidirectional", false);
  mc.input_feeding = cfg.get_bool("input_feeding", false);
  Rng rng(cfg.get_u64("seed", 1));
  nmt::Model model;
  model.init(tp.vocab.size(), tp.vocab.hash(), mc, rng);

  std::ofstream log(rd.p("logs/train.log"));
  log << "filtered_sentences=" << filtered << "\n";
  nn::TrainReport report = nmt::train_nmt(model, pairs, train_config(cfg, 10), &log);
  write_loss_curve(rd, report);
  save_nmt(rd.p("checkpoints/nmt.ckpt"), model);
  std::cout << "trained nmt: final loss " << report.final_loss() << ", checkpoint "
            << rd.p("checkpoints/nmt.ckpt") << "\n";
  return 0;
}

int cmd_fine_tune(const ConfigMap& cfg) {
  cfg.require_known(with_common({"model", "src", "tgt", "vocab", "merges", "max_len", "epochs",
                                 "batch_size", "lr", "optimizer", "clip_norm"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "fine-tune", cfg);
  nmt::Model model = load_nmt(cfg.get_str("model"));
  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));
  check_vocab_hash(model.vocab_hash, vocab, "fine-tune");

  text::ParallelCorpus corpus = text::load_parallel(cfg.get_str("src"), cfg.get_str("tgt"));
  auto pairs = text::encode_parallel(corpus, merges, vocab, cfg.get_int("max_len", 64));

  std::ofstream log(rd.p("logs/train.log"));
  nn::TrainReport report = nmt::fine_tune(model, pairs, train_config(cfg, 5), &log);
  write_loss_curve(rd, report);
  save_nmt(rd.p("checkpoints/nmt.ckpt"), model);
  std::cout << "fine-tuned nmt: final loss " << report.final_loss() << "\n";
  return 0;
}

int cmd_train_fusion(const ConfigMap& cfg) {
  cfg.require_known(with_common({"nmt", "variant", "lm_in", "lm_out", "lm1", "lm2", "fusion_point",
                                 "sigmoid_gate", "src", "tgt", "vocab", "merges", "max_len",
                                 "epochs", "batch_size", "lr", "optimizer", "clip_norm"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "train-fusion", cfg);

  fusion::Model model;
  model.variant = fusion::variant_from_name(cfg.get_str("variant", "dda"));
  model.point = fusion::fusion_point_from_name(cfg.get_str("fusion_point", "hidden-states"));

  std::string nmt_path = cfg.get_str("nmt");
  model.nmt = load_nmt(nmt_path);
  model.nmt_base_hash = file_hash(nmt_path);

  // Wiring order matches the gate layout: LM-out first for the dda variant.
  std::vector<std::string> lm_paths;
  switch (model.variant) {
    case fusion::Variant::dda:
      lm_paths = {cfg.get_str("lm_out"), cfg.get_str("lm_in")};
      break;
    case fusion::Variant::lm_deep:
      lm_paths = {cfg.get_str("lm_in")};
      break;
    default:
      lm_paths = {cfg.get_str("lm1"), cfg.get_str("lm2")};
      break;
  }
  for (const std::string& p : lm_paths) {
    model.lms.push_back(load_lm(p));
    model.lm_hashes.push_back(file_hash(p));
  }

  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));
  check_vocab_hash(model.nmt.vocab_hash, vocab, "train-fusion");

  Rng rng(cfg.get_u64("seed", 1));
  model.wire(rng);
  model.gate.sigmoid_gate = cfg.get_bool("sigmoid_gate", true);

  text::ParallelCorpus corpus = text::load_parallel(cfg.get_str("src"), cfg.get_str("tgt"));
  auto pairs = text::encode_parallel(corpus, merges, vocab, cfg.get_int("max_len", 64));

  std::ofstream log(rd.p("logs/train.log"));
  nn::TrainReport report = fusion::train_deep_fusion(model, pairs, train_config(cfg, 5), &log);
  write_loss_curve(rd, report);
  save_fusion(rd.p("checkpoints/fusion.ckpt"), model);
  std::cout << "trained fusion: final loss " << report.final_loss() << "\n";
  return 0;
}

int cmd_augment_copy(const ConfigMap& cfg) {
  cfg.require_known(with_common({"mono", "src", "tgt"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "augment-copy", cfg);
  text::MonoCorpus mono = text::load_mono(cfg.get_str("mono"));
  text::ParallelCorpus base;
  if (cfg.has("src") || cfg.has("tgt")) {
    base = text::load_parallel(cfg.get_str("src"), cfg.get_str("tgt"));
  }
  text::ParallelCorpus out = text::copy_augment(mono, base);
  text::save_parallel(out, rd.p("augmented.src"), rd.p("augmented.tgt"));
  std::cout << "copy-augmented corpus: " << base.size() << " + " << mono.size() << " = "
            << out.size() << " pairs\n";
  return 0;
}

int cmd_augment_backtranslate(const ConfigMap& cfg) {
  cfg.require_known(with_common({"model", "mono", "vocab", "merges", "beam", "max_len"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "augment-backtranslate", cfg);
  nmt::Model reverse = load_nmt(cfg.get_str("model"));
  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));
  check_vocab_hash(reverse.vocab_hash, vocab, "augment-backtranslate");
  text::MonoCorpus mono = text::load_mono(cfg.get_str("mono"));

  decode::Config dc = decode_config(cfg, decode::FusionMode::none);
  int skipped = 0;
  text::ParallelCorpus out = back_translate(reverse, mono, merges, vocab, dc, &skipped);
  text::save_parallel(out, rd.p("augmented.src"), rd.p("augmented.tgt"));
  std::ofstream log(rd.p("logs/run.log"));
  log << "skipped_sentences=" << skipped << "\n";
  std::cout << "back-translated " << out.size() << " pairs (" << skipped << " skipped)\n";
  return 0;
}

int cmd_translate(const ConfigMap& cfg) {
  cfg.require_known(with_common({"input", "vocab", "merges", "fusion", "model", "lm_in", "lm_out",
                                 "fusion_ckpt", "lms", "beam", "max_len", "beta", "coverage_beta",
                                 "length_norm", "dump"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "translate", cfg);
  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));

  decode::FusionMode mode = decode::fusion_mode_from_name(cfg.get_str("fusion", "none"));
  LoadedModels models = load_decode_models(cfg, mode, vocab);
  decode::Config dc = decode_config(cfg, mode);

  std::vector<std::string> input = text::read_lines(cfg.get_str("input"));
  bool dump = cfg.get_bool("dump", false);
  std::vector<std::string> dump_lines;
  std::vector<std::string> out =
      decode_corpus(models.view(), dc, input, merges, vocab, dump ? &dump_lines : nullptr);
  text::write_lines_atomic(rd.p("decodes/output.txt"), out);
  if (dump) text::write_lines_atomic(rd.p("decodes/scores.txt"), dump_lines);
  std::cout << "translated " << out.size() << " sentences to " << rd.p("decodes/output.txt")
            << "\n";
  return 0;
}

std::vector<std::string> eval_vocab_subwords(const text::Vocabulary& vocab,
                                             const eval::FreqTable& freq_in, bool in_domain_only) {
  std::vector<std::string> v;
  for (int id = 4; id < vocab.size(); ++id) {  // specials excluded
    const std::string& w = vocab.token(id);
    if (!in_domain_only || freq_in.count(w) > 0) v.push_back(w);
  }
  return v;
}

eval::Sentences to_subword_sentences(const std::vector<std::string>& lines,
                                     const text::MergeTable& merges) {
  eval::Sentences out;
  for (const std::string& l : lines) out.push_back(text::apply_bpe(l, merges));
  return out;
}

eval::Sentences to_word_sentences(const std::vector<std::string>& lines) {
  eval::Sentences out;
  for (const std::string& l : lines) out.push_back(text::split_ws(l));
  return out;
}

int cmd_evaluate(const ConfigMap& cfg) {
  cfg.require_known(with_common(
      {"hyp", "ref", "hyp_b", "vocab", "merges", "in_data", "out_data", "eval_vocab", "n_samples"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "evaluate", cfg);

  std::vector<std::string> hyp_lines = text::read_lines(cfg.get_str("hyp"));
  std::vector<std::string> ref_lines = text::read_lines(cfg.get_str("ref"));
  if (hyp_lines.size() != ref_lines.size()) {
    throw DataError("evaluate: hyp and ref line counts differ");
  }

  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));

  eval::Sentences hyp_words = to_word_sentences(hyp_lines);
  eval::Sentences ref_words = to_word_sentences(ref_lines);
  eval::Sentences hyp_sub = to_subword_sentences(hyp_lines, merges);
  eval::Sentences ref_sub = to_subword_sentences(ref_lines, merges);

  eval::Sentences in_sub =
      to_subword_sentences(text::load_mono(cfg.get_str("in_data")).sentences, merges);
  eval::Sentences out_sub =
      to_subword_sentences(text::load_mono(cfg.get_str("out_data")).sentences, merges);
  eval::FreqTable freq_in = eval::build_freq_table(in_sub);
  eval::FreqTable freq_out = eval::build_freq_table(out_sub);

  std::string ev = cfg.get_str("eval_vocab", "full");
  if (ev != "full" && ev != "in-domain") {
    throw ConfigError("eval_vocab must be 'full' or 'in-domain'");
  }
  std::vector<std::string> V = eval_vocab_subwords(vocab, freq_in, ev == "in-domain");

  std::set<std::string> in_set, out_set;
  for (const auto& [w, c] : freq_in.counts) in_set.insert(w);
  for (const auto& [w, c] : freq_out.counts) out_set.insert(w);

  eval::EvalReport report;
  report.bleu_score = eval::bleu(hyp_words, ref_words);
  report.ae = eval::adaptation_extent(hyp_sub, freq_in, freq_out, V);
  report.aa = eval::adaptation_accuracy(hyp_sub, ref_sub, freq_in, freq_out, V);
  report.domain_count = eval::domain_specific_count(hyp_sub, in_set, out_set);
  for (const std::string& w : V) {
    double f1 = eval::subword_f1(hyp_sub, ref_sub, w);
    if (f1 > 0.0) report.f1_table.emplace_back(w, f1);
  }
  if (cfg.has("hyp_b")) {
    eval::Sentences hyp_b = to_word_sentences(text::read_lines(cfg.get_str("hyp_b")));
    report.has_bootstrap = true;
    report.bootstrap_p = eval::paired_bootstrap(hyp_words, hyp_b, ref_words,
                                                cfg.get_int("n_samples", 1000),
                                                cfg.get_u64("seed", 1));
  }
  report.config_echo = cfg.resolved_text();
  text::write_file_atomic(rd.p("reports/report.txt"), report.to_text());
  std::cout << "bleu=" << report.bleu_score << " ae=" << report.ae << " aa=" << report.aa
            << " domain_specific_count=" << report.domain_count << "\n";
  return 0;
}

int cmd_analyze_correlation(const ConfigMap& cfg) {
  cfg.require_known(with_common({"lm_in", "lm_out", "nmt_in", "nmt_out", "src", "tgt", "vocab",
                                 "merges", "in_data", "out_data", "top_n", "max_len"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "analyze-correlation", cfg);

  lm::Model lin = load_lm(cfg.get_str("lm_in"));
  lm::Model lout = load_lm(cfg.get_str("lm_out"));
  nmt::Model nin = load_nmt(cfg.get_str("nmt_in"));
  nmt::Model nout = load_nmt(cfg.get_str("nmt_out"));

  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));
  check_vocab_hash(nout.vocab_hash, vocab, "analyze-correlation");

  text::ParallelCorpus corpus = text::load_parallel(cfg.get_str("src"), cfg.get_str("tgt"));
  auto pairs = text::encode_parallel(corpus, merges, vocab, cfg.get_int("max_len", 0));

  eval::FreqTable freq_in = eval::build_freq_table(
      to_subword_sentences(text::load_mono(cfg.get_str("in_data")).sentences, merges));
  eval::FreqTable freq_out = eval::build_freq_table(
      to_subword_sentences(text::load_mono(cfg.get_str("out_data")).sentences, merges));

  eval::CorrelationResult res = eval::domain_diff_correlation(
      lin, lout, nin, nout, pairs, vocab, freq_in, freq_out, cfg.get_int("top_n", 100));

  std::ostringstream os;
  os.precision(10);
  os << "pearson_r=" << res.r << "\ndegenerate=" << (res.degenerate ? 1 : 0)
     << "\nn_words=" << res.rows.size() << "\n";
  text::write_file_atomic(rd.p("reports/correlation.txt"), os.str());
  text::write_file_atomic(rd.p("reports/correlation_table.txt"), res.table_text());
  std::cout << "pearson_r=" << res.r << (res.degenerate ? " (degenerate)" : "") << "\n";
  return 0;
}

int cmd_sweep_beta(const ConfigMap& cfg) {
  cfg.require_known(with_common({"sweep", "grid", "ref", "input", "vocab", "merges", "fusion",
                                 "model", "lm_in", "lm_out", "fusion_ckpt", "lms", "beam",
                                 "max_len", "beta", "coverage_beta", "length_norm"}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "sweep-beta", cfg);
  text::Vocabulary vocab = text::Vocabulary::load(cfg.get_str("vocab"));
  text::MergeTable merges = text::MergeTable::load(cfg.get_str("merges"));

  decode::FusionMode mode = decode::fusion_mode_from_name(cfg.get_str("fusion", "none"));
  LoadedModels models = load_decode_models(cfg, mode, vocab);
  decode::Config dc = decode_config(cfg, mode);

  std::string sweep = cfg.get_str("sweep", "coverage");
  if (sweep != "coverage" && sweep != "shallow") {
    throw ConfigError("sweep must be 'coverage' or 'shallow'");
  }
  std::vector<double> grid;
  if (cfg.has("grid")) {
    for (const std::string& s : split_commas(cfg.get_str("grid"))) grid.push_back(std::stod(s));
  } else if (sweep == "coverage") {
    for (int i = 0; i <= 6; ++i) grid.push_back(0.05 * i);  // 0.00 .. 0.30
  } else {
    for (int i = 0; i <= 10; ++i) grid.push_back(0.1 * i);  // 0.0 .. 1.0
  }

  std::vector<std::string> input = text::read_lines(cfg.get_str("input"));
  eval::Sentences refs = to_word_sentences(text::read_lines(cfg.get_str("ref")));

  std::ostringstream table;
  table.precision(6);
  for (double v : grid) {
    decode::Config step_cfg = dc;
    if (sweep == "coverage") {
      step_cfg.coverage_beta = v;
    } else {
      step_cfg.beta = v;
    }
    std::vector<std::string> out =
        decode_corpus(models.view(), step_cfg, input, merges, vocab, nullptr);
    std::ostringstream name;
    name << "decodes/sweep_" << sweep << "_" << v << ".txt";
    text::write_lines_atomic(rd.p(name.str()), out);
    double b = eval::bleu(to_word_sentences(out), refs);
    table << (sweep == "coverage" ? "coverage_beta=" : "beta=") << v << "\tbleu=" << b << "\n";
  }
  text::write_file_atomic(rd.p("reports/sweep.txt"), table.str());
  std::cout << table.str();
  return 0;
}

int cmd_grad_check(const ConfigMap& cfg) {
  cfg.require_known(with_common({}));
  RunDir rd(cfg.get_str("out_dir", "run"));
  write_resolved(rd, "grad-check", cfg);
  auto rows = gradient_suite(cfg.get_u64("seed", 1));
  std::ostringstream os;
  os.precision(6);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : rows) {
    os << name << "\t" << err << "\n";
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  }
  text::write_file_atomic(rd.p("reports/grad_check.txt"), os.str());
  std::cout << os.str();
  if (worst >= 1e-4) {
    throw NumericError("gradient check failed for '" + worst_name + "' (max rel err " +
                       std::to_string(worst) + ")");
  }
  return 0;
}

}  // namespace

text::ParallelCorpus back_translate(const nmt::Model& reverse_model,
                                    const text::MonoCorpus& mono_in_target,
                                    const text::MergeTable& merges,
                                    const text::Vocabulary& vocab, const decode::Config& dcfg,
                                    int* skipped) {
  decode::Models models;
  models.nmt = &reverse_model;
  text::ParallelCorpus out;
  int failures = 0;
  for (const std::string& sentence : mono_in_target.sentences) {
    try {
      std::vector<int> ids = text::encode(sentence, merges, vocab);
      std::vector<int> synth = decode::translate_sentence(models, ids, dcfg);
      std::string synthetic_source = text::decode_ids(synth, vocab);
      if (synthetic_source.empty()) throw DataError("empty translation");
      out.add(synthetic_source, sentence, text::Provenance::back_translated);
    } catch (const std::exception&) {
      ++failures;
    }
  }
  if (skipped) *skipped = failures;
  return out;
}

int run(const std::string& command, const ConfigMap& cfg) {
  if (command == "train-lm") return cmd_train_lm(cfg);
  if (command == "train-nmt") return cmd_train_nmt(cfg);
  if (command == "train-fusion") return cmd_train_fusion(cfg);
  if (command == "fine-tune") return cmd_fine_tune(cfg);
  if (command == "augment-copy") return cmd_augment_copy(cfg);
  if (command == "augment-backtranslate") return cmd_augment_backtranslate(cfg);
  if (command == "translate") return cmd_translate(cfg);
  if (command == "evaluate") return cmd_evaluate(cfg);
  if (command == "analyze-correlation") return cmd_analyze_correlation(cfg);
  if (command == "sweep-beta") return cmd_sweep_beta(cfg);
  if (command == "grad-check") return cmd_grad_check(cfg);
  throw ConfigError("unknown command '" + command + "'");
}

int run_command_line(const std::string& command, const ConfigMap& cfg) {
  try {
    return run(command, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace deskmt::cli
