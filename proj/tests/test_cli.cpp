#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "deskmt/cli.hpp"
#include "testutil.hpp"

using namespace deskmt;
namespace fs = std::filesystem;

namespace {

struct CliWorld {
  fs::path root;
  std::vector<std::string> src_lines, tgt_lines;

  CliWorld() {
    root = fs::temp_directory_path() / "deskmt_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);

    // tiny rotation language: target token = next letter
    Rng rng(17);
    for (int i = 0; i < 24; ++i) {
      int len = 2 + rng.uniform_int(4);
      int start = rng.uniform_int(6);
      std::string s, t;
      for (int k = 0; k < len; ++k) {
        char c = char('a' + (start + k) % 8);
        if (k) {
          s += " ";
          t += " ";
        }
        s += c;
        t += char(c == 'h' ? 'a' : c + 1);
      }
      src_lines.push_back(s);
      tgt_lines.push_back(t);
    }
    text::write_lines_atomic(p("data/train.src"), src_lines);
    text::write_lines_atomic(p("data/train.tgt"), tgt_lines);
    std::vector<std::string> all = src_lines;
    all.insert(all.end(), tgt_lines.begin(), tgt_lines.end());
    text::write_lines_atomic(p("data/all.txt"), all);
  }

  std::string p(const std::string& rel) const { return (root / rel).string(); }

  cli::ConfigMap base(const std::string& out) const {
    cli::ConfigMap cfg;
    cfg.set("out_dir", p(out));
    cfg.set("seed", "1");
    return cfg;
  }
};

CliWorld& world() {
  static CliWorld w;
  return w;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Pipeline artifacts shared across test cases, built once.
struct Trained {
  std::string vocab, merges, lm_in, lm_out, nmt, fusion;
};

const Trained& trained() {
  static Trained t = [] {
    CliWorld& w = world();
    Trained t;

    // LM over target-side text; learns the shared vocab from both sides
    cli::ConfigMap lm_cfg = w.base("run_lm_in");
    lm_cfg.set("data", w.p("data/train.tgt"));
    lm_cfg.set("vocab_data", w.p("data/all.txt"));
    lm_cfg.set("bpe_merges", "0");
    lm_cfg.set("embed_dim", "12");
    lm_cfg.set("hidden_dim", "12");
    lm_cfg.set("layers", "1");
    lm_cfg.set("epochs", "12");
    lm_cfg.set("lr", "0.05");
    REQUIRE(cli::run("train-lm", lm_cfg) == 0);
    t.vocab = w.p("run_lm_in/vocab.txt");
    t.merges = w.p("run_lm_in/merges.txt");
    t.lm_in = w.p("run_lm_in/checkpoints/lm.ckpt");

    cli::ConfigMap lm2 = w.base("run_lm_out");
    lm2.set("data", w.p("data/train.src"));
    lm2.set("vocab", t.vocab);
    lm2.set("merges", t.merges);
    lm2.set("embed_dim", "12");
    lm2.set("hidden_dim", "12");
    lm2.set("layers", "1");
    lm2.set("epochs", "12");
    lm2.set("lr", "0.05");
    REQUIRE(cli::run("train-lm", lm2) == 0);
    t.lm_out = w.p("run_lm_out/checkpoints/lm.ckpt");

    cli::ConfigMap nmt_cfg = w.base("run_nmt");
    nmt_cfg.set("src", w.p("data/train.src"));
    nmt_cfg.set("tgt", w.p("data/train.tgt"));
    nmt_cfg.set("vocab", t.vocab);
    nmt_cfg.set("merges", t.merges);
    nmt_cfg.set("embed_dim", "12");
    nmt_cfg.set("hidden_dim", "12");
    nmt_cfg.set("layers", "1");
    nmt_cfg.set("epochs", "60");
    nmt_cfg.set("lr", "0.05");
    nmt_cfg.set("batch_size", "8");
    REQUIRE(cli::run("train-nmt", nmt_cfg) == 0);
    t.nmt = w.p("run_nmt/checkpoints/nmt.ckpt");

    cli::ConfigMap fus = w.base("run_fusion");
    fus.set("nmt", t.nmt);
    fus.set("variant", "dda");
    fus.set("lm_in", t.lm_in);
    fus.set("lm_out", t.lm_out);
    fus.set("src", w.p("data/train.src"));
    fus.set("tgt", w.p("data/train.tgt"));
    fus.set("vocab", t.vocab);
    fus.set("merges", t.merges);
    fus.set("epochs", "3");
    fus.set("lr", "0.01");
    REQUIRE(cli::run("train-fusion", fus) == 0);
    t.fusion = w.p("run_fusion/checkpoints/fusion.ckpt");
    return t;
  }();
  return t;
}

}  // namespace

TEST_CASE("training runs emit config echo and artifacts") {
  const Trained& t = trained();
  CliWorld& w = world();
  CHECK(fs::exists(t.vocab));
  CHECK(fs::exists(t.merges));
  CHECK(fs::exists(t.nmt));
  CHECK(fs::exists(w.p("run_nmt/config.resolved")));
  CHECK(fs::exists(w.p("run_nmt/reports/loss_curve.txt")));
  std::string resolved = slurp(w.p("run_nmt/config.resolved"));
  CHECK(resolved.find("command=train-nmt") != std::string::npos);
  CHECK(resolved.find("epochs=60") != std::string::npos);
}

TEST_CASE("translate: dda-shallow with beta 0 is byte-identical to fusion none") {
  const Trained& t = trained();
  CliWorld& w = world();

  auto translate = [&](const std::string& out, const std::string& fusion, double beta) {
    cli::ConfigMap cfg = w.base(out);
    cfg.set("input", w.p("data/train.src"));
    cfg.set("vocab", t.vocab);
    cfg.set("merges", t.merges);
    cfg.set("model", t.nmt);
    cfg.set("fusion", fusion);
    if (fusion != "none") {
      cfg.set("lm_in", t.lm_in);
      cfg.set("lm_out", t.lm_out);
      cfg.set("beta", std::to_string(beta));
    }
    cfg.set("beam", "4");
    REQUIRE(cli::run("translate", cfg) == 0);
    return slurp(w.p(out + "/decodes/output.txt"));
  };

  std::string plain = translate("run_tr_none", "none", 0.0);
  std::string dda0 = translate("run_tr_dda0", "dda-shallow", 0.0);
  CHECK(plain == dda0);

  SUBCASE("re-running with identical config reproduces bytes") {
    std::string again = translate("run_tr_none2", "none", 0.0);
    CHECK(again == plain);
  }
}

TEST_CASE("translate with deep fusion checkpoint verifies component hashes") {
  const Trained& t = trained();
  CliWorld& w = world();

  cli::ConfigMap cfg = w.base("run_tr_deep");
  cfg.set("input", w.p("data/train.src"));
  cfg.set("vocab", t.vocab);
  cfg.set("merges", t.merges);
  cfg.set("fusion", "deep");
  cfg.set("fusion_ckpt", t.fusion);
  cfg.set("lms", t.lm_out + "," + t.lm_in);  // wiring order: LM-out, LM-in
  REQUIRE(cli::run("translate", cfg) == 0);
  CHECK(fs::exists(w.p("run_tr_deep/decodes/output.txt")));

  // swapped component paths give the wrong hashes and must refuse to load
  cli::ConfigMap bad = cfg;
  bad.set("out_dir", w.p("run_tr_deep_bad"));
  bad.set("lms", t.lm_in + "," + t.lm_out);
  CHECK_THROWS_AS(cli::run("translate", bad), DataError);
}

TEST_CASE("translate dumps per-sentence scores when asked") {
  const Trained& t = trained();
  CliWorld& w = world();
  cli::ConfigMap cfg = w.base("run_tr_dump");
  cfg.set("input", w.p("data/train.src"));
  cfg.set("vocab", t.vocab);
  cfg.set("merges", t.merges);
  cfg.set("model", t.nmt);
  cfg.set("dump", "true");
  REQUIRE(cli::run("translate", cfg) == 0);
  std::string dump = slurp(w.p("run_tr_dump/decodes/scores.txt"));
  CHECK(dump.find("sent=0") != std::string::npos);
  CHECK(dump.find("score=") != std::string::npos);
  CHECK(dump.find("attn=") != std::string::npos);
}

TEST_CASE("evaluate: hyp == ref reports BLEU 100 and writes a report") {
  const Trained& t = trained();
  CliWorld& w = world();
  cli::ConfigMap cfg = w.base("run_eval");
  cfg.set("hyp", w.p("data/train.tgt"));
  cfg.set("ref", w.p("data/train.tgt"));
  cfg.set("hyp_b", w.p("data/train.src"));
  cfg.set("vocab", t.vocab);
  cfg.set("merges", t.merges);
  cfg.set("in_data", w.p("data/train.tgt"));
  cfg.set("out_data", w.p("data/train.src"));
  cfg.set("n_samples", "200");
  REQUIRE(cli::run("evaluate", cfg) == 0);
  std::string report = slurp(w.p("run_eval/reports/report.txt"));
  CHECK(report.find("bleu=100") != std::string::npos);
  CHECK(report.find("ae=") != std::string::npos);
  CHECK(report.find("aa=") != std::string::npos);
  CHECK(report.find("bootstrap_p=") != std::string::npos);
  CHECK(report.find("config.command=") == std::string::npos);  // echo has config. prefix
  CHECK(report.find("config.hyp=") != std::string::npos);
}

TEST_CASE("sweep-beta emits one BLEU row per grid value") {
  const Trained& t = trained();
  CliWorld& w = world();
  cli::ConfigMap cfg = w.base("run_sweep");
  cfg.set("input", w.p("data/train.src"));
  cfg.set("ref", w.p("data/train.tgt"));
  cfg.set("vocab", t.vocab);
  cfg.set("merges", t.merges);
  cfg.set("model", t.nmt);
  cfg.set("beam", "2");
  REQUIRE(cli::run("sweep-beta", cfg) == 0);
  std::string table = slurp(w.p("run_sweep/reports/sweep.txt"));
  int rows = 0;
  for (char c : table) rows += c == '\n';
  CHECK(rows == 7);  // 0.00 .. 0.30 step 0.05
  CHECK(table.find("coverage_beta=0") != std::string::npos);
  CHECK(table.find("coverage_beta=0.3") != std::string::npos);
  CHECK(table.find("bleu=") != std::string::npos);
}

TEST_CASE("augment-copy concatenates identity pairs") {
  CliWorld& w = world();
  cli::ConfigMap cfg = w.base("run_copy");
  cfg.set("mono", w.p("data/train.tgt"));
  cfg.set("src", w.p("data/train.src"));
  cfg.set("tgt", w.p("data/train.tgt"));
  REQUIRE(cli::run("augment-copy", cfg) == 0);
  auto src = text::read_lines(w.p("run_copy/augmented.src"));
  auto tgt = text::read_lines(w.p("run_copy/augmented.tgt"));
  auto prov = text::read_lines(w.p("run_copy/augmented.src.prov"));
  REQUIRE(src.size() == 48);
  CHECK(src.size() == tgt.size());
  CHECK(prov[0] == "original");
  CHECK(prov[24] == "copied");
  for (size_t i = 24; i < src.size(); ++i) CHECK(src[i] == tgt[i]);
}

TEST_CASE("back-translation reproduces sources of a memorized reverse model") {
  const Trained& t = trained();
  CliWorld& w = world();

  // reverse direction: tgt -> src
  cli::ConfigMap rev = w.base("run_rev");
  rev.set("src", w.p("data/train.tgt"));
  rev.set("tgt", w.p("data/train.src"));
  rev.set("vocab", t.vocab);
  rev.set("merges", t.merges);
  rev.set("embed_dim", "12");
  rev.set("hidden_dim", "12");
  rev.set("layers", "1");
  rev.set("epochs", "60");
  rev.set("lr", "0.05");
  rev.set("batch_size", "8");
  REQUIRE(cli::run("train-nmt", rev) == 0);

  cli::ConfigMap bt = w.base("run_bt");
  bt.set("model", w.p("run_rev/checkpoints/nmt.ckpt"));
  bt.set("mono", w.p("data/train.tgt"));
  bt.set("vocab", t.vocab);
  bt.set("merges", t.merges);
  bt.set("beam", "1");
  REQUIRE(cli::run("augment-backtranslate", bt) == 0);

  auto synth_src = text::read_lines(w.p("run_bt/augmented.src"));
  auto out_tgt = text::read_lines(w.p("run_bt/augmented.tgt"));
  auto prov = text::read_lines(w.p("run_bt/augmented.src.prov"));

  // nothing skipped here, and target sides bit-identical to the mono input
  REQUIRE(out_tgt.size() == w.tgt_lines.size());
  for (size_t i = 0; i < out_tgt.size(); ++i) {
    CHECK(prov[i] == "back-translated");
    CHECK(out_tgt[i] == w.tgt_lines[i]);
  }
  // the reverse model memorized training pairs, so sources round-trip
  int exact = 0;
  for (size_t i = 0; i < synth_src.size(); ++i) exact += synth_src[i] == w.src_lines[i];
  CHECK(double(exact) >= 0.9 * double(synth_src.size()));
}

TEST_CASE("config validation and exit codes") {
  CliWorld& w = world();

  SUBCASE("unknown key is rejected before running") {
    cli::ConfigMap cfg = w.base("run_badkey");
    cfg.set("data", w.p("data/train.tgt"));
    cfg.set("no_such_key", "1");
    CHECK_THROWS_AS(cli::run("train-lm", cfg), ConfigError);
    CHECK(cli::run_command_line("train-lm", cfg) == 2);
  }

  SUBCASE("unknown command") {
    CHECK(cli::run_command_line("transmogrify", w.base("run_x")) == 2);
  }

  SUBCASE("missing data file maps to exit 3") {
    cli::ConfigMap cfg = w.base("run_missing");
    cfg.set("data", w.p("data/nope.txt"));
    CHECK(cli::run_command_line("train-lm", cfg) == 3);
  }

  SUBCASE("vocabulary mismatch fails fast") {
    const Trained& t = trained();
    // a different vocabulary than the checkpoints were trained with
    text::MonoCorpus other;
    other.sentences = {"zz yy xx"};
    text::MergeTable m = text::learn_bpe(other, 0);
    text::Vocabulary v = text::build_vocab(other, m);
    v.save(w.p("data/other_vocab.txt"));
    m.save(w.p("data/other_merges.txt"));

    cli::ConfigMap cfg = w.base("run_vmismatch");
    cfg.set("input", w.p("data/train.src"));
    cfg.set("vocab", w.p("data/other_vocab.txt"));
    cfg.set("merges", w.p("data/other_merges.txt"));
    cfg.set("model", t.nmt);
    CHECK(cli::run_command_line("translate", cfg) == 3);
  }
}

TEST_CASE("checkpoint files are bit-stable across save/load/save") {
  const Trained& t = trained();
  CliWorld& w = world();
  nmt::Model m = cli::load_nmt(t.nmt);
  std::string copy = w.p("data/nmt_copy.ckpt");
  cli::save_nmt(copy, m);
  CHECK(slurp(t.nmt) == slurp(copy));
  CHECK(cli::file_hash(t.nmt) == cli::file_hash(copy));
}

TEST_CASE("grad-check command writes its table") {
  CliWorld& w = world();
  cli::ConfigMap cfg = w.base("run_gc");
  REQUIRE(cli::run("grad-check", cfg) == 0);
  std::string table = slurp(w.p("run_gc/reports/grad_check.txt"));
  CHECK(table.find("matmul") != std::string::npos);
  CHECK(table.find("deep_fusion") != std::string::npos);
}
