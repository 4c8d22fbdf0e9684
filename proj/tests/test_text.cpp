#include <doctest.h>

#include <filesystem>

#include "deskmt/text.hpp"

using namespace deskmt;
using namespace deskmt::text;

TEST_CASE("learn_bpe merges the most frequent pair first") {
  MonoCorpus corpus;
  corpus.sentences = {"aa aa"};
  MergeTable t = learn_bpe(corpus, 1);
  REQUIRE(t.merges.size() == 1);
  CHECK(t.merges[0].first == "a");
  CHECK(t.merges[0].second == "a</w>");
}

TEST_CASE("learn_bpe edge cases") {
  MonoCorpus empty;
  CHECK_THROWS_AS(learn_bpe(empty, 5), DataError);

  MonoCorpus corpus;
  corpus.sentences = {"ab ba", "ab"};
  // zero merges: character-level segmentation with the end-of-word marker
  MergeTable none = learn_bpe(corpus, 0);
  CHECK(none.merges.empty());
  CHECK(apply_bpe("ab", none) == std::vector<std::string>{"a", "b</w>"});

  // deterministic: same corpus, same table
  MergeTable t1 = learn_bpe(corpus, 5);
  MergeTable t2 = learn_bpe(corpus, 5);
  CHECK(t1.merges == t2.merges);
}

TEST_CASE("bpe ties break lexicographically") {
  MonoCorpus corpus;
  corpus.sentences = {"xy za"};  // pairs (x,y</w>) and (z,a</w>) both occur once
  MergeTable t = learn_bpe(corpus, 1);
  REQUIRE(t.merges.size() == 1);
  CHECK(t.merges[0] == MergePair{"x", "y</w>"});
}

TEST_CASE("encode maps merged symbols and unknowns") {
  MonoCorpus corpus;
  corpus.sentences = {"aa aa ab"};
  MergeTable t = learn_bpe(corpus, 1);  // merges 'a'+'a</w>'
  Vocabulary v = build_vocab(corpus, t);

  std::vector<int> ids = encode("aa", t, v);
  REQUIRE(ids.size() == 1);
  CHECK(v.token(ids[0]) == "aa</w>");

  // unseen symbol maps to UNK (id 3)
  std::vector<int> unk = encode("q", t, v);
  REQUIRE(unk.size() == 1);
  CHECK(unk[0] == Vocabulary::kUnk);
}

TEST_CASE("encode/decode roundtrip on in-vocabulary text") {
  MonoCorpus corpus;
  corpus.sentences = {"the cat sat", "the mat sat", "a cat on a mat"};
  MergeTable t = learn_bpe(corpus, 20);
  Vocabulary v = build_vocab(corpus, t);
  for (const std::string& s : corpus.sentences) {
    CHECK(decode_ids(encode(s, t, v), v) == s);
  }
}

TEST_CASE("utf8 code points survive BPE") {
  MonoCorpus corpus;
  corpus.sentences = {"héllo wörld", "héllo"};
  MergeTable t = learn_bpe(corpus, 10);
  Vocabulary v = build_vocab(corpus, t);
  CHECK(decode_ids(encode("héllo wörld", t, v), v) == "héllo wörld");
}

TEST_CASE("build_vocab ordering and reserved ids") {
  MonoCorpus empty_tokens;
  empty_tokens.sentences = {};
  MergeTable none;
  Vocabulary v0 = build_vocab(empty_tokens, none);
  CHECK(v0.size() == 4);  // reserved only

  // frequency ties break lexicographically: 'a' before 'b'
  MonoCorpus corpus;
  corpus.sentences = {"b a", "a b", "b a", "a b", "a b"};
  MergeTable t = learn_bpe(corpus, 0);
  Vocabulary v = build_vocab(corpus, t);
  CHECK(v.token(4) == "a</w>");
  CHECK(v.token(5) == "b</w>");
  CHECK(v.id("a</w>") == 4);
}

TEST_CASE("vocabulary file roundtrip") {
  MonoCorpus corpus;
  corpus.sentences = {"alpha beta gamma", "beta gamma", "gamma"};
  MergeTable t = learn_bpe(corpus, 30);
  Vocabulary v = build_vocab(corpus, t);

  std::string dir = (std::filesystem::temp_directory_path() / "deskmt_vocab_test").string();
  std::filesystem::create_directories(dir);
  v.save(dir + "/vocab.txt");
  Vocabulary v2 = Vocabulary::load(dir + "/vocab.txt");
  CHECK(v2.id_to_token == v.id_to_token);
  CHECK(v2.hash() == v.hash());

  t.save(dir + "/merges.txt");
  MergeTable t2 = MergeTable::load(dir + "/merges.txt");
  CHECK(t2.merges == t.merges);
}

TEST_CASE("copy_augment appends identity pairs after the original corpus") {
  ParallelCorpus base;
  base.add("x y", "u v");
  MonoCorpus mono;
  mono.sentences = {"a b", "c"};

  ParallelCorpus out = copy_augment(mono, base);
  CHECK(out.size() == 3);  // N + M
  CHECK(out.src[0] == "x y");
  CHECK(out.tgt[0] == "u v");
  CHECK(out.prov[0] == Provenance::original);
  for (size_t i = 1; i < out.size(); ++i) {
    CHECK(out.src[i] == out.tgt[i]);  // token-for-token copy
    CHECK(out.prov[i] == Provenance::copied);
  }

  ParallelCorpus from_empty = copy_augment(mono, ParallelCorpus{});
  CHECK(from_empty.size() == 2);
  CHECK(from_empty.src[0] == "a b");
  CHECK(from_empty.tgt[0] == "a b");
}

TEST_CASE("batch_iter padding, masking and determinism") {
  std::vector<std::vector<int>> seqs = {{5, 6, 7}, {8, 9, 10, 11, 12}, {4}, {5, 5}};

  SUBCASE("batch_size 1: one sentence per batch, no padding") {
    auto batches = batch_iter(seqs, 1, 3);
    CHECK(batches.size() == 4);
    size_t total = 0;
    for (const auto& b : batches) {
      CHECK(b.batch_size() == 1);
      CHECK(b.max_len() == b.lengths[0]);
      CHECK(b.mask.minCoeff() == 1.0);
      total += 1;
    }
    CHECK(total == seqs.size());
  }

  SUBCASE("mixed lengths pad with PAD and mask") {
    std::vector<std::vector<int>> two = {{5, 6, 7}, {8, 9, 10, 11, 12}};
    auto batches = batch_iter(two, 2, 1);
    REQUIRE(batches.size() == 1);
    const auto& b = batches[0];
    CHECK(b.max_len() == 5);
    int short_col = b.lengths[0] == 3 ? 0 : 1;
    for (int t = 0; t < 5; ++t) {
      CHECK(b.mask(t, short_col) == (t < 3 ? 1.0 : 0.0));
      if (t >= 3) CHECK(b.steps[t][short_col] == Vocabulary::kPad);
    }
  }

  SUBCASE("same seed, same order; every sentence exactly once") {
    auto a = batch_iter(seqs, 2, 9);
    auto b = batch_iter(seqs, 2, 9);
    REQUIRE(a.size() == b.size());
    std::vector<int> seen;
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].indices == b[i].indices);
      seen.insert(seen.end(), a[i].indices.begin(), a[i].indices.end());
    }
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>{0, 1, 2, 3});
  }
}

TEST_CASE("encode_corpus length cap filters and counts") {
  MonoCorpus corpus;
  corpus.sentences = {"a b c", "a a a a a a"};
  MergeTable t = learn_bpe(corpus, 0);
  Vocabulary v = build_vocab(corpus, t);
  int filtered = 0;
  auto ids = encode_corpus(corpus, t, v, 4, &filtered);
  CHECK(ids.size() == 1);
  CHECK(filtered == 1);
}

TEST_CASE("parallel corpus save/load with provenance sidecar") {
  ParallelCorpus c;
  c.add("a", "b", Provenance::original);
  c.add("x", "x", Provenance::copied);
  c.add("q", "r", Provenance::back_translated);

  std::string dir = (std::filesystem::temp_directory_path() / "deskmt_par_test").string();
  std::filesystem::create_directories(dir);
  save_parallel(c, dir + "/c.src", dir + "/c.tgt");
  ParallelCorpus d = load_parallel(dir + "/c.src", dir + "/c.tgt");
  CHECK(d.src == c.src);
  CHECK(d.tgt == c.tgt);
  CHECK(d.prov == c.prov);

  // aligned-length validation
  write_lines_atomic(dir + "/bad.src", {"one", "two"});
  write_lines_atomic(dir + "/bad.tgt", {"one"});
  CHECK_THROWS_AS(load_parallel(dir + "/bad.src", dir + "/bad.tgt"), DataError);
}
