#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deskmt/types.hpp"

// Subword tokenization (BPE with "</w>" end-of-word markers), vocabulary
// construction, corpus I/O, padding/batching and the copied-data trick.

namespace deskmt::text {

enum class Provenance { original, copied, back_translated };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct MonoCorpus {
  std::vector<std::string> sentences;
  Provenance provenance = Provenance::original;
  size_t size() const { return sentences.size(); }
};

struct ParallelCorpus {
  std::vector<std::string> src, tgt;
  std::vector<Provenance> prov;
  size_t size() const { return src.size(); }
  void add(std::string s, std::string t, Provenance p = Provenance::original) {
    src.push_back(std::move(s));
    tgt.push_back(std::move(t));
    prov.push_back(p);
  }
  MonoCorpus target_side() const { return MonoCorpus{tgt, Provenance::original}; }
  MonoCorpus source_side() const { return MonoCorpus{src, Provenance::original}; }
};

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  int size() const { return int(id_to_token.size()); }
  int id(const std::string& tok) const;  // kUnk when absent
  const std::string& token(int id) const;
  int add(const std::string& tok);  // idempotent
  bool contains(const std::string& tok) const { return token_to_id.count(tok) != 0; }
  uint64_t hash() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
};

using MergePair = std::pair<std::string, std::string>;

struct MergeTable {
  std::vector<MergePair> merges;
  void save(const std::string& path) const;
  static MergeTable load(const std::string& path);
};

// Splits a UTF-8 string into code-point substrings (invalid bytes pass
// through one byte at a time).
std::vector<std::string> utf8_chars(const std::string& s);
std::vector<std::string> split_ws(const std::string& s);

// Greedy most-frequent-pair merges, ties broken lexicographically.
MergeTable learn_bpe(const MonoCorpus& corpus, int num_merges);

std::vector<std::string> apply_bpe_word(const std::string& word, const MergeTable& merges);
std::vector<std::string> apply_bpe(const std::string& sentence, const MergeTable& merges);

// Subword id sequence; no BOS/EOS here, OOV maps to kUnk.
std::vector<int> encode(const std::string& sentence, const MergeTable& merges,
                        const Vocabulary& vocab);
std::string detokenize(const std::vector<std::string>& subwords);
std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab);
std::vector<std::string> subwords_of_ids(const std::vector<int>& ids, const Vocabulary& vocab);

// Reserved ids 0-3, then tokens by descending frequency, ties lexicographic.
Vocabulary build_vocab(const MonoCorpus& corpus, const MergeTable& merges);

ParallelCorpus copy_augment(const MonoCorpus& mono_in, const ParallelCorpus& parallel_out);

struct Batch {
  std::vector<std::vector<int>> steps;  // [time][batch], PAD-filled
  Mat mask;                             // time x batch, 1.0 for real tokens
  std::vector<int> lengths;
  std::vector<int> indices;  // positions in the source corpus
  int batch_size() const { return int(lengths.size()); }
  int max_len() const { return int(steps.size()); }
};

struct PairBatch {
  Batch src, tgt;
};

// Seed-shuffled, length-bucketed padded batches; every sequence exactly once.
std::vector<Batch> batch_iter(const std::vector<std::vector<int>>& seqs, int batch_size,
                              uint64_t seed);
std::vector<PairBatch> batch_iter_parallel(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs, int batch_size,
    uint64_t seed);

// Whole-corpus encoding with a max-length filter (count reported via out-param).
std::vector<std::vector<int>> encode_corpus(const MonoCorpus& corpus, const MergeTable& merges,
                                            const Vocabulary& vocab, int max_len,
                                            int* filtered = nullptr);
std::vector<std::pair<std::vector<int>, std::vector<int>>> encode_parallel(
    const ParallelCorpus& corpus, const MergeTable& merges, const Vocabulary& vocab, int max_len,
    int* filtered = nullptr);

// Plain-text I/O: UTF-8, one sentence per line; empty lines dropped.
std::vector<std::string> read_lines(const std::string& path);
void write_file_atomic(const std::string& path, const std::string& content);
void write_lines_atomic(const std::string& path, const std::vector<std::string>& lines);

MonoCorpus load_mono(const std::string& path);
// Two aligned files; optional .prov sidecar restores provenance tags.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path);
void save_parallel(const ParallelCorpus& corpus, const std::string& src_path,
                   const std::string& tgt_path, bool write_prov = true);

}  // namespace deskmt::text
