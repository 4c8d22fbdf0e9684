#include "deskmt/text.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace deskmt::text {

namespace {
const char* kVocabHeader = "deskmt-vocab v1";
const char* kMergesHeader = "deskmt-merges v1";
const char* kEow = "</w>";
}  // namespace

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::original: return "original";
    case Provenance::copied: return "copied";
    case Provenance::back_translated: return "back-translated";
  }
  return "original";
}

Provenance provenance_from_name(const std::string& s) {
  if (s == "copied") return Provenance::copied;
  if (s == "back-translated") return Provenance::back_translated;
  if (s == "original") return Provenance::original;
  throw DataError("unknown provenance tag '" + s + "'");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
}

int Vocabulary::id(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw DataError("token id " + std::to_string(id) + " out of vocabulary of size " +
                    std::to_string(size()));
  }
  return id_to_token[id];
}

int Vocabulary::add(const std::string& tok) {
  auto it = token_to_id.find(tok);
  if (it != token_to_id.end()) return it->second;
  int id = size();
  id_to_token.push_back(tok);
  token_to_id.emplace(tok, id);
  return id;
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& t : id_to_token) {
    h = fnv1a64(t, h);
    h = fnv1a64_bytes("\n", 1, h);
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ostringstream os;
  os << kVocabHeader << "\n";
  for (const std::string& t : id_to_token) os << t << "\n";
  write_file_atomic(path, os.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) {
    throw DataError("bad vocabulary header in '" + path + "'");
  }
  Vocabulary v;
  int idx = 0;
  while (std::getline(in, line)) {
    if (idx < 4) {
      if (line != v.id_to_token[idx]) {
        throw DataError("reserved token mismatch in '" + path + "'");
      }
    } else {
      v.add(line);
    }
    ++idx;
  }
  return v;
}

// ---------------------------------------------------------------------------
// MergeTable

void MergeTable::save(const std::string& path) const {
  std::ostringstream os;
  os << kMergesHeader << "\n";
  for (const auto& [a, b] : merges) os << a << " " << b << "\n";
  write_file_atomic(path, os.str());
}

MergeTable MergeTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open merges file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMergesHeader) {
    throw DataError("bad merges header in '" + path + "'");
  }
  MergeTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    if (sp == std::string::npos) throw DataError("malformed merge line '" + line + "'");
    t.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return t;
}

// ---------------------------------------------------------------------------
// tokenization

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

namespace {

std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> sym = utf8_chars(word);
  if (!sym.empty()) sym.back() += kEow;
  return sym;
}

void apply_merge(std::vector<std::string>& sym, const MergePair& m) {
  size_t w = 0;
  for (size_t r = 0; r < sym.size(); ++r) {
    if (r + 1 < sym.size() && sym[r] == m.first && sym[r + 1] == m.second) {
      sym[w] = sym[r] + sym[r + 1];
      ++r;
    } else if (w != r) {
      sym[w] = std::move(sym[r]);
    }
    ++w;
  }
  sym.resize(w);
}

}  // namespace

MergeTable learn_bpe(const MonoCorpus& corpus, int num_merges) {
  if (corpus.sentences.empty()) throw DataError("learn_bpe: empty corpus");
  if (num_merges < 0) throw DataError("learn_bpe: negative merge count");

  std::unordered_map<std::string, long long> word_count;
  for (const std::string& sent : corpus.sentences) {
    for (const std::string& w : split_ws(sent)) word_count[w] += 1;
  }
  // Word list in deterministic order.
  std::vector<std::pair<std::vector<std::string>, long long>> words;
  {
    std::map<std::string, long long> sorted(word_count.begin(), word_count.end());
    for (const auto& [w, c] : sorted) words.emplace_back(word_symbols(w), c);
  }

  MergeTable table;
  for (int step = 0; step < num_merges; ++step) {
    std::map<MergePair, long long> pair_count;
    for (const auto& [sym, c] : words) {
      for (size_t i = 0; i + 1 < sym.size(); ++i) pair_count[{sym[i], sym[i + 1]}] += c;
    }
    if (pair_count.empty()) break;
    MergePair best;
    long long best_count = -1;
    for (const auto& [p, c] : pair_count) {
      if (c > best_count) {  // map iteration is sorted, so ties keep the smaller pair
        best = p;
        best_count = c;
      }
    }
    table.merges.push_back(best);
    for (auto& [sym, c] : words) apply_merge(sym, best);
  }
  return table;
}

std::vector<std::string> apply_bpe_word(const std::string& word, const MergeTable& merges) {
  std::vector<std::string> sym = word_symbols(word);
  for (const MergePair& m : merges.merges) {
    if (sym.size() < 2) break;
    apply_merge(sym, m);
  }
  return sym;
}

std::vector<std::string> apply_bpe(const std::string& sentence, const MergeTable& merges) {
  std::vector<std::string> out;
  for (const std::string& w : split_ws(sentence)) {
    std::vector<std::string> sym = apply_bpe_word(w, merges);
    out.insert(out.end(), sym.begin(), sym.end());
  }
  return out;
}

std::vector<int> encode(const std::string& sentence, const MergeTable& merges,
                        const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const std::string& s : apply_bpe(sentence, merges)) ids.push_back(vocab.id(s));
  return ids;
}

std::string detokenize(const std::vector<std::string>& subwords) {
  std::string out;
  std::string word;
  for (const std::string& s : subwords) {
    if (s.size() >= 4 && s.compare(s.size() - 4, 4, kEow) == 0) {
      word += s.substr(0, s.size() - 4);
      if (!out.empty()) out += " ";
      out += word;
      word.clear();
    } else {
      word += s;
    }
  }
  if (!word.empty()) {
    if (!out.empty()) out += " ";
    out += word;
  }
  return out;
}

std::vector<std::string> subwords_of_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

std::string decode_ids(const std::vector<int>& ids, const Vocabulary& vocab) {
  return detokenize(subwords_of_ids(ids, vocab));
}

Vocabulary build_vocab(const MonoCorpus& corpus, const MergeTable& merges) {
  std::unordered_map<std::string, long long> count;
  for (const std::string& sent : corpus.sentences) {
    for (const std::string& s : apply_bpe(sent, merges)) count[s] += 1;
  }
  std::vector<std::pair<std::string, long long>> items(count.begin(), count.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, c] : items) {
    (void)c;
    v.add(tok);
  }
  return v;
}

ParallelCorpus copy_augment(const MonoCorpus& mono_in, const ParallelCorpus& parallel_out) {
  ParallelCorpus out = parallel_out;
  for (const std::string& y : mono_in.sentences) out.add(y, y, Provenance::copied);
  return out;
}

// ---------------------------------------------------------------------------
// batching

namespace {

Batch pad_batch(const std::vector<std::vector<int>>& seqs, const std::vector<int>& idx) {
  Batch b;
  b.indices = idx;
  int maxlen = 0;
  for (int i : idx) {
    b.lengths.push_back(int(seqs[i].size()));
    maxlen = std::max(maxlen, int(seqs[i].size()));
  }
  int bs = int(idx.size());
  b.steps.assign(maxlen, std::vector<int>(bs, Vocabulary::kPad));
  b.mask = Mat::Zero(maxlen, bs);
  for (int j = 0; j < bs; ++j) {
    const std::vector<int>& s = seqs[idx[j]];
    for (size_t t = 0; t < s.size(); ++t) {
      b.steps[t][j] = s[t];
      b.mask(int(t), j) = 1.0;
    }
  }
  return b;
}

std::vector<std::vector<int>> bucketed_order(const std::vector<int>& lengths, int batch_size,
                                             uint64_t seed) {
  std::vector<int> order(lengths.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<int>> groups;
  for (size_t i = 0; i < order.size(); i += batch_size) {
    size_t j = std::min(order.size(), i + batch_size);
    groups.emplace_back(order.begin() + i, order.begin() + j);
  }
  rng.shuffle(groups);
  return groups;
}

}  // namespace

std::vector<Batch> batch_iter(const std::vector<std::vector<int>>& seqs, int batch_size,
                              uint64_t seed) {
  if (batch_size < 1) throw DataError("batch_iter: batch_size must be >= 1");
  std::vector<int> lengths;
  for (const auto& s : seqs) lengths.push_back(int(s.size()));
  std::vector<Batch> out;
  for (const auto& g : bucketed_order(lengths, batch_size, seed)) out.push_back(pad_batch(seqs, g));
  return out;
}

std::vector<PairBatch> batch_iter_parallel(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs, int batch_size,
    uint64_t seed) {
  if (batch_size < 1) throw DataError("batch_iter: batch_size must be >= 1");
  std::vector<std::vector<int>> src, tgt;
  std::vector<int> lengths;
  for (const auto& [s, t] : pairs) {
    src.push_back(s);
    tgt.push_back(t);
    lengths.push_back(int(s.size()));
  }
  std::vector<PairBatch> out;
  for (const auto& g : bucketed_order(lengths, batch_size, seed)) {
    out.push_back(PairBatch{pad_batch(src, g), pad_batch(tgt, g)});
  }
  return out;
}

std::vector<std::vector<int>> encode_corpus(const MonoCorpus& corpus, const MergeTable& merges,
                                            const Vocabulary& vocab, int max_len, int* filtered) {
  std::vector<std::vector<int>> out;
  int dropped = 0;
  for (const std::string& sent : corpus.sentences) {
    std::vector<int> ids = encode(sent, merges, vocab);
    if (ids.empty()) continue;
    if (max_len > 0 && int(ids.size()) > max_len) {
      ++dropped;
      continue;
    }
    out.push_back(std::move(ids));
  }
  if (filtered) *filtered = dropped;
  return out;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> encode_parallel(
    const ParallelCorpus& corpus, const MergeTable& merges, const Vocabulary& vocab, int max_len,
    int* filtered) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  int dropped = 0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    std::vector<int> s = encode(corpus.src[i], merges, vocab);
    std::vector<int> t = encode(corpus.tgt[i], merges, vocab);
    if (s.empty() || t.empty()) continue;
    if (max_len > 0 && (int(s.size()) > max_len || int(t.size()) > max_len)) {
      ++dropped;
      continue;
    }
    out.emplace_back(std::move(s), std::move(t));
  }
  if (filtered) *filtered = dropped;
  return out;
}

// ---------------------------------------------------------------------------
// I/O

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, p);
}

void write_lines_atomic(const std::string& path, const std::vector<std::string>& lines) {
  std::ostringstream os;
  for (const std::string& l : lines) os << l << "\n";
  write_file_atomic(path, os.str());
}

MonoCorpus load_mono(const std::string& path) {
  MonoCorpus c;
  for (std::string& l : read_lines(path)) {
    if (!l.empty()) c.sentences.push_back(std::move(l));
  }
  return c;
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path) {
  std::vector<std::string> src = read_lines(src_path);
  std::vector<std::string> tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw DataError("parallel corpus length mismatch: " + std::to_string(src.size()) + " vs " +
                    std::to_string(tgt.size()));
  }
  std::vector<std::string> prov;
  if (std::filesystem::exists(src_path + ".prov")) prov = read_lines(src_path + ".prov");
  ParallelCorpus c;
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || tgt[i].empty()) continue;
    Provenance p =
        i < prov.size() ? provenance_from_name(prov[i]) : Provenance::original;
    c.add(std::move(src[i]), std::move(tgt[i]), p);
  }
  return c;
}

void save_parallel(const ParallelCorpus& corpus, const std::string& src_path,
                   const std::string& tgt_path, bool write_prov) {
  write_lines_atomic(src_path, corpus.src);
  write_lines_atomic(tgt_path, corpus.tgt);
  if (write_prov) {
    std::vector<std::string> tags;
    for (Provenance p : corpus.prov) tags.push_back(provenance_name(p));
    write_lines_atomic(src_path + ".prov", tags);
  }
}

}  // namespace deskmt::text
