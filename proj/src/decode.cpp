#include "deskmt/decode.hpp"

#include <algorithm>
#include <cmath>

namespace deskmt::decode {

FusionMode fusion_mode_from_name(const std::string& s) {
  if (s == "none") return FusionMode::none;
  if (s == "lm-shallow") return FusionMode::lm_shallow;
  if (s == "dda-shallow") return FusionMode::dda_shallow;
  if (s == "deep") return FusionMode::deep;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

std::string fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::lm_shallow: return "lm-shallow";
    case FusionMode::dda_shallow: return "dda-shallow";
    case FusionMode::deep: return "deep";
  }
  return "none";
}

double coverage_penalty(const std::vector<Vec>& attention_history, double beta_cp) {
  if (beta_cp == 0.0 || attention_history.empty()) return 0.0;
  Vec sums = Vec::Zero(attention_history.front().size());
  for (const Vec& a : attention_history) sums += a;
  double total = 0.0;
  for (int j = 0; j < sums.size(); ++j) total += std::log(std::min(sums(j), 1.0));
  return beta_cp * total;
}

namespace {

// Uniform per-step interface over the four fusion modes.
class Scorer {
 public:
  Scorer(const Models& m, const Config& cfg) : m_(m), cfg_(cfg) {
    switch (cfg.fusion) {
      case FusionMode::none:
        require(m.nmt, "nmt");
        break;
      case FusionMode::lm_shallow:
        require(m.nmt, "nmt");
        require(m.lm_in, "lm_in");
        check_vocab(m.nmt->vocab_hash, m.lm_in->vocab_hash);
        break;
      case FusionMode::dda_shallow:
        require(m.nmt, "nmt");
        require(m.lm_in, "lm_in");
        require(m.lm_out, "lm_out");
        check_vocab(m.nmt->vocab_hash, m.lm_in->vocab_hash);
        check_vocab(m.nmt->vocab_hash, m.lm_out->vocab_hash);
        break;
      case FusionMode::deep:
        require(m.deep, "fusion checkpoint");
        break;
    }
  }

  const nmt::Model& translator() const {
    return cfg_.fusion == FusionMode::deep ? m_.deep->nmt : *m_.nmt;
  }

  int vocab_size() const { return translator().vocab_size; }

  void start(const std::vector<int>& src_ids) { enc_ = nmt::encode(translator(), src_ids); }

  void init_states(nmt::State& nmt_state, std::vector<lm::State>& lm_states) const {
    nmt_state = nmt::init_state(translator(), enc_);
    lm_states.clear();
    if (cfg_.fusion == FusionMode::deep) {
      for (const lm::Model& l : m_.deep->lms) lm_states.push_back(lm::init_state(l));
    } else {
      if (m_.lm_in && cfg_.fusion != FusionMode::none) lm_states.push_back(lm::init_state(*m_.lm_in));
      if (m_.lm_out && cfg_.fusion == FusionMode::dda_shallow)
        lm_states.push_back(lm::init_state(*m_.lm_out));
    }
  }

  struct Out {
    Vec log_dist;
    Vec attn;
    nmt::State nmt_state;
    std::vector<lm::State> lm_states;
  };

  Out step(const nmt::State& nmt_prev, const std::vector<lm::State>& lm_prev,
           int prev_token) const {
    Out out;
    if (cfg_.fusion == FusionMode::deep) {
      fusion::StepResult r = fusion::fused_decode_step(*m_.deep, enc_, prev_token, nmt_prev, lm_prev);
      out.log_dist = std::move(r.log_dist);
      out.attn = std::move(r.attention);
      out.nmt_state = std::move(r.nmt_state);
      out.lm_states = std::move(r.lm_states);
      return out;
    }
    nmt::DecoderStep ns = nmt::decode_step(*m_.nmt, enc_, prev_token, nmt_prev);
    out.attn = std::move(ns.attention);
    out.nmt_state = std::move(ns.state);
    switch (cfg_.fusion) {
      case FusionMode::none:
        out.log_dist = std::move(ns.log_dist);
        break;
      case FusionMode::lm_shallow: {
        lm::Step li = lm::lm_step(*m_.lm_in, prev_token, lm_prev[0]);
        out.log_dist = fusion::lm_shallow_combine_log(ns.log_dist, li.log_dist, cfg_.beta);
        out.lm_states.push_back(std::move(li.state));
        break;
      }
      case FusionMode::dda_shallow: {
        lm::Step li = lm::lm_step(*m_.lm_in, prev_token, lm_prev[0]);
        lm::Step lo = lm::lm_step(*m_.lm_out, prev_token, lm_prev[1]);
        out.log_dist =
            fusion::dda_shallow_combine_log(ns.log_dist, li.log_dist, lo.log_dist, cfg_.beta);
        out.lm_states.push_back(std::move(li.state));
        out.lm_states.push_back(std::move(lo.state));
        break;
      }
      case FusionMode::deep:
        break;  // handled above
    }
    return out;
  }

 private:
  static void require(const void* p, const char* what) {
    if (!p) throw DataError(std::string("beam_search: missing model '") + what + "'");
  }
  static void check_vocab(uint64_t a, uint64_t b) {
    if (a != b) throw DataError("beam_search: component vocabularies differ");
  }

  const Models& m_;
  const Config& cfg_;
  nmt::EncoderOutput enc_;
};

double rank_score(const Hypothesis& h, const Config& cfg) {
  double lp = h.log_prob;
  if (cfg.length_norm) {
    int emitted = int(h.tokens.size()) - 1;
    if (emitted > 0) lp /= double(emitted);
  }
  return lp + coverage_penalty(h.attention, cfg.coverage_beta);
}

}  // namespace

std::vector<Hypothesis> beam_search(const Models& models, const std::vector<int>& src_ids,
                                    const Config& cfg) {
  if (cfg.beam_size < 1) throw ConfigError("beam_search: beam size must be >= 1");
  if (cfg.max_len < 1) throw ConfigError("beam_search: max length must be >= 1");
  Scorer sc(models, cfg);
  sc.start(src_ids);
  int V = sc.vocab_size();

  Hypothesis root;
  root.tokens = {text::Vocabulary::kBos};
  sc.init_states(root.nmt_state, root.lm_states);

  std::vector<Hypothesis> live{std::move(root)};
  std::vector<Hypothesis> finished;

  struct Cand {
    double score;
    int token;
    int parent;
    double log_prob;
  };

  for (int step = 0; step < cfg.max_len && !live.empty(); ++step) {
    std::vector<Scorer::Out> outs(live.size());
    std::vector<Cand> cands;
    cands.reserve(live.size() * size_t(V));
    for (size_t p = 0; p < live.size(); ++p) {
      const Hypothesis& h = live[p];
      outs[p] = sc.step(h.nmt_state, h.lm_states, h.tokens.back());
      std::vector<Vec> hist = h.attention;
      hist.push_back(outs[p].attn);
      double cp = coverage_penalty(hist, cfg.coverage_beta);
      for (int v = 0; v < V; ++v) {
        double lp = h.log_prob + outs[p].log_dist(v);
        double score = lp;
        if (cfg.length_norm) score /= double(int(h.tokens.size()));  // emitted count after append
        score += cp;
        cands.push_back(Cand{score, v, int(p), lp});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    std::vector<Hypothesis> next;
    int take = std::min<size_t>(cfg.beam_size, cands.size());
    for (int i = 0; i < take; ++i) {
      const Cand& c = cands[i];
      const Hypothesis& h = live[c.parent];
      Hypothesis child;
      child.tokens = h.tokens;
      child.tokens.push_back(c.token);
      child.log_prob = c.log_prob;
      child.attention = h.attention;
      child.attention.push_back(outs[c.parent].attn);
      child.nmt_state = outs[c.parent].nmt_state;
      child.lm_states = outs[c.parent].lm_states;
      if (c.token == text::Vocabulary::kEos) {
        child.finished = true;
        finished.push_back(std::move(child));
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }

  if (finished.empty()) {
    // Nothing reached EOS within max_len: hand back the best live hypothesis.
    auto best = std::max_element(live.begin(), live.end(), [&](const auto& a, const auto& b) {
      return rank_score(a, cfg) < rank_score(b, cfg);
    });
    best->reached_max_len = true;
    return {*best};
  }

  std::sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    double sa = rank_score(a, cfg), sb = rank_score(b, cfg);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
  if (int(finished.size()) > cfg.beam_size) finished.resize(cfg.beam_size);
  return finished;
}

Rescore rescore(const Models& models, const std::vector<int>& src_ids,
                const std::vector<int>& tokens, const Config& cfg) {
  if (tokens.empty() || tokens.front() != text::Vocabulary::kBos) {
    throw DataError("rescore: token sequence must start with BOS");
  }
  Scorer sc(models, cfg);
  sc.start(src_ids);
  Rescore r;
  nmt::State ns;
  std::vector<lm::State> ls;
  sc.init_states(ns, ls);
  for (size_t t = 0; t + 1 < tokens.size(); ++t) {
    Scorer::Out out = sc.step(ns, ls, tokens[t]);
    r.log_prob += out.log_dist(tokens[t + 1]);
    r.attention.push_back(out.attn);
    ns = std::move(out.nmt_state);
    ls = std::move(out.lm_states);
  }
  return r;
}

std::vector<int> translate_sentence(const Models& models, const std::vector<int>& src_ids,
                                    const Config& cfg, Hypothesis* best) {
  std::vector<Hypothesis> hyps = beam_search(models, src_ids, cfg);
  const Hypothesis& h = hyps.front();
  if (best) *best = h;
  std::vector<int> out;
  for (size_t i = 1; i < h.tokens.size(); ++i) {
    if (h.tokens[i] == text::Vocabulary::kEos) break;
    out.push_back(h.tokens[i]);
  }
  return out;
}

}  // namespace deskmt::decode
