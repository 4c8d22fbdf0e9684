#include "deskmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deskmt/config.hpp"
#include "deskmt/text.hpp"

namespace deskmt::cli {

namespace {

constexpr char kMagic[8] = {'D', 'M', 'T', 'C', 'K', 'P', 'T', '1'};

// little-endian primitives
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<uint64_t>(d)); }
void put_str(std::string& out, const std::string& s) {
  put_u32(out, uint32_t(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void need(size_t n) const {
    if (pos + n > buf.size()) throw DataError("truncated checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int cfg_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint config missing key '" + key + "'");
  return std::stoi(it->second);
}

bool cfg_bool(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint config missing key '" + key + "'");
  return it->second == "true" || it->second == "1";
}

std::string cfg_str(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("checkpoint config missing key '" + key + "'");
  return it->second;
}

void fill_params(const CheckpointData& data, const std::vector<ag::Param*>& params,
                 const std::string& prefix = "") {
  std::map<std::string, const Mat*> by_name;
  for (const auto& [name, mat] : data.tensors) by_name[name] = &mat;
  for (ag::Param* p : params) {
    auto it = by_name.find(prefix + p->name);
    if (it == by_name.end()) {
      throw DataError("checkpoint missing tensor '" + prefix + p->name + "'");
    }
    const Mat& m = *it->second;
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw DataError("checkpoint tensor '" + p->name + "' has unexpected shape");
    }
    p->value = m;
    p->grad = Mat::Zero(m.rows(), m.cols());
  }
}

std::string lm_config_echo(const lm::Model& m) {
  std::ostringstream os;
  os << "embed_dim=" << m.cfg.embed_dim << "\nhidden_dim=" << m.cfg.hidden_dim
     << "\nlayers=" << m.cfg.layers << "\nvocab_size=" << m.vocab_size << "\n";
  return os.str();
}

std::string nmt_config_echo(const nmt::Model& m) {
  std::ostringstream os;
  os << "embed_dim=" << m.cfg.embed_dim << "\nhidden_dim=" << m.cfg.hidden_dim
     << "\nlayers=" << m.cfg.layers << "\nbidirectional=" << (m.cfg.bidirectional ? 1 : 0)
     << "\ninput_feeding=" << (m.cfg.input_feeding ? 1 : 0) << "\nvocab_size=" << m.vocab_size
     << "\n";
  return os.str();
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, data.version);
  put_str(out, data.kind);
  put_str(out, data.config_echo);
  put_u64(out, data.vocab_hash);
  put_u32(out, uint32_t(data.components.size()));
  for (const auto& [role, hash] : data.components) {
    put_str(out, role);
    put_u64(out, hash);
  }
  put_u32(out, uint32_t(data.tensors.size()));
  for (const auto& [name, mat] : data.tensors) {
    put_str(out, name);
    put_u32(out, uint32_t(mat.rows()));
    put_u32(out, uint32_t(mat.cols()));
    for (int i = 0; i < mat.rows(); ++i) {
      for (int j = 0; j < mat.cols(); ++j) put_f64(out, mat(i, j));  // row-major
    }
  }
  text::write_file_atomic(path, out);
}

CheckpointData read_checkpoint(const std::string& path, const std::string& expected_kind) {
  std::string buf = read_file(path);
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("'" + path + "' is not a checkpoint file (bad magic)");
  }
  Reader r(buf);
  r.pos = sizeof(kMagic);
  CheckpointData data;
  data.version = r.u32();
  if (data.version != 1) {
    throw DataError("unsupported checkpoint version " + std::to_string(data.version));
  }
  data.kind = r.str();
  if (!expected_kind.empty() && data.kind != expected_kind) {
    throw DataError("checkpoint '" + path + "' has kind '" + data.kind + "', expected '" +
                    expected_kind + "'");
  }
  data.config_echo = r.str();
  data.vocab_hash = r.u64();
  uint32_t n_comp = r.u32();
  for (uint32_t i = 0; i < n_comp; ++i) {
    std::string role = r.str();
    uint64_t h = r.u64();
    data.components.emplace_back(role, h);
  }
  uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    uint32_t rows = r.u32(), cols = r.u32();
    Mat m(rows, cols);
    for (uint32_t a = 0; a < rows; ++a) {
      for (uint32_t b = 0; b < cols; ++b) m(a, b) = r.f64();
    }
    data.tensors.emplace_back(std::move(name), std::move(m));
  }
  return data;
}

uint64_t file_hash(const std::string& path) {
  std::string buf = read_file(path);
  return fnv1a64_bytes(buf.data(), buf.size());
}

// ---------------------------------------------------------------------------

void save_lm(const std::string& path, const lm::Model& m) {
  CheckpointData d;
  d.kind = "lm";
  d.config_echo = lm_config_echo(m);
  d.vocab_hash = m.vocab_hash;
  for (const ag::Param* p : m.params()) d.tensors.emplace_back(p->name, p->value);
  write_checkpoint(path, d);
}

lm::Model load_lm(const std::string& path) {
  CheckpointData d = read_checkpoint(path, "lm");
  auto kv = parse_kv_lines(d.config_echo);
  lm::Config cfg;
  cfg.embed_dim = cfg_int(kv, "embed_dim");
  cfg.hidden_dim = cfg_int(kv, "hidden_dim");
  cfg.layers = cfg_int(kv, "layers");
  lm::Model m;
  Rng rng(0);
  m.init(cfg_int(kv, "vocab_size"), d.vocab_hash, cfg, rng);
  fill_params(d, m.params());
  return m;
}

void save_nmt(const std::string& path, const nmt::Model& m) {
  CheckpointData d;
  d.kind = "nmt";
  d.config_echo = nmt_config_echo(m);
  d.vocab_hash = m.vocab_hash;
  for (const ag::Param* p : m.params()) d.tensors.emplace_back(p->name, p->value);
  write_checkpoint(path, d);
}

nmt::Model load_nmt(const std::string& path) {
  CheckpointData d = read_checkpoint(path, "nmt");
  auto kv = parse_kv_lines(d.config_echo);
  nmt::Config cfg;
  cfg.embed_dim = cfg_int(kv, "embed_dim");
  cfg.hidden_dim = cfg_int(kv, "hidden_dim");
  cfg.layers = cfg_int(kv, "layers");
  cfg.bidirectional = cfg_bool(kv, "bidirectional");
  cfg.input_feeding = cfg_bool(kv, "input_feeding");
  nmt::Model m;
  Rng rng(0);
  m.init(cfg_int(kv, "vocab_size"), d.vocab_hash, cfg, rng);
  fill_params(d, m.params());
  return m;
}

void save_fusion(const std::string& path, const fusion::Model& m) {
  CheckpointData d;
  d.kind = "fusion";
  std::ostringstream cfg;
  cfg << "variant=" << fusion::variant_name(m.variant)
      << "\nfusion_point=" << fusion::fusion_point_name(m.point)
      << "\nsigmoid_gate=" << (m.gate.sigmoid_gate ? 1 : 0)
      << "\ngate_components=" << m.gate.components << "\ngate_dim=" << m.gate.state_dim << "\n"
      << nmt_config_echo(m.nmt);
  d.config_echo = cfg.str();
  d.vocab_hash = m.nmt.vocab_hash;
  d.components.emplace_back("nmt-base", m.nmt_base_hash);
  for (size_t i = 0; i < m.lm_hashes.size(); ++i) {
    d.components.emplace_back("lm" + std::to_string(i), m.lm_hashes[i]);
  }
  d.tensors.emplace_back(m.gate.w.name, m.gate.w.value);
  d.tensors.emplace_back(m.gate.b.name, m.gate.b.value);
  for (const ag::Param* p : m.nmt.params()) d.tensors.emplace_back(p->name, p->value);
  write_checkpoint(path, d);
}

fusion::Model load_fusion(const std::string& path, const std::vector<std::string>& lm_paths) {
  CheckpointData d = read_checkpoint(path, "fusion");
  auto kv = parse_kv_lines(d.config_echo);

  fusion::Model m;
  m.variant = fusion::variant_from_name(cfg_str(kv, "variant"));
  m.point = fusion::fusion_point_from_name(cfg_str(kv, "fusion_point"));

  nmt::Config ncfg;
  ncfg.embed_dim = cfg_int(kv, "embed_dim");
  ncfg.hidden_dim = cfg_int(kv, "hidden_dim");
  ncfg.layers = cfg_int(kv, "layers");
  ncfg.bidirectional = cfg_bool(kv, "bidirectional");
  ncfg.input_feeding = cfg_bool(kv, "input_feeding");
  Rng rng(0);
  m.nmt.init(cfg_int(kv, "vocab_size"), d.vocab_hash, ncfg, rng);

  std::vector<std::pair<std::string, uint64_t>> lm_components;
  for (const auto& [role, hash] : d.components) {
    if (role == "nmt-base") {
      m.nmt_base_hash = hash;
    } else {
      lm_components.emplace_back(role, hash);
    }
  }
  if (lm_components.size() != lm_paths.size()) {
    throw DataError("fusion checkpoint references " + std::to_string(lm_components.size()) +
                    " language models, got " + std::to_string(lm_paths.size()) + " paths");
  }
  for (size_t i = 0; i < lm_paths.size(); ++i) {
    uint64_t h = file_hash(lm_paths[i]);
    if (h != lm_components[i].second) {
      throw DataError("component checkpoint '" + lm_paths[i] + "' hash mismatch for role '" +
                      lm_components[i].first + "'");
    }
    m.lms.push_back(load_lm(lm_paths[i]));
    m.lm_hashes.push_back(h);
  }

  m.wire(rng);
  m.gate.sigmoid_gate = cfg_bool(kv, "sigmoid_gate");
  std::vector<ag::Param*> to_fill = m.nmt.params();
  m.gate.collect(to_fill);
  fill_params(d, to_fill);
  for (lm::Model& l : m.lms) l.set_trainable(false);
  return m;
}

}  // namespace deskmt::cli
