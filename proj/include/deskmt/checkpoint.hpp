#pragma once

#include "deskmt/fusion.hpp"

// Versioned binary checkpoint format. Explicit little-endian encoding,
// 8-byte magic, length-prefixed names; load(save(m)) is bit-exact.

namespace deskmt::cli {

struct CheckpointData {
  std::string kind;  // "lm" | "nmt" | "fusion"
  uint32_t version = 1;
  std::string config_echo;  // key=value lines describing the model
  uint64_t vocab_hash = 0;
  std::vector<std::pair<std::string, Mat>> tensors;
  std::vector<std::pair<std::string, uint64_t>> components;  // fusion only
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
// Validates magic/version and, when expected_kind is non-empty, the kind tag.
CheckpointData read_checkpoint(const std::string& path, const std::string& expected_kind = "");

uint64_t file_hash(const std::string& path);

void save_lm(const std::string& path, const lm::Model& m);
lm::Model load_lm(const std::string& path);

void save_nmt(const std::string& path, const nmt::Model& m);
nmt::Model load_nmt(const std::string& path);

// The fusion checkpoint stores the gate and tuned NMT parameters plus the
// hashes of its component checkpoints; the frozen LMs are re-loaded from
// their own files, which must hash to the recorded values.
void save_fusion(const std::string& path, const fusion::Model& m);
fusion::Model load_fusion(const std::string& path, const std::vector<std::string>& lm_paths);

}  // namespace deskmt::cli
