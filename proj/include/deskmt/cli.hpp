#pragma once

#include "deskmt/checkpoint.hpp"
#include "deskmt/config.hpp"
#include "deskmt/decode.hpp"
#include "deskmt/eval.hpp"

// Command-line front end. Commands map 1:1 onto module operations; every run
// writes its resolved config plus artifacts under the run directory:
//   config.resolved, checkpoints/, decodes/, reports/, logs/

namespace deskmt::cli {

// Valid commands: train-lm, train-nmt, train-fusion, fine-tune, augment-copy,
// augment-backtranslate, translate, evaluate, analyze-correlation, sweep-beta,
// grad-check. Throws ConfigError/DataError/NumericError; returns 0 on success.
int run(const std::string& command, const ConfigMap& cfg);

// Maps exceptions onto exit codes (0 ok, 2 config, 3 data, 4 numeric) and
// prints a single-line machine-parsable error.
int run_command_line(const std::string& command, const ConfigMap& cfg);

// Decodes each in-domain target sentence through a target-to-source model to
// form synthetic (source, target) pairs; failures are skipped and counted.
text::ParallelCorpus back_translate(const nmt::Model& reverse_model,
                                    const text::MonoCorpus& mono_in_target,
                                    const text::MergeTable& merges,
                                    const text::Vocabulary& vocab, const decode::Config& dcfg,
                                    int* skipped = nullptr);

// Finite-difference sweep over every autograd primitive and the full model
// paths; returns (name, max relative error) rows.
std::vector<std::pair<std::string, double>> gradient_suite(uint64_t seed);

}  // namespace deskmt::cli
