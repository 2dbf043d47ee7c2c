#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comer/lexicon.hpp"
#include "comer/training.hpp"

namespace comer::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
  kChecksumError = 5,
};

/// Flat run configuration: every TrainConfig key plus the keys below.
struct RunConfig {
  TrainConfig train;
  std::string corpus;
  std::string valid_corpus;  // defaults to the training corpus
  std::string format = "canonical";
  std::string embeddings = "pseudo";  // "pseudo" or an embedding file path
  std::uint64_t embedding_seed = 0;
  std::string checkpoint = "comer.ckpt";
  std::string metrics;  // defaults to <checkpoint>.metrics.json
  bool save_epochs = false;  // also write <checkpoint>.epoch<N> after every epoch

  /// Unknown keys throw ConfigError.
  void apply(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
};

/// Static table for a vocabulary and an embedding source description.
Lexicon make_lexicon(const Vocabulary& vocabulary, const std::string& embeddings, std::size_t dim,
                     std::uint64_t seed);
nlohmann::json embedding_descriptor(const std::string& embeddings, std::uint64_t seed);

/// Rebuilds the training-time lexicon of a checkpoint; `override_path`
/// replaces a stored embedding file path. Throws DataError when the rebuilt
/// table differs from the recorded digest.
Lexicon checkpoint_lexicon(const LoadedCheckpoint& ckpt, const std::string& override_path = "");

/// Runs the command line; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace comer::cli
