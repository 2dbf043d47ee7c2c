#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "comer/data.hpp"
#include "comer/evalbench.hpp"
#include "comer/hiergen.hpp"

namespace comer {

enum class OptimizerKind { kAdam, kAmsGrad };
OptimizerKind parse_optimizer(std::string_view name);
const char* to_string(OptimizerKind k);

struct TrainConfig {
  ModelConfig model;  // d_m, d_e, dropout and decoder switches live here
  double lr = 0.0005;
  double clip = 2.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t batch_size = 32;
  std::size_t epochs = 150;
  std::uint64_t seed = 0;
  /// Previous-state input used for the per-epoch validation pass.
  StateFeed valid_feed = StateFeed::kPredicted;

  /// Throws ConfigError on a non-positive size or dropout outside [0, 1).
  void validate() const;
  nlohmann::ordered_json to_json() const;
  /// Reads the flat key space written by to_json; unknown keys throw ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
  /// Applies one flat key; returns false when the key is not a training key.
  bool apply(const std::string& key, const nlohmann::json& value);
};

/// Kaiming normal N(0, 2 / fan_in) for weights (fan_in = rows), exact zeros
/// for biases. Values are rounded to float precision.
void init_params(const ParamList& params, std::uint64_t seed);

/// Global L2 clipping; returns the norm before clipping.
double clip_gradients(std::span<std::vector<double>> grads, double max_norm);
double clip_gradients(const ParamList& params, double max_norm);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Store parameters at float precision after each update so that float
  /// checkpoints are lossless.
  bool round_to_float = true;
};

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::vector<std::vector<double>> m, v, v_max;
  std::size_t step = 0;
};

OptimizerState make_optimizer_state(const ParamList& params, OptimizerKind kind);

/// One bias-corrected Adam/AMSGrad update from the parameters' gradients.
/// A non-finite gradient aborts before any parameter changes (NumericError
/// naming the parameter).
void optimizer_step(const ParamList& params, OptimizerState& state, const OptimizerSettings& settings);

void zero_grads(const ParamList& params);

struct StepRecord {
  Level level = Level::kDomain;
  std::size_t target = 0;      // table index
  std::size_t position = 0;    // index into probs
  std::vector<double> probs;   // p_s of the step over its output set
};

struct TurnLoss {
  num::Tensor loss;  // sum of per-step cross-entropies over all levels
  std::vector<StepRecord> steps;
};

/// Teacher-forced three-level decode against `gold` (put in canonical order
/// first). Throws DataError when a gold token is missing from the table.
TurnLoss loss_turn(const ComerModel& model, const Lexicon& lexicon, const TurnInput& input,
                   const BeliefState& gold, Mode mode, Rng& rng, bool record_steps = false);

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;        // mean turn loss over the epoch
  double first_batch = 0.0; // loss of the first mini-batch
  std::size_t steps = 0;
  MetricsReport valid;
  double seconds = 0.0;
  nlohmann::ordered_json to_json() const;
};

struct TrainHooks {
  /// Called after each epoch; returning false ends training.
  std::function<bool(const EpochReport&, const ComerModel&)> on_epoch;
  /// Called after each optimizer step with the batch mean loss.
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  ComerModel model;  // parameters after the last epoch
  ComerModel best;   // highest validation JG (initial parameters when no epoch ran)
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochReport> epochs;
};

/// Builds a model for the lexicon, initializes it from cfg.seed and trains
/// on every turn of `train_set` with gold previous states.
TrainResult train(const TrainConfig& cfg, std::span<const Dialogue> train_set, std::span<const Dialogue> valid_set,
                  const Lexicon& lexicon, const TrainHooks& hooks = {});

/// Everything besides the parameters that a checkpoint records.
struct CheckpointMeta {
  TrainConfig config;
  std::size_t epoch = 0;
  double metric = 0.0;
  Vocabulary vocabulary;
  /// {"source": "pseudo", "seed": S} or {"source": "file", "path": P}.
  nlohmann::json embedding;
  std::string table_digest;  // table_digest() of the lexicon used
};

/// SHA-256 over keys and float bytes of the table.
std::string table_digest(const EmbeddingTable& table);

/// First line: header JSON. Then the raw little-endian float32 parameter
/// blob in ComerModel::params() order; the header carries its SHA-256.
std::string checkpoint_bytes(const ComerModel& model, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const ComerModel& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ComerModel model;
  CheckpointMeta meta;
};
/// Throws DataError on malformed files and ChecksumError on a digest mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
LoadedCheckpoint parse_checkpoint(const std::string& bytes, const std::string& where = "checkpoint");

}  // namespace comer
