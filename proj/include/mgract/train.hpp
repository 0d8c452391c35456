#pragma once

// Deterministic training loop, evaluation metrics and checkpoint I/O for the
// token classifier.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mgract/classifier.hpp"

namespace mgract {

struct LabeledSample {
  std::string id;
  TokenTensor joint;
  TokenTensor bone;
  int label = 0;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<LabeledSample> samples;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<int> labels() const;
};

struct TrainConfig {
  LossKind loss = LossKind::MixUp;
  double mixup_alpha = 0.2;
  double smoothing = 0.1;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int max_epochs = 300;
  int patience = 25;
  std::uint64_t seed = 7;
  double split = 0.8;                 // train share of the train/test partition
  double validation_fraction = 0.1;   // carved from the train share
  FusionStrategy fusion = FusionStrategy::Interleave;
  int d_tok = 32;
  int d_mix = 64;
  int heads = 4;
  int model_dim = 64;

  void validate() const;
};

/// Flat JSON object with one key per field.
std::string train_config_json(const TrainConfig& cfg);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const std::string& text);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffled partition; each class keeps round(share * n_c)
/// samples on the train side, clamped so both sides are non-empty when
/// n_c >= 2. Index lists are sorted.
SplitIndices stratified_split(const std::vector<int>& labels, double share, std::uint64_t seed);

/// Beta(a, a) draw from two gamma variates.
double sample_beta(double a, std::mt19937_64& rng);

InputNormalizer fit_normalizer(const Dataset& data, const std::vector<std::size_t>& indices);

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double validation_accuracy = 0;
  double validation_loss = 0;
};

struct TrainResult {
  ClassifierParams params;  // best-validation parameters
  std::vector<EpochLog> history;
  int best_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Trains on `train_indices` of `data`, holding out a stratified validation
/// share for early stopping. Bitwise reproducible for a fixed config.
TrainResult train(const Dataset& data, const std::vector<std::size_t>& train_indices, const TrainConfig& cfg);

struct EvalMetrics {
  double top1 = 0;
  double top5 = 0;
  double class_mean = 0;  // unweighted mean of per-class recall
  Eigen::MatrixXi confusion;  // true x predicted
  std::size_t count = 0;
};

/// Ranks logits descending with lower class index winning ties.
EvalMetrics metrics_from_logits(const Eigen::MatrixXd& logits, const std::vector<int>& labels, int classes);
EvalMetrics evaluate(const ClassifierParams& params, const Dataset& data, const std::vector<std::size_t>& indices);

struct Checkpoint {
  ClassifierParams params;
  std::vector<std::string> class_names;
  TrainConfig config;
  std::vector<std::string> test_ids;
  int best_epoch = 0;
};

std::string checkpoint_json(const Checkpoint& ckpt, const std::string& provenance_json = {});
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path, const std::string& provenance_json = {});
Checkpoint load_checkpoint(const std::string& path);

std::string metrics_json(const EvalMetrics& m, const std::vector<std::string>& class_names);

/// Loads every token file (*.json) under `dir`, sorted by file name. Class
/// names are the sorted distinct labels unless `class_names` is given.
Dataset load_token_dataset(const std::string& dir, const std::vector<std::string>& class_names = {});

}  // namespace mgract
