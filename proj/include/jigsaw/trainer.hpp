#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "jigsaw/cfn.hpp"
#include "jigsaw/imagepipe.hpp"
#include "jigsaw/permset.hpp"

namespace jigsaw {

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 32;
  int iterations = 1000;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  std::vector<int> lr_steps;  // learning rate is multiplied by lr_decay at each listed iteration
  double lr_decay = 0.1;
  int checkpoint_every = 0;   // 0 disables periodic checkpoints
  int log_every = 10;

  void validate() const;
  /// Learning rate in effect for 0-based iteration `iter`.
  double lr_at(int iter) const;
};

struct MetricsRow {
  std::uint64_t iter = 0;
  double loss = 0.0;
  double acc = 0.0;
  double seconds = 0.0;
};

/// Training telemetry; rows are averages over the iterations since the previous row.
struct MetricsLog {
  std::vector<MetricsRow> rows;

  /// Throws std::invalid_argument unless row.iter is strictly increasing.
  void append(const MetricsRow& row);
  /// CSV with header `iter,loss,acc,seconds`. `with_time = false` writes 0 seconds.
  void write_csv(std::ostream& os, bool with_time = true) const;
  void write_csv(const std::filesystem::path& path, bool with_time = true) const;
  static MetricsLog read_csv(std::istream& is);
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  CfnConfig config;
  std::vector<Tensor<float>> params;      // CfnModel::parameters() order
  std::vector<Tensor<float>> velocities;  // same order
  std::uint64_t iteration = 0;            // completed iterations
  std::uint64_t seed = 0;                 // sampler master seed
  std::string rng_state;                  // sampler stream state at `iteration`

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Checkpoint make_checkpoint(CfnModel<float>& model, std::uint64_t iteration, std::uint64_t seed);
/// Copies parameters and optimizer state into `model` (configs must match).
void restore(CfnModel<float>& model, const Checkpoint& ckpt);
CfnModel<float> model_from_checkpoint(const Checkpoint& ckpt);

/// Little-endian: "CFNJ", u32 version, payload, u32 CRC-32 of everything before it.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Deterministic puzzle stream: global sample s belongs to epoch s / |data|
/// and visits records in a per-epoch shuffled order. A puzzle depends only
/// on (seed, epoch, record), so labels are redrawn every epoch.
class PuzzleSampler {
 public:
  PuzzleSampler(const Dataset& data, const PermutationSet& set, PuzzleConfig cfg, std::uint64_t seed);

  struct Location {
    std::uint64_t epoch;
    std::size_t record;
    std::uint64_t seed;
  };
  Location locate(std::uint64_t sample_index);
  PuzzleSample sample(std::uint64_t sample_index);
  std::vector<PuzzleSample> batch(std::uint64_t first_sample, int count);

  /// Label that sample `sample_index` will carry, without building the puzzle.
  int label_of(std::uint64_t sample_index);

  std::string state() const;

 private:
  const std::vector<std::size_t>& order(std::uint64_t epoch);

  const Dataset* data_;
  const PermutationSet* set_;
  PuzzleConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t cached_epoch_ = ~std::uint64_t{0};
  std::vector<std::size_t> order_;
  std::uint64_t last_index_ = 0;
};

struct TrainResult {
  Checkpoint final;
  MetricsLog log;
};

using CheckpointSink = std::function<void(const Checkpoint&)>;

/// SGD on the permutation-classification loss. Resumes from `resume` when
/// given. Throws TrainingError on a non-finite loss.
TrainResult train(CfnModel<float>& model, const Dataset& data, const PermutationSet& set, const PuzzleConfig& pcfg,
                  const TrainConfig& cfg, const Checkpoint* resume = nullptr, const CheckpointSink& sink = {});

/// iterations * batch_size / dataset_size
double puzzles_per_image(double iterations, double batch_size, double dataset_size);

}  // namespace jigsaw
