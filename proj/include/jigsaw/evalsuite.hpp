#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "jigsaw/cfn.hpp"
#include "jigsaw/synth.hpp"
#include "jigsaw/trainer.hpp"

namespace jigsaw {

// ---------------------------------------------------------------- puzzle accuracy

/// Maps a puzzle to class scores; the argmax is the prediction.
using PuzzlePredictor = std::function<Vector<float>(const PuzzleSample&)>;

/// Fraction of `n_samples` held-out puzzles whose argmax score equals the
/// label. Puzzle i uses image i mod |data| and seed derive_seed(seed, {i}).
double puzzle_accuracy(const PuzzlePredictor& predict, const Dataset& data, const PermutationSet& set,
                       const PuzzleConfig& cfg, std::size_t n_samples, std::uint64_t seed);

double puzzle_accuracy(CfnModel<float>& model, const Dataset& data, const PermutationSet& set, const PuzzleConfig& cfg,
                       std::size_t n_samples, std::uint64_t seed, int batch_size = 64);

// ---------------------------------------------------------------- transfer

/// Locks the first `lock_upto` parameterized branch layers (0 = nothing locked).
struct LockSpec {
  int lock_upto = 0;
  bool reinit_rest = true;
};

struct TransferConfig {
  int iterations = 300;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  WeightInit init = WeightInit::he();  // reinitialized branch layers; the new head uses output_init()
  std::uint64_t seed = 1;
};

struct TransferResult {
  double accuracy = 0.0;       // held-out accuracy of the retrained classifier
  bool locked_unchanged = true;  // locked tensors bit-identical after retraining
  Sequential<float> classifier;  // branch layers + relu + new linear head
};

/// Copies the model's branch, locks layers per `lock`, reinitializes the
/// remaining branch layers (when reinit_rest) and a fresh linear head, trains
/// on `train_set`, and reports accuracy on `test_set`.
TransferResult transfer_lock_and_retrain(const CfnModel<float>& model, const LockSpec& lock, const LabeledTiles& train_set,
                                         const LabeledTiles& test_set, const TransferConfig& cfg);

/// Fills every conv/linear layer with weights ~ N(0.1, 0.001) and zero biases
/// (the detection-transfer fill for layers not covered by pretraining).
void detection_fill_init(Sequential<float>& net, std::uint64_t seed);

// ---------------------------------------------------------------- activation ranking

struct Patch {
  int id = 0;
  int source_image = 0;
  Tensor<float> pixels;  // [C, H, W] matching the branch input
};

struct RankedPatch {
  int id;
  int source_image;
  double score;  // mean absolute response of the channel
};

/// Runs the branch through layer `layer` (inclusive) and ranks patches by the
/// mean absolute response of `channel`; ties go to the lower id. Keeps at
/// most one patch per source image and returns the top k.
std::vector<RankedPatch> top_activations(Sequential<float>& branch, std::size_t layer, Index channel,
                                         const std::vector<Patch>& patches, std::size_t k);

// ---------------------------------------------------------------- retrieval

/// Unit-norm feature vectors, one row per item.
class FeatureIndex {
 public:
  FeatureIndex() = default;
  /// Rows of `features` are normalized; zero rows are rejected.
  FeatureIndex(std::vector<std::string> ids, RowMatrix<float> features, std::vector<int> labels = {});

  std::size_t size() const { return ids_.size(); }
  Index dim() const { return features_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<int>& labels() const { return labels_; }
  const RowMatrix<float>& features() const { return features_; }

 private:
  std::vector<std::string> ids_;
  RowMatrix<float> features_;
  std::vector<int> labels_;
};

struct RetrievalHit {
  std::size_t index;
  std::string id;
  double similarity;
};

/// Top-k items by inner product with the normalized query, descending;
/// ties go to the lower index.
std::vector<RetrievalHit> retrieve(const Vector<float>& query, const FeatureIndex& index, std::size_t k);

struct PrPoint {
  double recall;
  double precision;
};

/// One point per rank r: precision = relevant in top r / r, recall = relevant in top r / total relevant.
std::vector<PrPoint> precision_recall(const std::vector<int>& ranked_labels, int query_label);

/// Branch features for single images: each image is center-cropped to a
/// square, resized to the tile side and normalized, then run through
/// branch layers [0, stop). The result is flattened per image.
RowMatrix<float> extract_features(Sequential<float>& branch, const std::vector<Image>& images, const PuzzleConfig& cfg,
                                  std::size_t stop);

void write_pr_csv(const std::vector<PrPoint>& pr, std::ostream& os);
void write_hits(const std::vector<RetrievalHit>& hits, std::ostream& os);

}  // namespace jigsaw
