#include "jigsaw/evalsuite.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>

namespace jigsaw {

namespace {

int argmax(const Eigen::Ref<const Eigen::RowVectorXf>& row) {
  Index arg = 0;
  row.maxCoeff(&arg);
  return static_cast<int>(arg);
}

}  // namespace

double puzzle_accuracy(const PuzzlePredictor& predict, const Dataset& data, const PermutationSet& set,
                       const PuzzleConfig& cfg, std::size_t n_samples, std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("puzzle_accuracy: empty dataset");
  if (n_samples == 0) throw std::invalid_argument("puzzle_accuracy: n_samples must be positive");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::size_t rec = i % data.size();
    const auto s = make_puzzle(data.images[rec], set, cfg, derive_seed(seed, {i}), data.ids[rec]);
    const Vector<float> scores = predict(s);
    correct += argmax(scores.transpose()) == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(n_samples);
}

double puzzle_accuracy(CfnModel<float>& model, const Dataset& data, const PermutationSet& set, const PuzzleConfig& cfg,
                       std::size_t n_samples, std::uint64_t seed, int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("puzzle_accuracy: empty dataset");
  if (n_samples == 0) throw std::invalid_argument("puzzle_accuracy: n_samples must be positive");
  if (set.grid() != cfg.grid || model.config().num_branches != cfg.tiles_per_puzzle())
    throw ConfigError("puzzle_accuracy: grid mismatch between model, permutation set and puzzle config");
  std::size_t correct = 0;
  for (std::size_t first = 0; first < n_samples; first += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n_samples, first + static_cast<std::size_t>(batch_size));
    std::vector<PuzzleSample> batch;
    for (std::size_t i = first; i < end; ++i) {
      const std::size_t rec = i % data.size();
      batch.push_back(make_puzzle(data.images[rec], set, cfg, derive_seed(seed, {i}), data.ids[rec]));
    }
    const Tensor<float> logits = model.forward(stack_puzzles(batch));
    for (std::size_t i = 0; i < batch.size(); ++i)
      correct += argmax(logits.matrix().row(static_cast<Index>(i))) == batch[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(n_samples);
}

// ---------------------------------------------------------------- transfer

void detection_fill_init(Sequential<float>& net, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xf111}));
  net.init(rng, WeightInit::gaussian(0.1, 0.001));
}

TransferResult transfer_lock_and_retrain(const CfnModel<float>& model, const LockSpec& lock, const LabeledTiles& train_set,
                                         const LabeledTiles& test_set, const TransferConfig& cfg) {
  if (train_set.size() == 0 || test_set.size() == 0) throw std::invalid_argument("transfer: empty dataset");
  const int classes = 1 + std::max(*std::max_element(train_set.labels.begin(), train_set.labels.end()),
                                   *std::max_element(test_set.labels.begin(), test_set.labels.end()));
  if (classes < 2) throw std::invalid_argument("transfer: need at least 2 classes");

  const Sequential<float>& src = model.branch();
  const auto branch_params = src.parameterized_layers();
  if (lock.lock_upto < 0 || lock.lock_upto > static_cast<int>(branch_params.size()))
    throw std::invalid_argument("transfer: lock_upto " + std::to_string(lock.lock_upto) + " outside [0, " +
                                std::to_string(branch_params.size()) + "]");

  auto specs = src.specs();
  specs.push_back(LayerSpec::relu("relu_t"));
  specs.push_back(LayerSpec::linear("classifier", classes));
  Sequential<float> net(specs, src.sample_input_shape());

  Rng init(derive_seed(cfg.seed, {0x7a5f}));
  std::vector<std::size_t> locked;
  for (std::size_t j = 0; j < branch_params.size(); ++j) {
    const std::size_t layer = branch_params[j];
    const bool is_locked = static_cast<int>(j) < lock.lock_upto;
    if (is_locked || !lock.reinit_rest) {
      net.params(layer).weight.value = src.params(layer).weight.value;
      net.params(layer).bias.value = src.params(layer).bias.value;
    } else {
      net.init_layer(layer, init, cfg.init);
    }
    if (is_locked) locked.push_back(layer);
  }
  net.init_layer(specs.size() - 1, init, output_init());

  std::vector<Tensor<float>> snapshot;
  for (const auto l : locked) {
    snapshot.push_back(net.params(l).weight.value);
    snapshot.push_back(net.params(l).bias.value);
  }

  std::vector<Parameter<float>*> trainable;
  for (const auto l : net.parameterized_layers())
    if (std::find(locked.begin(), locked.end(), l) == locked.end()) {
      trainable.push_back(&net.params(l).weight);
      trainable.push_back(&net.params(l).bias);
    }

  Rng rng(derive_seed(cfg.seed, {0xba7c}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<int> labels(static_cast<std::size_t>(cfg.batch_size));
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Tensor<float>> tiles;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      tiles.push_back(train_set.tiles[i]);
      labels[static_cast<std::size_t>(b)] = train_set.labels[i];
    }
    net.zero_grad();
    const auto r = softmax_cross_entropy(net.forward(stack_tiles(tiles)), std::span<const int>(labels));
    if (!std::isfinite(r.loss)) throw TrainingError("transfer: non-finite loss at iteration " + std::to_string(it + 1));
    net.backward(r.grad);
    for (auto* p : trainable) sgd_step(p->value, p->grad, p->velocity, cfg.learning_rate, cfg.momentum);
  }
  net.zero_grad();

  TransferResult out;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < test_set.size(); first += 256) {
    const std::size_t end = std::min(test_set.size(), first + 256);
    std::vector<Tensor<float>> tiles(test_set.tiles.begin() + static_cast<std::ptrdiff_t>(first),
                                     test_set.tiles.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor<float> logits = net.forward(stack_tiles(tiles));
    for (std::size_t i = first; i < end; ++i)
      correct += argmax(logits.matrix().row(static_cast<Index>(i - first))) == test_set.labels[i];
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
  std::size_t s = 0;
  for (const auto l : locked) {
    out.locked_unchanged = out.locked_unchanged && net.params(l).weight.value == snapshot[s++];
    out.locked_unchanged = out.locked_unchanged && net.params(l).bias.value == snapshot[s++];
  }
  out.classifier = std::move(net);
  return out;
}

// ---------------------------------------------------------------- activation ranking

std::vector<RankedPatch> top_activations(Sequential<float>& branch, std::size_t layer, Index channel,
                                         const std::vector<Patch>& patches, std::size_t k) {
  if (layer >= branch.num_layers()) throw std::invalid_argument("top_activations: layer out of range");
  const Shape& out_shape = branch.layer_output_shape(layer);
  if (channel < 0 || channel >= out_shape.at(0)) throw std::invalid_argument("top_activations: channel out of range");
  std::set<int> sources;
  for (const auto& p : patches) sources.insert(p.source_image);
  if (k > sources.size())
    throw std::invalid_argument("top_activations: k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(sources.size()) + " distinct source images");
  if (patches.empty()) return {};

  std::vector<Tensor<float>> px;
  for (const auto& p : patches) px.push_back(p.pixels);
  const Tensor<float> act = branch.forward(stack_tiles(px), layer + 1);
  const Index per_channel = shape_size(out_shape) / out_shape[0];

  std::vector<RankedPatch> all;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Index base = (static_cast<Index>(i) * out_shape[0] + channel) * per_channel;
    const double score = act.values().segment(base, per_channel).cast<double>().cwiseAbs().mean();
    all.push_back({patches[i].id, patches[i].source_image, score});
  }
  std::sort(all.begin(), all.end(), [](const RankedPatch& a, const RankedPatch& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  std::vector<RankedPatch> out;
  std::set<int> used;
  for (const auto& r : all) {
    if (out.size() == k) break;
    if (used.insert(r.source_image).second) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------- retrieval

FeatureIndex::FeatureIndex(std::vector<std::string> ids, RowMatrix<float> features, std::vector<int> labels)
    : ids_(std::move(ids)), features_(std::move(features)), labels_(std::move(labels)) {
  if (static_cast<Index>(ids_.size()) != features_.rows())
    throw std::invalid_argument("FeatureIndex: one id per feature row required");
  if (!labels_.empty() && labels_.size() != ids_.size())
    throw std::invalid_argument("FeatureIndex: labels must match ids");
  for (Index i = 0; i < features_.rows(); ++i) {
    const double n = features_.row(i).cast<double>().norm();
    if (!(n > 0.0)) throw std::invalid_argument("FeatureIndex: zero feature vector for " + ids_[static_cast<std::size_t>(i)]);
    features_.row(i) = (features_.row(i).cast<double>() / n).cast<float>();
  }
}

std::vector<RetrievalHit> retrieve(const Vector<float>& query, const FeatureIndex& index, std::size_t k) {
  if (query.size() != index.dim()) throw std::invalid_argument("retrieve: query dimension does not match index");
  if (k > index.size()) throw std::invalid_argument("retrieve: k exceeds index size");
  const double qn = query.cast<double>().norm();
  if (!(qn > 0.0)) throw std::invalid_argument("retrieve: zero query vector");
  const Eigen::VectorXd q = query.cast<double>() / qn;
  const Eigen::VectorXd sims = index.features().cast<double>() * q;
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[static_cast<Index>(a)] > sims[static_cast<Index>(b)]; });
  std::vector<RetrievalHit> hits;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = order[r];
    hits.push_back({i, index.ids()[i], std::clamp(sims[static_cast<Index>(i)], -1.0, 1.0)});
  }
  return hits;
}

std::vector<PrPoint> precision_recall(const std::vector<int>& ranked_labels, int query_label) {
  const auto total = std::count(ranked_labels.begin(), ranked_labels.end(), query_label);
  if (total == 0) throw std::invalid_argument("precision_recall: no relevant items");
  std::vector<PrPoint> out;
  long hits = 0;
  for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
    hits += ranked_labels[r] == query_label;
    out.push_back({static_cast<double>(hits) / static_cast<double>(total), static_cast<double>(hits) / static_cast<double>(r + 1)});
  }
  return out;
}

RowMatrix<float> extract_features(Sequential<float>& branch, const std::vector<Image>& images, const PuzzleConfig& cfg,
                                  std::size_t stop) {
  if (images.empty()) return {};
  std::vector<Tensor<float>> tiles;
  for (const auto& img : images) {
    const int side = std::min(img.height(), img.width());
    tiles.push_back(normalize(resize_shorter_side(center_crop_to_square(img, side), cfg.tile), cfg));
  }
  const Tensor<float> act = branch.forward(stack_tiles(tiles), stop);
  return RowMatrix<float>(act.matrix(static_cast<Index>(images.size())));
}

void write_pr_csv(const std::vector<PrPoint>& pr, std::ostream& os) {
  os << "rank,recall,precision\n";
  for (std::size_t i = 0; i < pr.size(); ++i) os << i + 1 << ',' << pr[i].recall << ',' << pr[i].precision << '\n';
}

void write_hits(const std::vector<RetrievalHit>& hits, std::ostream& os) {
  for (const auto& h : hits) os << h.id << ' ' << h.similarity << '\n';
}

}  // namespace jigsaw
