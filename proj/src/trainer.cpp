#include "jigsaw/trainer.hpp"

#include <zlib.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace jigsaw {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
  if (checkpoint_every < 0) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
}

double TrainConfig::lr_at(int iter) const {
  double lr = learning_rate;
  for (const int s : lr_steps)
    if (iter >= s) lr *= lr_decay;
  return lr;
}

// ---------------------------------------------------------------- metrics

void MetricsLog::append(const MetricsRow& row) {
  if (!rows.empty() && row.iter <= rows.back().iter)
    throw std::invalid_argument("MetricsLog: iterations must be strictly increasing");
  rows.push_back(row);
}

void MetricsLog::write_csv(std::ostream& os, bool with_time) const {
  os << "iter,loss,acc,seconds\n";
  for (const auto& r : rows) {
    os << r.iter << ',' << std::setprecision(9) << r.loss << ',' << r.acc << ',' << std::fixed << std::setprecision(3)
       << (with_time ? r.seconds : 0.0) << std::defaultfloat << '\n';
  }
}

void MetricsLog::write_csv(const std::filesystem::path& path, bool with_time) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_csv(os, with_time);
}

MetricsLog MetricsLog::read_csv(std::istream& is) {
  MetricsLog log;
  std::string line;
  if (!std::getline(is, line) || line != "iter,loss,acc,seconds")
    throw std::invalid_argument("metrics CSV: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricsRow r;
    char c1, c2, c3;
    if (!(ls >> r.iter >> c1 >> r.loss >> c2 >> r.acc >> c3 >> r.seconds) || c1 != ',' || c2 != ',' || c3 != ',')
      throw std::invalid_argument("metrics CSV: malformed row '" + line + "'");
    log.append(r);
  }
  return log;
}

// ---------------------------------------------------------------- checkpoint

Checkpoint make_checkpoint(CfnModel<float>& model, std::uint64_t iteration, std::uint64_t seed) {
  Checkpoint c;
  c.config = model.config();
  for (auto* p : model.parameters()) {
    c.params.push_back(p->value);
    c.velocities.push_back(p->velocity);
  }
  c.iteration = iteration;
  c.seed = seed;
  std::ostringstream os;
  os << "sampler seed=" << seed << " next=" << iteration;
  c.rng_state = os.str();
  return c;
}

void restore(CfnModel<float>& model, const Checkpoint& ckpt) {
  if (!(model.config() == ckpt.config)) throw CheckpointError("checkpoint config does not match the model");
  auto params = model.parameters();
  if (params.size() != ckpt.params.size() || params.size() != ckpt.velocities.size())
    throw CheckpointError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.shape() != ckpt.params[i].shape() || params[i]->value.shape() != ckpt.velocities[i].shape())
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " has the wrong shape");
    params[i]->value = ckpt.params[i];
    params[i]->velocity = ckpt.velocities[i];
    params[i]->grad.values().setZero();
  }
}

CfnModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  CfnModel<float> m(ckpt.config);
  restore(m, ckpt);
  return m;
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  void tensor(const Tensor<float>& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (const Index d : t.shape()) u64(static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) u32(std::bit_cast<std::uint32_t>(t[i]));
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw CheckpointError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_++]) << (8 * i);
    return v;
  }
  std::string str() {
    const auto len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  Tensor<float> tensor() {
    const auto rank = u32();
    if (rank > 8) throw CheckpointError("checkpoint tensor rank too large");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<Index>(u64()));
      count *= static_cast<std::uint64_t>(shape.back());
    }
    need(count * 4);
    Tensor<float> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(u32());
    return t;
  }
  bool done() const { return pos_ == n_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

constexpr char kMagic[4] = {'C', 'F', 'N', 'J'};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  if (c.params.size() != c.velocities.size()) throw CheckpointError("checkpoint params/velocities mismatch");
  Writer w;
  w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  w.str(c.config.to_text());
  w.u64(c.iteration);
  w.u64(c.seed);
  w.str(c.rng_state);
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& t : c.params) w.tensor(t);
  for (const auto& t : c.velocities) w.tensor(t);
  w.u32(crc32_of(w.buf.data(), w.buf.size()));
  return std::move(w.buf);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  Reader head(bytes.data() + 4, 4);
  const auto version = head.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.data() + body, 4);
  if (tail.u32() != crc32_of(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(bytes.data() + 8, body - 8);
  Checkpoint c;
  try {
    c.config = CfnConfig::from_text(r.str());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  c.iteration = r.u64();
  c.seed = r.u64();
  c.rng_state = r.str();
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) c.params.push_back(r.tensor());
  for (std::uint32_t i = 0; i < n; ++i) c.velocities.push_back(r.tensor());
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// ---------------------------------------------------------------- sampler

PuzzleSampler::PuzzleSampler(const Dataset& data, const PermutationSet& set, PuzzleConfig cfg, std::uint64_t seed)
    : data_(&data), set_(&set), cfg_(std::move(cfg)), seed_(seed) {
  if (data.size() == 0) throw std::invalid_argument("PuzzleSampler: empty dataset");
  if (set.grid() != cfg_.grid) throw ConfigError("PuzzleSampler: permutation set grid does not match puzzle config");
  cfg_.validate();
}

const std::vector<std::size_t>& PuzzleSampler::order(std::uint64_t epoch) {
  if (epoch != cached_epoch_) {
    order_.resize(data_->size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, {0x04de7, epoch}));
    rng.shuffle(order_.begin(), order_.end());
    cached_epoch_ = epoch;
  }
  return order_;
}

PuzzleSampler::Location PuzzleSampler::locate(std::uint64_t s) {
  const std::uint64_t n = data_->size();
  const std::uint64_t epoch = s / n;
  const std::size_t record = order(epoch)[static_cast<std::size_t>(s % n)];
  return {epoch, record, sample_seed(seed_, epoch, record)};
}

PuzzleSample PuzzleSampler::sample(std::uint64_t s) {
  const auto loc = locate(s);
  last_index_ = s + 1;
  return make_puzzle(data_->images[loc.record], *set_, cfg_, loc.seed, data_->ids[loc.record]);
}

std::vector<PuzzleSample> PuzzleSampler::batch(std::uint64_t first, int count) {
  std::vector<PuzzleSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample(first + static_cast<std::uint64_t>(i)));
  return out;
}

int PuzzleSampler::label_of(std::uint64_t s) { return draw_puzzle_label(locate(s).seed, set_->size()); }

std::string PuzzleSampler::state() const {
  std::ostringstream os;
  os << "sampler seed=" << seed_ << " next=" << last_index_;
  return os.str();
}

// ---------------------------------------------------------------- training loop

TrainResult train(CfnModel<float>& model, const Dataset& data, const PermutationSet& set, const PuzzleConfig& pcfg,
                  const TrainConfig& cfg, const Checkpoint* resume, const CheckpointSink& sink) {
  cfg.validate();
  pcfg.validate();
  const CfnConfig& mc = model.config();
  if (mc.num_branches != pcfg.tiles_per_puzzle() || set.grid() != pcfg.grid)
    throw ConfigError("train: grid mismatch between model, permutation set and puzzle config");
  if (mc.num_classes != static_cast<Index>(set.size()))
    throw ConfigError("train: model has " + std::to_string(mc.num_classes) + " classes but the permutation set has " +
                      std::to_string(set.size()));
  if (mc.tile_side != pcfg.tile) throw ConfigError("train: model tile side does not match puzzle tile");

  std::uint64_t start = 0;
  if (resume) {
    restore(model, *resume);
    if (resume->seed != cfg.seed) throw ConfigError("train: resume checkpoint was written with a different seed");
    start = resume->iteration;
  }

  PuzzleSampler sampler(data, set, pcfg, cfg.seed);
  auto params = model.parameters();
  model.zero_grad();

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  double loss_sum = 0.0, acc_sum = 0.0;
  int pending = 0;
  std::vector<int> labels(static_cast<std::size_t>(cfg.batch_size));

  for (std::uint64_t it = start; it < static_cast<std::uint64_t>(cfg.iterations); ++it) {
    const auto samples = sampler.batch(it * static_cast<std::uint64_t>(cfg.batch_size), cfg.batch_size);
    for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].label;

    const Tensor<float> logits = model.forward(stack_puzzles(samples));
    const auto lr_res = softmax_cross_entropy(logits, std::span<const int>(labels));
    if (!std::isfinite(lr_res.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss " << lr_res.loss << " at iteration " << it + 1 << " (lr " << cfg.lr_at(static_cast<int>(it))
          << "); aborting";
      throw TrainingError(msg.str());
    }
    model.backward(lr_res.grad);
    const double lr = cfg.lr_at(static_cast<int>(it));
    for (auto* p : params) {
      sgd_step(p->value, p->grad, p->velocity, lr, cfg.momentum);
      p->grad.values().setZero();
    }

    int correct = 0;
    for (Index i = 0; i < logits.dim(0); ++i) {
      Index arg;
      logits.matrix().row(i).maxCoeff(&arg);
      correct += arg == labels[static_cast<std::size_t>(i)];
    }
    loss_sum += lr_res.loss;
    acc_sum += static_cast<double>(correct) / cfg.batch_size;
    ++pending;

    const std::uint64_t done = it + 1;
    if (done % static_cast<std::uint64_t>(cfg.log_every) == 0 || done == static_cast<std::uint64_t>(cfg.iterations)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.append({done, loss_sum / pending, acc_sum / pending, secs});
      loss_sum = acc_sum = 0.0;
      pending = 0;
    }
    if (sink && cfg.checkpoint_every > 0 && done % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0)
      sink(make_checkpoint(model, done, cfg.seed));
  }
  result.final = make_checkpoint(model, static_cast<std::uint64_t>(cfg.iterations), cfg.seed);
  return result;
}

double puzzles_per_image(double iterations, double batch_size, double dataset_size) {
  if (!(dataset_size > 0.0)) throw std::invalid_argument("puzzles_per_image: dataset size must be positive");
  if (!(iterations > 0.0) || !(batch_size > 0.0))
    throw std::invalid_argument("puzzles_per_image: iterations and batch size must be positive");
  return iterations * batch_size / dataset_size;
}

}  // namespace jigsaw
