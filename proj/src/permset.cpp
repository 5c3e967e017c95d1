#include "jigsaw/permset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "jigsaw/rng.hpp"

namespace jigsaw {

Permutation::Permutation(std::vector<int> mapping) : mapping_(std::move(mapping)) {
  const auto n = mapping_.size();
  if (n == 0) throw std::invalid_argument("Permutation: empty mapping");
  std::vector<char> seen(n, 0);
  for (const int v : mapping_) {
    if (v < 1 || static_cast<std::size_t>(v) > n || seen[static_cast<std::size_t>(v - 1)])
      throw std::invalid_argument("Permutation: mapping is not a bijection on {1..N}");
    seen[static_cast<std::size_t>(v - 1)] = 1;
  }
}

Permutation Permutation::identity(int n) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 1);
  return Permutation(std::move(m));
}

std::string Permutation::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < mapping_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(mapping_[i]);
  }
  return out;
}

Permutation Permutation::parse(const std::string& text) {
  std::vector<int> m;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(field, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("Permutation::parse: bad integer '" + field + "'");
    }
    if (used != field.size()) throw std::invalid_argument("Permutation::parse: bad integer '" + field + "'");
    m.push_back(v);
  }
  return Permutation(std::move(m));
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::max: return "max";
    case Objective::min: return "min";
    case Objective::middle: return "middle";
  }
  return "?";
}

Objective parse_objective(const std::string& s) {
  if (s == "max") return Objective::max;
  if (s == "min") return Objective::min;
  if (s == "middle") return Objective::middle;
  throw std::invalid_argument("unknown objective '" + s + "' (expected max, min or middle)");
}

int mismatch_count(const Permutation& p, const Permutation& q) {
  if (p.size() != q.size()) throw std::invalid_argument("hamming: permutations differ in length");
  int d = 0;
  for (int i = 0; i < p.size(); ++i) d += p[i] != q[i];
  return d;
}

double hamming(const Permutation& p, const Permutation& q) {
  return static_cast<double>(mismatch_count(p, q)) / p.size();
}

Permutation invert(const Permutation& p) {
  std::vector<int> inv(static_cast<std::size_t>(p.size()));
  for (int i = 0; i < p.size(); ++i) inv[static_cast<std::size_t>(p[i] - 1)] = i + 1;
  return Permutation(std::move(inv));
}

double average_hamming(std::span<const Permutation> entries) {
  if (entries.empty()) throw std::invalid_argument("average_hamming: empty set");
  if (entries.size() == 1) return 0.0;
  std::int64_t total = 0;
  for (std::size_t a = 0; a < entries.size(); ++a)
    for (std::size_t b = a + 1; b < entries.size(); ++b) total += mismatch_count(entries[a], entries[b]);
  const double pairs = 0.5 * static_cast<double>(entries.size()) * static_cast<double>(entries.size() - 1);
  return static_cast<double>(total) / (pairs * entries.front().size());
}

double average_hamming(const PermutationSet& set) { return average_hamming(std::span(set.entries())); }

PermutationSet::PermutationSet(std::vector<Permutation> entries, int grid, Objective objective,
                               std::uint64_t seed)
    : entries_(std::move(entries)), grid_(grid), objective_(objective), seed_(seed) {
  if (grid_ < 2) throw std::invalid_argument("PermutationSet: grid must be at least 2");
  if (entries_.empty()) throw std::invalid_argument("PermutationSet: no entries");
  for (const auto& e : entries_)
    if (e.size() != grid_ * grid_)
      throw std::invalid_argument("PermutationSet: entry length does not match grid^2");
  auto sorted = entries_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("PermutationSet: duplicate entries");
  avg_hamming_ = average_hamming(std::span(entries_));
}

void PermutationSet::save(std::ostream& os) const {
  os << "grid=" << grid_ << '\n'
     << "objective=" << to_string(objective_) << '\n'
     << "seed=" << seed_ << '\n'
     << "count=" << entries_.size() << '\n';
  for (const auto& e : entries_) os << e.to_string() << '\n';
}

void PermutationSet::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save(os);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

namespace {

std::string header_value(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("permutation file: missing '" + key + "' header");
  const auto prefix = key + "=";
  if (line.rfind(prefix, 0) != 0)
    throw std::invalid_argument("permutation file: expected '" + prefix + "', got '" + line + "'");
  return line.substr(prefix.size());
}

}  // namespace

PermutationSet PermutationSet::load(std::istream& is) {
  const int grid = std::stoi(header_value(is, "grid"));
  const Objective objective = parse_objective(header_value(is, "objective"));
  const std::uint64_t seed = std::stoull(header_value(is, "seed"));
  const std::size_t count = std::stoull(header_value(is, "count"));
  std::vector<Permutation> entries;
  entries.reserve(count);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    entries.push_back(Permutation::parse(line));
  }
  if (entries.size() != count)
    throw std::invalid_argument("permutation file: count=" + std::to_string(count) + " but " +
                                std::to_string(entries.size()) + " entries");
  return PermutationSet(std::move(entries), grid, objective, seed);
}

PermutationSet PermutationSet::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return load(is);
}

std::vector<Permutation> enumerate_permutations(int n) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 1);
  std::vector<Permutation> out;
  do {
    out.emplace_back(m);
  } while (std::next_permutation(m.begin(), m.end()));
  return out;
}

PermutationSet generate_permutation_set(std::size_t n, int grid, Objective objective, std::uint64_t seed) {
  if (grid < 2) throw std::invalid_argument("generate_permutation_set: grid must be at least 2");
  if (grid > 3)
    throw UnsupportedScale("generate_permutation_set: grid " + std::to_string(grid) +
                           " needs a pool of (grid^2)! permutations; only grid <= 3 is supported");
  const int tiles = grid * grid;

  // Pool rows stored contiguously, lexicographic order.
  std::vector<std::uint8_t> pool;
  {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(tiles));
    std::iota(m.begin(), m.end(), std::uint8_t{1});
    do {
      pool.insert(pool.end(), m.begin(), m.end());
    } while (std::next_permutation(m.begin(), m.end()));
  }
  const std::size_t pool_size = pool.size() / static_cast<std::size_t>(tiles);
  if (n < 1 || n > pool_size)
    throw std::invalid_argument("generate_permutation_set: n must be in [1, " + std::to_string(pool_size) + "]");

  Rng rng(seed);
  std::vector<std::uint32_t> remaining(pool_size);
  std::iota(remaining.begin(), remaining.end(), 0u);
  // column_sum[k] = sum over selected entries of their mismatch count with pool row k,
  // i.e. the column sums of the selected-by-remaining distance matrix (times N).
  std::vector<std::int32_t> column_sum(pool_size, 0);

  std::vector<Permutation> selected;
  selected.reserve(n);
  std::size_t pick = rng.uniform_index(pool_size);  // position in `remaining`

  while (true) {
    const std::uint32_t row = remaining[pick];
    const std::uint8_t* chosen = &pool[static_cast<std::size_t>(row) * tiles];
    selected.emplace_back(std::vector<int>(chosen, chosen + tiles));
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    if (selected.size() == n) break;

    if (objective == Objective::middle) {
      pick = rng.uniform_index(remaining.size());
      continue;
    }

    for (const std::uint32_t k : remaining) {
      const std::uint8_t* cand = &pool[static_cast<std::size_t>(k) * tiles];
      std::int32_t d = 0;
      for (int t = 0; t < tiles; ++t) d += cand[t] != chosen[t];
      column_sum[k] += d;
    }
    // Strict comparison keeps the lowest pool index among ties.
    std::size_t best = 0;
    for (std::size_t r = 1; r < remaining.size(); ++r) {
      const auto v = column_sum[remaining[r]];
      const auto b = column_sum[remaining[best]];
      if (objective == Objective::max ? v > b : v < b) best = r;
    }
    pick = best;
  }
  return PermutationSet(std::move(selected), grid, objective, seed);
}

}  // namespace jigsaw
