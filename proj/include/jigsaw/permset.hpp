#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jigsaw {

/// A tile configuration: a bijection on {1..N} stored 1-based.
///
/// Placement convention used everywhere in the project: applying p to a list
/// of items puts input item p[i] at output position i.
class Permutation {
 public:
  Permutation() = default;
  /// Throws std::invalid_argument unless `mapping` is a bijection on {1..N}.
  explicit Permutation(std::vector<int> mapping);

  static Permutation identity(int n);

  int size() const { return static_cast<int>(mapping_.size()); }
  int operator[](int i) const { return mapping_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& mapping() const { return mapping_; }

  std::string to_string() const;  // "3,1,2,9,5,4,8,7,6"
  static Permutation parse(const std::string& text);

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> mapping_;
};

enum class Objective { max, min, middle };

std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

/// Error for configurations the generator refuses to handle (grid > 3).
class UnsupportedScale : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of positions where p and q differ.
int mismatch_count(const Permutation& p, const Permutation& q);

/// Normalized Hamming distance |{i : p_i != q_i}| / N.
double hamming(const Permutation& p, const Permutation& q);

Permutation invert(const Permutation& p);

/// out[i] = items[p[i] - 1]
template <typename T>
std::vector<T> apply_permutation(const Permutation& p, std::span<const T> items) {
  if (static_cast<int>(items.size()) != p.size())
    throw std::invalid_argument("apply_permutation: item count does not match permutation length");
  std::vector<T> out;
  out.reserve(items.size());
  for (int i = 0; i < p.size(); ++i) out.push_back(items[static_cast<std::size_t>(p[i] - 1)]);
  return out;
}

template <typename T>
std::vector<T> apply_permutation(const Permutation& p, const std::vector<T>& items) {
  return apply_permutation(p, std::span<const T>(items));
}

/// Mean pairwise normalized Hamming distance; 0 for a single entry.
double average_hamming(std::span<const Permutation> entries);

/// The pretext label space. Entry index is the class label.
class PermutationSet {
 public:
  PermutationSet(std::vector<Permutation> entries, int grid, Objective objective, std::uint64_t seed);

  const std::vector<Permutation>& entries() const { return entries_; }
  const Permutation& operator[](std::size_t label) const { return entries_.at(label); }
  std::size_t size() const { return entries_.size(); }
  int grid() const { return grid_; }
  Objective objective() const { return objective_; }
  std::uint64_t seed() const { return seed_; }
  double avg_hamming() const { return avg_hamming_; }

  void save(std::ostream& os) const;
  void save(const std::filesystem::path& path) const;
  static PermutationSet load(std::istream& is);
  static PermutationSet load(const std::filesystem::path& path);

 private:
  std::vector<Permutation> entries_;
  int grid_;
  Objective objective_;
  std::uint64_t seed_;
  double avg_hamming_;
};

double average_hamming(const PermutationSet& set);

/// All permutations of {1..n} in lexicographic order.
std::vector<Permutation> enumerate_permutations(int n);

/// Greedy selection of `n` permutations of grid*grid tiles.
///
/// The first entry is drawn uniformly from the full lexicographic pool. Each
/// later entry is taken from the remaining pool: for max/min the entry whose
/// summed Hamming distance to the already selected entries is largest/smallest
/// (lowest pool index on ties), for middle a uniform draw.
PermutationSet generate_permutation_set(std::size_t n, int grid, Objective objective, std::uint64_t seed);

}  // namespace jigsaw
