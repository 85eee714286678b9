#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "damqa/datasets.hpp"
#include "damqa/views.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

/// Deterministic RGB test pattern; differs per seed.
damqa::ImageBuffer pattern_image(int width, int height, std::uint32_t seed = 0);

/// Seeded generator wrappers used by the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return integer(0, 1) == 1; }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  /// String over `alphabet` (UTF-8 pieces) with length in [0, max_len].
  std::string string(const std::vector<std::string>& alphabet, int max_len);
  template <typename T>
  const T& pick(const std::vector<T>& v) { return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))]; }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Oracles -------------------------------------------------------------------

/// Tests every coordinate in [0, extent - window] against the grid-or-edge
/// rule instead of generating positions.
std::vector<damqa::PatchRect> brute_force_patches(int width, int height, int window, int stride);

/// Plain recursion over code points, no memoisation. Small inputs only.
std::size_t recursive_levenshtein(const std::u32string& a, const std::u32string& b);

/// Exact vote over integer numerators sharing one denominator.
/// `full_weight_num` already reflects whether the full view votes.
struct RationalView {
  std::string answer;
  long long weight_num = 0;
};
std::string brute_force_vote(const std::string& full_answer, long long full_weight_num,
                             const std::vector<RationalView>& patches);

/// Writes a 10-sample dataset with PNG images of varied sizes and a mock
/// fixture keyed by sample id and view index (some views abstain, one view
/// falls through to the answer pool). Returns the dataset path; images live
/// in `dir / "images"`, the fixture at `dir / "mock.json"`.
std::filesystem::path write_fixture_dataset(const std::filesystem::path& dir);

/// A loopback TCP port that was free a moment ago. The probing socket is
/// closed before returning.
int free_port();

/// Run config JSON using the mock backend at `fixture`.
nlohmann::json mock_config(const std::filesystem::path& fixture, int concurrency = 1);

}  // namespace testing
