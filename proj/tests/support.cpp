#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "damqa/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace testing {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("damqa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

damqa::ImageBuffer pattern_image(int width, int height, std::uint32_t seed) {
  damqa::ImageBuffer img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto* px = &img.data[(static_cast<std::size_t>(y) * width + x) * 3];
      px[0] = static_cast<std::uint8_t>((x * 7 + seed * 31) & 0xFF);
      px[1] = static_cast<std::uint8_t>((y * 5 + seed * 17) & 0xFF);
      px[2] = static_cast<std::uint8_t>(((x ^ y) + seed * 13) & 0xFF);
    }
  }
  return img;
}

std::string Gen::string(const std::vector<std::string>& alphabet, int max_len) {
  const int n = integer(0, max_len);
  std::string s;
  for (int i = 0; i < n; ++i) s += pick(alphabet);
  return s;
}

std::vector<damqa::PatchRect> brute_force_patches(int width, int height, int window, int stride) {
  if (width < window || height < window) return {{0, 0, width, height}};
  const auto on_axis = [&](int p, int extent) { return p % stride == 0 || p == extent - window; };
  std::vector<damqa::PatchRect> out;
  for (int y = 0; y + window <= height; ++y) {
    if (!on_axis(y, height)) continue;
    for (int x = 0; x + window <= width; ++x) {
      if (on_axis(x, width)) out.push_back({x, y, window, window});
    }
  }
  return out;
}

std::size_t recursive_levenshtein(const std::u32string& a, const std::u32string& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const auto ta = a.substr(1);
  const auto tb = b.substr(1);
  if (a[0] == b[0]) return recursive_levenshtein(ta, tb);
  return 1 + std::min({recursive_levenshtein(ta, b), recursive_levenshtein(a, tb),
                       recursive_levenshtein(ta, tb)});
}

std::string brute_force_vote(const std::string& full_answer, long long full_weight_num,
                             const std::vector<RationalView>& patches) {
  long long total = 0;
  for (const auto& p : patches) total += p.weight_num;
  if (total == 0) return full_answer;

  std::set<std::string> candidates{full_answer};
  for (const auto& p : patches) candidates.insert(p.answer);
  std::optional<std::string> best;
  long long best_score = -1;
  for (const auto& a : candidates) {
    long long score = a == full_answer ? full_weight_num : 0;
    for (const auto& p : patches) {
      if (p.answer == a) score += p.weight_num;
    }
    const bool better = score > best_score ||
                        (score == best_score && a == full_answer) ||
                        (score == best_score && *best != full_answer && a < *best);
    if (better) {
      best = a;
      best_score = score;
    }
  }
  return *best;
}

fs::path write_fixture_dataset(const fs::path& dir) {
  struct Item {
    std::string id;
    int w, h;
    std::string question;
    std::vector<std::string> answers;
  };
  const std::vector<Item> items = {
      {"s00", 1024, 1024, "What animal is shown?", {"cat"}},
      {"s01", 640, 480, "What is the total?", {"42"}},
      {"s02", 2000, 700, "Which year?", {"1999"}},
      {"s03", 512, 512, "Who signed the letter?", {"J. Smith"}},
      {"s04", 800, 1200, "What is the title?", {"Annual Report"}},
      {"s05", 1024, 600, "What colour is the bar?", {"blue"}},
      {"s06", 300, 300, "How many items?", {"7"}},
      {"s07", 1500, 1000, "What is the brand?", {"Acme"}},
      {"s08", 900, 900, "Unanswerable question?", {"unanswerable"}},
      {"s09", 700, 1000, "Which city?", {"Paris"}},
  };
  fs::create_directories(dir / "images");
  std::vector<damqa::SampleRecord> records;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const auto name = it.id + ".png";
    damqa::save_png(dir / "images" / name, pattern_image(it.w, it.h, static_cast<std::uint32_t>(i)));
    records.push_back({it.id, name, it.question, it.answers, std::nullopt, std::nullopt, "fixture"});
  }
  const auto dataset = dir / "dataset.jsonl";
  damqa::write_canonical(records, dataset);

  const json fixture = {
      {"answers",
       {
           // Full view wins outright.
           {"s00", {{"0", "cat"}, {"1", "dog"}, {"2", "unanswerable"}, {"*", "cat"}}},
           // Patches outvote the full view.
           {"s01", {{"0", "41"}, {"*", "42"}}},
           // Every patch abstains: fallback to the full answer.
           {"s02", {{"0", "1999"}, {"*", "Unanswerable."}}},
           // Everything abstains.
           {"s03", {{"*", "unanswerable"}}},
           // Mixed patches with whitespace to strip.
           {"s04", {{"0", " Annual Report\n"}, {"1", "Report"}, {"2", "Report"}, {"*", "Annual Report"}}},
           // Most patch area abstains; higher multipliers flip it.
           {"s05", {{"0", "blue"}, {"1", "blue"}, {"*", "unanswerable"}}},
           // One patch, equal to the full answer.
           {"s06", {{"*", "7"}}},
           // Simulated backend failure on one view.
           {"s07", {{"0", "Acme"}, {"3", nullptr}, {"*", "Acme"}}},
           {"s08", {{"0", "unanswerable"}, {"1", "maybe"}, {"*", "unanswerable"}}},
           // s09 has no entry: answers come from the digest pool.
       }},
      {"answer_pool", {"Paris", "London", "unanswerable"}},
      {"completions", {{"s00", R"({"matched": 1, "total": 1})"}, {"s01", "no verdict"}}},
      {"default_completion", R"(Looks right. {"matched": 1, "total": 1})"},
  };
  write_text(dir / "mock.json", fixture.dump(2));
  return dataset;
}

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof addr;
  const bool ok = ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0 &&
                  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0;
  ::close(fd);
  if (!ok) throw std::runtime_error("could not pick a free port");
  return ntohs(addr.sin_port);
}

json mock_config(const fs::path& fixture, int concurrency) {
  return {{"mode", "sliding"},
          {"backend", {{"kind", "mock"}, {"fixture", fixture.string()}}},
          {"judge", {{"backend", {{"kind", "mock"}, {"fixture", fixture.string()}}}}},
          {"concurrency", concurrency}};
}

}  // namespace testing
