#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "langsub/langsub.hpp"

namespace testing_helpers {

namespace fs = std::filesystem;

// Fresh per-test scratch directory under the system temp dir.
inline fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / "langsub_tests" /
             (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline langsub::Matrix gaussian(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  std::mt19937_64 rng(seed);
  return langsub::random_gaussian(rng, rows, cols);
}

// Fills every sample of a dump with N(0,1) floats.
inline void fill_random(langsub::ActivationDump& dump, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (std::uint32_t t = 0; t < dump.layers(); ++t)
    for (std::size_t l = 0; l < dump.language_count(); ++l)
      for (auto& v : dump.block(t, l)) v = dist(rng);
}

inline bool throws_kind(const std::function<void()>& f, langsub::ErrorKind kind) {
  try {
    f();
  } catch (const langsub::Error& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace testing_helpers
