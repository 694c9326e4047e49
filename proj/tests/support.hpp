#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "slidesift/raster.hpp"

namespace testsupport {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("slidesift_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

inline slidesift::RasterImage noise_image(std::uint32_t w, std::uint32_t h, std::uint32_t channels,
                                          std::uint64_t seed) {
  slidesift::RasterImage img(w, h, channels);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

// 64-bit FNV-1a, used to freeze golden outputs.
inline std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace testsupport
