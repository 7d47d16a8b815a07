#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wscl/rng.hpp"
#include "wscl/tensor.hpp"

namespace wscl::test {

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  Tensor<T> t(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> param(Shape shape, std::vector<T> values) {
  Tensor<T> t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

// Owning copy, safe to iterate over a temporary tensor.
template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("wscl_test_" + tag + "_" + std::to_string(Rng(std::random_device{}()).next()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace wscl::test
