#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wscl/rng.hpp"
#include "wscl/tensor.hpp"

namespace wscl {

struct GradcheckResult {
  std::string name;
  std::size_t trials = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t skipped = 0;  // probes dropped at a decision boundary
  bool pass() const { return max_error < tolerance; }
};

// One randomized trial: builds fresh leaf inputs from `rng` and returns the
// worst gradient error over the probed coordinates. Cases that cross
// piecewise decisions count skipped probes in the last argument.
template <typename T>
using GradcheckCase = std::function<double(Rng& rng, T eps, std::size_t* skipped)>;

template <typename T>
struct GradcheckEntry {
  std::string name;
  GradcheckCase<T> trial;
};

// Every differentiable op plus the composed per-stream total loss of a tiny
// detector, on randomized small shapes.
template <typename T>
std::vector<GradcheckEntry<T>> gradcheck_cases();

// Finite-difference step and pass bound for the precision.
template <typename T>
T gradcheck_eps();
template <typename T>
double gradcheck_tolerance();

template <typename T>
GradcheckResult run_gradcheck_case(const GradcheckEntry<T>& entry, std::size_t trials, std::uint64_t seed);

// Runs every case (or only those whose name contains `filter`).
template <typename T>
std::vector<GradcheckResult> run_gradcheck(std::size_t trials, std::uint64_t seed, const std::string& filter = "");

}  // namespace wscl
