#pragma once

#include <random>

namespace deepshield {

/// Training switches batch normalization to batch statistics (and updates the
/// running estimates) and enables dropout when an rng is supplied.
struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;

  static ForwardMode train(std::mt19937_64* rng = nullptr) { return {true, rng}; }
  static ForwardMode eval() { return {false, nullptr}; }
};

}  // namespace deepshield
