#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ocgan::nn {

/// Deterministic RNG. Every source of randomness in the pipeline is a
/// fork of one seed, so a run is fully reproducible from it.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

  /// Independent stream derived from this seed and a label.
  Rng fork(const std::string& label) const;

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  int randint(int lo, int hi) {  // inclusive range
    return std::uniform_int_distribution<int>(lo, hi)(gen_);
  }
  uint64_t next_u64() { return gen_(); }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(gen_); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_ = 0;
};

uint64_t fnv1a64(const std::string& s);
uint64_t splitmix64(uint64_t x);

}  // namespace ocgan::nn
