#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stairwalk {

// Error hierarchy. CLI exit codes are derived from the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class SimulationInstability : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class LayoutMismatch : public Error {
 public:
  using Error::Error;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] bool ordered() const { return lo <= hi; }
  [[nodiscard]] bool contains(double v) const { return v >= lo && v <= hi; }
  [[nodiscard]] double width() const { return hi - lo; }
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

using Rng = std::mt19937_64;

// Portable uniform draws. std::uniform_real_distribution is implementation
// defined, which would make seeded artifacts differ between standard libraries.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double uniform(Rng& rng, const Range& r);
int uniform_int(Rng& rng, int lo, int hi);  // inclusive
double standard_normal(Rng& rng);

std::uint64_t splitmix64(std::uint64_t x);
// Derives an independent stream seed from a base seed and a list of indices.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t v);

}  // namespace stairwalk
