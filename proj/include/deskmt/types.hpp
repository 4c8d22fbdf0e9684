#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace deskmt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Error categories map onto CLI exit codes (config=2, data=3, numeric=4).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape mismatches inside a computation graph; named after the offending node.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic splitmix64 generator. Avoids the implementation-defined
// std::shuffle / distribution behaviour so seeded runs reproduce everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_u64() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

inline uint64_t fnv1a64_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64_bytes(s.data(), s.size(), h);
}

}  // namespace deskmt
