#include "etm/rng.hpp"

#include "etm/errors.hpp"

#include <numeric>
#include <sstream>

namespace etm {

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t k) {
  if (k > n) {
    throw SamplingError("cannot draw " + std::to_string(k) + " distinct items from " +
                        std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + uniform_index(rng, n - i);
    std::swap(perm[i], perm[j]);
  }
  perm.resize(k);
  return perm;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void restore_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ConfigError("corrupt RNG state in checkpoint");
}

}  // namespace etm
