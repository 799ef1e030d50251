#include "asmf/rng.hpp"

#include <cmath>
#include <numbers>

namespace asmf::rng {

void SampleStream::fill_gaussian(std::span<double> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; i += 2) {
    double u1 = next_u01();
    if (u1 == 0.0) u1 = 0x1.0p-53;  // keep log finite
    const double u2 = next_u01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i] = radius * std::cos(angle);
    if (i + 1 < n) out[i + 1] = radius * std::sin(angle);
  }
}

}  // namespace asmf::rng
